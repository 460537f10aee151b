//! Shared fixtures for the criterion benches.

use flipctl_core::{bundled, parse_network, parse_problem, NetworkDef, Problem};

/// Parses one of the bundled networks with its problem file.
pub fn load(name: &str) -> (NetworkDef, Problem) {
    let (net, problem) = bundled::example(name).expect("bundled example");
    let net = parse_network(net).expect("bundled network parses");
    let problem = parse_problem(problem, net.nodes()).expect("bundled problem parses");
    (net, problem)
}
