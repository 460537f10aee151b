use flipctl_core::bundled;
use flipctl_core::{
    apply_flip, parse_network, parse_problem, Environment, FlipMask, FlipSet, InputVec,
    NetworkDef, RewardMode, StateVec,
};

/// Hand-written evaluator for the three-node reference system, kept
/// independent of the expression parser.
fn reference_step(x: [bool; 3], u: bool) -> [bool; 3] {
    let [x1, x2, x3] = x;
    let n1 = (x1 && (x2 || x3)) || (!x1 && (x2 ^ x3));
    let n2 = x1 || (!x1 && (x2 || x3));
    let n3 = !(x1 && x2 && x3 && u) && (x3 || ((x1 || !(x2 && u)) && (!x1 || (x1 ^ x2) || u)));
    [n1, n2, n3]
}

fn example2() -> NetworkDef {
    parse_network(bundled::EXAMPLE2_NETWORK).unwrap()
}

fn bits(i: u64) -> [bool; 3] {
    [i & 4 != 0, i & 2 != 0, i & 1 != 0]
}

#[test]
fn full_transition_table_matches_reference() {
    let net = example2();
    for x in 0..8u64 {
        for u in 0..2u64 {
            let got = net
                .eval_update(
                    &StateVec::from_index(3, x).unwrap(),
                    &InputVec::from_index(1, u).unwrap(),
                )
                .unwrap();
            let want = reference_step(bits(x), u == 1);
            assert_eq!(got.to_bits(), want.to_vec(), "x={x:03b} u={u}");
        }
    }
}

#[test]
fn frozen_transition_table() {
    // (x, u=0, u=1) rows produced by the reference evaluator.
    let table = [
        ("000", "001", "001"),
        ("001", "111", "111"),
        ("010", "111", "110"),
        ("011", "011", "011"),
        ("100", "011", "011"),
        ("101", "111", "111"),
        ("110", "110", "111"),
        ("111", "111", "110"),
    ];
    let net = example2();
    for (x, n0, n1) in table {
        let x: StateVec = x.parse().unwrap();
        for (u, want) in [(0, n0), (1, n1)] {
            let got = net.eval_update(&x, &InputVec::from_index(1, u).unwrap()).unwrap();
            assert_eq!(got.to_string(), want, "x={x} u={u}");
        }
    }
}

#[test]
fn update_at_001_without_input() {
    let net = example2();
    let x: StateVec = "001".parse().unwrap();
    let u = InputVec::from_index(1, 0).unwrap();
    assert_eq!(net.eval_update(&x, &u).unwrap().to_string(), "111");
}

#[test]
fn flip_then_update() {
    let net = example2();
    let x: StateVec = "001".parse().unwrap();
    let u = InputVec::from_index(1, 0).unwrap();
    let f = FlipMask::from_indices(3, &[3]).unwrap();
    let flipped = apply_flip(&x, &f).unwrap();
    assert_eq!(flipped.to_string(), "000");
    let want = reference_step([false, false, false], false);
    assert_eq!(net.step_flipped(&x, &u, &f).unwrap().to_bits(), want.to_vec());
}

#[test]
fn flip_of_101_by_1_and_3() {
    let x: StateVec = "101".parse().unwrap();
    let f = FlipMask::from_indices(3, &[1, 3]).unwrap();
    assert_eq!(apply_flip(&x, &f).unwrap().to_string(), "000");
    assert!(FlipMask::from_indices(3, &[4]).is_err());
}

#[test]
fn step_into_target_from_111() {
    let net = example2();
    let problem = parse_problem(bundled::EXAMPLE2_PROBLEM, 3).unwrap();
    let env = Environment::new(&net, &problem.spec, FlipSet::new(vec![1, 2, 3]), RewardMode::reach()).unwrap();
    let x = 0b111;
    // brute force over the 16 joint actions for one that lands on 001
    let a = (0..env.actions().len())
        .find(|&a| {
            let (u, f) = env.actions().decode(a);
            let xs = StateVec::from_index(3, x).unwrap();
            net.step_flipped(&xs, &u, &f).unwrap().index() == 0b001
        })
        .expect("some action reaches the target");
    let t = env.transition(x, a);
    assert!(t.done);
    assert_eq!(t.reward, 100.0);
    assert_eq!(t.next, 0b001);
    assert_eq!(env.transition(x, a), t);
}

#[test]
fn large_example_parses() {
    let net = parse_network(bundled::EXAMPLE3_NETWORK).unwrap();
    assert_eq!((net.nodes(), net.inputs()), (27, 1));
    let problem = parse_problem(bundled::EXAMPLE3_PROBLEM, 27).unwrap();
    assert_eq!(problem.spec.initial().len(), 7);
    assert_eq!(problem.spec.target().len(), 1);
    assert_eq!(problem.flip_candidates, FlipSet::new((1..=6).collect()));
    assert_eq!(problem.blocks.as_ref().unwrap().len(), 9);
    // the first three nodes follow the small system exactly
    let small = example2();
    for x in 0..8u64 {
        for u in 0..2u64 {
            let big = net.next_index(x << 24, u) >> 24;
            assert_eq!(big, small.next_index(x, u));
        }
    }
}
