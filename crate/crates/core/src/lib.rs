//! Flip kernels and minimum-flip control for Boolean control networks with
//! state-flipped control, learned by tabular Q-learning and checked against
//! exhaustive oracles.
//!
//! States and inputs are packed into integers with `x1` (resp. `u1`) as the
//! most significant bit, so the text `001` is state index 1.

pub mod env;
pub mod error;
pub mod expr;
pub mod kernel;
pub mod network;
pub mod oracle;
pub mod policy;
pub mod qlearn;

pub use env::{
    default_episode_cap, parse_problem, reset, ActionSpace, Environment, Episode, Problem,
    ReachabilitySpec, RewardMode, StartStrategy, Transition,
};
pub use error::{Error, ParseError, Result};
pub use expr::{parse_expr, BoolExpr, Variable};
pub use kernel::{
    enumerate_subsets, find_kernels, reachable_rate, FlipSetRun, KernelResult, KernelSearchParams,
    Variant,
};
pub use network::{apply_flip, parse_network, FlipMask, FlipSet, InputVec, NetworkDef, StateVec};
pub use policy::{
    evaluate_policy, learn_min_flip_policy, learn_min_flip_policy_sparse, learn_min_step_policy,
    Policy, PolicyEval, PolicyParams, PolicyRun, WeightBound,
};
pub use qlearn::{
    extract_policy, positive_q_reachable, td_update, transfer_init, Certificate,
    ExplorationSchedule, LearningSchedule, QStore, Storage,
};

/// Network and problem files for the two reference systems.
pub mod bundled {
    pub const EXAMPLE2_NETWORK: &str = include_str!("../data/example2.net");
    pub const EXAMPLE2_PROBLEM: &str = include_str!("../data/example2.problem");
    pub const EXAMPLE3_NETWORK: &str = include_str!("../data/example3.net");
    pub const EXAMPLE3_PROBLEM: &str = include_str!("../data/example3.problem");

    /// `(network, problem)` text by name.
    pub fn example(name: &str) -> Option<(&'static str, &'static str)> {
        match name {
            "example2" => Some((EXAMPLE2_NETWORK, EXAMPLE2_PROBLEM)),
            "example3" => Some((EXAMPLE3_NETWORK, EXAMPLE3_PROBLEM)),
            _ => None,
        }
    }
}
