//! Minimum-flip and minimum-step control policies: learners, serialization,
//! weight bounds and rollout evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::env::{ActionSpace, Environment, ReachabilitySpec, RewardMode, StartStrategy};
use crate::error::{Error, Result};
use crate::network::{bit_string, FlipMask, FlipSet, InputVec, NetworkDef};
use crate::qlearn::{
    extract_policy, stream_rng, ExplorationSchedule, LearningSchedule, QLearner, QStore, Storage,
};

/// Stream tags for the policy learners, disjoint from per-flip-set streams.
pub const MIN_FLIP_STREAM: u64 = 1 << 62;
pub const MIN_STEP_STREAM: u64 = 1 << 61;

/// Deterministic state -> action map over one action space.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: ActionSpace,
    actions: BTreeMap<u64, usize>,
    network_id: Option<String>,
}

impl Policy {
    pub fn new(space: ActionSpace, actions: BTreeMap<u64, usize>) -> Self {
        Self {
            space,
            actions,
            network_id: None,
        }
    }

    pub fn with_network_id(mut self, id: impl Into<String>) -> Self {
        self.network_id = Some(id.into());
        self
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn flip_set(&self) -> &FlipSet {
        self.space.flip_set()
    }

    pub fn network_id(&self) -> Option<&str> {
        self.network_id.as_deref()
    }

    pub fn action(&self, x: u64) -> Option<usize> {
        self.actions.get(&x).copied()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.actions.iter().map(|(&x, &a)| (x, a))
    }

    /// `# flip set: ..` / `# network: ..` header, then one
    /// `state -> u=<bits> flip={..}` line per stored state.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# flip set: {}", self.space.flip_set());
        if let Some(id) = &self.network_id {
            let _ = writeln!(out, "# network: {id}");
        }
        for (&x, &a) in &self.actions {
            let _ = writeln!(
                out,
                "{} -> {}",
                bit_string(self.space.nodes(), x),
                self.space.describe(a)
            );
        }
        out
    }

    /// Parses [`Policy::to_text`] output for a network with `n` nodes and
    /// `m` inputs. The flip set comes from the header, or from `flip_set`
    /// when the header is absent.
    pub fn from_text(text: &str, n: usize, m: usize, flip_set: Option<&FlipSet>) -> Result<Self> {
        let mut header_set = None;
        let mut network_id = None;
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("flip set:") {
                    header_set = Some(v.trim().parse::<FlipSet>()?);
                } else if let Some(v) = rest.strip_prefix("network:") {
                    network_id = Some(v.trim().to_string());
                }
                continue;
            }
            if !line.is_empty() {
                lines.push((i + 1, line));
            }
        }
        let set = match (header_set, flip_set) {
            (Some(h), Some(f)) if &h != f => {
                return Err(Error::InvalidProblem(format!(
                    "policy file is for flip set {h}, expected {f}"
                )))
            }
            (Some(h), _) => h,
            (None, Some(f)) => f.clone(),
            (None, None) => FlipSet::empty(),
        };
        let space = ActionSpace::new(n, m, set)?;
        let bad = |line: usize, msg: String| Error::Parse(crate::error::ParseError::new(line, 1, msg));
        let mut actions = BTreeMap::new();
        for (ln, line) in lines {
            let (state, action) = line
                .split_once("->")
                .ok_or_else(|| bad(ln, "expected `state -> u=<bits> flip={..}`".into()))?;
            let state = state.trim();
            if state.len() != n || !state.bytes().all(|c| c == b'0' || c == b'1') {
                return Err(bad(ln, format!("state `{state}` is not a {n}-bit string")));
            }
            let x = u64::from_str_radix(state, 2).unwrap_or(0);
            let action = action.trim();
            let (u_part, f_part) = action
                .split_once(' ')
                .ok_or_else(|| bad(ln, "expected `u=<bits> flip={..}`".into()))?;
            let u_bits = u_part
                .trim()
                .strip_prefix("u=")
                .ok_or_else(|| bad(ln, "missing `u=`".into()))?;
            if u_bits.len() != m || !u_bits.bytes().all(|c| c == b'0' || c == b'1') {
                return Err(bad(ln, format!("input `{u_bits}` is not a {m}-bit string")));
            }
            let u = if m == 0 { 0 } else { u64::from_str_radix(u_bits, 2).unwrap_or(0) };
            let flips: FlipSet = f_part
                .trim()
                .strip_prefix("flip=")
                .ok_or_else(|| bad(ln, "missing `flip=`".into()))?
                .parse()?;
            let mask = FlipMask::from_indices(n, flips.nodes())?;
            let a = space.encode(&InputVec::from_index(m, u)?, &mask)?;
            if actions.insert(x, a).is_some() {
                return Err(bad(ln, format!("state {state} listed twice")));
            }
        }
        Ok(Self {
            space,
            actions,
            network_id,
        })
    }
}

/// FNV-1a over the canonical network text, as 16 hex digits.
pub fn network_id(net: &NetworkDef) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in net.to_string().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Strict lower bounds for the flip weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightBound {
    /// Longest cycle-free path length into `Md`, when known.
    LongestPath(u64),
    /// `2^n - |Md|`, needing no knowledge of the dynamics.
    NoPriorKnowledge { nodes: usize, targets: usize },
    /// Number of rows in a sparse table.
    RowCount(usize),
}

impl WeightBound {
    pub fn value(&self) -> f64 {
        match *self {
            WeightBound::LongestPath(l) => l as f64,
            WeightBound::NoPriorKnowledge { nodes, targets } => {
                2f64.powi(nodes as i32) - targets as f64
            }
            WeightBound::RowCount(rows) => rows as f64,
        }
    }

    pub fn admits(&self, weight: f64) -> bool {
        weight > self.value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub episodes: usize,
    pub cap: usize,
    pub beta: f64,
    pub omega: f64,
    /// Flip weight for the min-flip learners.
    pub weight: f64,
    /// Adaptive weight increment for the sparse learner.
    pub weight_step: f64,
    /// Discount for the min-step learner.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            episodes: 30_000,
            cap: 100,
            beta: 0.01,
            omega: 0.85,
            weight: 8.0,
            weight_step: 20.0,
            gamma: 0.99,
            seed: 0,
        }
    }
}

impl PolicyParams {
    fn schedules(&self) -> Result<(LearningSchedule, ExplorationSchedule)> {
        if self.cap == 0 {
            return Err(Error::InvalidParameter("episode cap must be at least 1".into()));
        }
        Ok((
            LearningSchedule::new(self.beta, self.omega)?,
            ExplorationSchedule::new(self.episodes)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: Policy,
    pub table: QStore,
    pub final_weight: f64,
    pub weight_bumps: usize,
    /// Weight at the start of each episode.
    pub weight_trace: Vec<f64>,
}

impl PolicyRun {
    pub fn row_count(&self) -> usize {
        self.table.row_count()
    }

    pub fn storage(&self) -> Storage {
        self.table.storage()
    }
}

fn unreached_initials(spec: &ReachabilitySpec, reached: &BTreeSet<u64>) -> usize {
    spec.initial()
        .iter()
        .filter(|x| !spec.is_target(**x) && !reached.contains(x))
        .count()
}

struct Training {
    table: QStore,
    final_weight: f64,
    bumps: usize,
    trace: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn train(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    flip_set: &FlipSet,
    params: &PolicyParams,
    storage: Storage,
    mode: RewardMode,
    gamma: f64,
    adaptive: bool,
    stream: u64,
) -> Result<Training> {
    let (learning, exploration) = params.schedules()?;
    let env = Environment::new(net, spec, flip_set.clone(), mode)?;
    let store = QStore::new(storage, net.nodes(), env.actions().len(), spec.initial())?;
    let mut learner = QLearner {
        env,
        store,
        gamma,
        cap: params.cap,
        learning,
        exploration,
        rng: stream_rng(params.seed, stream | flip_set.id_bits()),
    };
    let mut weight = params.weight;
    let mut bumps = 0;
    let mut trace = Vec::new();
    let mut reached = BTreeSet::new();
    for ep in 0..params.episodes {
        if adaptive {
            if weight <= learner.store.row_count() as f64 {
                weight += params.weight_step;
                bumps += 1;
                learner.env.set_mode(RewardMode::FlipPenalty {
                    weight,
                    weight_step: Some(params.weight_step),
                });
            }
            trace.push(weight);
        }
        let (x0, stats) = learner.run(ep, StartStrategy::Uniform)?;
        if stats.reached {
            reached.insert(x0);
        }
    }
    if adaptive {
        // Keep training at the final exploration rate until the weight
        // exceeds the row count at the end of an episode.
        let last = params.episodes.max(1) - 1;
        while weight <= learner.store.row_count() as f64 {
            weight += params.weight_step;
            bumps += 1;
            learner.env.set_mode(RewardMode::FlipPenalty {
                weight,
                weight_step: Some(params.weight_step),
            });
            trace.push(weight);
            let (x0, stats) = learner.run(last, StartStrategy::Uniform)?;
            if stats.reached {
                reached.insert(x0);
            }
        }
    }
    let missing = unreached_initials(spec, &reached);
    if missing > 0 {
        return Err(Error::Unreachable {
            count: missing,
            episodes: params.episodes,
        });
    }
    Ok(Training {
        table: learner.store,
        final_weight: weight,
        bumps,
        trace,
    })
}

fn finish(net: &NetworkDef, flip_set: &FlipSet, t: Training) -> Result<PolicyRun> {
    let space = ActionSpace::new(net.nodes(), net.inputs(), flip_set.clone())?;
    let policy = extract_policy(&t.table, &space).with_network_id(network_id(net));
    Ok(PolicyRun {
        policy,
        table: t.table,
        final_weight: t.final_weight,
        weight_bumps: t.bumps,
        weight_trace: t.trace,
    })
}

/// Dense table, undiscounted flip-penalty reward with a fixed weight.
pub fn learn_min_flip_policy(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    flip_set: &FlipSet,
    params: &PolicyParams,
) -> Result<PolicyRun> {
    let mode = RewardMode::flip_penalty(params.weight)?;
    let t = train(net, spec, flip_set, params, Storage::Dense, mode, 1.0, false, MIN_FLIP_STREAM)?;
    finish(net, flip_set, t)
}

/// Sparse table with the weight raised by `weight_step` at any episode start
/// where it does not exceed the current row count. The table is kept across
/// raises. Ends with the weight strictly above the final row count.
pub fn learn_min_flip_policy_sparse(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    flip_set: &FlipSet,
    params: &PolicyParams,
) -> Result<PolicyRun> {
    if !(params.weight_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight increment must be positive, got {}",
            params.weight_step
        )));
    }
    let mode = RewardMode::FlipPenalty {
        weight: params.weight,
        weight_step: Some(params.weight_step),
    };
    if !(params.weight > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weight must be positive, got {}",
            params.weight
        )));
    }
    let t = train(net, spec, flip_set, params, Storage::Sparse, mode, 1.0, true, MIN_FLIP_STREAM)?;
    finish(net, flip_set, t)
}

/// Reach-only reward with discount `gamma < 1`; greedy actions follow
/// shortest paths into `Md`.
pub fn learn_min_step_policy(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    flip_set: &FlipSet,
    params: &PolicyParams,
    storage: Storage,
) -> Result<PolicyRun> {
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "discount must lie in (0, 1), got {}",
            params.gamma
        )));
    }
    let t = train(
        net,
        spec,
        flip_set,
        params,
        storage,
        RewardMode::reach(),
        params.gamma,
        false,
        MIN_STEP_STREAM,
    )?;
    finish(net, flip_set, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub state: u64,
    pub action: usize,
    pub next: u64,
    pub n_flips: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub x0: u64,
    pub reached: bool,
    pub steps: usize,
    pub total_flips: u64,
    /// `-(w * flips + 1)` summed over every step taken.
    pub ret: f64,
    pub trajectory: Vec<RolloutStep>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    pub n: usize,
    pub weight: f64,
    pub entries: Vec<EvalEntry>,
}

impl PolicyEval {
    pub fn all_reached(&self) -> bool {
        self.entries.iter().all(|e| e.reached)
    }

    pub fn entry(&self, x0: u64) -> Option<&EvalEntry> {
        self.entries.iter().find(|e| e.x0 == x0)
    }

    pub const CSV_HEADER: &'static str = "x0,reached,steps,total_flips,return";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                bit_string(self.n, e.x0),
                e.reached,
                e.steps,
                e.total_flips,
                e.ret
            );
        }
        out
    }
}

/// Per-step return charged by [`evaluate_policy`].
pub fn step_return(weight: f64, n_flips: u32) -> f64 {
    -(weight * f64::from(n_flips) + 1.0)
}

/// Rolls the policy out from every initial state for at most `cap` steps.
/// A state with no policy entry ends the rollout as unreached.
pub fn evaluate_policy(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    policy: &Policy,
    weight: f64,
    cap: usize,
) -> Result<PolicyEval> {
    if cap == 0 {
        return Err(Error::InvalidParameter("evaluation cap must be at least 1".into()));
    }
    let space = policy.space();
    if space.nodes() != net.nodes() || space.inputs() != net.inputs() {
        return Err(Error::Dimension {
            what: "policy action space",
            expected: net.nodes(),
            got: space.nodes(),
        });
    }
    let entries = spec
        .initial()
        .iter()
        .map(|&x0| {
            let mut x = x0;
            let mut trajectory = Vec::new();
            let mut total_flips = 0u64;
            let mut ret = 0.0;
            let mut diagnostic = None;
            while !spec.is_target(x) && trajectory.len() < cap {
                let Some(a) = policy.action(x) else {
                    diagnostic = Some(format!("no policy entry for state {}", bit_string(net.nodes(), x)));
                    break;
                };
                let next = net.step_index(x, space.input_bits(a), space.flip_bits(a));
                let n_flips = space.flip_count(a);
                total_flips += u64::from(n_flips);
                ret += step_return(weight, n_flips);
                trajectory.push(RolloutStep {
                    state: x,
                    action: a,
                    next,
                    n_flips,
                });
                x = next;
            }
            let reached = spec.is_target(x);
            if !reached && diagnostic.is_none() {
                diagnostic = Some(format!("cap of {cap} steps reached"));
            }
            EvalEntry {
                x0,
                reached,
                steps: trajectory.len(),
                total_flips,
                ret,
                trajectory,
                diagnostic,
            }
        })
        .collect();
    Ok(PolicyEval {
        n: net.nodes(),
        weight,
        entries,
    })
}
