//! Episodic MDP over a flipped BCN.
//!
//! Rewards are paid on arrival: the reach bonus and the flip-penalty "-1"
//! are keyed to whether the successor lies in the target set, and the flip
//! cost to the action just taken. Target states are absorbing terminals.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, ParseError, Result};
use crate::network::{bit_string, strip_comment, FlipMask, FlipSet, InputVec, NetworkDef, StateVec};

/// Initial subset `M0` and target subset `Md`, both as sorted state indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilitySpec {
    n: usize,
    initial: Vec<u64>,
    target: Vec<u64>,
}

impl ReachabilitySpec {
    pub fn new(n: usize, initial: Vec<u64>, target: Vec<u64>) -> Result<Self> {
        let norm = |v: Vec<u64>, what: &str| -> Result<Vec<u64>> {
            let set: BTreeSet<u64> = v.into_iter().collect();
            if set.is_empty() {
                return Err(Error::InvalidProblem(format!("{what} is empty")));
            }
            if n < 64 {
                if let Some(bad) = set.iter().find(|&&x| x >> n != 0) {
                    return Err(Error::InvalidProblem(format!(
                        "{what} state {bad} does not fit {n} nodes"
                    )));
                }
            }
            Ok(set.into_iter().collect())
        };
        Ok(Self {
            n,
            initial: norm(initial, "M0")?,
            target: norm(target, "Md")?,
        })
    }

    /// `M0` = every state outside `Md`.
    pub fn complement_of_target(n: usize, target: Vec<u64>) -> Result<Self> {
        if n > 24 {
            return Err(Error::TooLarge(format!(
                "complement(Md) would enumerate 2^{n} states"
            )));
        }
        let t: BTreeSet<u64> = target.iter().copied().collect();
        let initial = (0..1u64 << n).filter(|x| !t.contains(x)).collect();
        Self::new(n, initial, target)
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn initial(&self) -> &[u64] {
        &self.initial
    }

    pub fn target(&self) -> &[u64] {
        &self.target
    }

    #[inline]
    pub fn is_target(&self, x: u64) -> bool {
        self.target.binary_search(&x).is_ok()
    }

    pub fn is_initial(&self, x: u64) -> bool {
        self.initial.binary_search(&x).is_ok()
    }
}

/// Episode cap with no prior knowledge: `2^n - |Md|`, the longest possible
/// cycle-free path into the target.
pub fn default_episode_cap(spec: &ReachabilitySpec) -> usize {
    let states = if spec.n >= 63 { u64::MAX } else { 1u64 << spec.n };
    usize::try_from(states.saturating_sub(spec.target.len() as u64)).unwrap_or(usize::MAX)
}

/// Contents of a problem file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub spec: ReachabilitySpec,
    /// The combinational flip set `A`.
    pub flip_candidates: FlipSet,
    /// Declared independent node blocks, used only by the block oracle.
    pub blocks: Option<Vec<Vec<usize>>>,
}

/// Parses `M0 = {...}` / `M0 = complement(Md)`, `Md = {...}`, `A = {...}` and
/// the optional `blocks = uniform(k)` or `blocks = {..},{..}` declaration.
pub fn parse_problem(text: &str, n: usize) -> Result<Problem> {
    let mut initial: Option<(usize, Option<Vec<u64>>)> = None;
    let mut target: Option<Vec<u64>> = None;
    let mut flips: Option<FlipSet> = None;
    let mut blocks = None;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ParseError::new(lineno, 1, "expected '<key> = <value>'").into());
        };
        let value = value.trim();
        match key.trim() {
            "M0" => {
                if value.replace(' ', "") == "complement(Md)" {
                    initial = Some((lineno, None));
                } else {
                    initial = Some((lineno, Some(parse_state_set(value, n, lineno)?)));
                }
            }
            "Md" => target = Some(parse_state_set(value, n, lineno)?),
            "A" => {
                let set: FlipSet = value.parse().map_err(|e: Error| relocate(e, lineno))?;
                set.validate(n)?;
                flips = Some(set);
            }
            "blocks" => blocks = Some(parse_blocks(value, n, lineno)?),
            other => {
                return Err(ParseError::new(lineno, 1, format!("unknown key '{other}'")).into())
            }
        }
    }
    let target = target.ok_or_else(|| ParseError::new(1, 1, "missing 'Md = {...}'"))?;
    let spec = match initial {
        None => return Err(ParseError::new(1, 1, "missing 'M0 = ...'").into()),
        Some((_, None)) => ReachabilitySpec::complement_of_target(n, target)?,
        Some((_, Some(init))) => ReachabilitySpec::new(n, init, target)?,
    };
    Ok(Problem {
        spec,
        flip_candidates: flips.unwrap_or_else(|| FlipSet::new((1..=n).collect())),
        blocks,
    })
}

fn relocate(e: Error, lineno: usize) -> Error {
    match e {
        Error::Parse(p) => Error::Parse(ParseError::new(lineno, p.column, p.message)),
        other => other,
    }
}

fn parse_state_set(value: &str, n: usize, lineno: usize) -> Result<Vec<u64>> {
    let inner = value
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .ok_or_else(|| ParseError::new(lineno, 1, "expected '{binary-string, ...}'"))?;
    let mut out = Vec::new();
    for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let s: StateVec = item.parse().map_err(|e| relocate(e, lineno))?;
        if s.len() != n {
            return Err(ParseError::new(
                lineno,
                1,
                format!("state '{item}' has {} bits, expected {n}", s.len()),
            )
            .into());
        }
        out.push(s.index());
    }
    Ok(out)
}

fn parse_blocks(value: &str, n: usize, lineno: usize) -> Result<Vec<Vec<usize>>> {
    let compact = value.replace(' ', "");
    let blocks: Vec<Vec<usize>> = if let Some(k) = compact
        .strip_prefix("uniform(")
        .and_then(|v| v.strip_suffix(')'))
    {
        let k: usize = k
            .parse()
            .map_err(|_| ParseError::new(lineno, 1, "expected uniform(<block size>)"))?;
        if k == 0 || n % k != 0 {
            return Err(ParseError::new(lineno, 1, format!("block size {k} does not divide {n}")).into());
        }
        (0..n / k).map(|b| (b * k + 1..=b * k + k).collect()).collect()
    } else {
        compact
            .split("},")
            .map(|part| {
                part.parse::<FlipSet>()
                    .map(|s| s.nodes().to_vec())
                    .map_err(|e| relocate(e, lineno))
            })
            .collect::<Result<_>>()?
    };
    let mut seen = vec![false; n];
    for &i in blocks.iter().flatten() {
        if i == 0 || i > n || std::mem::replace(&mut seen[i - 1], true) {
            return Err(ParseError::new(lineno, 1, format!("blocks must partition 1..={n}")).into());
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(ParseError::new(lineno, 1, format!("blocks must partition 1..={n}")).into());
    }
    Ok(blocks)
}

/// Joint control pairs `(u, flip subset of B)`.
///
/// Action index layout: the input bits occupy the high `m` bits (`u1` most
/// significant), the flip selector the low `|B|` bits with the first node of
/// `B` most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    n: usize,
    m: usize,
    flip_set: FlipSet,
    selector_masks: Vec<u64>,
}

impl ActionSpace {
    pub fn new(n: usize, m: usize, flip_set: FlipSet) -> Result<Self> {
        flip_set.validate(n)?;
        let k = flip_set.len();
        if m + k > 40 {
            return Err(Error::TooLarge(format!("action space of 2^{} joint controls", m + k)));
        }
        let node_bits: Vec<u64> = flip_set.nodes().iter().map(|&i| 1u64 << (n - i)).collect();
        let selector_masks = (0..1usize << k)
            .map(|sel| {
                (0..k)
                    .filter(|j| (sel >> (k - 1 - j)) & 1 == 1)
                    .fold(0u64, |acc, j| acc | node_bits[j])
            })
            .collect();
        Ok(Self {
            n,
            m,
            flip_set,
            selector_masks,
        })
    }

    pub fn flip_set(&self) -> &FlipSet {
        &self.flip_set
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        1 << (self.m + self.flip_set.len())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn input_bits(&self, a: usize) -> u64 {
        (a >> self.flip_set.len()) as u64
    }

    /// Flip mask of action `a` in packed state layout.
    #[inline]
    pub fn flip_bits(&self, a: usize) -> u64 {
        self.selector_masks[a & ((1 << self.flip_set.len()) - 1)]
    }

    #[inline]
    pub fn flip_count(&self, a: usize) -> u32 {
        ((a & ((1 << self.flip_set.len()) - 1)) as u32).count_ones()
    }

    pub fn decode(&self, a: usize) -> (InputVec, FlipMask) {
        let u = InputVec::from_index(self.m, self.input_bits(a)).expect("action in range");
        (u, FlipMask::from_raw(self.n, self.flip_bits(a)))
    }

    /// Encodes packed input bits and a packed flip mask.
    pub fn encode_raw(&self, u: u64, flip_mask: u64) -> Result<usize> {
        let k = self.flip_set.len();
        let mut sel = 0usize;
        let mut rest = flip_mask;
        for (j, &i) in self.flip_set.nodes().iter().enumerate() {
            let bit = 1u64 << (self.n - i);
            if flip_mask & bit != 0 {
                sel |= 1 << (k - 1 - j);
                rest &= !bit;
            }
        }
        if rest != 0 {
            let stray = FlipMask::from_raw(self.n, rest).indices()[0];
            return Err(Error::NotInFlipSet(stray));
        }
        if self.m < 64 && u >> self.m != 0 {
            return Err(Error::Dimension {
                what: "input bits",
                expected: self.m,
                got: 64 - u.leading_zeros() as usize,
            });
        }
        Ok(((u as usize) << k) | sel)
    }

    pub fn encode(&self, u: &InputVec, f: &FlipMask) -> Result<usize> {
        if u.len() != self.m {
            return Err(Error::Dimension {
                what: "input bits",
                expected: self.m,
                got: u.len(),
            });
        }
        self.encode_raw(u.index(), f.raw())
    }

    /// Maps an action of `sub` (whose flip set is a subset of ours) to the
    /// action with the same input and flipped nodes.
    pub fn embed_from(&self, sub: &ActionSpace, a: usize) -> Result<usize> {
        self.encode_raw(sub.input_bits(a), sub.flip_bits(a))
    }

    /// `u=<bits> flip={indices}`.
    pub fn describe(&self, a: usize) -> String {
        let (u, f) = self.decode(a);
        format!("u={} flip={}", u, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardMode {
    /// Bonus on arriving in `Md`, zero otherwise.
    ReachOnly { bonus: f64 },
    /// `-w * flips`, with an extra `-1` unless the step arrives in `Md`.
    FlipPenalty { weight: f64, weight_step: Option<f64> },
}

impl RewardMode {
    pub const REACH_BONUS: f64 = 100.0;

    pub fn reach() -> Self {
        RewardMode::ReachOnly {
            bonus: Self::REACH_BONUS,
        }
    }

    pub fn flip_penalty(weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight must be positive, got {weight}")));
        }
        Ok(RewardMode::FlipPenalty {
            weight,
            weight_step: None,
        })
    }

    #[inline]
    pub fn reward(&self, n_flips: u32, arrived: bool) -> f64 {
        match *self {
            RewardMode::ReachOnly { bonus } => {
                if arrived {
                    bonus
                } else {
                    0.0
                }
            }
            RewardMode::FlipPenalty { weight, .. } => {
                let cost = -weight * f64::from(n_flips);
                if arrived {
                    cost
                } else {
                    cost - 1.0
                }
            }
        }
    }
}

/// One deterministic step. States are packed indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: u64,
    pub action: usize,
    pub next: u64,
    pub reward: f64,
    pub done: bool,
    pub n_flips: u32,
}

#[derive(Debug, Clone)]
pub struct Environment<'a> {
    net: &'a NetworkDef,
    spec: &'a ReachabilitySpec,
    space: ActionSpace,
    mode: RewardMode,
}

impl<'a> Environment<'a> {
    pub fn new(
        net: &'a NetworkDef,
        spec: &'a ReachabilitySpec,
        flip_set: FlipSet,
        mode: RewardMode,
    ) -> Result<Self> {
        if spec.nodes() != net.nodes() {
            return Err(Error::Dimension {
                what: "problem state width",
                expected: net.nodes(),
                got: spec.nodes(),
            });
        }
        let space = ActionSpace::new(net.nodes(), net.inputs(), flip_set)?;
        Ok(Self {
            net,
            spec,
            space,
            mode,
        })
    }

    pub fn network(&self) -> &'a NetworkDef {
        self.net
    }

    pub fn spec(&self) -> &'a ReachabilitySpec {
        self.spec
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.space
    }

    pub fn mode(&self) -> RewardMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: RewardMode) {
        self.mode = mode;
    }

    #[inline]
    pub fn transition(&self, state: u64, action: usize) -> Transition {
        let next = self.net.step_index(
            state,
            self.space.input_bits(action),
            self.space.flip_bits(action),
        );
        let done = self.spec.is_target(next);
        let n_flips = self.space.flip_count(action);
        Transition {
            state,
            action,
            next,
            reward: self.mode.reward(n_flips, done),
            done,
            n_flips,
        }
    }

    pub fn begin(&self, x0: u64) -> Episode {
        Episode {
            state: x0,
            done: self.spec.is_target(x0),
            steps: 0,
        }
    }
}

/// A running episode; stepping after termination is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Episode {
    pub state: u64,
    pub done: bool,
    pub steps: usize,
}

impl Episode {
    pub fn step(&mut self, env: &Environment<'_>, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeTerminated);
        }
        if action >= env.actions().len() {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: action,
                max: env.actions().len() - 1,
            });
        }
        let t = env.transition(self.state, action);
        self.state = t.next;
        self.done = t.done;
        self.steps += 1;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StartStrategy<'a> {
    Uniform,
    /// Start from initial states not yet certified; uniform when empty.
    Special(&'a [u64]),
}

pub fn reset<R: Rng + ?Sized>(
    spec: &ReachabilitySpec,
    strategy: StartStrategy<'_>,
    rng: &mut R,
) -> Result<u64> {
    let pool = match strategy {
        StartStrategy::Special(list) if !list.is_empty() => list,
        _ => spec.initial(),
    };
    if pool.is_empty() {
        return Err(Error::InvalidProblem("M0 is empty".into()));
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Formats a state index as a binary string of the spec's width.
pub fn state_string(spec: &ReachabilitySpec, x: u64) -> String {
    bit_string(spec.nodes(), x)
}
