//! Search for minimum-cardinality flip sets under which every initial state
//! reaches the target set.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::env::{default_episode_cap, ActionSpace, Environment, ReachabilitySpec, RewardMode, StartStrategy};
use crate::error::{Error, Result};
use crate::network::{FlipSet, NetworkDef};
use crate::qlearn::{
    positive_q_reachable, stream_rng, transfer_init, ExplorationSchedule, LearningSchedule, QLearner,
    QStore, Storage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Dense table, uniform starts.
    Basic,
    /// Dense table, warm start from the previous level, starts drawn from
    /// uncertified initial states.
    Fast,
    /// Sparse table, uniform starts.
    SmallMemory,
    /// Sparse table with the warm start and start rule of [`Variant::Fast`].
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Basic, Variant::Fast, Variant::SmallMemory, Variant::Hybrid];

    pub fn storage(self) -> Storage {
        match self {
            Variant::Basic | Variant::Fast => Storage::Dense,
            Variant::SmallMemory | Variant::Hybrid => Storage::Sparse,
        }
    }

    pub fn transfers(self) -> bool {
        matches!(self, Variant::Fast | Variant::Hybrid)
    }

    pub fn special_starts(self) -> bool {
        matches!(self, Variant::Fast | Variant::Hybrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Fast => "fast",
            Variant::SmallMemory => "smallMemory",
            Variant::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "basic" => Ok(Variant::Basic),
            "fast" => Ok(Variant::Fast),
            "smallMemory" | "small-memory" | "small_memory" => Ok(Variant::SmallMemory),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant `{other}` (expected basic, fast, smallMemory or hybrid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSearchParams {
    pub variant: Variant,
    /// Episodes per flip set.
    pub episodes: usize,
    /// Per-episode step cap; `None` uses `2^n - |Md|`.
    pub cap: Option<usize>,
    pub gamma: f64,
    pub beta: f64,
    pub omega: f64,
    pub seed: u64,
    /// Train same-level flip sets on the rayon pool.
    pub parallel: bool,
}

impl Default for KernelSearchParams {
    fn default() -> Self {
        Self {
            variant: Variant::Fast,
            episodes: 100,
            cap: Some(10),
            gamma: 0.99,
            beta: 1.0,
            omega: 0.6,
            seed: 0,
            parallel: true,
        }
    }
}

impl KernelSearchParams {
    fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidParameter("episodes must be at least 1".into()));
        }
        if self.cap == Some(0) {
            return Err(Error::InvalidParameter("episode cap must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        LearningSchedule::new(self.beta, self.omega)?;
        Ok(())
    }
}

/// Training record for one flip set.
#[derive(Debug, Clone)]
pub struct FlipSetRun {
    pub flip_set: FlipSet,
    pub certified: bool,
    /// 1-based episode at whose end the certificate first held.
    pub episodes_to_certify: Option<usize>,
    /// Reachable rate after each episode; stops at certification.
    pub curve: Vec<f64>,
    pub table: QStore,
    pub space: ActionSpace,
}

impl FlipSetRun {
    pub fn row_count(&self) -> usize {
        self.table.row_count()
    }

    pub fn storage(&self) -> Storage {
        self.table.storage()
    }
}

#[derive(Debug, Clone)]
pub struct KernelResult {
    /// Certified flip sets of the smallest certifying cardinality.
    pub kernels: Vec<FlipSet>,
    /// That cardinality, if any level certified.
    pub level: Option<usize>,
    /// Every flip set trained, level by level in lexicographic order.
    pub runs: Vec<FlipSetRun>,
}

impl KernelResult {
    pub fn reachable(&self) -> bool {
        !self.kernels.is_empty()
    }

    pub fn run(&self, flip_set: &FlipSet) -> Option<&FlipSetRun> {
        self.runs.iter().find(|r| &r.flip_set == flip_set)
    }

    /// Human-readable verdict block.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        match self.level {
            Some(k) => {
                out.push_str(&format!("kernel cardinality: {k}\n"));
                for kernel in &self.kernels {
                    out.push_str(&format!("kernel: {kernel}\n"));
                }
            }
            None => out.push_str("verdict: cannot realize reachability\n"),
        }
        for r in &self.runs {
            let status = match r.episodes_to_certify {
                Some(ep) => format!("certified at episode {ep}"),
                None => "not certified".to_string(),
            };
            out.push_str(&format!("  {} {} ({} rows)\n", r.flip_set, status, r.row_count()));
        }
        out
    }
}

/// Size-`k` subsets of `a` in lexicographic order of their sorted members.
pub fn enumerate_subsets(a: &FlipSet, k: usize) -> Result<Vec<FlipSet>> {
    let items = a.nodes();
    if k > items.len() {
        return Err(Error::InvalidParameter(format!(
            "cardinality {k} exceeds |A| = {}",
            items.len()
        )));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(FlipSet::new(idx.iter().map(|&i| items[i]).collect()));
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + items.len() - k) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    Ok(out)
}

/// Fraction of `M0` certified so far.
pub fn reachable_rate(certified: usize, initial: usize) -> Result<f64> {
    if initial == 0 {
        return Err(Error::InvalidProblem("M0 is empty".into()));
    }
    if certified > initial {
        return Err(Error::InvalidParameter(format!(
            "{certified} certified exceeds |M0| = {initial}"
        )));
    }
    Ok(certified as f64 / initial as f64)
}

/// Trains one flip set until the certificate holds or episodes run out.
pub fn train_flip_set(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    flip_set: &FlipSet,
    params: &KernelSearchParams,
    sources: &[(&ActionSpace, &QStore)],
) -> Result<FlipSetRun> {
    params.validate()?;
    let env = Environment::new(net, spec, flip_set.clone(), RewardMode::reach())?;
    let space = env.actions().clone();
    let storage = params.variant.storage();
    let store = if sources.is_empty() {
        QStore::new(storage, net.nodes(), space.len(), spec.initial())?
    } else {
        transfer_init(sources, &space, storage, spec.initial())?
    };
    let mut learner = QLearner {
        env,
        store,
        gamma: params.gamma,
        cap: params.cap.unwrap_or_else(|| default_episode_cap(spec)),
        learning: LearningSchedule::new(params.beta, params.omega)?,
        exploration: ExplorationSchedule::new(params.episodes)?,
        rng: stream_rng(params.seed, flip_set.id_bits()),
    };
    let m0 = spec.initial().len();
    let mut unresolved = positive_q_reachable(&learner.store, spec).unresolved;
    let mut curve = Vec::new();
    let mut episodes_to_certify = None;
    for ep in 0..params.episodes {
        let strategy = if params.variant.special_starts() {
            StartStrategy::Special(&unresolved)
        } else {
            StartStrategy::Uniform
        };
        learner.run(ep, strategy)?;
        let cert = positive_q_reachable(&learner.store, spec);
        curve.push(reachable_rate(cert.resolved, m0)?);
        if cert.all_reachable {
            episodes_to_certify = Some(ep + 1);
            break;
        }
        unresolved = cert.unresolved;
    }
    Ok(FlipSetRun {
        flip_set: flip_set.clone(),
        certified: episodes_to_certify.is_some(),
        episodes_to_certify,
        curve,
        table: learner.store,
        space,
    })
}

/// Tries cardinalities 0, 1, ... of subsets of `candidates`. Once a level
/// has a certified subset, the rest of that level is still trained and the
/// search stops there.
pub fn find_kernels(
    net: &NetworkDef,
    spec: &ReachabilitySpec,
    candidates: &FlipSet,
    params: &KernelSearchParams,
) -> Result<KernelResult> {
    params.validate()?;
    candidates.validate(net.nodes())?;
    let mut runs: Vec<FlipSetRun> = Vec::new();
    let mut prev_start = 0;
    for k in 0..=candidates.len() {
        let subsets = enumerate_subsets(candidates, k)?;
        let prev = &runs[prev_start..];
        let train = |b: &FlipSet| {
            let sources: Vec<(&ActionSpace, &QStore)> = if params.variant.transfers() {
                prev.iter()
                    .filter(|r| r.flip_set.is_subset_of(b))
                    .map(|r| (&r.space, &r.table))
                    .collect()
            } else {
                Vec::new()
            };
            train_flip_set(net, spec, b, params, &sources)
        };
        let level: Vec<FlipSetRun> = if params.parallel {
            subsets.par_iter().map(train).collect::<Result<_>>()?
        } else {
            subsets.iter().map(train).collect::<Result<_>>()?
        };
        prev_start = runs.len();
        let kernels: Vec<FlipSet> = level
            .iter()
            .filter(|r| r.certified)
            .map(|r| r.flip_set.clone())
            .collect();
        runs.extend(level);
        if !kernels.is_empty() {
            return Ok(KernelResult {
                kernels,
                level: Some(k),
                runs,
            });
        }
    }
    Ok(KernelResult {
        kernels: Vec::new(),
        level: None,
        runs,
    })
}
