//! Tabular Q-learning: value storage, schedules, epsilon-greedy selection,
//! TD updates, transfer initialization and the positive-value certificate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{reset, ActionSpace, Environment, ReachabilitySpec, StartStrategy, Transition};
use crate::error::{Error, ParseError, Result};
use crate::policy::Policy;

/// Dense tables are refused above `n + m + |B|` bits of cells.
pub const DENSE_BIT_LIMIT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Storage {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QStore {
    /// `2^n` rows of `|A|` values, row-major.
    Dense { actions: usize, values: Vec<f64> },
    /// Rows created lazily; a missing row reads as all zeros.
    Sparse {
        actions: usize,
        rows: HashMap<u64, Box<[f64]>>,
    },
}

fn dense_bits(n: usize, actions: usize) -> usize {
    n + actions.trailing_zeros() as usize
}

impl QStore {
    pub fn dense(n: usize, actions: usize) -> Result<Self> {
        let bits = dense_bits(n, actions);
        if bits > DENSE_BIT_LIMIT {
            return Err(Error::TooLarge(format!(
                "dense Q-table needs 2^{bits} cells (n + m + |B| = {bits} > {DENSE_BIT_LIMIT}); use sparse storage"
            )));
        }
        Ok(QStore::Dense {
            actions,
            values: vec![0.0; (1usize << n) * actions],
        })
    }

    pub fn sparse(actions: usize, initial_rows: &[u64]) -> Self {
        let mut store = QStore::Sparse {
            actions,
            rows: HashMap::with_capacity(initial_rows.len() * 2),
        };
        for &x in initial_rows {
            store.ensure_row(x);
        }
        store
    }

    pub fn new(storage: Storage, n: usize, actions: usize, initial_rows: &[u64]) -> Result<Self> {
        match storage {
            Storage::Dense => Self::dense(n, actions),
            Storage::Sparse => Ok(Self::sparse(actions, initial_rows)),
        }
    }

    pub fn storage(&self) -> Storage {
        match self {
            QStore::Dense { .. } => Storage::Dense,
            QStore::Sparse { .. } => Storage::Sparse,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, QStore::Dense { .. })
    }

    pub fn actions(&self) -> usize {
        match self {
            QStore::Dense { actions, .. } | QStore::Sparse { actions, .. } => *actions,
        }
    }

    #[inline]
    pub fn row(&self, x: u64) -> Option<&[f64]> {
        match self {
            QStore::Dense { actions, values } => {
                let start = x as usize * actions;
                values.get(start..start + actions)
            }
            QStore::Sparse { rows, .. } => rows.get(&x).map(|r| &r[..]),
        }
    }

    fn row_mut(&mut self, x: u64) -> &mut [f64] {
        match self {
            QStore::Dense { actions, values } => {
                let start = x as usize * *actions;
                &mut values[start..start + *actions]
            }
            QStore::Sparse { actions, rows } => rows
                .entry(x)
                .or_insert_with(|| vec![0.0; *actions].into_boxed_slice()),
        }
    }

    /// Adds a zero row for `x` if none is stored (no-op on dense tables).
    #[inline]
    pub fn ensure_row(&mut self, x: u64) {
        if let QStore::Sparse { actions, rows } = self {
            rows.entry(x)
                .or_insert_with(|| vec![0.0; *actions].into_boxed_slice());
        }
    }

    pub fn value(&self, x: u64, a: usize) -> f64 {
        self.row(x).map_or(0.0, |r| r[a])
    }

    pub fn set(&mut self, x: u64, a: usize, v: f64) {
        self.row_mut(x)[a] = v;
    }

    #[inline]
    pub fn max_value(&self, x: u64) -> f64 {
        self.row(x)
            .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Smallest-index maximizer; action 0 for a missing row.
    #[inline]
    pub fn greedy(&self, x: u64) -> usize {
        self.row(x).map_or(0, argmax)
    }

    /// Number of rows held (`2^n` for dense tables).
    pub fn row_count(&self) -> usize {
        match self {
            QStore::Dense { actions, values } => values.len() / actions,
            QStore::Sparse { rows, .. } => rows.len(),
        }
    }

    /// Stored state indices in ascending order.
    pub fn states(&self) -> Vec<u64> {
        match self {
            QStore::Dense { .. } => (0..self.row_count() as u64).collect(),
            QStore::Sparse { rows, .. } => {
                let mut v: Vec<u64> = rows.keys().copied().collect();
                v.sort_unstable();
                v
            }
        }
    }

    /// `stateIndex actionIndex value` lines, sorted, 12 significant digits.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for x in self.states() {
            let row = self.row(x).expect("stored");
            for (a, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{x} {a} {}", format_sig12(*v));
            }
        }
        out
    }

    pub fn from_snapshot(text: &str, storage: Storage, n: usize, actions: usize) -> Result<Self> {
        let mut store = QStore::new(storage, n, actions, &[])?;
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse(ParseError::new(k + 1, 1, msg));
            let mut parts = line.split_whitespace();
            let (Some(x), Some(a), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected 'stateIndex actionIndex value'"));
            };
            let x: u64 = x.parse().map_err(|_| err("bad state index"))?;
            let a: usize = a.parse().map_err(|_| err("bad action index"))?;
            let v: f64 = v.parse().map_err(|_| err("bad value"))?;
            if a >= actions || (n < 64 && x >> n != 0) {
                return Err(err("index out of range"));
            }
            store.set(x, a, v);
        }
        Ok(store)
    }
}

#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = a;
        }
    }
    best
}

/// Formats like C's `%.12g`.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..12).contains(&exp) {
        format!("{}e{exp}", trim(mantissa))
    } else {
        trim(&format!("{v:.*}", (11 - exp) as usize))
    }
}

/// `alpha(ep) = min{1, (beta * ep)^(-omega)}` with 1-based episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningSchedule {
    beta: f64,
    omega: f64,
}

impl LearningSchedule {
    pub fn new(beta: f64, omega: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(omega > 0.5 && omega <= 1.0) {
            return Err(Error::InvalidParameter(format!("omega must lie in (0.5, 1], got {omega}")));
        }
        Ok(Self { beta, omega })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rate(&self, episode: usize) -> Result<f64> {
        if episode == 0 {
            return Err(Error::InvalidParameter("learning-rate episodes start at 1".into()));
        }
        Ok((self.beta * episode as f64).powf(-self.omega).min(1.0))
    }
}

/// Linear decay `1 - 0.99 * ep / N` from 1 to 0.01.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplorationSchedule {
    episodes: usize,
}

impl ExplorationSchedule {
    pub fn new(episodes: usize) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::InvalidParameter("episode count must be at least 1".into()));
        }
        Ok(Self { episodes })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let ep = episode.min(self.episodes) as f64;
        1.0 - 0.99 * ep / self.episodes as f64
    }
}

pub fn select_action<R: Rng + ?Sized>(q: &QStore, x: u64, epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.actions())
    } else {
        q.greedy(x)
    }
}

/// `Q(x,a) <- (1-alpha) Q(x,a) + alpha (r + gamma max Q(x',.))`, with a zero
/// bootstrap at terminal successors.
#[inline]
pub fn td_update(q: &mut QStore, t: &Transition, alpha: f64, gamma: f64) {
    let bootstrap = if t.done { 0.0 } else { q.max_value(t.next) };
    let cell = &mut q.row_mut(t.state)[t.action];
    *cell = (1.0 - alpha) * *cell + alpha * (t.reward + gamma * bootstrap);
}

/// Seeds a table for `target` from tables trained on subsets of its flip set.
/// Cells whose action lies in some source's action space take the maximum
/// over those sources; all other cells are zero.
pub fn transfer_init(
    prev: &[(&ActionSpace, &QStore)],
    target: &ActionSpace,
    storage: Storage,
    initial_rows: &[u64],
) -> Result<QStore> {
    let mut out = QStore::new(storage, target.nodes(), target.len(), initial_rows)?;
    let mut covered: HashSet<(u64, usize)> = HashSet::new();
    for (space, table) in prev {
        if !space.flip_set().is_subset_of(target.flip_set()) || space.inputs() != target.inputs() {
            return Err(Error::NotSubset {
                sub: space.flip_set().to_string(),
                sup: target.flip_set().to_string(),
            });
        }
        let embed: Vec<usize> = (0..space.len())
            .map(|a| target.embed_from(space, a))
            .collect::<Result<_>>()?;
        for x in table.states() {
            let row = table.row(x).expect("stored");
            for (a, &v) in row.iter().enumerate() {
                let b = embed[a];
                let first = covered.insert((x, b));
                let cell = &mut out.row_mut(x)[b];
                *cell = if first { v } else { cell.max(v) };
            }
        }
    }
    Ok(out)
}

/// Outcome of the positive-value reachability test over `M0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub all_reachable: bool,
    /// Initial states whose row maximum is not positive.
    pub unresolved: Vec<u64>,
    pub resolved: usize,
}

/// Every `x0` in `M0` certified by a strictly positive row maximum. Initial
/// states already in `Md` count as certified.
pub fn positive_q_reachable(q: &QStore, spec: &ReachabilitySpec) -> Certificate {
    let unresolved: Vec<u64> = spec
        .initial()
        .iter()
        .copied()
        .filter(|&x| !spec.is_target(x) && q.max_value(x) <= 0.0)
        .collect();
    Certificate {
        all_reachable: unresolved.is_empty(),
        resolved: spec.initial().len() - unresolved.len(),
        unresolved,
    }
}

/// Greedy policy over every stored row.
pub fn extract_policy(q: &QStore, space: &ActionSpace) -> Policy {
    let actions: BTreeMap<u64, usize> = q
        .states()
        .into_iter()
        .map(|x| (x, q.greedy(x)))
        .collect();
    Policy::new(space.clone(), actions)
}

/// Child generator for one flip set or purpose: ChaCha8 seeded by the run
/// seed, stream selected by `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeStats {
    pub steps: usize,
    pub reached: bool,
}

/// A single Q-learner bound to one environment and table.
pub struct QLearner<'a> {
    pub env: Environment<'a>,
    pub store: QStore,
    pub gamma: f64,
    pub cap: usize,
    pub learning: LearningSchedule,
    pub exploration: ExplorationSchedule,
    pub rng: ChaCha8Rng,
}

impl QLearner<'_> {
    /// Draws a start state and runs episode `ep` (0-based).
    pub fn run(&mut self, ep: usize, strategy: StartStrategy<'_>) -> Result<(u64, EpisodeStats)> {
        let x0 = reset(self.env.spec(), strategy, &mut self.rng)?;
        Ok((x0, self.episode(ep, x0)))
    }

    /// Runs episode `ep` from `x0` until `Md` or the step cap.
    pub fn episode(&mut self, ep: usize, x0: u64) -> EpisodeStats {
        let alpha = self.learning.rate(ep + 1).expect("1-based");
        let epsilon = self.exploration.epsilon(ep);
        let spec = self.env.spec();
        let mut x = x0;
        let mut steps = 0;
        while steps < self.cap && !spec.is_target(x) {
            let a = select_action(&self.store, x, epsilon, &mut self.rng);
            let t = self.env.transition(x, a);
            if !t.done {
                self.store.ensure_row(t.next);
            }
            td_update(&mut self.store, &t, alpha, self.gamma);
            x = t.next;
            steps += 1;
        }
        EpisodeStats {
            steps,
            reached: spec.is_target(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RewardMode;
    use crate::network::FlipSet;

    #[test]
    fn learning_rate_values() {
        let s = LearningSchedule::new(1.0, 0.6).unwrap();
        assert_eq!(s.rate(1).unwrap(), 1.0);
        assert!((s.rate(1024).unwrap() - 1024f64.powf(-0.6)).abs() < 1e-15);
        assert!((s.rate(1024).unwrap() - 0.0156).abs() < 1e-4);
        let s = LearningSchedule::new(0.01, 0.85).unwrap();
        assert_eq!(s.rate(100).unwrap(), 1.0);
        assert!(s.rate(0).is_err());
        assert!(LearningSchedule::new(1.0, 0.5).is_err());
        assert!(LearningSchedule::new(0.0, 0.6).is_err());
    }

    #[test]
    fn epsilon_values() {
        let e = ExplorationSchedule::new(100).unwrap();
        assert_eq!(e.epsilon(0), 1.0);
        assert!((e.epsilon(100) - 0.01).abs() < 1e-15);
        assert!((e.epsilon(50) - 0.505).abs() < 1e-15);
    }

    #[test]
    fn greedy_tiebreak() {
        let mut q = QStore::sparse(4, &[3]);
        let mut rng = stream_rng(0, 0);
        assert_eq!(select_action(&q, 3, 0.0, &mut rng), 0);
        q.set(3, 1, 5.0);
        q.set(3, 2, 5.0);
        assert_eq!(select_action(&q, 3, 0.0, &mut rng), 1);
        assert_eq!(argmax(&[0.0, 9.0, 9.0]), 1);
    }

    #[test]
    fn uniform_exploration_chi_square() {
        let q = QStore::sparse(8, &[0]);
        let mut rng = stream_rng(11, 0);
        let mut counts = [0usize; 8];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_action(&q, 0, 1.0, &mut rng)] += 1;
        }
        let expected = draws as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 7 degrees of freedom, p = 0.001
        assert!(chi2 < 24.32, "chi2 = {chi2}");
    }

    fn tr(state: u64, action: usize, next: u64, reward: f64, done: bool) -> Transition {
        Transition {
            state,
            action,
            next,
            reward,
            done,
            n_flips: 0,
        }
    }

    #[test]
    fn td_update_arithmetic() {
        let mut q = QStore::dense(1, 2).unwrap();
        td_update(&mut q, &tr(0, 1, 1, 100.0, true), 1.0, 0.99);
        assert_eq!(q.value(0, 1), 100.0);
        assert_eq!(q.value(0, 0), 0.0);

        let mut q = QStore::dense(1, 2).unwrap();
        q.set(0, 0, 10.0);
        q.set(1, 1, 20.0);
        td_update(&mut q, &tr(0, 0, 1, 0.0, false), 0.5, 1.0);
        assert_eq!(q.value(0, 0), 15.0);
    }

    #[test]
    fn self_loop_fixed_point() {
        // Independent check: value iteration on v = 1 + 0.5 v.
        let mut v: f64 = 0.0;
        for _ in 0..200 {
            v = 1.0 + 0.5 * v;
        }
        let mut q = QStore::dense(0, 1).unwrap();
        for _ in 0..200 {
            td_update(&mut q, &tr(0, 0, 0, 1.0, false), 0.5, 0.5);
        }
        assert!((q.value(0, 0) - 2.0).abs() < 1e-9);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_rules() {
        let sup = ActionSpace::new(3, 1, FlipSet::new(vec![2, 3])).unwrap();
        let empty = transfer_init(&[], &sup, Storage::Dense, &[]).unwrap();
        assert!(empty.states().iter().all(|&x| empty.row(x).unwrap().iter().all(|&v| v == 0.0)));

        let b2 = ActionSpace::new(3, 1, FlipSet::new(vec![2])).unwrap();
        let b3 = ActionSpace::new(3, 1, FlipSet::new(vec![3])).unwrap();
        let b_none = ActionSpace::new(3, 1, FlipSet::empty()).unwrap();
        let mut q2 = QStore::dense(3, b2.len()).unwrap();
        let u1 = 1u64;
        let a_b2 = b2.encode_raw(u1, 1 << 1).unwrap();
        q2.set(5, a_b2, 5.0);
        let init = transfer_init(&[(&b2, &q2)], &sup, Storage::Dense, &[]).unwrap();
        let a_sup = sup.encode_raw(u1, 1 << 1).unwrap();
        assert_eq!(init.value(5, a_sup), 5.0);

        // Action (u=1, no flip) is shared by b2, b3 and the empty set.
        let mut q3 = QStore::dense(3, b3.len()).unwrap();
        let mut q0 = QStore::dense(3, b_none.len()).unwrap();
        let mut q2b = QStore::dense(3, b2.len()).unwrap();
        q2b.set(4, b2.encode_raw(u1, 0).unwrap(), 3.0);
        q3.set(4, b3.encode_raw(u1, 0).unwrap(), 7.0);
        q0.set(4, b_none.encode_raw(u1, 0).unwrap(), -1.0);
        let init = transfer_init(
            &[(&b2, &q2b), (&b3, &q3), (&b_none, &q0)],
            &sup,
            Storage::Sparse,
            &[],
        )
        .unwrap();
        assert_eq!(init.value(4, sup.encode_raw(u1, 0).unwrap()), 7.0);

        let wide = ActionSpace::new(3, 1, FlipSet::new(vec![1, 2])).unwrap();
        let qw = QStore::dense(3, wide.len()).unwrap();
        assert!(matches!(
            transfer_init(&[(&wide, &qw)], &sup, Storage::Dense, &[]),
            Err(Error::NotSubset { .. })
        ));
    }

    #[test]
    fn certificate_and_policy() {
        let spec = ReachabilitySpec::new(2, vec![0, 1, 2], vec![3]).unwrap();
        let mut q = QStore::dense(2, 2).unwrap();
        let c = positive_q_reachable(&q, &spec);
        assert!(!c.all_reachable);
        assert_eq!(c.unresolved, vec![0, 1, 2]);
        for x in [0, 1, 2] {
            q.set(x, 1, 1.0);
        }
        assert!(positive_q_reachable(&q, &spec).all_reachable);

        let space = ActionSpace::new(2, 1, FlipSet::empty()).unwrap();
        let p = extract_policy(&q, &space);
        assert_eq!(p.action(0), Some(1));
        assert_eq!(p.action(3), Some(0));
    }

    #[test]
    fn dense_guard() {
        assert!(matches!(QStore::dense(22, 8), Err(Error::TooLarge(_))));
        assert!(QStore::dense(21, 8).is_ok());
    }

    #[test]
    fn sig12_format() {
        assert_eq!(format_sig12(100.0), "100");
        assert_eq!(format_sig12(-17.0), "-17");
        assert_eq!(format_sig12(0.1), "0.1");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(98.01), "98.01");
        assert_eq!(format_sig12(1e-7), "1e-7");
        assert_eq!(format_sig12(0.0), "0");
    }

    #[test]
    fn snapshot_round_trip() {
        let mut q = QStore::sparse(2, &[5, 1]);
        q.set(5, 1, 99.0);
        q.set(1, 0, 1.0 / 3.0);
        let text = q.snapshot();
        assert_eq!(text, "1 0 0.333333333333\n1 1 0\n5 0 0\n5 1 99\n");
        let back = QStore::from_snapshot(&text, Storage::Sparse, 3, 2).unwrap();
        assert_eq!(back.value(5, 1), 99.0);
        assert!((back.value(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!(QStore::from_snapshot("9 0 1", Storage::Sparse, 3, 2).is_err());
    }

    #[test]
    fn learner_creates_rows_on_visit() {
        let net = crate::network::parse_network("nodes: 2\ninputs: 1\nx1' = x2\nx2' = u1\n").unwrap();
        let spec = ReachabilitySpec::new(2, vec![0], vec![3]).unwrap();
        let env = Environment::new(&net, &spec, FlipSet::empty(), RewardMode::reach()).unwrap();
        let mut learner = QLearner {
            store: QStore::sparse(env.actions().len(), spec.initial()),
            env,
            gamma: 0.9,
            cap: 10,
            learning: LearningSchedule::new(1.0, 0.6).unwrap(),
            exploration: ExplorationSchedule::new(10).unwrap(),
            rng: stream_rng(3, 0),
        };
        let stats = learner.episode(0, 0);
        assert!(stats.steps >= 1);
        assert!(learner.store.row_count() >= 2);
    }
}
