//! Exact ground truth on enumerable instances: reachability witnesses,
//! lexicographic (flips, steps) shortest paths, optimal action values, and
//! the in-degree / forward-reachable state sets.

mod blocks;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

pub use blocks::{BlockOracle, DEFAULT_BLOCK_HORIZON};

use crate::env::{ActionSpace, ReachabilitySpec, RewardMode};
use crate::error::{Error, Result};
use crate::network::{bit_string, FlipSet, NetworkDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeGuard {
    pub max_nodes: usize,
    pub max_bits: usize,
}

impl Default for SizeGuard {
    fn default() -> Self {
        Self {
            max_nodes: 20,
            max_bits: 24,
        }
    }
}

impl SizeGuard {
    pub fn check(&self, n: usize, action_bits: usize) -> Result<()> {
        if n > self.max_nodes || n + action_bits > self.max_bits {
            return Err(Error::TooLarge(format!(
                "exhaustive oracle limited to n <= {} and n + m + |B| <= {} (got n = {n}, n + m + |B| = {}); \
                 declare blocks in the problem file for a decomposed check",
                self.max_nodes,
                self.max_bits,
                n + action_bits
            )));
        }
        Ok(())
    }
}

/// Explicit transition graph: one successor per (state, action).
#[derive(Debug, Clone)]
pub struct ProductGraph {
    n: usize,
    space: ActionSpace,
    succ: Vec<u64>,
}

impl ProductGraph {
    pub fn build(net: &NetworkDef, flip_set: &FlipSet) -> Result<Self> {
        Self::build_with_guard(net, flip_set, SizeGuard::default())
    }

    pub fn build_with_guard(net: &NetworkDef, flip_set: &FlipSet, guard: SizeGuard) -> Result<Self> {
        let n = net.nodes();
        let space = ActionSpace::new(n, net.inputs(), flip_set.clone())?;
        guard.check(n, net.inputs() + flip_set.len())?;
        let actions = space.len();
        let mut succ = Vec::with_capacity((1usize << n) * actions);
        for x in 0..1u64 << n {
            for a in 0..actions {
                succ.push(net.step_index(x, space.input_bits(a), space.flip_bits(a)));
            }
        }
        Ok(Self { n, space, succ })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.space
    }

    pub fn state_count(&self) -> usize {
        1 << self.n
    }

    #[inline]
    pub fn successor(&self, x: u64, a: usize) -> u64 {
        self.succ[x as usize * self.space.len() + a]
    }

    /// In-edges as edge ids `x * |A| + a`, grouped by head state.
    fn reverse(&self) -> (Vec<usize>, Vec<usize>) {
        let states = self.state_count();
        let mut start = vec![0usize; states + 1];
        for &y in &self.succ {
            start[y as usize + 1] += 1;
        }
        for i in 0..states {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut edges = vec![0usize; self.succ.len()];
        for (e, &y) in self.succ.iter().enumerate() {
            edges[fill[y as usize]] = e;
            fill[y as usize] += 1;
        }
        (start, edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub state: u64,
    pub action: usize,
    pub next: u64,
}

/// Minimum number of steps from each state into `Md` (0 inside `Md`).
pub fn distances_to_target(graph: &ProductGraph, spec: &ReachabilitySpec) -> Vec<Option<u32>> {
    let (start, edges) = graph.reverse();
    let a_len = graph.space.len();
    let mut dist = vec![None; graph.state_count()];
    let mut queue = VecDeque::new();
    for &t in spec.target() {
        dist[t as usize] = Some(0);
        queue.push_back(t as usize);
    }
    while let Some(y) = queue.pop_front() {
        let d = dist[y].expect("queued");
        for &e in &edges[start[y]..start[y + 1]] {
            let x = e / a_len;
            if dist[x].is_none() {
                dist[x] = Some(d + 1);
                queue.push_back(x);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityReport {
    pub reachable: bool,
    /// Shortest witness per initial state, `None` when `Md` is unreachable.
    pub witnesses: Vec<(u64, Option<Vec<Step>>)>,
}

impl ReachabilityReport {
    pub fn reachable_from(&self, x0: u64) -> Option<bool> {
        self.witnesses
            .iter()
            .find(|(x, _)| *x == x0)
            .map(|(_, w)| w.is_some())
    }
}

pub fn bfs_reachable(graph: &ProductGraph, spec: &ReachabilitySpec) -> ReachabilityReport {
    let dist = distances_to_target(graph, spec);
    let witnesses: Vec<(u64, Option<Vec<Step>>)> = spec
        .initial()
        .iter()
        .map(|&x0| {
            let w = dist[x0 as usize].map(|_| {
                let mut path = Vec::new();
                let mut x = x0;
                while !spec.is_target(x) {
                    let d = dist[x as usize].expect("on path");
                    let a = (0..graph.space.len())
                        .find(|&a| dist[graph.successor(x, a) as usize] == Some(d - 1))
                        .expect("BFS predecessor");
                    let next = graph.successor(x, a);
                    path.push(Step {
                        state: x,
                        action: a,
                        next,
                    });
                    x = next;
                }
                path
            });
            (x0, w)
        })
        .collect();
    ReachabilityReport {
        reachable: witnesses.iter().all(|(_, w)| w.is_some()),
        witnesses,
    }
}

/// Lexicographic cost: total flips first, then steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost {
    pub flips: u32,
    pub steps: u32,
}

impl Cost {
    pub const ZERO: Cost = Cost { flips: 0, steps: 0 };

    fn then(self, flips: u32) -> Cost {
        Cost {
            flips: self.flips + flips,
            steps: self.steps + 1,
        }
    }
}

/// Lexicographic-minimum cost-to-go into `Md` for every state.
pub fn min_flip_costs(graph: &ProductGraph, spec: &ReachabilitySpec) -> Vec<Option<Cost>> {
    let (start, edges) = graph.reverse();
    let a_len = graph.space.len();
    let mut best: Vec<Option<Cost>> = vec![None; graph.state_count()];
    let mut heap = BinaryHeap::new();
    for &t in spec.target() {
        best[t as usize] = Some(Cost::ZERO);
        heap.push(Reverse((Cost::ZERO, t as usize)));
    }
    while let Some(Reverse((cost, y))) = heap.pop() {
        if best[y] != Some(cost) {
            continue;
        }
        for &e in &edges[start[y]..start[y + 1]] {
            let (x, a) = (e / a_len, e % a_len);
            if spec.is_target(x as u64) {
                continue;
            }
            let cand = cost.then(graph.space.flip_count(a));
            if best[x].is_none_or(|b| cand < b) {
                best[x] = Some(cand);
                heap.push(Reverse((cand, x)));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub cost: Cost,
    pub trajectory: Vec<Step>,
}

fn follow_plan(graph: &ProductGraph, spec: &ReachabilitySpec, costs: &[Option<Cost>], x0: u64) -> Option<Plan> {
    let cost = costs[x0 as usize]?;
    let mut trajectory = Vec::new();
    let mut x = x0;
    while !spec.is_target(x) {
        let here = costs[x as usize].expect("on plan");
        let a = (0..graph.space.len())
            .find(|&a| {
                costs[graph.successor(x, a) as usize]
                    .is_some_and(|c| c.then(graph.space.flip_count(a)) == here)
            })
            .expect("Dijkstra predecessor");
        let next = graph.successor(x, a);
        trajectory.push(Step {
            state: x,
            action: a,
            next,
        });
        x = next;
    }
    Some(Plan { cost, trajectory })
}

/// Minimum-flip plan from `x0`, ties broken by fewer steps then by the
/// smallest action index at each state.
pub fn min_flip_path(graph: &ProductGraph, spec: &ReachabilitySpec, x0: u64) -> Option<Plan> {
    let costs = min_flip_costs(graph, spec);
    follow_plan(graph, spec, &costs, x0)
}

/// [`min_flip_path`] for every initial state, sharing one Dijkstra pass.
pub fn min_flip_plans(graph: &ProductGraph, spec: &ReachabilitySpec) -> Vec<(u64, Option<Plan>)> {
    let costs = min_flip_costs(graph, spec);
    spec.initial()
        .iter()
        .map(|&x0| (x0, follow_plan(graph, spec, &costs, x0)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    actions: usize,
    pub q: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm change per sweep.
    pub deltas: Vec<f64>,
    /// With `gamma = 1`, states that cannot reach `Md`; their values (and
    /// those of actions leading to them) are held at [`VALUE_FLOOR`].
    pub floored: Vec<u64>,
}

pub const VALUE_FLOOR: f64 = -1.0e12;
pub const VALUE_TOLERANCE: f64 = 1e-10;

impl ValueIteration {
    pub fn value(&self, x: u64, a: usize) -> f64 {
        self.q[x as usize * self.actions + a]
    }

    pub fn row(&self, x: u64) -> &[f64] {
        &self.q[x as usize * self.actions..(x as usize + 1) * self.actions]
    }

    pub fn max_value(&self, x: u64) -> f64 {
        self.row(x).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Synchronous Bellman optimality sweeps until the sup-norm change drops
/// below `1e-10`. Target rows are fixed at zero.
pub fn value_iteration(
    graph: &ProductGraph,
    spec: &ReachabilitySpec,
    mode: RewardMode,
    gamma: f64,
) -> Result<ValueIteration> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let states = graph.state_count();
    let a_len = graph.space.len();
    let dead: Vec<bool> = if gamma >= 1.0 {
        distances_to_target(graph, spec).iter().map(Option::is_none).collect()
    } else {
        vec![false; states]
    };
    let mut q = vec![0.0; states * a_len];
    let mut v = vec![0.0; states];
    for x in 0..states {
        if dead[x] {
            v[x] = VALUE_FLOOR;
            q[x * a_len..(x + 1) * a_len].fill(VALUE_FLOOR);
        }
    }
    let max_sweeps = 10_000_000 / (states * a_len).max(1) + 100_000;
    let mut deltas = Vec::new();
    loop {
        let mut delta: f64 = 0.0;
        for x in 0..states {
            if spec.is_target(x as u64) || dead[x] {
                continue;
            }
            for a in 0..a_len {
                let y = graph.successor(x as u64, a);
                let arrived = spec.is_target(y);
                let new = if dead[y as usize] {
                    VALUE_FLOOR
                } else {
                    let boot = if arrived { 0.0 } else { v[y as usize] };
                    mode.reward(graph.space.flip_count(a), arrived) + gamma * boot
                };
                let cell = &mut q[x * a_len + a];
                delta = delta.max((new - *cell).abs());
                *cell = new;
            }
        }
        for x in 0..states {
            if !spec.is_target(x as u64) && !dead[x] {
                v[x] = q[x * a_len..(x + 1) * a_len]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        deltas.push(delta);
        if delta < VALUE_TOLERANCE {
            break;
        }
        if deltas.len() >= max_sweeps {
            return Err(Error::InvalidParameter(format!(
                "value iteration did not converge in {max_sweeps} sweeps"
            )));
        }
    }
    Ok(ValueIteration {
        actions: a_len,
        q,
        iterations: deltas.len(),
        deltas,
        floored: (0..states as u64).filter(|&x| dead[x as usize]).collect(),
    })
}

/// States with at least one flip-free predecessor, i.e. the image of the
/// unflipped dynamics.
pub fn in_degree_set(net: &NetworkDef, guard: SizeGuard) -> Result<Vec<u64>> {
    let (n, m) = (net.nodes(), net.inputs());
    guard.check(n, m)?;
    let mut hit = vec![false; 1 << n];
    for x in 0..1u64 << n {
        for u in 0..1u64 << m {
            hit[net.next_index(x, u) as usize] = true;
        }
    }
    Ok((0..1u64 << n).filter(|&x| hit[x as usize]).collect())
}

fn closure(graph: &ProductGraph, seeds: &[u64], include_seeds: bool) -> Vec<u64> {
    let mut seen = vec![false; graph.state_count()];
    let mut queue = VecDeque::new();
    for &x in seeds {
        if include_seeds {
            seen[x as usize] = true;
        }
        queue.push_back(x);
    }
    let mut expanded = vec![false; graph.state_count()];
    while let Some(x) = queue.pop_front() {
        if std::mem::replace(&mut expanded[x as usize], true) {
            continue;
        }
        for a in 0..graph.space.len() {
            let y = graph.successor(x, a);
            if !seen[y as usize] {
                seen[y as usize] = true;
            }
            if !expanded[y as usize] {
                queue.push_back(y);
            }
        }
    }
    (0..graph.state_count() as u64)
        .filter(|&x| seen[x as usize])
        .collect()
}

/// Forward closure of `M0`, including `M0` itself.
pub fn reachable_set(graph: &ProductGraph, initial: &[u64]) -> Vec<u64> {
    closure(graph, initial, true)
}

/// States reachable from `M0` in one or more steps.
pub fn successor_closure(graph: &ProductGraph, initial: &[u64]) -> Vec<u64> {
    closure(graph, initial, false)
}

/// One transition per line: `x →(u=..,flip={..}) x'`.
pub fn render_trajectory(space: &ActionSpace, steps: &[Step]) -> String {
    let n = space.nodes();
    let mut out = String::new();
    for s in steps {
        let (u, f) = space.decode(s.action);
        let _ = writeln!(
            out,
            "{} →(u={},flip={}) {}",
            bit_string(n, s.state),
            u,
            f,
            bit_string(n, s.next)
        );
    }
    out
}
