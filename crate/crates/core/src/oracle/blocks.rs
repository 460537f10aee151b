//! Exact minimum-flip costs for networks that split into independent node
//! blocks. Each block is solved on its own small state space and the
//! per-block costs are combined over a common arrival time.

use std::collections::BTreeSet;

use crate::env::ReachabilitySpec;
use crate::error::{Error, Result};
use crate::expr::Variable;
use crate::network::{FlipSet, NetworkDef};
use crate::oracle::Cost;

/// Horizon used when none is given: the sum of the block state-space sizes.
pub const DEFAULT_BLOCK_HORIZON: Option<usize> = None;

const MAX_BLOCK_BITS: usize = 20;

#[derive(Debug, Clone)]
struct Block {
    nodes: Vec<usize>,
    actions: usize,
    /// `succ[y * actions + a]`, local indices.
    succ: Vec<u32>,
    flips: Vec<u32>,
    target: u64,
}

fn project(n: usize, x: u64, nodes: &[usize]) -> u64 {
    nodes
        .iter()
        .fold(0, |acc, &i| (acc << 1) | ((x >> (n - i)) & 1))
}

fn embed(width: usize, local: u64, positions: &[usize]) -> u64 {
    let k = positions.len();
    positions.iter().enumerate().fold(0, |acc, (j, &i)| {
        acc | (((local >> (k - 1 - j)) & 1) << (width - i))
    })
}

impl Block {
    /// `c(T)` for `T = 0..=horizon`: minimum flips to sit on the block
    /// target at exactly time `T`.
    fn exact_time_costs(&self, start: u64, horizon: usize) -> Vec<Option<u32>> {
        let states = 1usize << self.nodes.len();
        let mut layer = vec![None::<u32>; states];
        layer[start as usize] = Some(0);
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(layer[self.target as usize]);
        for _ in 0..horizon {
            let mut next = vec![None::<u32>; states];
            for (y, c) in layer.iter().enumerate() {
                let Some(c) = *c else { continue };
                for a in 0..self.actions {
                    let z = self.succ[y * self.actions + a] as usize;
                    let cand = c + self.flips[a];
                    if next[z].is_none_or(|v| cand < v) {
                        next[z] = Some(cand);
                    }
                }
            }
            layer = next;
            out.push(layer[self.target as usize]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BlockOracle {
    n: usize,
    blocks: Vec<Block>,
    target: u64,
    horizon: usize,
}

impl BlockOracle {
    /// Validates that every update reads only its own block, that no input
    /// feeds two blocks, and that `Md` is a single state.
    pub fn new(
        net: &NetworkDef,
        spec: &ReachabilitySpec,
        blocks: &[Vec<usize>],
        flip_set: &FlipSet,
        horizon: Option<usize>,
    ) -> Result<Self> {
        let n = net.nodes();
        let m = net.inputs();
        flip_set.validate(n)?;
        if spec.target().len() != 1 {
            return Err(Error::InvalidProblem(format!(
                "block oracle needs a single target state, got {}",
                spec.target().len()
            )));
        }
        let target = spec.target()[0];
        let mut owner = vec![usize::MAX; n + 1];
        for (j, b) in blocks.iter().enumerate() {
            for &i in b {
                if i == 0 || i > n || owner[i] != usize::MAX {
                    return Err(Error::InvalidProblem(format!("blocks must partition 1..={n}")));
                }
                owner[i] = j;
            }
        }
        if owner[1..].contains(&usize::MAX) {
            return Err(Error::InvalidProblem(format!("blocks must partition 1..={n}")));
        }
        let mut input_owner = vec![usize::MAX; m + 1];
        let mut built = Vec::with_capacity(blocks.len());
        for (j, nodes) in blocks.iter().enumerate() {
            if nodes.len() > MAX_BLOCK_BITS {
                return Err(Error::TooLarge(format!(
                    "block {} has {} nodes (limit {MAX_BLOCK_BITS})",
                    j + 1,
                    nodes.len()
                )));
            }
            let mut inputs = BTreeSet::new();
            for &i in nodes {
                for v in net.updates()[i - 1].support() {
                    match v {
                        Variable::Node(k) if owner[k] != j => {
                            return Err(Error::InvalidProblem(format!(
                                "update of x{i} reads x{k} from another block"
                            )))
                        }
                        Variable::Input(k) => {
                            if input_owner[k] != usize::MAX && input_owner[k] != j {
                                return Err(Error::InvalidProblem(format!(
                                    "input u{k} is shared between blocks"
                                )));
                            }
                            input_owner[k] = j;
                            inputs.insert(k);
                        }
                        Variable::Node(_) => {}
                    }
                }
            }
            let inputs: Vec<usize> = inputs.into_iter().collect();
            let flips: Vec<usize> = nodes.iter().copied().filter(|&i| flip_set.contains(i)).collect();
            let (s, mi, fb) = (nodes.len(), inputs.len(), flips.len());
            if s + mi + fb > 24 {
                return Err(Error::TooLarge(format!("block {} is too large to enumerate", j + 1)));
            }
            let actions = 1usize << (mi + fb);
            let mut succ = Vec::with_capacity((1 << s) * actions);
            for y in 0..1u64 << s {
                let x = embed(n, y, nodes);
                for a in 0..actions as u64 {
                    let u = if m == 0 { 0 } else { embed(m, a >> fb, &inputs) };
                    let f = embed(n, a & ((1 << fb) - 1), &flips);
                    succ.push(project(n, net.step_index(x, u, f), nodes) as u32);
                }
            }
            let flips = (0..actions as u64)
                .map(|a| (a & ((1 << fb) - 1)).count_ones())
                .collect();
            built.push(Block {
                nodes: nodes.clone(),
                actions,
                succ,
                flips,
                target: project(n, target, nodes),
            });
        }
        let horizon = horizon.unwrap_or_else(|| built.iter().map(|b| 1usize << b.nodes.len()).sum());
        Ok(Self {
            n,
            blocks: built,
            target,
            horizon,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Lexicographic minimum of (total flips, arrival time) from `x0` over
    /// arrival times up to the horizon, `None` if no block schedule lines up.
    pub fn min_flip_cost(&self, x0: u64) -> Option<Cost> {
        if x0 == self.target {
            return Some(Cost::ZERO);
        }
        let per_block: Vec<Vec<Option<u32>>> = self
            .blocks
            .iter()
            .map(|b| b.exact_time_costs(project(self.n, x0, &b.nodes), self.horizon))
            .collect();
        (1..=self.horizon)
            .filter_map(|t| {
                let flips = per_block
                    .iter()
                    .try_fold(0u32, |acc, c| c[t].map(|v| acc + v))?;
                Some(Cost {
                    flips,
                    steps: t as u32,
                })
            })
            .min()
    }
}
