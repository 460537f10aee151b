//! Experiment runner behind the `flipctl` binary.

pub mod config;
pub mod replicate;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use flipctl_core::bundled;
use flipctl_core::kernel::train_flip_set;
use flipctl_core::oracle::{
    bfs_reachable, in_degree_set, min_flip_plans, reachable_set, render_trajectory,
    successor_closure, BlockOracle, Cost, ProductGraph, SizeGuard,
};
use flipctl_core::policy::WeightBound;
use flipctl_core::{
    default_episode_cap, evaluate_policy, find_kernels, learn_min_flip_policy,
    learn_min_flip_policy_sparse, learn_min_step_policy, parse_network, parse_problem, FlipSet,
    KernelResult, KernelSearchParams, NetworkDef, PolicyEval, PolicyParams, PolicyRun, Problem,
    Storage, Variant,
};

pub use config::{Cap, Config, Objective};

/// Process exit status contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Unreachable,
    AssertionFailed,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Unreachable => 2,
            Outcome::AssertionFailed => 3,
        }
    }
}

pub const USAGE_EXIT: i32 = 1;

/// Exit code for an error escaping a command.
pub fn error_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<flipctl_core::Error>() {
        Some(flipctl_core::Error::Unreachable { .. }) => Outcome::Unreachable.code(),
        _ => USAGE_EXIT,
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub net: NetworkDef,
    pub problem: Problem,
}

impl Instance {
    pub fn from_text(name: &str, network: &str, problem: &str) -> Result<Self> {
        let net = parse_network(network).with_context(|| format!("network {name}"))?;
        let problem =
            parse_problem(problem, net.nodes()).with_context(|| format!("problem {name}"))?;
        Ok(Self {
            name: name.to_string(),
            net,
            problem,
        })
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (net, problem) = bundled::example(name)
            .ok_or_else(|| anyhow!("unknown example `{name}` (expected example2 or example3)"))?;
        Self::from_text(name, net, problem)
    }

    pub fn load(cfg: &Config) -> Result<Self> {
        match (&cfg.example, &cfg.network, &cfg.problem) {
            (_, Some(net), Some(problem)) => {
                let (np, pp) = (cfg.resolve(net), cfg.resolve(problem));
                let net_text = fs::read_to_string(&np)
                    .with_context(|| format!("reading network {}", np.display()))?;
                let problem_text = fs::read_to_string(&pp)
                    .with_context(|| format!("reading problem {}", pp.display()))?;
                Self::from_text(&np.display().to_string(), &net_text, &problem_text)
            }
            (Some(name), None, None) => Self::bundled(name),
            _ => bail!("config must give both `network` and `problem`, or `example`"),
        }
    }

    fn cap(&self, cap: Option<Cap>, default: Cap) -> Option<usize> {
        match cap.unwrap_or(default) {
            Cap::Auto => Some(default_episode_cap(&self.problem.spec)),
            Cap::Steps(s) => Some(s),
        }
    }
}

pub fn out_dir(cfg: &Config, cli_out: Option<&Path>) -> Result<PathBuf> {
    let dir = match (cli_out, &cfg.out) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => cfg.resolve(d),
        (None, None) => PathBuf::from("flipctl-out"),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn kernel_params(cfg: &Config, inst: &Instance, seed: u64) -> KernelSearchParams {
    KernelSearchParams {
        variant: cfg.variant.unwrap_or(Variant::Fast),
        episodes: cfg.episodes.unwrap_or(1000),
        cap: inst.cap(cfg.tmax, Cap::Auto),
        gamma: cfg.gamma.unwrap_or(0.99),
        beta: cfg.beta.unwrap_or(1.0),
        omega: cfg.omega.unwrap_or(0.6),
        seed,
        parallel: true,
    }
}

/// `flipset,episode,reachable_rate,seed` rows for every trained flip set.
pub fn curves_csv(results: &[(u64, KernelResult)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["flipset", "episode", "reachable_rate", "seed"])?;
    for (seed, res) in results {
        for run in &res.runs {
            let set = run.flip_set.to_string();
            for (ep, rate) in run.curve.iter().enumerate() {
                w.write_record([
                    set.as_str(),
                    &(ep + 1).to_string(),
                    &rate.to_string(),
                    &seed.to_string(),
                ])?;
            }
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn kernel_names(res: &KernelResult) -> Vec<String> {
    res.kernels.iter().map(ToString::to_string).collect()
}

pub struct KernelsReport {
    pub results: Vec<(u64, KernelResult)>,
    /// Kernel list shared by all seeds, if they agree.
    pub unanimous: Option<Vec<FlipSet>>,
    pub text: String,
    pub outcome: Outcome,
}

pub fn search_seeds(inst: &Instance, cfg: &Config, seeds: &[u64]) -> Result<Vec<(u64, KernelResult)>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let params = kernel_params(cfg, inst, seed);
            let res = find_kernels(&inst.net, &inst.problem.spec, &inst.problem.flip_candidates, &params)?;
            info!("seed {seed}: kernels {:?}", kernel_names(&res));
            Ok((seed, res))
        })
        .collect()
}

pub fn kernels_text(variant: Variant, results: &[(u64, KernelResult)]) -> (Option<Vec<FlipSet>>, String) {
    let mut text = format!("variant: {variant}\n");
    for (seed, res) in results {
        let names = kernel_names(res);
        let _ = writeln!(
            text,
            "seed {seed}: {}",
            if names.is_empty() { "none".to_string() } else { names.join(" ") }
        );
    }
    let first = &results[0].1.kernels;
    let unanimous = results
        .iter()
        .all(|(_, r)| &r.kernels == first)
        .then(|| first.clone());
    match &unanimous {
        Some(k) if k.is_empty() => text.push_str("verdict: cannot realize reachability\n"),
        Some(k) => {
            for kernel in k {
                let _ = writeln!(text, "kernel: {kernel}");
            }
        }
        None => text.push_str("verdict: seeds disagree\n"),
    }
    let _ = writeln!(text, "unanimous: {}", if unanimous.is_some() { "yes" } else { "no" });
    for (seed, res) in results {
        let _ = write!(text, "\n[seed {seed}]\n{}", res.summary());
    }
    (unanimous, text)
}

pub fn cmd_kernels(cfg: &Config, out: &Path) -> Result<KernelsReport> {
    let inst = Instance::load(cfg)?;
    let results = search_seeds(&inst, cfg, &cfg.seeds)?;
    let variant = cfg.variant.unwrap_or(Variant::Fast);
    let (unanimous, text) = kernels_text(variant, &results);
    write(out, "curves.csv", &curves_csv(&results)?)?;
    write(out, "kernels.txt", &text)?;
    let outcome = if results.iter().all(|(_, r)| r.kernels.is_empty()) {
        Outcome::Unreachable
    } else {
        Outcome::Success
    };
    Ok(KernelsReport {
        results,
        unanimous,
        text,
        outcome,
    })
}

/// Exact per-initial-state minimum (flips, steps), from the dense oracle
/// when it fits or the declared block decomposition otherwise.
pub fn exact_costs(
    inst: &Instance,
    flip_set: &FlipSet,
    horizon: Option<usize>,
) -> Result<Option<BTreeMap<u64, Option<Cost>>>> {
    let spec = &inst.problem.spec;
    match ProductGraph::build(&inst.net, flip_set) {
        Ok(g) => Ok(Some(
            min_flip_plans(&g, spec)
                .into_iter()
                .map(|(x, p)| (x, p.map(|p| p.cost)))
                .collect(),
        )),
        Err(flipctl_core::Error::TooLarge(msg)) => match &inst.problem.blocks {
            Some(blocks) => {
                let oracle = BlockOracle::new(&inst.net, spec, blocks, flip_set, horizon)?;
                Ok(Some(
                    spec.initial()
                        .iter()
                        .map(|&x| (x, oracle.min_flip_cost(x)))
                        .collect(),
                ))
            }
            None => {
                info!("no exact check: {msg}");
                Ok(None)
            }
        },
        Err(e) => Err(e.into()),
    }
}

fn min_step_costs(inst: &Instance, flip_set: &FlipSet) -> Option<BTreeMap<u64, Option<u32>>> {
    let g = ProductGraph::build(&inst.net, flip_set).ok()?;
    let dist = flipctl_core::oracle::distances_to_target(&g, &inst.problem.spec);
    Some(
        inst.problem
            .spec
            .initial()
            .iter()
            .map(|&x| (x, dist[x as usize]))
            .collect(),
    )
}

pub fn policy_params(cfg: &Config, inst: &Instance, weight: f64, seed: u64) -> PolicyParams {
    PolicyParams {
        episodes: cfg.policy_episodes.or(cfg.episodes).unwrap_or(30_000),
        cap: cfg
            .policy_tmax
            .or_else(|| inst.cap(cfg.tmax, Cap::Steps(100)))
            .unwrap_or(100),
        beta: cfg.beta.unwrap_or(0.01),
        omega: cfg.omega.unwrap_or(0.85),
        weight,
        weight_step: cfg.weight_step.unwrap_or(20.0),
        gamma: cfg.gamma.unwrap_or(0.99),
        seed,
    }
}

fn read_kernel(path: &Path) -> Result<FlipSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("kernel:"))
        .ok_or_else(|| anyhow!("{} lists no kernel", path.display()))?;
    Ok(line.trim().parse()?)
}

pub fn flip_set_for_policy(cfg: &Config) -> Result<FlipSet> {
    match (&cfg.flip_set, &cfg.kernels_file) {
        (Some(b), _) => Ok(b.clone()),
        (None, Some(path)) => read_kernel(&cfg.resolve(path)),
        (None, None) => bail!("policy needs `flip_set` or `kernels_file` in the config"),
    }
}

/// Whether `flip_set` is known to realize reachability; `None` when no
/// exact check fits.
fn certified_reachable(inst: &Instance, flip_set: &FlipSet, horizon: Option<usize>) -> Result<Option<bool>> {
    Ok(exact_costs(inst, flip_set, horizon)?.map(|c| c.values().all(Option::is_some)))
}

pub struct PolicyOutcome {
    pub seed: u64,
    pub run: PolicyRun,
    pub eval: PolicyEval,
    /// Per initial state, whether the rollout matched the exact optimum.
    pub optimal: BTreeMap<u64, Option<bool>>,
}

impl PolicyOutcome {
    pub fn all_optimal(&self) -> bool {
        self.optimal.values().all(|v| *v == Some(true))
    }
}

/// Learns and evaluates one policy per seed.
pub fn learn_policies(
    inst: &Instance,
    cfg: &Config,
    flip_set: &FlipSet,
    seeds: &[u64],
) -> Result<Vec<PolicyOutcome>> {
    let spec = &inst.problem.spec;
    let storage = cfg.storage.unwrap_or(if cfg.weight_step.is_some() {
        Storage::Sparse
    } else {
        Storage::Dense
    });
    let weight = match cfg.weight {
        Some(w) => w,
        None => default_weight(inst, cfg, flip_set, storage)?,
    };
    if cfg.objective == Objective::MinFlip && storage == Storage::Dense {
        let bound = WeightBound::NoPriorKnowledge {
            nodes: inst.net.nodes(),
            targets: spec.target().len(),
        };
        if !bound.admits(weight) {
            warn!("weight {weight} does not exceed 2^n - |Md| = {}", bound.value());
        }
    }
    let exact = match cfg.objective {
        Objective::MinFlip => exact_costs(inst, flip_set, cfg.horizon)?,
        Objective::MinStep => min_step_costs(inst, flip_set).map(|m| {
            m.into_iter()
                .map(|(x, d)| (x, d.map(|steps| Cost { flips: 0, steps })))
                .collect()
        }),
    };
    seeds
        .par_iter()
        .map(|&seed| {
            let params = policy_params(cfg, inst, weight, seed);
            let run = match (cfg.objective, storage) {
                (Objective::MinStep, s) => learn_min_step_policy(&inst.net, spec, flip_set, &params, s)?,
                (Objective::MinFlip, Storage::Dense) => learn_min_flip_policy(&inst.net, spec, flip_set, &params)?,
                (Objective::MinFlip, Storage::Sparse) => {
                    learn_min_flip_policy_sparse(&inst.net, spec, flip_set, &params)?
                }
            };
            let eval_weight = if cfg.objective == Objective::MinFlip { run.final_weight } else { 1.0 };
            let eval = evaluate_policy(&inst.net, spec, &run.policy, eval_weight, cfg.eval_cap.unwrap_or(params.cap))?;
            let optimal = eval
                .entries
                .iter()
                .map(|e| {
                    let verdict = exact.as_ref().map(|m| match (m.get(&e.x0).copied().flatten(), cfg.objective) {
                        (Some(c), Objective::MinFlip) => {
                            e.reached && e.total_flips == u64::from(c.flips) && e.steps as u32 == c.steps
                        }
                        (Some(c), Objective::MinStep) => e.reached && e.steps as u32 == c.steps,
                        (None, _) => false,
                    });
                    (e.x0, verdict)
                })
                .collect();
            Ok(PolicyOutcome {
                seed,
                run,
                eval,
                optimal,
            })
        })
        .collect()
}

/// Weight used when the config gives none: `2^n - |Md| + 1` for dense
/// tables, one more than the row count of a sparse reach-only table
/// otherwise.
fn default_weight(inst: &Instance, cfg: &Config, flip_set: &FlipSet, storage: Storage) -> Result<f64> {
    let spec = &inst.problem.spec;
    if storage == Storage::Dense {
        return Ok(WeightBound::NoPriorKnowledge {
            nodes: inst.net.nodes(),
            targets: spec.target().len(),
        }
        .value()
            + 1.0);
    }
    let mut params = kernel_params(cfg, inst, cfg.seeds[0]);
    params.variant = Variant::SmallMemory;
    params.episodes = cfg.episodes.unwrap_or(10_000);
    let run = train_flip_set(&inst.net, spec, flip_set, &params, &[])?;
    Ok(run.row_count() as f64 + 1.0)
}

pub fn eval_csv(n: usize, outcomes: &[PolicyOutcome]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x0", "reached", "steps", "total_flips", "return", "seed", "optimal"])?;
    for o in outcomes {
        for e in &o.eval.entries {
            let optimal = match o.optimal.get(&e.x0).copied().flatten() {
                Some(true) => "optimal",
                Some(false) => "suboptimal",
                None => "unchecked",
            };
            w.write_record([
                flipctl_core::network::bit_string(n, e.x0),
                e.reached.to_string(),
                e.steps.to_string(),
                e.total_flips.to_string(),
                e.ret.to_string(),
                o.seed.to_string(),
                optimal.to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub struct PolicyReport {
    pub outcomes: Vec<PolicyOutcome>,
    pub text: String,
    pub outcome: Outcome,
}

fn policy_summary(flip_set: &FlipSet, outcomes: &[PolicyOutcome]) -> String {
    let mut text = format!("flip set: {flip_set}\n");
    for o in outcomes {
        let reached = o.eval.entries.iter().filter(|e| e.reached).count();
        let optimal = o.optimal.values().filter(|v| **v == Some(true)).count();
        let _ = writeln!(
            text,
            "seed {}: reached {}/{}, optimal {}/{}, final weight {}, weight raises {}, rows {}",
            o.seed,
            reached,
            o.eval.entries.len(),
            optimal,
            o.optimal.len(),
            o.run.final_weight,
            o.run.weight_bumps,
            o.run.row_count()
        );
    }
    text
}

pub fn cmd_policy(cfg: &Config, out: &Path) -> Result<PolicyReport> {
    let inst = Instance::load(cfg)?;
    let flip_set = flip_set_for_policy(cfg)?;
    flip_set.validate(inst.net.nodes())?;
    match certified_reachable(&inst, &flip_set, cfg.horizon)? {
        Some(false) => warn!("flip set {flip_set} does not realize reachability for every initial state"),
        None => warn!("reachability under {flip_set} is not verified; run `kernels` first"),
        Some(true) => {}
    }
    let outcomes = learn_policies(&inst, cfg, &flip_set, &cfg.seeds)?;
    let first = &outcomes[0];
    write(out, "policy.txt", &first.run.policy.to_text())?;
    for o in &outcomes[1..] {
        write(out, &format!("policy.seed{}.txt", o.seed), &o.run.policy.to_text())?;
    }
    write(out, "eval.csv", &eval_csv(inst.net.nodes(), &outcomes)?)?;
    let text = policy_summary(&flip_set, &outcomes);
    write(out, "policy_summary.txt", &text)?;
    let outcome = if outcomes.iter().all(|o| o.eval.all_reached()) {
        Outcome::Success
    } else {
        Outcome::Unreachable
    };
    Ok(PolicyReport {
        outcomes,
        text,
        outcome,
    })
}

pub struct OracleReport {
    pub reachable: bool,
    pub text: String,
}

pub fn oracle_report(inst: &Instance, flip_set: &FlipSet, horizon: Option<usize>) -> Result<OracleReport> {
    let spec = &inst.problem.spec;
    let n = inst.net.nodes();
    let mut text = format!("flip set: {flip_set}\n");
    let graph = match ProductGraph::build(&inst.net, flip_set) {
        Ok(g) => g,
        Err(flipctl_core::Error::TooLarge(msg)) => {
            let Some(blocks) = &inst.problem.blocks else {
                bail!("{msg}");
            };
            let oracle = BlockOracle::new(&inst.net, spec, blocks, flip_set, horizon)?;
            let _ = writeln!(text, "method: block decomposition ({} blocks, horizon {})", blocks.len(), oracle.horizon());
            let mut reachable = true;
            for &x0 in spec.initial() {
                match oracle.min_flip_cost(x0) {
                    Some(c) => {
                        let _ = writeln!(text, "x0 {}: flips={} steps={}", flipctl_core::network::bit_string(n, x0), c.flips, c.steps);
                    }
                    None => {
                        reachable = false;
                        let _ = writeln!(text, "x0 {}: not reachable", flipctl_core::network::bit_string(n, x0));
                    }
                }
            }
            let _ = writeln!(text, "reachable: {}", if reachable { "yes" } else { "no" });
            return Ok(OracleReport { reachable, text });
        }
        Err(e) => return Err(e.into()),
    };
    let rep = bfs_reachable(&graph, spec);
    let bound = (1usize << n) - spec.target().len();
    let _ = writeln!(text, "method: exhaustive ({} states)", graph.state_count());
    let _ = writeln!(text, "reachable: {}", if rep.reachable { "yes" } else { "no" });
    let mut witness_ok = true;
    for (x0, w) in &rep.witnesses {
        if let Some(w) = w {
            witness_ok &= w.len() <= bound;
        } else {
            let _ = writeln!(text, "x0 {}: not reachable", flipctl_core::network::bit_string(n, *x0));
        }
    }
    for (x0, plan) in min_flip_plans(&graph, spec) {
        if let Some(p) = plan {
            let _ = writeln!(
                text,
                "x0 {}: flips={} steps={}",
                flipctl_core::network::bit_string(n, x0),
                p.cost.flips,
                p.cost.steps
            );
            for line in render_trajectory(graph.actions(), &p.trajectory).lines() {
                let _ = writeln!(text, "  {line}");
            }
        }
    }
    let in_deg = in_degree_set(&inst.net, SizeGuard::default())?;
    let v = successor_closure(&graph, spec.initial());
    let v_m0 = reachable_set(&graph, spec.initial());
    let _ = writeln!(text, "|I| = {}", in_deg.len());
    let _ = writeln!(text, "|V| = {}", v.len());
    let _ = writeln!(text, "|V ∪ M0| = {}", v_m0.len());
    let _ = writeln!(
        text,
        "witness length <= 2^n - |Md| = {bound}: {}",
        if witness_ok { "ok" } else { "violated" }
    );
    let _ = writeln!(
        text,
        "|V| <= |I|: {}",
        if v.len() <= in_deg.len() { "ok" } else { "violated" }
    );
    Ok(OracleReport {
        reachable: rep.reachable,
        text,
    })
}

pub fn cmd_oracle(cfg: &Config, out: &Path) -> Result<(OracleReport, Outcome)> {
    let inst = Instance::load(cfg)?;
    let flip_set = cfg
        .flip_set
        .clone()
        .unwrap_or_else(|| inst.problem.flip_candidates.clone());
    flip_set.validate(inst.net.nodes())?;
    let report = oracle_report(&inst, &flip_set, cfg.horizon)?;
    write(out, "oracle.txt", &report.text)?;
    let outcome = if report.reachable {
        Outcome::Success
    } else {
        Outcome::Unreachable
    };
    Ok((report, outcome))
}

