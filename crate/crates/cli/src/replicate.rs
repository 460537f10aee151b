//! End-to-end reproduction of the two bundled reference systems.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use flipctl_core::oracle::{bfs_reachable, BlockOracle, ProductGraph};
use flipctl_core::{enumerate_subsets, FlipSet, Storage, Variant};

use crate::config::{Cap, Config, Objective};
use crate::{curves_csv, eval_csv, kernels_text, learn_policies, search_seeds, Instance, Outcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub struct ReplicateReport {
    pub example: String,
    pub checks: Vec<Check>,
    pub text: String,
}

impl ReplicateReport {
    pub fn outcome(&self) -> Outcome {
        if self.checks.iter().all(|c| c.passed) {
            Outcome::Success
        } else {
            Outcome::AssertionFailed
        }
    }
}

struct Settings {
    expected: Vec<FlipSet>,
    variants: Vec<Variant>,
    kernel_episodes: usize,
    kernel_tmax: usize,
    policy_episodes: usize,
    policy_tmax: usize,
    weight: f64,
    weight_step: Option<f64>,
}

fn settings(example: &str, cfg: &Config) -> Result<Settings> {
    let kernel_tmax = |default| match cfg.tmax {
        Some(Cap::Steps(s)) => s,
        _ => default,
    };
    let mut s = match example {
        "example2" => Settings {
            expected: vec![FlipSet::new(vec![1, 2]), FlipSet::new(vec![2, 3])],
            variants: vec![Variant::Basic, Variant::Fast],
            kernel_episodes: cfg.episodes.unwrap_or(100),
            kernel_tmax: kernel_tmax(10),
            policy_episodes: cfg.policy_episodes.unwrap_or(30_000),
            policy_tmax: cfg.policy_tmax.unwrap_or(100),
            weight: 8.0,
            weight_step: None,
        },
        "example3" => Settings {
            expected: vec![FlipSet::new(vec![1, 2, 6]), FlipSet::new(vec![2, 3, 6])],
            variants: vec![Variant::SmallMemory, Variant::Hybrid],
            kernel_episodes: cfg.episodes.unwrap_or(10_000),
            kernel_tmax: kernel_tmax(50),
            policy_episodes: cfg.policy_episodes.unwrap_or(200_000),
            policy_tmax: cfg.policy_tmax.unwrap_or(100),
            weight: 18.0,
            weight_step: Some(20.0),
        },
        other => bail!("unknown example `{other}` (expected example2 or example3)"),
    };
    if let Some(v) = cfg.variant {
        s.variants = vec![v];
    }
    Ok(s)
}

fn label(b: &FlipSet) -> String {
    b.nodes().iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
}

fn show(sets: &[FlipSet]) -> String {
    if sets.is_empty() {
        return "none".into();
    }
    sets.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// Minimal flip sets found by exact search over all subsets of `A`.
fn exact_kernels(inst: &Instance) -> Result<Vec<FlipSet>> {
    let spec = &inst.problem.spec;
    let a = &inst.problem.flip_candidates;
    for k in 0..=a.len() {
        let mut found = Vec::new();
        for b in enumerate_subsets(a, k)? {
            let ok = match ProductGraph::build(&inst.net, &b) {
                Ok(g) => bfs_reachable(&g, spec).reachable,
                Err(flipctl_core::Error::TooLarge(_)) => {
                    let Some(blocks) = &inst.problem.blocks else {
                        bail!("no exact method for {}", inst.name);
                    };
                    let oracle = BlockOracle::new(&inst.net, spec, blocks, &b, None)?;
                    spec.initial().iter().all(|&x| oracle.min_flip_cost(x).is_some())
                }
                Err(e) => return Err(e.into()),
            };
            if ok {
                found.push(b);
            }
        }
        if !found.is_empty() {
            return Ok(found);
        }
    }
    Ok(Vec::new())
}

pub fn replicate(example: &str, cfg: &Config, out: &Path) -> Result<ReplicateReport> {
    let inst = Instance::bundled(example)?;
    let s = settings(example, cfg)?;
    let mut checks = Vec::new();
    let mut kernels_doc = String::new();

    for &variant in &s.variants {
        let kcfg = Config {
            variant: Some(variant),
            episodes: Some(s.kernel_episodes),
            tmax: Some(Cap::Steps(s.kernel_tmax)),
            beta: Some(1.0),
            omega: Some(0.6),
            gamma: Some(0.99),
            seeds: cfg.seeds.clone(),
            ..Config::default()
        };
        let results = search_seeds(&inst, &kcfg, &cfg.seeds)?;
        let (unanimous, text) = kernels_text(variant, &results);
        kernels_doc.push_str(&text);
        kernels_doc.push('\n');
        std::fs::write(out.join(format!("curves_{variant}.csv")), curves_csv(&results)?)?;
        let passed = unanimous.as_deref() == Some(&s.expected[..]);
        let detail = match &unanimous {
            Some(k) => format!("{} across {} seeds", show(k), cfg.seeds.len()),
            None => "seeds disagree".to_string(),
        };
        checks.push(Check::new(format!("kernels ({variant})"), passed, detail));
        if variant.storage() == Storage::Sparse {
            let dense = results
                .iter()
                .flat_map(|(_, r)| &r.runs)
                .filter(|r| r.storage() == Storage::Dense)
                .count();
            checks.push(Check::new(
                format!("no dense tables ({variant})"),
                dense == 0,
                format!("{dense} dense tables"),
            ));
        }
    }
    std::fs::write(out.join("kernels.txt"), &kernels_doc)?;

    let exact = exact_kernels(&inst)?;
    checks.push(Check::new(
        "exact minimal flip sets",
        exact == s.expected,
        show(&exact),
    ));

    let pcfg = Config {
        objective: Objective::MinFlip,
        policy_episodes: Some(s.policy_episodes),
        policy_tmax: Some(s.policy_tmax),
        eval_cap: Some(s.policy_tmax),
        beta: Some(0.01),
        omega: Some(0.85),
        weight: Some(s.weight),
        weight_step: s.weight_step,
        storage: Some(if s.weight_step.is_some() { Storage::Sparse } else { Storage::Dense }),
        seeds: cfg.seeds.clone(),
        horizon: cfg.horizon,
        ..Config::default()
    };
    for b in &s.expected {
        let outcomes = learn_policies(&inst, &pcfg, b, &cfg.seeds)?;
        std::fs::write(out.join(format!("policy_{}.txt", label(b))), outcomes[0].run.policy.to_text())?;
        std::fs::write(
            out.join(format!("eval_{}.csv", label(b))),
            eval_csv(inst.net.nodes(), &outcomes)?,
        )?;
        let optimal = outcomes.iter().filter(|o| o.all_optimal()).count();
        checks.push(Check::new(
            format!("minimum-flip policy {b}"),
            optimal == outcomes.len(),
            format!("{optimal}/{} seeds optimal on every initial state", outcomes.len()),
        ));
        if s.weight_step.is_some() {
            let ok = outcomes
                .iter()
                .all(|o| o.run.final_weight > o.run.row_count() as f64 && o.run.storage() == Storage::Sparse);
            let detail = outcomes
                .iter()
                .map(|o| format!("w={} rows={}", o.run.final_weight, o.run.row_count()))
                .collect::<Vec<_>>()
                .join(", ");
            checks.push(Check::new(format!("final weight above row count {b}"), ok, detail));
        }
    }

    let mut text = format!("example: {example}\nseeds: {:?}\n", cfg.seeds);
    for c in &checks {
        let _ = writeln!(text, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    std::fs::write(out.join("replicate.txt"), &text)?;
    Ok(ReplicateReport {
        example: example.to_string(),
        checks,
        text,
    })
}
