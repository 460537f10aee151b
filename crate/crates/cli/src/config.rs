//! `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flipctl_core::{FlipSet, Storage, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MinFlip,
    MinStep,
}

/// Per-episode step cap: a number, or `auto` for `2^n - |Md|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cap {
    Auto,
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub network: Option<PathBuf>,
    pub problem: Option<PathBuf>,
    pub example: Option<String>,
    pub variant: Option<Variant>,
    pub episodes: Option<usize>,
    pub tmax: Option<Cap>,
    pub beta: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
    pub weight: Option<f64>,
    pub weight_step: Option<f64>,
    pub flip_set: Option<FlipSet>,
    pub kernels_file: Option<PathBuf>,
    pub objective: Objective,
    pub storage: Option<Storage>,
    pub eval_cap: Option<usize>,
    pub horizon: Option<usize>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub policy_episodes: Option<usize>,
    pub policy_tmax: Option<usize>,
}

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

pub const KEYS: &[&str] = &[
    "network",
    "problem",
    "example",
    "variant",
    "episodes",
    "tmax",
    "beta",
    "omega",
    "gamma",
    "weight",
    "weight_step",
    "flip_set",
    "kernels_file",
    "objective",
    "storage",
    "eval_cap",
    "horizon",
    "seeds",
    "out",
    "policy_episodes",
    "policy_tmax",
];

impl Default for Config {
    fn default() -> Self {
        Self {
            base_dir: PathBuf::from("."),
            network: None,
            problem: None,
            example: None,
            variant: None,
            episodes: None,
            tmax: None,
            beta: None,
            omega: None,
            gamma: None,
            weight: None,
            weight_step: None,
            flip_set: None,
            kernels_file: None,
            objective: Objective::MinFlip,
            storage: None,
            eval_cap: None,
            horizon: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            out: None,
            policy_episodes: None,
            policy_tmax: None,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("`{key}` expects a number, got `{value}`"))
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("`{key}` must be positive, got `{value}`");
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize> {
    // allow 3e4 style counts
    let v: f64 = number(key, value)?;
    if v < 1.0 || v.fract() != 0.0 || v > 1e15 {
        bail!("`{key}` must be a positive integer, got `{value}`");
    }
    Ok(v as usize)
}

fn seeds(value: &str) -> Result<Vec<u64>> {
    let out: Vec<u64> = if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (number("seeds", a.trim())?, number("seeds", b.trim())?);
        (a..b).collect()
    } else {
        value
            .split(',')
            .map(|s| number("seeds", s.trim()))
            .collect::<Result<_>>()?
    };
    if out.is_empty() {
        bail!("`seeds` must list at least one seed");
    }
    Ok(out)
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Config {
            base_dir: base_dir.to_path_buf(),
            ..Config::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base).with_context(|| format!("in config {}", path.display()))
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "network" => self.network = Some(PathBuf::from(value)),
            "problem" => self.problem = Some(PathBuf::from(value)),
            "example" => self.example = Some(value.to_string()),
            "variant" => self.variant = Some(value.parse()?),
            "episodes" => self.episodes = Some(count(key, value)?),
            "tmax" => {
                self.tmax = Some(if value == "auto" {
                    Cap::Auto
                } else {
                    Cap::Steps(count(key, value)?)
                })
            }
            "beta" => self.beta = Some(positive(key, value)?),
            "omega" => self.omega = Some(positive(key, value)?),
            "gamma" => self.gamma = Some(positive(key, value)?),
            "weight" => self.weight = Some(positive(key, value)?),
            "weight_step" => self.weight_step = Some(positive(key, value)?),
            "flip_set" => self.flip_set = Some(value.parse()?),
            "kernels_file" => self.kernels_file = Some(PathBuf::from(value)),
            "objective" => {
                self.objective = match value {
                    "min_flip" => Objective::MinFlip,
                    "min_step" => Objective::MinStep,
                    _ => bail!("`objective` is min_flip or min_step, got `{value}`"),
                }
            }
            "storage" => {
                self.storage = Some(match value {
                    "dense" => Storage::Dense,
                    "sparse" => Storage::Sparse,
                    _ => bail!("`storage` is dense or sparse, got `{value}`"),
                })
            }
            "eval_cap" => self.eval_cap = Some(count(key, value)?),
            "horizon" => self.horizon = Some(count(key, value)?),
            "seeds" => self.seeds = seeds(value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "policy_episodes" => self.policy_episodes = Some(count(key, value)?),
            "policy_tmax" => self.policy_tmax = Some(count(key, value)?),
            _ => bail!("unknown key `{key}` (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}
