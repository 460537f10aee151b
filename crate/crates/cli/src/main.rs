use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use flipctl::{cmd_kernels, cmd_oracle, cmd_policy, error_code, out_dir, replicate, Config, USAGE_EXIT};

#[derive(Parser, Debug)]
#[command(name = "flipctl", version, about = "Flip-kernel search and minimum-flip control for Boolean control networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// `key = value` experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for minimum flip kernels
    Kernels(Common),
    /// Learn and evaluate a minimum-flip (or minimum-step) policy
    Policy(Common),
    /// Exact reachability and minimum-flip report
    Oracle(Common),
    /// Reproduce a bundled reference system end to end
    Replicate {
        /// example2 or example3
        example: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, required: bool) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None if required => anyhow::bail!("--config <path> is required"),
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Kernels(c) => {
            let cfg = load(&c, true)?;
            let out = out_dir(&cfg, c.out.as_deref())?;
            let report = cmd_kernels(&cfg, &out)?;
            print!("{}", report.text);
            Ok(report.outcome.code())
        }
        Command::Policy(c) => {
            let cfg = load(&c, true)?;
            let out = out_dir(&cfg, c.out.as_deref())?;
            let report = cmd_policy(&cfg, &out)?;
            print!("{}", report.text);
            Ok(report.outcome.code())
        }
        Command::Oracle(c) => {
            let cfg = load(&c, true)?;
            let out = out_dir(&cfg, c.out.as_deref())?;
            let (report, outcome) = cmd_oracle(&cfg, &out)?;
            print!("{}", report.text);
            Ok(outcome.code())
        }
        Command::Replicate { example, common } => {
            let cfg = load(&common, false)?;
            let Some(example) = example.or_else(|| cfg.example.clone()) else {
                anyhow::bail!("replicate needs an example name (example2 or example3)");
            };
            let out = out_dir(&cfg, common.out.as_deref())?;
            let report = replicate::replicate(&example, &cfg, &out)?;
            print!("{}", report.text);
            Ok(report.outcome().code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLIPCTL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_EXIT as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e) as u8)
        }
    }
}
