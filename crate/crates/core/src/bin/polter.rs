use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use polter::harness::repro::{
    check_entropy, check_finetune_curves, check_kl_curves, run_reproduction,
};
use polter::harness::{
    cmd_entropy, cmd_eval_kl, cmd_histogram, cmd_stats, parse_overrides, run_finetune,
    run_pretraining, run_sweep, train_oracle, ExperimentConfig, FinetuneSource, HarnessError,
    SweepKind,
};

#[derive(Parser)]
#[command(
    name = "polter",
    version,
    about = "Unsupervised pretraining lab on PointMass"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (key = value lines, `include = other.cfg` allowed).
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let pairs = parse_overrides(&self.overrides)?;
        match &self.config {
            Some(path) => {
                let mut cfg = ExperimentConfig::from_file(path)?;
                cfg.apply(&pairs)?;
                Ok(cfg)
            }
            None => ExperimentConfig::from_pairs(&pairs),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAxis {
    Alpha,
    Snapshot,
}

#[derive(Subcommand)]
enum Command {
    /// Reward-free pretraining of one seed.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run directory (default `<output_dir>/<variant>/seed<N>`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finetune a pretraining checkpoint (or a fresh agent) on the seed's target task.
    Finetune {
        /// Pretraining run directory; omit together with --step for the scratch baseline.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Checkpoint step (default: the run's final step).
        #[arg(long)]
        step: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the center-seeking reference policy.
    TrainOracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// KL of every checkpoint to a reference actor.
    EvalKl {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Visitation entropy at the configured checkpoint fractions.
    Entropy {
        #[arg(long)]
        run: PathBuf,
    },
    /// Position and velocity histograms of the dumped states.
    Histogram {
        #[arg(long)]
        run: PathBuf,
    },
    /// IQM / mean / median / optimality gap with bootstrap intervals.
    Stats {
        /// CSV with columns task, seed, normalized_return.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alpha grid or snapshot-step grid over the configured seeds.
    Sweep {
        #[arg(value_enum)]
        axis: SweepAxis,
        /// Comma-separated alphas or pretraining fractions.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// The full PointMass reproduction with pass/fail checks (repro profile by default).
    Reproduce {
        #[arg(long, default_value = "results")]
        root: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn print<T: Serialize>(v: &T) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn default_run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    Path::new(&cfg.output_dir)
        .join(cfg.variant_label().replace('+', "_").replace('*', "_star"))
        .join(format!("seed{seed}"))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Pretrain { seed, out, cfg } => {
            let cfg = cfg.load()?;
            let dir = out.unwrap_or_else(|| default_run_dir(&cfg, seed));
            let s = run_pretraining(&cfg, seed, &dir)?;
            print(&s.info)
        }
        Command::Finetune {
            run,
            step,
            seed,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let source = match (run, step) {
                (Some(run_dir), step) => FinetuneSource::Checkpoint {
                    step: step.unwrap_or(cfg.pretrain_steps),
                    run_dir,
                },
                (None, None) => FinetuneSource::Scratch,
                (None, Some(_)) => {
                    return Err(HarnessError::Config("--step needs --run".into()));
                }
            };
            let out = out.unwrap_or_else(|| match &source {
                FinetuneSource::Checkpoint { run_dir, step } => {
                    run_dir.join(format!("finetune_{step}"))
                }
                FinetuneSource::Scratch => Path::new(&cfg.output_dir)
                    .join("scratch")
                    .join(format!("seed{seed}")),
            });
            print(&run_finetune(&cfg, &source, seed, &out)?)
        }
        Command::TrainOracle { seed, out, cfg } => {
            let cfg = cfg.load()?;
            let out = out.unwrap_or_else(|| Path::new(&cfg.output_dir).join("oracle"));
            let s = train_oracle(&cfg, seed, &out)?;
            if !s.converged {
                eprintln!(
                    "warning: reference policy did not converge (mean distance {:.4} >= {})",
                    s.mean_distance, cfg.oracle_threshold
                );
            }
            print(&s)
        }
        Command::EvalKl { run, reference } => print(&cmd_eval_kl(&run, &reference)?),
        Command::Entropy { run } => print(&cmd_entropy(&run)?),
        Command::Histogram { run } => {
            let rows = cmd_histogram(&run)?;
            println!(
                "wrote {rows} rows to {}",
                run.join("histogram.csv").display()
            );
            Ok(())
        }
        Command::Stats { input, out } => print(&cmd_stats(&input, out.as_deref())?),
        Command::Sweep {
            axis,
            values,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            if values.is_empty() {
                return Err(HarnessError::Config("--values must not be empty".into()));
            }
            let kind = match axis {
                SweepAxis::Alpha => SweepKind::Alpha(values),
                SweepAxis::Snapshot => SweepKind::Snapshot(values),
            };
            print(&run_sweep(&cfg, &kind, &out)?.points)
        }
        Command::Reproduce { root, mut cfg } => {
            if cfg.config.is_none() && !cfg.overrides.iter().any(|o| o.starts_with("profile")) {
                cfg.overrides.insert(0, "profile=repro".into());
            }
            let cfg = cfg.load()?;
            let summary = run_reproduction(&cfg, &root, &mut |m| eprintln!("[reproduce] {m}"))?;
            let checks = [
                check_kl_curves(&summary, cfg.pretrain_steps),
                check_finetune_curves(&summary, cfg.finetune_steps),
                check_entropy(&summary),
            ];
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
