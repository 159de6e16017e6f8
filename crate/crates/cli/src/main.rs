use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kgdesc_cli::commands::{self, Setting};
use kgdesc_cli::config::{split_assignment, RunConfig, Split};

#[derive(Debug, Parser)]
#[command(
    name = "kgdesc",
    version,
    about = "TransE with description-based entity initialization"
)]
struct Cli {
    /// Overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs/latest")]
    out_dir: PathBuf,
    /// Worker threads for ranking and description averaging (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build initial entity vectors from descriptions and write a coverage report.
    Init(ConfigArgs),
    /// Train TransE, writing a checkpoint, a learning curve and a manifest.
    Train(ConfigArgs),
    /// Rank a split with a checkpoint and write the per-triple report.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Report path (default: `<out-dir>/report_<split>.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mann-Whitney U test on the pooled ranks of two reports.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, default_value = "filtered")]
        setting: Setting,
    },
    /// Learning curve over any split from the snapshots of a training run.
    Curve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "valid")]
        split: Split,
        /// Curve path (default: `<out-dir>/curve_<split>.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn resolve(args: &ConfigArgs, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (k, v) = split_assignment(o)?;
        cfg.set(k, v, None)
            .with_context(|| format!("in --set {o}"))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn default_output(out_dir: &Path, stem: &str, split: Split) -> PathBuf {
    out_dir.join(format!("{stem}_{split}.csv"))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Init(args) => {
            commands::cmd_init(&resolve(args, cli.seed)?, &cli.out_dir, cli.threads)?;
        }
        Command::Train(args) => {
            commands::cmd_train(&resolve(args, cli.seed)?, &cli.out_dir, cli.threads)?;
        }
        Command::Eval {
            config,
            checkpoint,
            split,
            output,
        } => {
            let output = output
                .clone()
                .unwrap_or_else(|| default_output(&cli.out_dir, "report", *split));
            commands::cmd_eval(&resolve(config, cli.seed)?, checkpoint, *split, &output)?;
        }
        Command::Compare {
            report_a,
            report_b,
            setting,
        } => {
            commands::cmd_compare(report_a, report_b, *setting)?;
        }
        Command::Curve {
            config,
            run_dir,
            split,
            output,
        } => {
            let output = output
                .clone()
                .unwrap_or_else(|| default_output(&cli.out_dir, "curve", *split));
            commands::cmd_curve(&resolve(config, cli.seed)?, run_dir, *split, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
