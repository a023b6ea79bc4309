//! Command line entry point: `osc run`, `iosc run`, `baseline run`,
//! `sweep k` and `report plot`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use s2osc::runner::{emit_plots, run_baseline_threshold, run_iosc, run_osc, run_sweep_k, ExperimentConfig, Protocol, Stage, StageError};

#[derive(Parser)]
#[command(name = "s2osc", version, about = "Semi-supervised open set classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open set classification on one pool.
    Osc {
        #[command(subcommand)]
        action: Run,
    },
    /// Incremental open set classification over a stream of windows.
    Iosc {
        #[command(subcommand)]
        action: Run,
    },
    /// Max-softmax threshold baseline.
    Baseline {
        #[command(subcommand)]
        action: Run,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        action: Sweep,
    },
    /// Figures from a finished run directory.
    Report {
        #[command(subcommand)]
        action: Report,
    },
}

#[derive(Subcommand)]
enum Run {
    Run(RunArgs),
}

#[derive(Subcommand)]
enum Sweep {
    /// One open set run per value of `sweep_k`, sharing the pre-trained model.
    K(RunArgs),
}

#[derive(Subcommand)]
enum Report {
    Plot {
        /// Output directory of an earlier run.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// IDX image file (gzip accepted).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (gzip accepted).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Incremental updates train on new labels only.
    #[arg(long)]
    no_memory: bool,
}

impl RunArgs {
    fn config(&self, protocol: Protocol) -> Result<ExperimentConfig, StageError> {
        let mut sets = self.overrides.clone();
        let quoted = |p: &PathBuf| format!("{:?}", p.display().to_string());
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(k) = self.k {
            sets.push(format!("k={k}"));
        }
        if let Some(p) = &self.output_dir {
            sets.push(format!("output_dir={}", quoted(p)));
        }
        if let Some(p) = &self.images {
            sets.push(format!("images={}", quoted(p)));
            sets.push("dataset=\"idx\"".into());
        }
        if let Some(p) = &self.labels {
            sets.push(format!("labels={}", quoted(p)));
        }
        if self.no_memory {
            sets.push("use_memory=false".into());
        }
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), &sets).map_err(|error| StageError { stage: Stage::Config, error })?;
        cfg.protocol = protocol;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<String, StageError> {
    let report = match command {
        Command::Osc { action: Run::Run(a) } => run_osc(&a.config(Protocol::Osc)?)?.to_json(),
        Command::Iosc { action: Run::Run(a) } => run_iosc(&a.config(Protocol::Iosc)?)?.to_json(),
        Command::Baseline { action: Run::Run(a) } => run_baseline_threshold(&a.config(Protocol::Osc)?)?.to_json(),
        Command::Sweep { action: Sweep::K(a) } => {
            let sweep = run_sweep_k(&a.config(Protocol::Osc)?)?;
            serde_json::to_string_pretty(&sweep).map_err(Into::into)
        }
        Command::Report { action: Report::Plot { dir } } => {
            let files = emit_plots(&dir).map_err(|error| StageError { stage: Stage::Report, error })?;
            Ok(files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n"))
        }
    };
    report.map_err(|error| StageError { stage: Stage::Report, error })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
