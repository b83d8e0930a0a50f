use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streetrank_core::learners::HyperGrid;
use streetrank_core::pipeline::{
    cmd_evaluate, cmd_featurize, cmd_report, cmd_synth, cmd_train, ExperimentConfig, PipelineError, TrainOptions,
    TrainOutcome,
};
use streetrank_serve::{serve, ServeError, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "streetrank", version, about = "Rank street-homelessness alerts for outreach review")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Synth(Common),
    /// Fit per-fold featurisers and write feature matrices.
    Featurize(Common),
    /// Train every grid point on every fold; resumes where a previous run stopped.
    Train {
        #[command(flatten)]
        common: Common,
        /// Stop after this many newly trained units.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Score the held-out folds and write the evaluation reports.
    Evaluate(Common),
    /// Write the plain-text and CSV summary.
    Report(Common),
    /// Run the triage HTTP service.
    Serve(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full hyperparameter grid instead of the configured one.
    #[arg(long)]
    full_grid: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, PipelineError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if self.full_grid {
            cfg.grid = HyperGrid::full();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_stage(common: &Common, stage: impl FnOnce(&ExperimentConfig) -> Result<(), PipelineError>) -> ExitCode {
    match common.load().and_then(|cfg| stage(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_serve(common: &Common) -> ExitCode {
    let cfg = match common.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let svc = match ServiceConfig::from_experiment(&cfg).with_env(|k| std::env::var(k).ok()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    match rt.block_on(serve(svc)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(ServeError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(c) => run_stage(c, |cfg| cmd_synth(cfg).map(drop)),
        Command::Featurize(c) => run_stage(c, |cfg| cmd_featurize(cfg).map(drop)),
        Command::Train { common, stop_after } => run_stage(common, |cfg| {
            match cmd_train(cfg, &TrainOptions { stop_after: *stop_after })? {
                TrainOutcome::Complete { trained, skipped } => println!("trained {trained}, skipped {skipped}"),
                TrainOutcome::Interrupted { trained } => println!("stopped after {trained}; rerun to resume"),
            }
            Ok(())
        }),
        Command::Evaluate(c) => run_stage(c, |cfg| cmd_evaluate(cfg).map(drop)),
        Command::Report(c) => run_stage(c, |cfg| {
            cmd_report(cfg)?;
            let path = streetrank_core::pipeline::Layout::new(&cfg.out_dir).reports().join("summary.txt");
            match std::fs::read_to_string(&path) {
                Ok(text) => print!("{text}"),
                Err(e) => return Err(PipelineError::Io { path, source: e }),
            }
            Ok(())
        }),
        Command::Serve(c) => run_serve(c),
    }
}
