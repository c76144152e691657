//! `dbvar` — reproducible decision-boundary variability experiments.
//!
//! Usage: `dbvar <command> --config <file> --out <dir> [--jobs N] [--overwrite]`
//!
//! Exit codes: 0 success, 1 criterion/runtime failure, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dbvar_cli::config::{load_config, ExperimentConfig, VerifyExperiment};
use dbvar_cli::manifest::prepare_out_dir;
use dbvar_cli::{acceptance, experiments, CliError};

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for artifacts and the run manifest.
    #[arg(long)]
    out: PathBuf,

    /// Worker threads for training jobs (default: DBVAR_JOBS or all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Replace an existing non-empty output directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Parser)]
#[command(
    name = "dbvar",
    version,
    about = "Decision-boundary variability lab: train ensembles, estimate variability, evaluate bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a repeat ensemble and persist its checkpoints.
    Train(CommonArgs),
    /// Estimate algorithm DB variability, tie mass, entropies, and risk.
    Av(CommonArgs),
    /// Estimate one η-ε curve with its AUC.
    Curve(CommonArgs),
    /// Evaluate the bound formulas (single report, optional sweep grid).
    Bounds(CommonArgs),
    /// Compare plug-in AV vs Laplace LML for model selection.
    Select(CommonArgs),
    /// AV and test error along the training trajectory, per learning rate.
    #[command(name = "training-time")]
    TrainingTime(CommonArgs),
    /// AV and test error across nested training-sample sizes.
    #[command(name = "sample-size")]
    SampleSize(CommonArgs),
    /// AV and test error per epoch under fixed label noise.
    #[command(name = "label-noise")]
    LabelNoise(CommonArgs),
    /// η-ε curves across sample sizes with an AUC summary.
    #[command(name = "eta-eps")]
    EtaEps(CommonArgs),
    /// Run the acceptance-verification suite.
    Verify(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Av(_) => "av",
            Command::Curve(_) => "curve",
            Command::Bounds(_) => "bounds",
            Command::Select(_) => "select",
            Command::TrainingTime(_) => "training-time",
            Command::SampleSize(_) => "sample-size",
            Command::LabelNoise(_) => "label-noise",
            Command::EtaEps(_) => "eta-eps",
            Command::Verify(_) => "verify",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Train(a)
            | Command::Av(a)
            | Command::Curve(a)
            | Command::Bounds(a)
            | Command::Select(a)
            | Command::TrainingTime(a)
            | Command::SampleSize(a)
            | Command::LabelNoise(a)
            | Command::EtaEps(a)
            | Command::Verify(a) => a,
        }
    }
}

fn job_count(args: &CommonArgs) -> Option<usize> {
    args.jobs.or_else(|| {
        std::env::var("DBVAR_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let command_name = cli.command.name();
    let args = cli.command.args();

    let config = match (&args.config, command_name) {
        (Some(path), _) => load_config(path)?,
        (None, "verify") => ExperimentConfig::Verify(VerifyExperiment::default()),
        (None, _) => {
            return Err(CliError::Config(format!(
                "{command_name} requires --config <file>"
            )))
        }
    };
    if config.experiment_name() != command_name {
        return Err(CliError::Config(format!(
            "config is for experiment \"{}\" but the command is \"{command_name}\"",
            config.experiment_name()
        )));
    }

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = job_count(args) {
            builder = builder.num_threads(jobs.max(1));
        }
        builder
            .build()
            .map_err(|e| CliError::Run(anyhow::anyhow!("thread pool: {e}")))?
    };

    if command_name == "verify" {
        prepare_out_dir(&args.out, args.overwrite)?;
        let fingerprint = config.fingerprint();
        let all_passed = pool.install(|| acceptance::run_and_report(&args.out, fingerprint))?;
        if !all_passed {
            return Err(CliError::Run(anyhow::anyhow!(
                "one or more acceptance criteria failed"
            )));
        }
        return Ok(());
    }

    let manifest = pool.install(|| experiments::run(&config, &args.out, args.overwrite))?;
    println!(
        "{command_name}: wrote {} artifacts to {}",
        manifest.artifacts.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dbvar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
