use std::path::PathBuf;
use std::process::ExitCode;

use amp_cli::config::{ModeKind, TauSourceKind};
use amp_cli::runner::{self, analytic_state_evolution};
use amp_cli::verify::{self, VerifyOptions};
use amp_cli::{load_config, output, ConfigError, Execution, ExperimentConfig, OutputError, RunError};
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(name = "amp-se", version, about = "AMP vs state evolution Monte-Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trajectory.csv, qq_t<k>.csv and report.json.
    Run(RunArgs),
    /// Run the experiment for every size in `experiment.sweep_n` and write scaling.csv.
    SweepN(RunArgs),
    /// Run the experiment recording input errors at the given iterations.
    Qq {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated iterations, e.g. `5,10`.
        #[arg(long, value_delimiter = ',', required = true)]
        iterations: Vec<usize>,
    },
    /// State evolution under the analytic prior only.
    SeOnly(RunArgs),
    /// Run the built-in oracle suite.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().mc_samples)]
        mc_samples: usize,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
    #[arg(long, value_enum)]
    tau_source: Option<TauSourceKind>,
    #[arg(long, value_enum)]
    mode: Option<ModeKind>,
    /// Overrides `experiment.trials`.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("oracle suite failed")]
    Verify,
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Run(RunError::TooManyDiverged { .. }) => EXIT_DIVERGED,
            // Remaining core errors come from parameter checks.
            Failure::Run(_) => EXIT_CONFIG,
            Failure::Output(_) => EXIT_IO,
            Failure::Verify => EXIT_VERIFY,
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut config = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.experiment.seed = seed;
        }
        if let Some(out) = &self.out {
            config.experiment.output_dir = out.clone();
        }
        if let Some(t) = self.tau_source {
            config.algorithm.tau_source = t;
        }
        if let Some(m) = self.mode {
            config.algorithm.mode = m;
        }
        if let Some(t) = self.trials {
            config.experiment.trials = t;
        }
        config.validate()?;
        Ok(config)
    }

    fn execution(&self) -> Execution {
        Execution::with_threads(self.threads)
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let config = args.load()?;
            let report = runner::run_experiment(&config, args.execution())?;
            output::write_outputs(&report, &config.experiment.output_dir, args.plots)?;
            eprintln!(
                "{} trials ({} diverged) in {:.1}s; output in {}",
                report.trials.len(),
                report.diverged,
                report.timings.trials_seconds,
                config.experiment.output_dir.display()
            );
        }
        Command::SweepN(args) => {
            let config = args.load()?;
            let sweep = runner::run_sweep(&config, args.execution())?;
            output::write_sweep(&sweep, &config.experiment.output_dir, args.plots)?;
            for row in &sweep.scaling {
                eprintln!(
                    "n = {:>6}  T = {:>5}  std(E)·√n = {:.4}  std(τ)·√n = {:.4}",
                    row.n, row.trials, row.std_mse_sqrtn, row.std_taur_sqrtn
                );
            }
        }
        Command::Qq { run, iterations } => {
            let mut config = run.load()?;
            config.experiment.record_input_error = iterations;
            config.validate()?;
            let report = runner::run_experiment(&config, run.execution())?;
            output::write_outputs(&report, &config.experiment.output_dir, run.plots)?;
            for entry in &report.qq {
                eprintln!("t = {:>3}  KS = {:.4}", entry.iteration, entry.series.ks);
            }
        }
        Command::SeOnly(args) => {
            let config = args.load()?;
            let se = analytic_state_evolution(&config)?;
            output::write_se_only(&se, &config.experiment.output_dir, args.plots)?;
        }
        Command::Verify { mc_samples, seed } => {
            let options = VerifyOptions {
                mc_samples,
                seed,
                ..VerifyOptions::default()
            };
            let results = verify::run_suite(&options);
            for r in &results {
                println!(
                    "{} {:<55} worst {:.3e} (tolerance {:.1e})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.worst,
                    r.tolerance
                );
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Verify);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
