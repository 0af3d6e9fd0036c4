//! Seeded Monte-Carlo experiments: one fixed signal and noise draw, a fresh
//! sensing matrix per trial, and the state evolution for the same draw.

use std::time::Instant;

use amp_core::amp::{self, ErrorCapture, TauSource, Trajectory};
use amp_core::model::{self, ProblemInstance};
use amp_core::rng::{StreamSeed, StreamTag};
use amp_core::state_evolution::{self as se, SeTrajectory, SignalDistribution};
use amp_core::stats::{self, AggregateTrajectory, QqSeries, ScalingRow};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, TauSourceKind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] amp_core::Error),
    #[error("{diverged} of {trials} trials diverged; at least half must survive")]
    TooManyDiverged { diverged: usize, trials: usize },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// How trials are spread over threads. Output does not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads = 0` uses the available hardware parallelism.
    Parallel { threads: usize },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            Some(t) => Execution::Parallel { threads: t },
            None => Execution::default(),
        }
    }
}

/// Maps `f` over `0..count` and returns the results in index order.
pub fn fan_out<T, F>(count: usize, execution: Execution, f: F) -> Result<Vec<T>, RunError>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        Execution::Sequential => Ok((0..count).map(f).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads } => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| RunError::Pool(e.to_string()))?;
            Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => Ok((0..count).map(f).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    /// Iteration at which the trial produced non-finite values.
    pub diverged_at: Option<usize>,
    /// KS distance of `e(t)/√τ̂_r(t)` to the standard normal, one entry per
    /// recorded iteration.
    pub ks: Vec<f64>,
    /// `max_t |τ̂_r(t) − ‖e(t)‖²/n| / τ̂_r(t)`
    pub max_variance_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqEntry {
    pub iteration: usize,
    pub trial: usize,
    pub series: QqSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Timings {
    pub draw_seconds: f64,
    pub state_evolution_seconds: f64,
    pub trials_seconds: f64,
    pub aggregate_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub master: u64,
    /// ChaCha8 stream ids are `(tag << 56) | (trial + 1)`; the shared draws
    /// use trial −1.
    pub signal_stream: u64,
    pub noise_stream: u64,
    pub matrix_stream_first: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Re-ingesting this text reproduces the run.
    pub config_toml: String,
    pub m: usize,
    pub n: usize,
    pub noise_variance: f64,
    /// `‖w‖² / m` of the fixed noise draw; the state evolution's `τ_w`.
    pub empirical_tau_w: f64,
    pub aggregate: AggregateTrajectory,
    pub state_evolution: SeTrajectory,
    pub qq: Vec<QqEntry>,
    pub diverged: usize,
    pub trials: Vec<TrialSummary>,
    pub seeds: SeedReport,
    pub timings: Timings,
    /// Surviving trajectories in trial order, without input-error vectors.
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scaling: Vec<ScalingRow>,
    pub runs: Vec<ExperimentReport>,
}

/// The fixed signal and noise shared by every trial.
#[derive(Debug, Clone)]
pub struct SharedDraw {
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn draw_shared(config: &ExperimentConfig) -> Result<SharedDraw, RunError> {
    let (signal_seed, noise_seed) = StreamSeed::shared(config.experiment.seed);
    let signal = model::sample_signal(config.problem.n, &config.prior(), signal_seed)?;
    let noise = model::sample_noise(config.m(), config.noise_variance(), noise_seed)?;
    Ok(SharedDraw { signal, noise })
}

pub fn trial_instance(config: &ExperimentConfig, shared: &SharedDraw, trial: usize) -> Result<ProblemInstance, RunError> {
    let matrix = model::sample_matrix(
        config.m(),
        config.problem.n,
        config.problem.ensemble,
        StreamSeed::matrix(config.experiment.seed, trial),
    )?;
    Ok(model::assemble_instance(matrix, shared.signal.clone(), shared.noise.clone())?)
}

/// State evolution on the empirical distribution of the fixed signal, with
/// `δ = m/n` and the fixed noise's second moment.
pub fn empirical_state_evolution(config: &ExperimentConfig, shared: &SharedDraw) -> Result<SeTrajectory, RunError> {
    let dist = SignalDistribution::empirical(shared.signal.clone())?;
    let delta = config.m() as f64 / config.problem.n as f64;
    let tau_w = model::empirical_noise_second_moment(&shared.noise)?;
    Ok(se::se_run_spec(
        &dist,
        delta,
        tau_w,
        &config.denoiser_spec(),
        config.algorithm.iterations,
        &config.se_options(),
    )?)
}

/// State evolution under the analytic prior, with `δ` and the noise
/// variance taken straight from the config.
pub fn analytic_state_evolution(config: &ExperimentConfig) -> Result<SeTrajectory, RunError> {
    Ok(se::se_run_spec(
        &SignalDistribution::Analytic(config.prior()),
        config.problem.delta,
        config.noise_variance(),
        &config.denoiser_spec(),
        config.algorithm.iterations,
        &config.se_options(),
    )?)
}

struct TrialOutcome {
    summary: TrialSummary,
    trajectory: Option<Trajectory>,
    qq: Vec<QqSeries>,
}

fn run_trial(
    config: &ExperimentConfig,
    shared: &SharedDraw,
    tau_source: &TauSource,
    trial: usize,
) -> Result<TrialOutcome, RunError> {
    let instance = trial_instance(config, shared, trial)?;
    let recorded = &config.experiment.record_input_error;
    let capture = if recorded.is_empty() {
        ErrorCapture::None
    } else {
        ErrorCapture::At(recorded.clone())
    };
    let result = amp::run(
        &instance,
        &config.denoiser_spec(),
        config.algorithm.mode.into(),
        tau_source,
        config.algorithm.iterations,
        &capture,
    );
    let mut trajectory = match result {
        Ok(t) => t,
        Err(amp_core::Error::Diverged { iteration, .. }) => {
            return Ok(TrialOutcome {
                summary: TrialSummary {
                    trial,
                    diverged_at: Some(iteration),
                    ks: Vec::new(),
                    max_variance_gap: f64::NAN,
                },
                trajectory: None,
                qq: Vec::new(),
            })
        }
        Err(e) => return Err(e.into()),
    };

    let mut qq = Vec::with_capacity(recorded.len());
    for &t in recorded {
        let error = trajectory.input_error_at(t).expect("captured iteration");
        let standardized = stats::standardize(error, trajectory.records[t].residual_variance)?;
        qq.push(stats::qq_series(&standardized, config.experiment.qq_quantiles)?);
    }
    let max_variance_gap = trajectory
        .records
        .iter()
        .map(|r| (r.residual_variance - r.input_error_mse).abs() / r.residual_variance)
        .fold(0.0, f64::max);
    for r in &mut trajectory.records {
        r.input_error = None;
    }
    Ok(TrialOutcome {
        summary: TrialSummary {
            trial,
            diverged_at: None,
            ks: qq.iter().map(|s| s.ks).collect(),
            max_variance_gap,
        },
        trajectory: Some(trajectory),
        qq,
    })
}

fn elapsed(since: Instant) -> f64 {
    since.elapsed().as_secs_f64()
}

pub fn run_experiment(config: &ExperimentConfig, execution: Execution) -> Result<ExperimentReport, RunError> {
    let mut timings = Timings::default();

    let clock = Instant::now();
    let shared = draw_shared(config)?;
    let empirical_tau_w = model::empirical_noise_second_moment(&shared.noise)?;
    timings.draw_seconds = elapsed(clock);

    let clock = Instant::now();
    let state_evolution = empirical_state_evolution(config, &shared)?;
    timings.state_evolution_seconds = elapsed(clock);

    let tau_source = match config.algorithm.tau_source {
        TauSourceKind::Estimate => TauSource::Estimate,
        TauSourceKind::Oracle => TauSource::Oracle,
        TauSourceKind::Se => TauSource::SePredicted(state_evolution.input_variance()),
    };

    let clock = Instant::now();
    let outcomes = fan_out(config.experiment.trials, execution, |trial| {
        run_trial(config, &shared, &tau_source, trial)
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    timings.trials_seconds = elapsed(clock);

    let clock = Instant::now();
    let trials_total = outcomes.len();
    let diverged = outcomes.iter().filter(|o| o.trajectory.is_none()).count();
    if 2 * diverged > trials_total {
        return Err(RunError::TooManyDiverged {
            diverged,
            trials: trials_total,
        });
    }
    let mut trials = Vec::with_capacity(trials_total);
    let mut trajectories = Vec::with_capacity(trials_total - diverged);
    let mut qq = Vec::new();
    for outcome in outcomes {
        if qq.is_empty() && outcome.trajectory.is_some() {
            qq = config
                .experiment
                .record_input_error
                .iter()
                .zip(outcome.qq)
                .map(|(&iteration, series)| QqEntry {
                    iteration,
                    trial: outcome.summary.trial,
                    series,
                })
                .collect();
        }
        trajectories.extend(outcome.trajectory);
        trials.push(outcome.summary);
    }
    let aggregate = stats::aggregate_trials(&trajectories)?;
    timings.aggregate_seconds = elapsed(clock);

    let (signal_seed, noise_seed) = StreamSeed::shared(config.experiment.seed);
    Ok(ExperimentReport {
        config: config.clone(),
        config_toml: config.to_toml().unwrap_or_default(),
        m: config.m(),
        n: config.problem.n,
        noise_variance: config.noise_variance(),
        empirical_tau_w,
        aggregate,
        state_evolution,
        qq,
        diverged,
        trials,
        seeds: SeedReport {
            master: config.experiment.seed,
            signal_stream: signal_seed.stream_id(),
            noise_stream: noise_seed.stream_id(),
            matrix_stream_first: StreamSeed::new(config.experiment.seed, StreamTag::Matrix, 0).stream_id(),
        },
        timings,
        trajectories,
    })
}

/// Runs the experiment once per size in `experiment.sweep_n` and collects
/// `std·√n` rows at `experiment.scaling_iteration`.
pub fn run_sweep(config: &ExperimentConfig, execution: Execution) -> Result<SweepReport, RunError> {
    let sizes = if config.experiment.sweep_n.is_empty() {
        vec![config.problem.n]
    } else {
        config.experiment.sweep_n.clone()
    };
    let mut runs = Vec::with_capacity(sizes.len());
    for n in sizes {
        let mut c = config.clone();
        c.problem.n = n;
        c.experiment.sweep_n.clear();
        c.experiment.qq_quantiles = c.experiment.qq_quantiles.min(n);
        runs.push(run_experiment(&c, execution)?);
    }
    let scaling = stats::scaling_rows(
        runs.iter().map(|r| (r.n, &r.aggregate)),
        config.experiment.scaling_iteration,
    )?;
    Ok(SweepReport { scaling, runs })
}
