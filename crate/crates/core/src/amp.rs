//! The iteration
//!
//! ```text
//! v(t)   = y − A x(t) + μ(t)
//! r(t)   = x(t) + Aᵀ v(t)
//! x(t+1) = η(r(t); τ(t))
//! ```
//!
//! started from `x(0) = 0`, `μ(0) = 0`. IST keeps `μ ≡ 0`; AMP uses the
//! Onsager term `μ(t+1) = v(t) · Σ_j η'(r_j(t)) / m`.

use serde::{Deserialize, Serialize};

use crate::denoise::{self, Denoiser};
use crate::linalg::{self, all_finite};
use crate::model::ProblemInstance;
use crate::{Error, Result};

/// Smallest input variance handed to a denoiser. Keeps the MMSE denoiser
/// defined on noiseless, exactly recovered instances.
pub const TAU_FLOOR: f64 = 1e-20;

pub const DEFAULT_ITERATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    Ist,
    #[serde(alias = "amp")]
    Onsager,
}

/// Where the denoiser's input variance comes from each iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TauSource {
    /// `‖v(t)‖² / m`
    #[default]
    Estimate,
    /// `‖r(t) − x‖² / n`, using the true signal.
    Oracle,
    /// Precomputed per-iteration values, typically the state evolution's
    /// `τ_r(t)`.
    SePredicted(Vec<f64>),
}

/// Which iterations keep the full input-error vector `e(t) = r(t) − x`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ErrorCapture {
    #[default]
    None,
    All,
    At(Vec<usize>),
}

impl ErrorCapture {
    pub fn wants(&self, t: usize) -> bool {
        match self {
            ErrorCapture::None => false,
            ErrorCapture::All => true,
            ErrorCapture::At(ts) => ts.contains(&t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub iteration: usize,
    pub estimate: Vec<f64>,
    pub correction: Vec<f64>,
    /// `v(t-1)`; empty before the first step.
    pub residual: Vec<f64>,
    /// `r(t-1)`; empty before the first step.
    pub denoiser_input: Vec<f64>,
}

impl IterateState {
    pub fn initial(m: usize, n: usize) -> Self {
        Self {
            iteration: 0,
            estimate: vec![0.0; n],
            correction: vec![0.0; m],
            residual: Vec::new(),
            denoiser_input: Vec::new(),
        }
    }

    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self::initial(instance.m(), instance.n())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `E_n(t+1) = ‖x − x(t+1)‖² / n`
    pub output_mse: f64,
    /// `‖v(t)‖² / m`
    pub residual_variance: f64,
    /// Variance actually passed to the denoiser.
    pub tau_used: f64,
    /// `‖e(t)‖² / n`
    pub input_error_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_error: Option<Vec<f64>>,
}

/// Records of one run, aligned so that row `t` pairs `E_n(t)` with
/// `τ̂_r(t)` the way the state evolution pairs `E(t)` with `τ_r(t)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    /// `E_n(0) = ‖x‖² / n`
    pub initial_mse: f64,
    pub records: Vec<IterationRecord>,
    /// `τ̂_r(N)` from the residual after the last denoising step.
    pub final_residual_variance: Option<f64>,
}

impl Trajectory {
    pub fn num_iterations(&self) -> usize {
        self.records.len()
    }

    /// `E_n(t)` for `t = 0..=N`.
    pub fn mse(&self) -> Vec<f64> {
        std::iter::once(self.initial_mse)
            .chain(self.records.iter().map(|r| r.output_mse))
            .collect()
    }

    /// `τ̂_r(t)` for `t = 0..=N`.
    pub fn residual_variance(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.residual_variance)
            .chain(self.final_residual_variance)
            .collect()
    }

    pub fn input_error_at(&self, t: usize) -> Option<&[f64]> {
        self.records.get(t)?.input_error.as_deref()
    }
}

/// `μ = v_prev · derivative_sum / m`
pub fn onsager_correction(residual_prev: &[f64], derivative_sum: f64, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if !derivative_sum.is_finite() {
        return Err(Error::non_finite("derivative sum", None));
    }
    if let Some(i) = all_finite(residual_prev) {
        return Err(Error::non_finite("residual", Some(i)));
    }
    let scale = derivative_sum / m as f64;
    Ok(residual_prev.iter().map(|v| scale * v).collect())
}

/// `‖v‖² / m`
pub fn residual_variance_estimate(residual: &[f64]) -> Result<f64> {
    if residual.is_empty() {
        return Err(Error::param("residual", "must be non-empty"));
    }
    Ok(linalg::squared_norm(residual) / residual.len() as f64)
}

/// `e = r − x`
pub fn denoiser_input_error(denoiser_input: &[f64], true_signal: &[f64]) -> Result<Vec<f64>> {
    if denoiser_input.len() != true_signal.len() {
        return Err(Error::shape("denoiser input error", true_signal.len(), denoiser_input.len()));
    }
    Ok(denoiser_input.iter().zip(true_signal).map(|(r, x)| r - x).collect())
}

/// `v = y − A x + μ`
fn residual(instance: &ProblemInstance, estimate: &[f64], correction: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; instance.m()];
    instance.matrix.mul_vec_into(estimate, &mut v);
    for ((vi, yi), mi) in v.iter_mut().zip(&instance.measurements).zip(correction) {
        *vi = yi - *vi + mi;
    }
    v
}

fn check_state(instance: &ProblemInstance, state: &IterateState) -> Result<()> {
    if state.estimate.len() != instance.n() {
        return Err(Error::shape("estimate length", instance.n(), state.estimate.len()));
    }
    if state.correction.len() != instance.m() {
        return Err(Error::shape("correction length", instance.m(), state.correction.len()));
    }
    Ok(())
}

fn diverged(iteration: usize) -> Error {
    Error::Diverged {
        iteration,
        partial: Box::default(),
    }
}

/// One full iteration from `state` (holding `x(t)`, `μ(t)`).
///
/// The record carries `τ̂_r(t)` and `E_n(t+1)`; the input error `e(t)` is
/// kept when `capture_input_error` is set.
pub fn step<D: Denoiser + ?Sized>(
    instance: &ProblemInstance,
    state: &IterateState,
    denoiser: &D,
    mode: CorrectionMode,
    tau_source: &TauSource,
    capture_input_error: bool,
) -> Result<(IterateState, IterationRecord)> {
    check_state(instance, state)?;
    let t = state.iteration;
    let m = instance.m();
    let n = instance.n();

    let v = residual(instance, &state.estimate, &state.correction);
    if all_finite(&v).is_some() {
        return Err(diverged(t));
    }
    let mut r = state.estimate.clone();
    instance.matrix.add_transpose_mul_into(&v, &mut r);
    if all_finite(&r).is_some() {
        return Err(diverged(t));
    }

    let residual_variance = linalg::squared_norm(&v) / m as f64;
    let input_error_mse = linalg::mean_squared_difference(&r, &instance.signal);
    let tau = match tau_source {
        TauSource::Estimate => residual_variance,
        TauSource::Oracle => input_error_mse + TAU_FLOOR,
        TauSource::SePredicted(taus) => *taus.get(t).ok_or_else(|| {
            Error::param("tau_source", format!("no predicted variance for iteration {t}"))
        })?,
    };
    if !tau.is_finite() {
        return Err(diverged(t));
    }
    let tau_used = tau.max(TAU_FLOOR);

    let mut next = vec![0.0; n];
    let derivative_sum = match denoise::denoise_vector_into(denoiser, &r, tau_used, &mut next) {
        Ok(s) => s,
        Err(Error::NonFinite { .. }) => return Err(diverged(t)),
        Err(e) => return Err(e),
    };
    if all_finite(&next).is_some() || !derivative_sum.is_finite() {
        return Err(diverged(t));
    }

    let correction = match mode {
        CorrectionMode::Ist => vec![0.0; m],
        CorrectionMode::Onsager => onsager_correction(&v, derivative_sum, m).map_err(|_| diverged(t))?,
    };

    let record = IterationRecord {
        iteration: t,
        output_mse: linalg::mean_squared_difference(&next, &instance.signal),
        residual_variance,
        tau_used,
        input_error_mse,
        input_error: capture_input_error.then(|| denoiser_input_error(&r, &instance.signal)).transpose()?,
    };
    if !record.output_mse.is_finite() {
        return Err(diverged(t));
    }
    let state = IterateState {
        iteration: t + 1,
        estimate: next,
        correction,
        residual: v,
        denoiser_input: r,
    };
    Ok((state, record))
}

/// Runs `num_iterations` steps from `x(0) = 0` and closes with one residual
/// half-step so the trajectory carries `τ̂_r(N)`.
pub fn run<D: Denoiser + ?Sized>(
    instance: &ProblemInstance,
    denoiser: &D,
    mode: CorrectionMode,
    tau_source: &TauSource,
    num_iterations: usize,
    capture: &ErrorCapture,
) -> Result<Trajectory> {
    if num_iterations == 0 {
        return Err(Error::param("num_iterations", "must be at least 1"));
    }
    let mut trajectory = Trajectory {
        initial_mse: linalg::squared_norm(&instance.signal) / instance.n() as f64,
        records: Vec::with_capacity(num_iterations),
        final_residual_variance: None,
    };
    let mut state = IterateState::for_instance(instance);
    for t in 0..num_iterations {
        match step(instance, &state, denoiser, mode, tau_source, capture.wants(t)) {
            Ok((next, record)) => {
                state = next;
                trajectory.records.push(record);
            }
            Err(Error::Diverged { iteration, .. }) => {
                return Err(Error::Diverged {
                    iteration,
                    partial: Box::new(trajectory),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let v = residual(instance, &state.estimate, &state.correction);
    let tau_final = linalg::squared_norm(&v) / instance.m() as f64;
    if !tau_final.is_finite() {
        return Err(Error::Diverged {
            iteration: num_iterations,
            partial: Box::new(trajectory),
        });
    }
    trajectory.final_residual_variance = Some(tau_final);
    Ok(trajectory)
}
