//! Scalar MSE state evolution:
//!
//! ```text
//! τ_r(t)   = E(t) / δ + τ_w
//! E(t+1)   = E[(η(X + N(0, τ_r(t)); τ_r(t)) − X)²]
//! E(0)     = E[X²]
//! ```
//!
//! `X` follows either the empirical distribution of a fixed signal or the
//! Bernoulli–Gaussian prior itself.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserSpec};
use crate::model::BernoulliGaussianPrior;
use crate::normal;
use crate::quadrature::{piecewise_gaussian_expectation, GaussHermiteRule, DEFAULT_NODES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SignalDistribution {
    /// Equal-weight atoms at the entries of a signal.
    Empirical { atoms: Vec<f64> },
    Analytic(BernoulliGaussianPrior),
}

impl SignalDistribution {
    pub fn empirical(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::param("atoms", "must be non-empty"));
        }
        if let Some(i) = atoms.iter().position(|a| !a.is_finite()) {
            return Err(Error::non_finite("empirical atoms", Some(i)));
        }
        Ok(SignalDistribution::Empirical { atoms })
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            SignalDistribution::Empirical { atoms } => {
                atoms.iter().map(|a| a * a).sum::<f64>() / atoms.len() as f64
            }
            SignalDistribution::Analytic(prior) => prior.second_moment(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeBackend {
    #[default]
    Quadrature,
    /// Exact piecewise-Gaussian formula; soft threshold only.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeOptions {
    pub node_count: usize,
    pub backend: SeBackend,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            node_count: DEFAULT_NODES,
            backend: SeBackend::Quadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeState {
    pub iteration: usize,
    /// `E(t)`
    pub output_mse: f64,
    /// `τ_r(t) = E(t)/δ + τ_w`
    pub input_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeTrajectory {
    pub delta: f64,
    pub tau_w: f64,
    pub states: Vec<SeState>,
}

impl SeTrajectory {
    pub fn mse(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.output_mse).collect()
    }

    pub fn input_variance(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.input_variance).collect()
    }
}

/// `E / δ + τ_w`
pub fn input_variance(output_mse: f64, delta: f64, tau_w: f64) -> f64 {
    output_mse / delta + tau_w
}

/// Per-atom expectation `E[(η(x + Z) − x)²]`, `Z ~ N(0, τ)`.
trait AtomMse: Sync {
    fn atom_mse(&self, x: f64, tau: f64) -> Result<f64>;

    /// Inputs near which `η` has a kink or a sharp transition.
    fn breakpoints(&self) -> &[f64];
}

/// Gauss–Hermite for smooth denoisers; kinked ones go through the
/// piecewise Gauss–Legendre path split at their breakpoints.
struct QuadratureAtoms<'a, D: ?Sized> {
    denoiser: &'a D,
    rule: Arc<GaussHermiteRule>,
    breakpoints: Vec<f64>,
}

impl<'a, D: Denoiser + ?Sized> QuadratureAtoms<'a, D> {
    fn new(denoiser: &'a D, tau: f64, node_count: usize) -> Result<Self> {
        Ok(Self {
            denoiser,
            rule: GaussHermiteRule::cached(node_count)?,
            breakpoints: denoiser.breakpoints(tau),
        })
    }
}

impl<D: Denoiser + ?Sized> AtomMse for QuadratureAtoms<'_, D> {
    fn atom_mse(&self, x: f64, tau: f64) -> Result<f64> {
        let sq_err = |r: f64| {
            let e = self.denoiser.eval(r, tau)? - x;
            Ok(e * e)
        };
        if self.breakpoints.is_empty() {
            self.rule.expectation(sq_err, x, tau)
        } else {
            piecewise_gaussian_expectation(sq_err, x, tau, &self.breakpoints, self.rule.len())
        }
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

struct SoftThresholdAtoms {
    alpha: f64,
    breakpoints: [f64; 2],
}

impl SoftThresholdAtoms {
    fn new(alpha: f64, tau: f64) -> Self {
        let t = alpha * tau.sqrt();
        Self {
            alpha,
            breakpoints: [-t, t],
        }
    }
}

impl AtomMse for SoftThresholdAtoms {
    fn atom_mse(&self, x: f64, tau: f64) -> Result<f64> {
        Ok(soft_threshold_atom_mse(x, tau, self.alpha))
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

/// Cuts for the outer integral over the signal. As a function of the atom,
/// the per-atom MSE changes over a width of about `√τ` around each
/// breakpoint of `η`.
fn outer_cuts(breakpoints: &[f64], tau: f64) -> Vec<f64> {
    let s = tau.sqrt();
    breakpoints
        .iter()
        .flat_map(|&b| (-3..=3).map(move |j| b + 2.0 * j as f64 * s))
        .collect()
}

/// Exact `E[(η(x + Z) − x)²]` for the soft threshold with `θ = α√τ`.
///
/// Splitting at the dead zone, with `s = √τ`, `a = (θ − x)/s`, `b = (−θ − x)/s`:
/// the upper branch contributes `E[(sU − θ)²; U > a]`, the lower branch
/// `E[(sU + θ)²; U < b]`, and the dead zone `x² (Φ(a) − Φ(b))`.
pub fn soft_threshold_atom_mse(x: f64, tau: f64, alpha: f64) -> f64 {
    let s = tau.sqrt();
    if s == 0.0 {
        return 0.0;
    }
    let theta = alpha * s;
    let a = (theta - x) / s;
    let b = (-theta - x) / s;
    let (phi_a, phi_b) = (normal::pdf(a), normal::pdf(b));
    let upper_tail = normal::cdf(-a);
    let lower_tail = normal::cdf(b);
    let upper = tau * (upper_tail + a * phi_a) - 2.0 * theta * s * phi_a + theta * theta * upper_tail;
    let lower = tau * (lower_tail - b * phi_b) - 2.0 * theta * s * phi_b + theta * theta * lower_tail;
    let dead = x * x * (normal::cdf(a) - lower_tail);
    upper + lower + dead
}

fn mean_over_atoms<A: AtomMse + ?Sized>(atoms: &[f64], tau: f64, per_atom: &A) -> Result<f64> {
    // Zero atoms dominate sparse signals; evaluate them once.
    let zero_count = atoms.iter().filter(|&&a| a == 0.0).count();
    let nonzero: Vec<f64> = atoms.iter().copied().filter(|&a| a != 0.0).collect();

    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        nonzero
            .par_iter()
            .map(|&x| per_atom.atom_mse(x, tau))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = nonzero
        .iter()
        .map(|&x| per_atom.atom_mse(x, tau))
        .collect::<Result<_>>()?;

    // fixed-order reduction
    let mut sum: f64 = values.iter().sum();
    if zero_count > 0 {
        sum += zero_count as f64 * per_atom.atom_mse(0.0, tau)?;
    }
    Ok(sum / atoms.len() as f64)
}

fn expectation_over<A: AtomMse + ?Sized>(
    dist: &SignalDistribution,
    tau: f64,
    per_atom: &A,
    outer: &GaussHermiteRule,
) -> Result<f64> {
    match dist {
        SignalDistribution::Empirical { atoms } => mean_over_atoms(atoms, tau, per_atom),
        SignalDistribution::Analytic(prior) => {
            let beta = prior.sparsity_rate;
            let inactive = if beta < 1.0 { per_atom.atom_mse(0.0, tau)? } else { 0.0 };
            let active = if beta == 0.0 {
                0.0
            } else if per_atom.breakpoints().is_empty() {
                outer.expectation(|x| per_atom.atom_mse(x, tau), 0.0, prior.active_variance)?
            } else {
                let cuts = outer_cuts(per_atom.breakpoints(), tau);
                piecewise_gaussian_expectation(|x| per_atom.atom_mse(x, tau), 0.0, prior.active_variance, &cuts, outer.len())?
            };
            Ok((1.0 - beta) * inactive + beta * active)
        }
    }
}

/// `E[(η(X + Z) − X)²]` with `Z ~ N(0, τ_r)`, by quadrature.
pub fn se_mse<D: Denoiser + ?Sized>(denoiser: &D, dist: &SignalDistribution, tau_r: f64) -> Result<f64> {
    se_mse_with(denoiser, dist, tau_r, DEFAULT_NODES)
}

pub fn se_mse_with<D: Denoiser + ?Sized>(
    denoiser: &D,
    dist: &SignalDistribution,
    tau_r: f64,
    node_count: usize,
) -> Result<f64> {
    check_tau(tau_r)?;
    let atoms = QuadratureAtoms::new(denoiser, tau_r, node_count)?;
    expectation_over(dist, tau_r, &atoms, &atoms.rule)
}

/// Soft-threshold MSE via the exact per-atom formula. For the analytic
/// prior the outer integral over the active component still uses
/// Gauss–Hermite with `node_count` nodes; its integrand is smooth.
pub fn se_mse_soft_threshold_exact(
    alpha: f64,
    dist: &SignalDistribution,
    tau_r: f64,
    node_count: usize,
) -> Result<f64> {
    check_tau(tau_r)?;
    let rule = GaussHermiteRule::cached(node_count)?;
    expectation_over(dist, tau_r, &SoftThresholdAtoms::new(alpha, tau_r), &rule)
}

fn check_tau(tau_r: f64) -> Result<()> {
    if !(tau_r > 0.0 && tau_r.is_finite()) {
        return Err(Error::param("tau_r", format!("must be positive and finite, got {tau_r}")));
    }
    Ok(())
}

/// Dispatches on the backend in `options`.
pub fn se_mse_spec(spec: &DenoiserSpec, dist: &SignalDistribution, tau_r: f64, options: &SeOptions) -> Result<f64> {
    match (options.backend, spec) {
        (SeBackend::Quadrature, _) => se_mse_with(spec, dist, tau_r, options.node_count),
        (SeBackend::ClosedForm, DenoiserSpec::SoftThreshold { alpha }) => {
            se_mse_soft_threshold_exact(*alpha, dist, tau_r, options.node_count)
        }
        (SeBackend::ClosedForm, _) => Err(Error::param(
            "backend",
            "the closed-form backend only supports the soft-threshold denoiser",
        )),
    }
}

fn check_recursion_params(delta: f64, tau_w: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", format!("must be positive and finite, got {delta}")));
    }
    if !(tau_w >= 0.0 && tau_w.is_finite()) {
        return Err(Error::param("tau_w", format!("must be non-negative and finite, got {tau_w}")));
    }
    Ok(())
}

fn step_with<F>(state: &SeState, delta: f64, tau_w: f64, mut mse_at: F) -> Result<SeState>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_recursion_params(delta, tau_w)?;
    let tau = input_variance(state.output_mse, delta, tau_w);
    // Exact recovery with no noise is a fixed point.
    let next = if tau == 0.0 { 0.0 } else { mse_at(tau)? };
    Ok(SeState {
        iteration: state.iteration + 1,
        output_mse: next,
        input_variance: input_variance(next, delta, tau_w),
    })
}

pub fn initial_state(dist: &SignalDistribution, delta: f64, tau_w: f64) -> SeState {
    let e0 = dist.second_moment();
    SeState {
        iteration: 0,
        output_mse: e0,
        input_variance: input_variance(e0, delta, tau_w),
    }
}

pub fn se_step<D: Denoiser + ?Sized>(
    state: &SeState,
    delta: f64,
    tau_w: f64,
    denoiser: &D,
    dist: &SignalDistribution,
) -> Result<SeState> {
    step_with(state, delta, tau_w, |tau| se_mse(denoiser, dist, tau))
}

pub fn se_run<D: Denoiser + ?Sized>(
    dist: &SignalDistribution,
    delta: f64,
    tau_w: f64,
    denoiser: &D,
    num_iterations: usize,
) -> Result<SeTrajectory> {
    run_with(dist, delta, tau_w, num_iterations, |tau| se_mse(denoiser, dist, tau))
}

pub fn se_run_spec(
    dist: &SignalDistribution,
    delta: f64,
    tau_w: f64,
    spec: &DenoiserSpec,
    num_iterations: usize,
    options: &SeOptions,
) -> Result<SeTrajectory> {
    run_with(dist, delta, tau_w, num_iterations, |tau| se_mse_spec(spec, dist, tau, options))
}

fn run_with<F>(dist: &SignalDistribution, delta: f64, tau_w: f64, num_iterations: usize, mut mse_at: F) -> Result<SeTrajectory>
where
    F: FnMut(f64) -> Result<f64>,
{
    if num_iterations == 0 {
        return Err(Error::param("num_iterations", "must be at least 1"));
    }
    check_recursion_params(delta, tau_w)?;
    let mut states = Vec::with_capacity(num_iterations + 1);
    states.push(initial_state(dist, delta, tau_w));
    for _ in 0..num_iterations {
        let next = step_with(states.last().unwrap(), delta, tau_w, &mut mse_at)?;
        states.push(next);
    }
    Ok(SeTrajectory { delta, tau_w, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity;
    impl Denoiser for Identity {
        fn eval(&self, r: f64, _: f64) -> Result<f64> {
            Ok(r)
        }
        fn derivative(&self, _: f64, _: f64) -> Result<f64> {
            Ok(1.0)
        }
    }

    struct Null;
    impl Denoiser for Null {
        fn eval(&self, _: f64, _: f64) -> Result<f64> {
            Ok(0.0)
        }
        fn derivative(&self, _: f64, _: f64) -> Result<f64> {
            Ok(0.0)
        }
    }

    fn reference_prior() -> BernoulliGaussianPrior {
        BernoulliGaussianPrior::new(0.1, 1.0).unwrap()
    }

    #[test]
    fn null_and_identity_denoisers() {
        let dist = SignalDistribution::empirical(vec![1.0, -2.0, 0.0, 0.5]).unwrap();
        let e = se_mse(&Null, &dist, 0.3).unwrap();
        assert!((e - dist.second_moment()).abs() < 1e-15);
        let e = se_mse(&Identity, &dist, 0.3).unwrap();
        assert!((e - 0.3).abs() < 1e-12);
        let analytic = SignalDistribution::Analytic(reference_prior());
        assert!((se_mse(&Null, &analytic, 0.3).unwrap() - 0.1).abs() < 1e-13);
        assert!((se_mse(&Identity, &analytic, 0.3).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn step_substitution() {
        let dist = SignalDistribution::Analytic(reference_prior());
        assert!((input_variance(0.1, 0.5, 0.001) - 0.201).abs() < 1e-15);
        let s = SeState { iteration: 0, output_mse: 0.1, input_variance: 0.201 };
        let next = se_step(&s, 0.5, 0.001, &Identity, &dist).unwrap();
        assert_eq!(next.iteration, 1);
        assert!((next.output_mse - 0.201).abs() < 1e-12);
    }

    #[test]
    fn exact_recovery_fixed_point() {
        let dist = SignalDistribution::Analytic(reference_prior());
        let d = DenoiserSpec::bg_mmse(reference_prior()).unwrap();
        let s = SeState { iteration: 4, output_mse: 0.0, input_variance: 0.0 };
        let next = se_step(&s, 0.5, 0.0, &d, &dist).unwrap();
        assert_eq!(next.output_mse, 0.0);
        assert_eq!(next.iteration, 5);
    }

    #[test]
    fn initial_second_moments() {
        let t = se_run(&SignalDistribution::Analytic(reference_prior()), 0.5, 0.001, &Identity, 1).unwrap();
        assert!((t.states[0].output_mse - 0.1).abs() < 1e-16);
        let dist = SignalDistribution::empirical(vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let t = se_run(&dist, 0.5, 0.001, &Identity, 2).unwrap();
        assert_eq!(t.states[0].output_mse, 0.5);
        assert_eq!(t.states.len(), 3);
    }

    #[test]
    fn identity_recursion_matches_closed_form() {
        // E(t+1) = E(t)/δ + τ_w  ⇒  E(t) = δ^{-t} E0 + τ_w Σ_{k<t} δ^{-k}
        let (delta, tau_w) = (1.25, 0.01);
        let dist = SignalDistribution::Analytic(reference_prior());
        let traj = se_run(&dist, delta, tau_w, &Identity, 30).unwrap();
        for (t, s) in traj.states.iter().enumerate() {
            let g = 1.0 / delta;
            let geometric: f64 = (0..t).map(|k| g.powi(k as i32)).sum();
            let expect = g.powi(t as i32) * 0.1 + tau_w * geometric;
            assert!((s.output_mse - expect).abs() <= 1e-10 * expect, "t={t}");
        }
    }

    #[test]
    fn closed_form_soft_threshold_matches_quadrature() {
        let st = DenoiserSpec::soft_threshold(1.14).unwrap();
        for &x in &[0.0, 0.3, -1.7, 4.0] {
            for &tau in &[0.2, 0.01, 1e-4] {
                let exact = soft_threshold_atom_mse(x, tau, 1.14);
                let q = QuadratureAtoms::new(&st, tau, 61).unwrap().atom_mse(x, tau).unwrap();
                assert!((q - exact).abs() < 1e-10 * exact, "x={x} tau={tau}: {q} vs {exact}");
            }
        }
        // x = 0: 2τ[(1 + α²)(1 − Φ(α)) − α φ(α)]
        let a: f64 = 1.14;
        let by_hand = 0.4 * ((1.0 + a * a) * normal::cdf(-a) - a * normal::pdf(a));
        assert!((soft_threshold_atom_mse(0.0, 0.2, a) - by_hand).abs() < 1e-15);
    }

    #[test]
    fn parameter_errors() {
        let dist = SignalDistribution::Analytic(reference_prior());
        assert!(se_mse(&Identity, &dist, 0.0).is_err());
        assert!(se_run(&dist, 0.0, 0.1, &Identity, 3).is_err());
        assert!(se_run(&dist, 0.5, -0.1, &Identity, 3).is_err());
        assert!(se_run(&dist, 0.5, 0.1, &Identity, 0).is_err());
        assert!(SignalDistribution::empirical(vec![]).is_err());
        let d = DenoiserSpec::bg_mmse(reference_prior()).unwrap();
        let opts = SeOptions { backend: SeBackend::ClosedForm, ..Default::default() };
        assert!(se_mse_spec(&d, &dist, 0.1, &opts).is_err());
    }
}
