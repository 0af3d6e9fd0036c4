//! Small-instance oracle suite behind the `verify` subcommand.

use amp_core::amp::{self, CorrectionMode, IterateState, TauSource};
use amp_core::denoise::{Denoiser, DenoiserSpec};
use amp_core::linalg::DenseMatrix;
use amp_core::model::{self, BernoulliGaussianPrior, MatrixEnsemble};
use amp_core::quadrature::{piecewise_gaussian_expectation, GaussHermiteRule};
use amp_core::rng::{StreamSeed, StreamTag};
use amp_core::state_evolution::{self as se, SignalDistribution};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub mc_samples: usize,
    pub mc_settings: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mc_samples: 200_000,
            mc_settings: 10,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Largest observed deviation in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

pub fn run_suite(options: &VerifyOptions) -> Vec<CheckResult> {
    vec![
        dense_product(options.seed),
        mmse_posterior_mean(),
        derivative_finite_difference(options.seed),
        se_monte_carlo(options),
        amp_step_straight_line(options.seed),
        gauss_hermite_exactness(),
    ]
}

fn aux_rng(seed: u64, k: i64) -> impl Rng {
    StreamSeed::new(seed, StreamTag::Auxiliary, k).rng()
}

fn random_matrix(m: usize, n: usize, seed: u64, k: i64) -> DenseMatrix {
    model::sample_matrix(m, n, MatrixEnsemble::Gaussian, StreamSeed::new(seed, StreamTag::Auxiliary, k))
        .expect("valid shape")
}

/// `A x` and `Aᵀ v` against explicit loops.
fn dense_product(seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    let mut rng = aux_rng(seed, 0);
    for (k, &(m, n)) in [(1, 1), (3, 7), (7, 3), (17, 33)].iter().enumerate() {
        let a = random_matrix(m, n, seed, 100 + k as i64);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ax = a.mul_vec(&x).expect("shapes match");
        let atv = a.transpose_mul_vec(&v).expect("shapes match");
        for i in 0..m {
            let expect: f64 = (0..n).map(|j| a.get(i, j) * x[j]).sum();
            worst = worst.max((ax[i] - expect).abs());
        }
        for j in 0..n {
            let expect: f64 = (0..m).map(|i| a.get(i, j) * v[i]).sum();
            worst = worst.max((atv[j] - expect).abs());
        }
    }
    CheckResult::new("dense matrix products", worst, 1e-12)
}

fn gauss(x: f64, var: f64) -> f64 {
    (-(x * x) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Posterior mean by direct integration over the slab: with `X ~ N(r, τ)`,
/// `E[x | r] = β E[X φ_s(X)] / ((1−β) φ_τ(r) + β E[φ_s(X)])`.
pub fn posterior_mean_by_quadrature(r: f64, tau: f64, prior: &BernoulliGaussianPrior) -> f64 {
    let (beta, s) = (prior.sparsity_rate, prior.active_variance);
    let num = piecewise_gaussian_expectation(|x| Ok(x * gauss(x, s)), r, tau, &[], 400).expect("finite");
    let den = piecewise_gaussian_expectation(|x| Ok(gauss(x, s)), r, tau, &[], 400).expect("finite");
    beta * num / ((1.0 - beta) * gauss(r, tau) + beta * den)
}

/// Closed-form MMSE denoiser against quadrature on `τ ∈ {0.01, 0.1, 1}`,
/// `r ∈ [−10, 10]` in steps of 0.25.
fn mmse_posterior_mean() -> CheckResult {
    let prior = BernoulliGaussianPrior::new(0.1, 1.0).expect("valid prior");
    let d = DenoiserSpec::BgMmse { prior };
    let mut worst = 0.0f64;
    for &tau in &[0.01, 0.1, 1.0] {
        for k in 0..=80 {
            let r = -10.0 + 0.25 * k as f64;
            let got = d.eval(r, tau).expect("valid input");
            worst = worst.max((got - posterior_mean_by_quadrature(r, tau, &prior)).abs());
        }
    }
    CheckResult::new("MMSE closed form vs posterior quadrature", worst, 1e-8)
}

/// `η′` against central differences, away from the soft-threshold kinks.
fn derivative_finite_difference(seed: u64) -> CheckResult {
    let mut rng = aux_rng(seed, 1);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let tau: f64 = rng.random_range(0.01..4.0);
        let r: f64 = rng.random_range(-12.0..12.0);
        let alpha = rng.random_range(0.2..3.0);
        let prior = BernoulliGaussianPrior::new(rng.random_range(0.0..=1.0), rng.random_range(0.1..5.0)).expect("valid");
        let mut denoisers = vec![DenoiserSpec::BgMmse { prior }];
        if (r.abs() - alpha * tau.sqrt()).abs() > 1e-3 {
            denoisers.push(DenoiserSpec::SoftThreshold { alpha });
        }
        for d in denoisers {
            let fd = (d.eval(r + h, tau).expect("valid") - d.eval(r - h, tau).expect("valid")) / (2.0 * h);
            worst = worst.max((d.derivative(r, tau).expect("valid") - fd).abs());
        }
    }
    CheckResult::new("derivative vs finite differences", worst, 1e-6)
}

/// Monte-Carlo estimate of `E[(η(X + √τ Z) − X)²]` and its standard error.
pub fn monte_carlo_mse<D: Denoiser + ?Sized>(
    d: &D,
    prior: &BernoulliGaussianPrior,
    tau: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let active = rng.random::<f64>() < prior.sparsity_rate;
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let x = if active { prior.active_variance.sqrt() * z1 } else { 0.0 };
        let e = d.eval(x + tau.sqrt() * z2, tau).expect("valid input") - x;
        s1 += e * e;
        s2 += e.powi(4);
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Quadrature MSE against Monte Carlo on random `(denoiser, τ)` settings,
/// measured in standard errors.
fn se_monte_carlo(options: &VerifyOptions) -> CheckResult {
    let mut rng = aux_rng(options.seed, 2);
    let mut worst = 0.0f64;
    for k in 0..options.mc_settings {
        let prior = BernoulliGaussianPrior::new(rng.random_range(0.05..0.5), rng.random_range(0.5..2.0)).expect("valid");
        let tau = 10f64.powf(rng.random_range(-2.3..0.0));
        let d = if k % 2 == 0 {
            DenoiserSpec::BgMmse { prior }
        } else {
            DenoiserSpec::SoftThreshold {
                alpha: rng.random_range(0.5..2.0),
            }
        };
        let q = se::se_mse(&d, &SignalDistribution::Analytic(prior), tau).expect("valid setting");
        let (mc, stderr) = monte_carlo_mse(&d, &prior, tau, options.mc_samples, &mut rng);
        worst = worst.max((q - mc).abs() / stderr);
    }
    CheckResult::new("state evolution MSE vs Monte Carlo (standard errors)", worst, 4.0)
}

/// Two AMP iterations with the soft threshold, written out with explicit loops.
pub fn straight_line_amp(a: &DenseMatrix, y: &[f64], alpha: f64, iterations: usize) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let mut x = vec![0.0; n];
    let mut mu = vec![0.0; m];
    for _ in 0..iterations {
        let mut v = vec![0.0; m];
        let mut tau = 0.0;
        for i in 0..m {
            let mut ax = 0.0;
            for j in 0..n {
                ax += a.get(i, j) * x[j];
            }
            v[i] = y[i] - ax + mu[i];
            tau += v[i] * v[i];
        }
        let thresh = alpha * (tau / m as f64).sqrt();
        let mut active = 0.0;
        for j in 0..n {
            let mut r = x[j];
            for i in 0..m {
                r += a.get(i, j) * v[i];
            }
            x[j] = if r > thresh {
                active += 1.0;
                r - thresh
            } else if r < -thresh {
                active += 1.0;
                r + thresh
            } else {
                0.0
            };
        }
        for i in 0..m {
            mu[i] = v[i] * active / m as f64;
        }
    }
    x
}

fn amp_step_straight_line(seed: u64) -> CheckResult {
    let prior = BernoulliGaussianPrior::new(0.3, 1.0).expect("valid");
    let alpha = 1.0;
    let d = DenoiserSpec::SoftThreshold { alpha };
    let mut worst = 0.0f64;
    for k in 0..20 {
        let a = random_matrix(5, 8, seed, 200 + k);
        let x = model::sample_signal(8, &prior, StreamSeed::new(seed, StreamTag::Auxiliary, 300 + k)).expect("valid");
        let w = model::sample_noise(5, 0.01, StreamSeed::new(seed, StreamTag::Auxiliary, 400 + k)).expect("valid");
        let instance = model::assemble_instance(a, x, w).expect("shapes match");
        let mut state = IterateState::for_instance(&instance);
        for t in 1..=2 {
            state = match amp::step(&instance, &state, &d, CorrectionMode::Onsager, &TauSource::Estimate, false) {
                Ok((next, _)) => next,
                Err(_) => return CheckResult::new("AMP step vs straight-line code", f64::INFINITY, 1e-12),
            };
            let oracle = straight_line_amp(&instance.matrix, &instance.measurements, alpha, t);
            for (p, q) in state.estimate.iter().zip(&oracle) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    CheckResult::new("AMP step vs straight-line code", worst, 1e-12)
}

/// Normalized probabilists' Hermite polynomials `He_k/√k!` have zero mean
/// under `N(0, 1)` for `k ≥ 1`; a `K`-node rule must reproduce that up to
/// degree `2K − 1`.
fn gauss_hermite_exactness() -> CheckResult {
    let mut worst = 0.0f64;
    for &nodes in &[1usize, 2, 3, 5, 10, 20, 61] {
        let rule = GaussHermiteRule::cached(nodes).expect("valid node count");
        for degree in 1..=(2 * nodes - 1) {
            let mean = rule
                .expectation(|z| Ok(normalized_hermite(degree, z)), 0.0, 1.0)
                .expect("finite");
            worst = worst.max(mean.abs());
        }
    }
    CheckResult::new("Gauss-Hermite exactness on polynomials", worst, 1e-10)
}

fn normalized_hermite(degree: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..degree {
        let next = (z * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}
