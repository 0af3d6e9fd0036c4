//! Separable scalar denoisers `η(r; τ)` and their derivatives.
//!
//! `τ` is the variance of the Gaussian error on the denoiser input. Both
//! shipped denoisers are odd in `r` with even derivatives.

use serde::{Deserialize, Serialize};

use crate::model::BernoulliGaussianPrior;
use crate::normal;
use crate::{Error, Result};

/// Minimax soft-threshold multiplier for 0.1-sparse signals.
pub const MINIMAX_ALPHA: f64 = 1.14;

/// A scalar denoiser applied componentwise.
pub trait Denoiser: Sync {
    fn eval(&self, r: f64, tau: f64) -> Result<f64>;

    fn derivative(&self, r: f64, tau: f64) -> Result<f64>;

    fn eval_with_derivative(&self, r: f64, tau: f64) -> Result<(f64, f64)> {
        Ok((self.eval(r, tau)?, self.derivative(r, tau)?))
    }

    /// Inputs `r` where `η(·; τ)` has a kink or a sharp transition.
    /// Quadrature splits the integration range there.
    fn breakpoints(&self, _tau: f64) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DenoiserSpec {
    /// `sgn(r) · max(0, |r| − α√τ)`
    SoftThreshold { alpha: f64 },
    /// Posterior mean `E[X | X + N(0, τ) = r]` under a Bernoulli–Gaussian prior.
    BgMmse { prior: BernoulliGaussianPrior },
}

impl DenoiserSpec {
    pub fn soft_threshold(alpha: f64) -> Result<Self> {
        let spec = DenoiserSpec::SoftThreshold { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bg_mmse(prior: BernoulliGaussianPrior) -> Result<Self> {
        let spec = DenoiserSpec::BgMmse { prior };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserSpec::SoftThreshold { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::param("alpha", format!("must be positive and finite, got {alpha}")));
                }
                Ok(())
            }
            DenoiserSpec::BgMmse { prior } => prior.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DenoiserSpec::SoftThreshold { .. } => "soft-threshold",
            DenoiserSpec::BgMmse { .. } => "bg-mmse",
        }
    }

    fn check_inputs(&self, r: f64, tau: f64) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::non_finite("denoiser input", None));
        }
        if !tau.is_finite() {
            return Err(Error::non_finite("denoiser variance", None));
        }
        match self {
            DenoiserSpec::SoftThreshold { .. } if tau < 0.0 => {
                Err(Error::param("tau", format!("must be non-negative, got {tau}")))
            }
            DenoiserSpec::BgMmse { .. } if tau <= 0.0 => {
                Err(Error::param("tau", format!("must be positive for the MMSE denoiser, got {tau}")))
            }
            _ => Ok(()),
        }
    }
}

impl Denoiser for DenoiserSpec {
    fn eval(&self, r: f64, tau: f64) -> Result<f64> {
        self.eval_with_derivative(r, tau).map(|(v, _)| v)
    }

    fn derivative(&self, r: f64, tau: f64) -> Result<f64> {
        self.eval_with_derivative(r, tau).map(|(_, d)| d)
    }

    fn eval_with_derivative(&self, r: f64, tau: f64) -> Result<(f64, f64)> {
        self.check_inputs(r, tau)?;
        Ok(match *self {
            DenoiserSpec::SoftThreshold { alpha } => soft_threshold(r, alpha * tau.sqrt()),
            DenoiserSpec::BgMmse { prior } => bg_posterior_mean(r, tau, &prior),
        })
    }

    fn breakpoints(&self, tau: f64) -> Vec<f64> {
        match *self {
            DenoiserSpec::SoftThreshold { alpha } if tau > 0.0 => {
                let t = alpha * tau.sqrt();
                vec![-t, t]
            }
            DenoiserSpec::BgMmse { prior } if tau > 0.0 => bg_switch_points(prior, tau),
            _ => Vec::new(),
        }
    }
}

/// Inputs where the posterior activity probability crosses one half.
/// For small `τ` the posterior mean jumps from near 0 to near `r` across a
/// narrow band around these points.
fn bg_switch_points(prior: BernoulliGaussianPrior, tau: f64) -> Vec<f64> {
    let beta = prior.sparsity_rate;
    let s = prior.active_variance;
    if !(beta > 0.0 && beta < 1.0) {
        return Vec::new();
    }
    let c = 1.0 / tau - 1.0 / (s + tau);
    let num = 2.0 * (((1.0 - beta) / beta).ln() + 0.5 * ((s + tau) / tau).ln());
    if !(num > 0.0 && c > 0.0) {
        return Vec::new();
    }
    let r = (num / c).sqrt();
    if r.is_finite() {
        vec![-r, r]
    } else {
        Vec::new()
    }
}

/// Value and derivative of the soft threshold. The derivative at the kink
/// `|r| = threshold` is 0.
fn soft_threshold(r: f64, threshold: f64) -> (f64, f64) {
    let mag = r.abs() - threshold;
    if mag > 0.0 {
        (mag.copysign(r), 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Bernoulli–Gaussian posterior mean.
///
/// With slab variance `s = σ_x²`, the posterior is a two-component mixture:
/// the active component has weight
/// `π(r) = β N(r; 0, s+τ) / (β N(r; 0, s+τ) + (1-β) N(r; 0, τ))`
/// and mean `r s / (s+τ)`, so `η(r) = π(r) · r · s/(s+τ)`. Differentiating,
/// `η'(r) = s/(s+τ) · (π + π(1-π) c r²)` with `c = s / (τ (s+τ))`.
/// The weight is evaluated from its log-odds so large `|r|/√τ` neither
/// overflows nor underflows.
fn bg_posterior_mean(r: f64, tau: f64, prior: &BernoulliGaussianPrior) -> (f64, f64) {
    let beta = prior.sparsity_rate;
    let s = prior.active_variance;
    let gain = s / (s + tau);
    let (pi, pi_comp) = if beta <= 0.0 {
        (0.0, 1.0)
    } else if beta >= 1.0 {
        (1.0, 0.0)
    } else {
        // log-odds of the active component
        let log_odds = (beta.ln() + normal::log_density(r, s + tau))
            - ((1.0 - beta).ln() + normal::log_density(r, tau));
        logistic_pair(log_odds)
    };
    let c = s / (tau * (s + tau));
    let value = pi * gain * r;
    let deriv = gain * (pi + pi * pi_comp * c * r * r);
    (value, deriv)
}

/// `(σ(z), 1 - σ(z))` without cancellation.
fn logistic_pair(z: f64) -> (f64, f64) {
    if z >= 0.0 {
        let e = (-z).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = z.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Applies `denoiser` to every entry of `r`, returning the outputs and the
/// sum of derivatives (the Onsager divergence term).
pub fn denoise_vector<D: Denoiser + ?Sized>(denoiser: &D, r: &[f64], tau: f64) -> Result<(Vec<f64>, f64)> {
    let mut out = vec![0.0; r.len()];
    let sum = denoise_vector_into(denoiser, r, tau, &mut out)?;
    Ok((out, sum))
}

pub fn denoise_vector_into<D: Denoiser + ?Sized>(
    denoiser: &D,
    r: &[f64],
    tau: f64,
    out: &mut [f64],
) -> Result<f64> {
    if out.len() != r.len() {
        return Err(Error::shape("denoiser output", r.len(), out.len()));
    }
    let mut sum = 0.0;
    for (j, (o, &rj)) in out.iter_mut().zip(r).enumerate() {
        let (v, d) = denoiser.eval_with_derivative(rj, tau).map_err(|e| match e {
            Error::NonFinite { context, .. } => Error::non_finite(context, Some(j)),
            other => other,
        })?;
        *o = v;
        sum += d;
    }
    Ok(sum)
}
