//! Signal, matrix and noise ensembles, and measurement assembly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, DenseMatrix};
use crate::rng::StreamSeed;
use crate::{Error, Result};

/// `p(x) = (1 - β) δ(x) + β N(x; 0, σ_x²)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliGaussianPrior {
    pub sparsity_rate: f64,
    pub active_variance: f64,
}

impl BernoulliGaussianPrior {
    pub fn new(sparsity_rate: f64, active_variance: f64) -> Result<Self> {
        let prior = Self {
            sparsity_rate,
            active_variance,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sparsity_rate) {
            return Err(Error::param(
                "sparsity_rate",
                format!("must lie in [0, 1], got {}", self.sparsity_rate),
            ));
        }
        if !(self.active_variance > 0.0 && self.active_variance.is_finite()) {
            return Err(Error::param(
                "active_variance",
                format!("must be positive and finite, got {}", self.active_variance),
            ));
        }
        Ok(())
    }

    pub fn second_moment(&self) -> f64 {
        self.sparsity_rate * self.active_variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixEnsemble {
    /// Entries `±1/√m` with equal probability.
    SignBernoulli,
    /// Entries `N(0, 1/m)`.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub matrix: DenseMatrix,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    pub measurements: Vec<f64>,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    /// `δ = m / n`
    pub fn sampling_ratio(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }
}

pub fn sample_signal(n: usize, prior: &BernoulliGaussianPrior, seed: StreamSeed) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    prior.validate()?;
    let mut rng = seed.rng();
    let sd = prior.active_variance.sqrt();
    let beta = prior.sparsity_rate;
    Ok((0..n)
        .map(|_| {
            // Draw both variates unconditionally so each entry consumes a
            // fixed amount of the stream.
            let u: f64 = rng.random();
            let z: f64 = StandardNormal.sample(&mut rng);
            if u < beta {
                sd * z
            } else {
                0.0
            }
        })
        .collect())
}

pub fn sample_matrix(m: usize, n: usize, ensemble: MatrixEnsemble, seed: StreamSeed) -> Result<DenseMatrix> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let mut rng = seed.rng();
    let scale = 1.0 / (m as f64).sqrt();
    let len = m * n;
    let data: Vec<f64> = match ensemble {
        MatrixEnsemble::SignBernoulli => (0..len)
            .map(|_| if rng.random::<bool>() { scale } else { -scale })
            .collect(),
        MatrixEnsemble::Gaussian => (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect(),
    };
    DenseMatrix::from_row_major(m, n, data)
}

/// `β · 10^(-snr_db / 10)`
pub fn noise_variance_from_snr(beta: f64, snr_db: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(
            "sparsity_rate",
            format!("SNR is undefined unless 0 < β ≤ 1, got {beta}"),
        ));
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    Ok(beta * 10f64.powf(-snr_db / 10.0))
}

pub fn sample_noise(m: usize, variance: f64, seed: StreamSeed) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::param(
            "noise_variance",
            format!("must be non-negative and finite, got {variance}"),
        ));
    }
    let mut rng = seed.rng();
    let sd = variance.sqrt();
    Ok((0..m)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect())
}

pub fn assemble_instance(matrix: DenseMatrix, signal: Vec<f64>, noise: Vec<f64>) -> Result<ProblemInstance> {
    if signal.len() != matrix.cols() {
        return Err(Error::shape("signal length", matrix.cols(), signal.len()));
    }
    if noise.len() != matrix.rows() {
        return Err(Error::shape("noise length", matrix.rows(), noise.len()));
    }
    let mut measurements = vec![0.0; matrix.rows()];
    matrix.mul_vec_into(&signal, &mut measurements);
    for (y, w) in measurements.iter_mut().zip(&noise) {
        *y += w;
    }
    Ok(ProblemInstance {
        matrix,
        signal,
        noise,
        measurements,
    })
}

/// `(1/m) Σ w_i²`
pub fn empirical_noise_second_moment(noise: &[f64]) -> Result<f64> {
    if noise.is_empty() {
        return Err(Error::param("noise", "must be non-empty"));
    }
    Ok(linalg::squared_norm(noise) / noise.len() as f64)
}
