//! Experiment configuration: TOML text with `[problem]`, `[denoiser]`,
//! `[algorithm]` and `[experiment]` sections. See `docs/config.md`.

use std::path::PathBuf;

use amp_core::amp::{CorrectionMode, DEFAULT_ITERATIONS};
use amp_core::denoise::{DenoiserSpec, MINIMAX_ALPHA};
use amp_core::model::{self, BernoulliGaussianPrior, MatrixEnsemble};
use amp_core::quadrature::DEFAULT_NODES;
use amp_core::state_evolution::{SeBackend, SeOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub denoiser: DenoiserConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub delta: f64,
    pub sparsity_rate: f64,
    #[serde(default = "one")]
    pub active_variance: f64,
    pub snr_db: f64,
    #[serde(default = "gaussian")]
    pub ensemble: MatrixEnsemble,
}

fn one() -> f64 {
    1.0
}

fn gaussian() -> MatrixEnsemble {
    MatrixEnsemble::Gaussian
}

/// The MMSE denoiser is matched to the `[problem]` prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DenoiserConfig {
    BgMmse {},
    SoftThreshold {
        #[serde(default = "minimax_alpha")]
        alpha: f64,
    },
}

fn minimax_alpha() -> f64 {
    MINIMAX_ALPHA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TauSourceKind {
    #[default]
    Estimate,
    Oracle,
    /// The state evolution's `τ_r(t)` for the run's empirical signal.
    Se,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Amp,
    Ist,
}

impl From<ModeKind> for CorrectionMode {
    fn from(m: ModeKind) -> Self {
        match m {
            ModeKind::Amp => CorrectionMode::Onsager,
            ModeKind::Ist => CorrectionMode::Ist,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    #[serde(default = "amp_mode")]
    pub mode: ModeKind,
    #[serde(default)]
    pub tau_source: TauSourceKind,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    #[serde(default)]
    pub se_backend: SeBackend,
}

fn amp_mode() -> ModeKind {
    ModeKind::Amp
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            mode: ModeKind::Amp,
            tau_source: TauSourceKind::Estimate,
            iterations: DEFAULT_ITERATIONS,
            quadrature_nodes: DEFAULT_NODES,
            se_backend: SeBackend::Quadrature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Iterations whose input error `r(t) − x` feeds QQ and KS output.
    #[serde(default)]
    pub record_input_error: Vec<usize>,
    #[serde(default = "default_quantiles")]
    pub qq_quantiles: usize,
    /// Problem sizes for `sweep-n`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_n: Vec<usize>,
    #[serde(default = "default_scaling_iteration")]
    pub scaling_iteration: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_trials() -> usize {
    1
}

fn default_quantiles() -> usize {
    200
}

fn default_scaling_iteration() -> usize {
    29
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            record_input_error: Vec::new(),
            qq_quantiles: default_quantiles(),
            sweep_n: Vec::new(),
            scaling_iteration: default_scaling_iteration(),
            output_dir: default_output(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn prior(&self) -> BernoulliGaussianPrior {
        BernoulliGaussianPrior {
            sparsity_rate: self.problem.sparsity_rate,
            active_variance: self.problem.active_variance,
        }
    }

    /// `m = round(δ n)`
    pub fn m(&self) -> usize {
        (self.problem.delta * self.problem.n as f64).round() as usize
    }

    pub fn noise_variance(&self) -> f64 {
        model::noise_variance_from_snr(self.problem.sparsity_rate, self.problem.snr_db)
            .expect("validated config")
    }

    pub fn denoiser_spec(&self) -> DenoiserSpec {
        match self.denoiser {
            DenoiserConfig::BgMmse {} => DenoiserSpec::BgMmse { prior: self.prior() },
            DenoiserConfig::SoftThreshold { alpha } => DenoiserSpec::SoftThreshold { alpha },
        }
    }

    pub fn se_options(&self) -> SeOptions {
        SeOptions {
            node_count: self.algorithm.quadrature_nodes,
            backend: self.algorithm.se_backend,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.n < 10 {
            return Err(invalid("problem.n", format!("must be at least 10, got {}", p.n)));
        }
        if !(p.delta > 0.0 && p.delta.is_finite()) {
            return Err(invalid("problem.delta", format!("must be positive, got {}", p.delta)));
        }
        if self.m() == 0 {
            return Err(invalid("problem.delta", "round(delta * n) must be at least 1"));
        }
        if !(p.sparsity_rate > 0.0 && p.sparsity_rate <= 1.0) {
            return Err(invalid(
                "problem.sparsity_rate",
                format!("must lie in (0, 1], got {}", p.sparsity_rate),
            ));
        }
        if !(p.active_variance > 0.0 && p.active_variance.is_finite()) {
            return Err(invalid(
                "problem.active_variance",
                format!("must be positive, got {}", p.active_variance),
            ));
        }
        if !p.snr_db.is_finite() {
            return Err(invalid("problem.snr_db", "must be finite"));
        }
        if let DenoiserConfig::SoftThreshold { alpha } = self.denoiser {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(invalid("denoiser.alpha", format!("must be non-negative, got {alpha}")));
            }
        }
        let a = &self.algorithm;
        if a.iterations == 0 {
            return Err(invalid("algorithm.iterations", "must be at least 1"));
        }
        if a.quadrature_nodes < 2 {
            return Err(invalid("algorithm.quadrature_nodes", "must be at least 2"));
        }
        if a.se_backend == SeBackend::ClosedForm && !matches!(self.denoiser, DenoiserConfig::SoftThreshold { .. }) {
            return Err(invalid("algorithm.se_backend", "closed-form is only available for soft-threshold"));
        }
        let e = &self.experiment;
        if e.trials == 0 {
            return Err(invalid("experiment.trials", "must be at least 1"));
        }
        if let Some(&t) = e.record_input_error.iter().find(|&&t| t >= a.iterations) {
            return Err(invalid(
                "experiment.record_input_error",
                format!("iteration {t} is not below algorithm.iterations = {}", a.iterations),
            ));
        }
        if e.qq_quantiles < 2 {
            return Err(invalid("experiment.qq_quantiles", format!("must be at least 2, got {}", e.qq_quantiles)));
        }
        if !e.record_input_error.is_empty() && e.qq_quantiles > p.n {
            return Err(invalid(
                "experiment.qq_quantiles",
                format!("{} quantiles exceed the sample size n = {}", e.qq_quantiles, p.n),
            ));
        }
        if let Some(&bad) = e.sweep_n.iter().find(|&&n| n < 10) {
            return Err(invalid("experiment.sweep_n", format!("sizes must be at least 10, got {bad}")));
        }
        if !e.sweep_n.is_empty() && e.scaling_iteration > a.iterations {
            return Err(invalid(
                "experiment.scaling_iteration",
                format!("must not exceed algorithm.iterations = {}", a.iterations),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
n = 100
delta = 0.5
sparsity_rate = 0.1
snr_db = 20.0

[denoiser]
kind = "soft-threshold"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.denoiser, DenoiserConfig::SoftThreshold { alpha: 1.14 });
        assert_eq!(c.algorithm.iterations, 30);
        assert_eq!(c.problem.ensemble, MatrixEnsemble::Gaussian);
        assert_eq!(c.m(), 50);
        assert!((c.noise_variance() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("snr_db = 20.0", "snr_db = 20.0\nsnr = 3");
        assert!(matches!(parse_config(&text), Err(ConfigError::Parse(_))));
        let text = MINIMAL.replace("kind = \"soft-threshold\"", "kind = \"bg-mmse\"\nalpha = 1.0");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn record_iteration_out_of_range() {
        let text = format!("{MINIMAL}\n[experiment]\nrecord_input_error = [30]\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("record_input_error"), "{err}");
    }

    #[test]
    fn m_rounds() {
        let text = MINIMAL.replace("n = 100", "n = 11");
        assert_eq!(parse_config(&text).unwrap().m(), 6);
    }
}
