//! Trial aggregation, `std·√n` scaling rows, and QQ / Kolmogorov–Smirnov
//! diagnostics.

use serde::Serialize;

use crate::amp::Trajectory;
use crate::normal;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateTrajectory {
    pub trials: usize,
    pub mse_mean: Vec<f64>,
    pub mse_std: Vec<f64>,
    pub taur_mean: Vec<f64>,
    pub taur_std: Vec<f64>,
}

impl AggregateTrajectory {
    pub fn len(&self) -> usize {
        self.mse_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse_mean.is_empty()
    }
}

/// Sample mean and standard deviation (divisor `T − 1`; zero for `T = 1`).
/// Two passes in input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (t - 1.0)).sqrt())
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = rows[0].len();
    let mut means = Vec::with_capacity(len);
    let mut stds = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(rows.len());
    for t in 0..len {
        column.clear();
        column.extend(rows.iter().map(|r| r[t]));
        let (m, s) = mean_std(&column);
        means.push(m);
        stds.push(s);
    }
    (means, stds)
}

/// Per-iteration mean and sample std of `E_n(t)` and `τ̂_r(t)` over trials.
pub fn aggregate_trials(trajectories: &[Trajectory]) -> Result<AggregateTrajectory> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::param("trajectories", "need at least one trial"))?;
    let mse: Vec<Vec<f64>> = trajectories.iter().map(Trajectory::mse).collect();
    let taur: Vec<Vec<f64>> = trajectories.iter().map(Trajectory::residual_variance).collect();
    let len = first.mse().len();
    for (m, t) in mse.iter().zip(&taur) {
        if m.len() != len {
            return Err(Error::shape("trajectory length", len, m.len()));
        }
        if t.len() != len {
            return Err(Error::shape("residual-variance series length", len, t.len()));
        }
    }
    let (mse_mean, mse_std) = column_stats(&mse);
    let (taur_mean, taur_std) = column_stats(&taur);
    Ok(AggregateTrajectory {
        trials: trajectories.len(),
        mse_mean,
        mse_std,
        taur_mean,
        taur_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub trials: usize,
    pub iteration: usize,
    pub std_mse_sqrtn: f64,
    pub std_taur_sqrtn: f64,
}

/// `std(E_n(t*))·√n` and `std(τ̂_r(t*))·√n`, one row per `(n, aggregate)`.
pub fn scaling_rows<'a, I>(aggregates: I, iteration: usize) -> Result<Vec<ScalingRow>>
where
    I: IntoIterator<Item = (usize, &'a AggregateTrajectory)>,
{
    aggregates
        .into_iter()
        .map(|(n, agg)| {
            if iteration >= agg.len() {
                return Err(Error::param(
                    "iteration",
                    format!("t* = {iteration} not in an aggregate of {} iterations (n = {n})", agg.len()),
                ));
            }
            let root = (n as f64).sqrt();
            Ok(ScalingRow {
                n,
                trials: agg.trials,
                iteration,
                std_mse_sqrtn: agg.mse_std[iteration] * root,
                std_taur_sqrtn: agg.taur_std[iteration] * root,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqSeries {
    pub normal_quantiles: Vec<f64>,
    pub empirical_quantiles: Vec<f64>,
    pub ks: f64,
}

impl QqSeries {
    pub fn len(&self) -> usize {
        self.normal_quantiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normal_quantiles.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.normal_quantiles.iter().copied().zip(self.empirical_quantiles.iter().copied())
    }
}

fn sorted_finite(sample: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
        return Err(Error::non_finite("sample", Some(i)));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Sample quantile at probability `p` from sorted data, interpolating
/// linearly between order statistics placed at `(i − 0.5)/N`.
fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = n as f64 * p + 0.5; // 1-based fractional rank
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo as usize - 1;
    let frac = h - lo;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Kolmogorov–Smirnov distance between the sample's empirical CDF and `Φ`.
pub fn ks_statistic(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::param("sample", "must be non-empty"));
    }
    let sorted = sorted_finite(sample)?;
    Ok(ks_sorted(&sorted))
}

fn ks_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal::cdf(x);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// QQ points on the grid `p_k = (k − 0.5)/K`, `k = 1..=K`, against the
/// standard normal. The caller standardizes the sample.
pub fn qq_series(sample: &[f64], quantile_count: usize) -> Result<QqSeries> {
    if quantile_count < 2 {
        return Err(Error::param("quantile_count", "must be at least 2"));
    }
    if sample.len() < quantile_count {
        return Err(Error::param(
            "quantile_count",
            format!("{quantile_count} quantiles requested from {} samples", sample.len()),
        ));
    }
    let sorted = sorted_finite(sample)?;
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::non_finite("standardized sample (constant, zero spread)", None));
    }
    let k = quantile_count as f64;
    let (normal_quantiles, empirical_quantiles) = (1..=quantile_count)
        .map(|i| {
            let p = (i as f64 - 0.5) / k;
            (normal::quantile(p), interpolated_quantile(&sorted, p))
        })
        .unzip();
    Ok(QqSeries {
        normal_quantiles,
        empirical_quantiles,
        ks: ks_sorted(&sorted),
    })
}

/// `e / √τ`
pub fn standardize(sample: &[f64], variance: f64) -> Result<Vec<f64>> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param("variance", format!("must be positive and finite, got {variance}")));
    }
    let sd = variance.sqrt();
    Ok(sample.iter().map(|e| e / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amp::IterationRecord;

    fn traj(mse: &[f64], taur: &[f64]) -> Trajectory {
        assert_eq!(mse.len(), taur.len());
        let records = (0..mse.len() - 1)
            .map(|t| IterationRecord {
                iteration: t,
                output_mse: mse[t + 1],
                residual_variance: taur[t],
                tau_used: taur[t],
                input_error_mse: taur[t],
                input_error: None,
            })
            .collect();
        Trajectory {
            initial_mse: mse[0],
            records,
            final_residual_variance: Some(*taur.last().unwrap()),
        }
    }

    #[test]
    fn single_trial_has_zero_std() {
        let t = traj(&[1.0, 0.5, 0.25], &[2.0, 1.0, 0.5]);
        let agg = aggregate_trials(std::slice::from_ref(&t)).unwrap();
        assert_eq!(agg.mse_mean, vec![1.0, 0.5, 0.25]);
        assert_eq!(agg.taur_mean, vec![2.0, 1.0, 0.5]);
        assert_eq!(agg.mse_std, vec![0.0; 3]);
        assert_eq!(agg.trials, 1);
    }

    #[test]
    fn two_trials() {
        let a = traj(&[1.0, 1.0], &[0.0, 0.0]);
        let b = traj(&[3.0, 3.0], &[0.0, 2.0]);
        let agg = aggregate_trials(&[a, b]).unwrap();
        assert_eq!(agg.mse_mean[0], 2.0);
        assert!((agg.mse_std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((agg.taur_std[1] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn aggregate_errors() {
        assert!(aggregate_trials(&[]).is_err());
        let a = traj(&[1.0, 1.0], &[0.0, 0.0]);
        let b = traj(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]);
        assert!(matches!(aggregate_trials(&[a, b]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn scaling_examples() {
        let agg = AggregateTrajectory {
            trials: 10,
            mse_mean: vec![0.0; 2],
            mse_std: vec![0.0, 0.0010],
            taur_mean: vec![0.0; 2],
            taur_std: vec![0.0, 0.0020],
        };
        let rows = scaling_rows([(10_000, &agg), (1, &agg)], 1).unwrap();
        assert!((rows[0].std_mse_sqrtn - 0.10).abs() < 1e-15);
        assert!((rows[0].std_taur_sqrtn - 0.20).abs() < 1e-15);
        assert_eq!(rows[1].std_mse_sqrtn, 0.0010);
        assert_eq!(rows[0].trials, 10);
        assert!(scaling_rows([(10, &agg)], 2).is_err());
    }

    #[test]
    fn qq_of_exact_quantiles_is_diagonal() {
        let k = 200;
        let sample: Vec<f64> = (1..=k).map(|i| normal::quantile((i as f64 - 0.5) / k as f64)).collect();
        let qq = qq_series(&sample, k).unwrap();
        for (x, y) in qq.points() {
            assert!((x - y).abs() <= 1e-9);
        }
        assert!(qq.ks < 1.0 / k as f64 + 1e-12);
    }

    #[test]
    fn qq_scales_homogeneously() {
        let sample: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.618).fract() - 0.3).collect();
        let a = qq_series(&sample, 50).unwrap();
        let doubled: Vec<f64> = sample.iter().map(|v| 2.0 * v).collect();
        let b = qq_series(&doubled, 50).unwrap();
        assert_eq!(a.normal_quantiles, b.normal_quantiles);
        for (u, v) in a.empirical_quantiles.iter().zip(&b.empirical_quantiles) {
            assert_eq!(2.0 * u, *v);
        }
    }

    #[test]
    fn qq_errors() {
        assert!(qq_series(&[1.0; 10], 5).is_err());
        assert!(qq_series(&[1.0, 2.0], 3).is_err());
        assert!(qq_series(&[1.0, 2.0], 1).is_err());
        assert!(qq_series(&[1.0, f64::NAN, 3.0], 2).is_err());
        assert!(standardize(&[1.0], 0.0).is_err());
    }

    #[test]
    fn ks_of_point_mass() {
        // all mass at 0: sup |F_n − Φ| = 1/2 at 0
        let ks = ks_statistic(&[0.0; 10]).unwrap();
        assert!((ks - 0.5).abs() < 1e-15);
    }
}
