//! CSV, JSON and SVG artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use amp_core::state_evolution::SeTrajectory;
use amp_core::stats::ScalingRow;
use thiserror::Error;

use crate::plot;
use crate::runner::{ExperimentReport, QqEntry, SweepReport};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode report: {0}")]
    Json(#[from] serde_json::Error),
}

pub const TRAJECTORY_HEADER: &str = "t,mse_mean,mse_std,taur_mean,taur_std,se_mse,se_taur";
pub const SCALING_HEADER: &str = "n,T,std_mse_sqrtn,std_taur_sqrtn,iteration";
pub const QQ_HEADER: &str = "normal_quantile,empirical_quantile";
pub const SE_HEADER: &str = "t,se_mse,se_taur";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn trajectory_csv(report: &ExperimentReport) -> String {
    let agg = &report.aggregate;
    let se_mse = report.state_evolution.mse();
    let se_taur = report.state_evolution.input_variance();
    let mut out = String::with_capacity(64 * (agg.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for t in 0..agg.len() {
        let cols = [
            agg.mse_mean[t],
            agg.mse_std[t],
            agg.taur_mean[t],
            agg.taur_std[t],
            se_mse[t],
            se_taur[t],
        ];
        let _ = write!(out, "{t}");
        for c in cols {
            let _ = write!(out, ",{}", fmt17(c));
        }
        out.push('\n');
    }
    out
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            r.trials,
            fmt17(r.std_mse_sqrtn),
            fmt17(r.std_taur_sqrtn),
            r.iteration
        );
    }
    out
}

pub fn qq_csv(entry: &QqEntry) -> String {
    let mut out = format!("{QQ_HEADER}\n");
    for (x, y) in entry.series.points() {
        let _ = writeln!(out, "{},{}", fmt17(x), fmt17(y));
    }
    let _ = writeln!(out, "# ks={}", fmt17(entry.series.ks));
    out
}

pub fn se_csv(se: &SeTrajectory) -> String {
    let mut out = format!("{SE_HEADER}\n");
    for s in &se.states {
        let _ = writeln!(out, "{},{},{}", s.iteration, fmt17(s.output_mse), fmt17(s.input_variance));
    }
    out
}

/// Writes `trajectory.csv`, one `qq_t<k>.csv` per recorded iteration and
/// `report.json`; with `plots`, SVG renderings next to them.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, plots: bool) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let mut written = vec![write_file(&dir.join("trajectory.csv"), &trajectory_csv(report))?];
    for entry in &report.qq {
        let name = format!("qq_t{}.csv", entry.iteration);
        written.push(write_file(&dir.join(name), &qq_csv(entry))?);
    }
    let json = serde_json::to_string_pretty(report)?;
    written.push(write_file(&dir.join("report.json"), &json)?);
    if plots {
        written.push(write_file(&dir.join("trajectory.svg"), &plot::trajectory_svg(report))?);
        for entry in &report.qq {
            let name = format!("qq_t{}.svg", entry.iteration);
            written.push(write_file(&dir.join(name), &plot::qq_svg(entry))?);
        }
    }
    Ok(written)
}

/// `scaling.csv` and `report.json` at the top level, each run under `n<size>/`.
pub fn write_sweep(sweep: &SweepReport, dir: &Path, plots: bool) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let mut written = vec![write_file(&dir.join("scaling.csv"), &scaling_csv(&sweep.scaling))?];
    for run in &sweep.runs {
        written.extend(write_outputs(run, &dir.join(format!("n{}", run.n)), plots)?);
    }
    let json = serde_json::to_string_pretty(&sweep.scaling)?;
    written.push(write_file(&dir.join("report.json"), &json)?);
    Ok(written)
}

pub fn write_se_only(se: &SeTrajectory, dir: &Path, plots: bool) -> Result<Vec<PathBuf>, OutputError> {
    ensure_dir(dir)?;
    let mut written = vec![write_file(&dir.join("se.csv"), &se_csv(se))?];
    written.push(write_file(&dir.join("report.json"), &serde_json::to_string_pretty(se)?)?);
    if plots {
        written.push(write_file(&dir.join("se.svg"), &plot::se_svg(se))?);
    }
    Ok(written)
}
