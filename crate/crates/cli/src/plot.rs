//! Minimal SVG charts. The CSV files are the data of record.

use std::fmt::Write as _;

use amp_core::state_evolution::SeTrajectory;

use crate::runner::{ExperimentReport, QqEntry};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let (y, y0, y1) = if self.log_y {
            (y.max(f64::MIN_POSITIVE).log10(), self.y0.log10(), self.y1.log10())
        } else {
            (y, self.y0, self.y1)
        };
        HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, anchor_y) in [(frame.y0, b), (frame.y1, t)] {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{v:.3e}</text>"#, l - 4.0, anchor_y + 4.0);
    }
    for (v, anchor_x) in [(frame.x0, l), (frame.x1, r)] {
        let _ = writeln!(out, r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{v:.3}</text>"#, b + 16.0);
    }
}

fn polyline(out: &mut String, frame: &Frame, points: impl Iterator<Item = (f64, f64)>, color: &str, dash: bool) {
    let coords: Vec<String> = points
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
        .collect();
    let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        coords.join(" ")
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        let _ = writeln!(out, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, x + 26.0, y + 4.0);
    }
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (1e-6, 1.0);
    }
    (10f64.powf(lo.log10().floor()), 10f64.powf(hi.log10().ceil()).max(lo * 10.0))
}

/// Mean `E_n(t)` with ±1 std bars and the state-evolution curve, log scale.
pub fn trajectory_svg(report: &ExperimentReport) -> String {
    let agg = &report.aggregate;
    let se = report.state_evolution.mse();
    let last = agg.len().saturating_sub(1).max(1) as f64;
    let (y0, y1) = log_range(agg.mse_mean.iter().chain(&se).copied());
    let frame = Frame {
        x0: 0.0,
        x1: last,
        y0,
        y1,
        log_y: true,
    };
    let mut out = String::new();
    header(&mut out, "MSE per iteration", &frame, "iteration t", "MSE");
    polyline(&mut out, &frame, se.iter().enumerate().map(|(t, &v)| (t as f64, v)), "black", true);
    polyline(
        &mut out,
        &frame,
        agg.mse_mean.iter().enumerate().map(|(t, &v)| (t as f64, v)),
        "steelblue",
        false,
    );
    for t in 0..agg.len() {
        let (m, s) = (agg.mse_mean[t], agg.mse_std[t]);
        let x = frame.px(t as f64);
        let lo = (m - s).max(frame.y0);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="steelblue"/>"#,
            frame.py(lo),
            frame.py(m + s)
        );
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{:.2}" r="2.5" fill="steelblue"/>"#, frame.py(m));
    }
    legend(&mut out, &[("empirical mean ± std", "steelblue"), ("state evolution", "black")]);
    out.push_str("</svg>\n");
    out
}

/// Standard-normal quantiles against empirical quantiles, with `y = x`.
pub fn qq_svg(entry: &QqEntry) -> String {
    let series = &entry.series;
    let extent = series
        .points()
        .flat_map(|(x, y)| [x.abs(), y.abs()])
        .fold(1.0f64, f64::max)
        .ceil();
    let frame = Frame {
        x0: -extent,
        x1: extent,
        y0: -extent,
        y1: extent,
        log_y: false,
    };
    let mut out = String::new();
    let title = format!("QQ, t = {} (trial {}, KS = {:.4})", entry.iteration, entry.trial, series.ks);
    header(&mut out, &title, &frame, "standard normal quantile", "empirical quantile");
    polyline(&mut out, &frame, [(-extent, -extent), (extent, extent)].into_iter(), "gray", true);
    for (x, y) in series.points() {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="none" stroke="steelblue"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn se_svg(se: &SeTrajectory) -> String {
    let mse = se.mse();
    let (y0, y1) = log_range(mse.iter().copied());
    let frame = Frame {
        x0: 0.0,
        x1: mse.len().saturating_sub(1).max(1) as f64,
        y0,
        y1,
        log_y: true,
    };
    let mut out = String::new();
    header(&mut out, "State evolution", &frame, "iteration t", "E(t)");
    polyline(&mut out, &frame, mse.iter().enumerate().map(|(t, &v)| (t as f64, v)), "black", false);
    out.push_str("</svg>\n");
    out
}
