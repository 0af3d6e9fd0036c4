//! Gaussian quadrature for expectations over a normal variable.
//!
//! [`GaussHermiteRule`] handles smooth integrands: an `N`-node rule
//! integrates polynomials of degree up to `2N - 1` exactly.
//! [`piecewise_gaussian_expectation`] handles integrands with known kinks by
//! splitting the (truncated) real line there and applying Gauss–Legendre on
//! each piece.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::{Error, Result};

pub const DEFAULT_NODES: usize = 61;

#[derive(Debug, Clone)]
pub struct GaussHermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermiteRule {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("node_count", "must be at least 1"));
        }
        let (nodes, weights) = hermite_nodes(count);
        Ok(Self { nodes, weights })
    }

    /// Shared rule for `count` nodes, built once per process.
    pub fn cached(count: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<Vec<Arc<GaussHermiteRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
        let mut rules = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(rule) = rules.iter().find(|r| r.len() == count) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(count)?);
        rules.push(Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `exp(-x²)`; they sum to `√π`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(center + Z)]` with `Z ~ N(0, variance)`. A zero variance
    /// evaluates `f(center)` directly.
    pub fn expectation<F>(&self, mut f: F, center: f64, variance: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::param("variance", format!("must be non-negative and finite, got {variance}")));
        }
        if variance == 0.0 {
            let v = f(center)?;
            return if v.is_finite() { Ok(v) } else { Err(Error::non_finite("quadrature integrand", None)) };
        }
        let scale = (2.0 * variance).sqrt();
        let mut acc = 0.0;
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(center + scale * x)?;
            if !v.is_finite() {
                return Err(Error::non_finite("quadrature integrand", Some(k)));
            }
            acc += w * v;
        }
        Ok(acc / PI.sqrt())
    }
}

/// Half-width, in standard deviations, of the range covered by
/// [`piecewise_gaussian_expectation`]. The mass outside is below 2e-23.
pub const TRUNCATION_SDS: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct GaussLegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendreRule {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("node_count", "must be at least 1"));
        }
        let (nodes, weights) = legendre_nodes(count);
        Ok(Self { nodes, weights })
    }

    pub fn cached(count: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<Vec<Arc<GaussLegendreRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
        let mut rules = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(rule) = rules.iter().find(|r| r.nodes.len() == count) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(count)?);
        rules.push(Arc::clone(&rule));
        Ok(rule)
    }

    /// Nodes on `[-1, 1]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights; they sum to 2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b f(x) dx`
    pub fn integrate<F>(&self, mut f: F, a: f64, b: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(mid + half * x)?;
            if !v.is_finite() {
                return Err(Error::non_finite("quadrature integrand", Some(k)));
            }
            acc += w * v;
        }
        Ok(acc * half)
    }
}

/// `E[f(center + Z)]`, `Z ~ N(0, variance)`, for `f` smooth except at the
/// absolute positions `breakpoints`. The range `center ± 10σ` is cut at every
/// breakpoint inside it and each piece gets an `node_count`-point
/// Gauss–Legendre rule applied to `f · φ`.
pub fn piecewise_gaussian_expectation<F>(
    mut f: F,
    center: f64,
    variance: f64,
    breakpoints: &[f64],
    node_count: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::param("variance", format!("must be non-negative and finite, got {variance}")));
    }
    if variance == 0.0 {
        let v = f(center)?;
        return if v.is_finite() { Ok(v) } else { Err(Error::non_finite("quadrature integrand", None)) };
    }
    let rule = GaussLegendreRule::cached(node_count)?;
    let sd = variance.sqrt();
    let (lo, hi) = (-TRUNCATION_SDS, TRUNCATION_SDS);
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .map(|b| (b - center) / sd)
        .filter(|u| *u > lo && *u < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(hi);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            acc += rule.integrate(|u| Ok(f(center + sd * u)? * (-0.5 * u * u).exp() * norm), w[0], w[1])?;
        }
    }
    Ok(acc)
}

pub fn gauss_hermite_expectation<F>(f: F, center: f64, variance: f64, node_count: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    GaussHermiteRule::cached(node_count)?.expectation(f, center, variance)
}

/// Roots and weights of the physicists' Hermite polynomial of degree `n`,
/// in ascending order.
///
/// Eigenvalues of the Jacobi matrix (Golub–Welsch) locate every root; a few
/// Newton steps on the orthonormal recurrence then polish each one and give
/// the weight `2 / p'(x)²` without the precision loss of squared
/// eigenvector components.
fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (0..n).map(|i| if i + 1 < n { ((i + 1) as f64 / 2.0).sqrt() } else { 0.0 }).collect();
    tridiagonal_eigenvalues(&mut diag, &mut off);
    diag.sort_by(f64::total_cmp);

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &guess in &diag {
        let mut z = guess;
        let mut pp = orthonormal_hermite(n, z).1;
        for _ in 0..8 {
            let (p, d) = orthonormal_hermite(n, z);
            pp = d;
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let step = p / d;
            z -= step;
            if step.abs() <= 1e-16 * z.abs().max(1.0) {
                pp = orthonormal_hermite(n, z).1;
                break;
            }
        }
        nodes.push(z);
        weights.push(if pp.is_finite() { 2.0 / (pp * pp) } else { 0.0 });
    }
    // exact symmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre nodes on `[-1, 1]`, ascending, by the same eigenvalue
/// start and Newton polish as [`hermite_nodes`].
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (0..n)
        .map(|i| {
            let k = (i + 1) as f64;
            if i + 1 < n { k / (4.0 * k * k - 1.0).sqrt() } else { 0.0 }
        })
        .collect();
    tridiagonal_eigenvalues(&mut diag, &mut off);
    diag.sort_by(f64::total_cmp);

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &guess in &diag {
        let mut z = guess;
        for _ in 0..8 {
            let (p, d) = legendre(n, z);
            let step = p / d;
            z -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let d = legendre(n, z).1;
        nodes.push(z);
        weights.push(2.0 / ((1.0 - z * z) * d * d));
    }
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `P_n(z)` and `P_n'(z)`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p2) / (z * z - 1.0))
}

/// Value and derivative of the degree-`n` orthonormal Hermite polynomial.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson-type shifts. `off[i]` couples rows `i` and `i + 1`; `off[n-1]`
/// is ignored. Eigenvalues are left in `diag`.
fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64]) {
    let n = diag.len();
    if n < 2 {
        return;
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l || iterations == 60 {
                break;
            }
            iterations += 1;
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}
