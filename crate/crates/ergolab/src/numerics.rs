//! Shared numerical primitives: adaptive Gauss-Legendre quadrature (plain and
//! log-domain), overflow-safe log-sum-exp, log-log power-law regression, and
//! reproducible splittable RNG streams.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Gaussian proposals are truncated at this many standard deviations; the
/// two-sided neglected mass is `GAUSS_TRUNC_MASS`.
pub const GAUSS_TRUNC_SD: f64 = 8.0;
pub const GAUSS_TRUNC_MASS: f64 = 1.3e-15;

// ---------------------------------------------------------------------------
// Gauss-Legendre rules
// ---------------------------------------------------------------------------

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0_f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let pk = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration from the Chebyshev initial guess.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn gl15() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(15))
}

fn gl15_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (xs, ws) = gl15();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in xs.iter().zip(ws.iter()) {
        s += w * f(c + h * x);
    }
    s * h
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub abs_err: f64,
}

const MAX_DEPTH: usize = 60;

fn integrate_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    whole: f64,
) -> Result<Quadrature> {
    let m = 0.5 * (a + b);
    let left = gl15_panel(f, a, m);
    let right = gl15_panel(f, m, b);
    let refined = left + right;
    let err = (whole - refined).abs();
    if err <= tol || (b - a) < 1e-14 * (1.0 + a.abs() + b.abs()) {
        return Ok(Quadrature {
            value: refined,
            abs_err: err,
        });
    }
    if depth >= MAX_DEPTH {
        return Err(Error::numeric(
            format!("quadrature did not converge on [{a}, {b}] (err {err:.3e} > tol {tol:.3e})"),
            Some(refined),
        ));
    }
    let ql = integrate_rec(f, a, m, 0.5 * tol, depth + 1, left)?;
    let qr = integrate_rec(f, m, b, 0.5 * tol, depth + 1, right)?;
    Ok(Quadrature {
        value: ql.value + qr.value,
        abs_err: ql.abs_err + qr.abs_err,
    })
}

/// Composite adaptive 15-point Gauss-Legendre quadrature of `f` on [a, b]
/// with estimated absolute error below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    if !(a < b) {
        return Err(Error::usage(format!("integrate: need a < b, got [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::usage("integrate: tol must be positive"));
    }
    let whole = gl15_panel(&f, a, b);
    integrate_rec(&f, a, b, tol, 0, whole)
}

/// Adaptive quadrature with interior break points (integrand kinks are
/// panel boundaries, restoring per-panel smoothness).
pub fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    splits: &[f64],
    tol: f64,
) -> Result<Quadrature> {
    let edges = edges_with_splits(a, b, splits)?;
    let n = edges.len() - 1;
    let mut value = 0.0;
    let mut abs_err = 0.0;
    for w in edges.windows(2) {
        let q = integrate(&f, w[0], w[1], tol / n as f64)?;
        value += q.value;
        abs_err += q.abs_err;
    }
    Ok(Quadrature { value, abs_err })
}

fn edges_with_splits(a: f64, b: f64, splits: &[f64]) -> Result<Vec<f64>> {
    if !(a < b) {
        return Err(Error::usage(format!("integrate: need a < b, got [{a}, {b}]")));
    }
    let mut edges = vec![a];
    let mut interior: Vec<f64> = splits
        .iter()
        .copied()
        .filter(|s| *s > a && *s < b)
        .collect();
    interior.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for s in interior {
        if s - edges.last().unwrap() > 1e-13 * (1.0 + s.abs()) {
            edges.push(s);
        }
    }
    edges.push(b);
    Ok(edges)
}

/// Solve `f(z) = 0` for a sign change of a monotone function on [lo, hi] by
/// bisection; used to locate the acceptance boundary of `min(1, r)` kinks.
/// Returns `None` when there is no sign change on the bracket.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut fa = fa;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// Log-domain quadrature: log of the integral of exp(g)
// ---------------------------------------------------------------------------

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_panel<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> f64 {
    let (xs, ws) = gl15();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut terms = [f64::NEG_INFINITY; 15];
    let mut m = f64::NEG_INFINITY;
    for (i, (x, w)) in xs.iter().zip(ws.iter()).enumerate() {
        let t = g(c + h * x) + (w * h).ln();
        terms[i] = t;
        if t > m {
            m = t;
        }
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut s = 0.0;
    for t in terms {
        s += (t - m).exp();
    }
    m + s.ln()
}

fn log_integrate_rec<G: Fn(f64) -> f64>(
    g: &G,
    a: f64,
    b: f64,
    tol_log: f64,
    depth: usize,
    whole: f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = log_panel(g, a, m);
    let right = log_panel(g, m, b);
    let refined = lse2(left, right);
    let converged = if whole == f64::NEG_INFINITY && refined == f64::NEG_INFINITY {
        true
    } else {
        (whole - refined).abs() <= tol_log
    };
    if converged || (b - a) < 1e-14 * (1.0 + a.abs() + b.abs()) {
        return Ok(refined);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::numeric(
            format!("log-quadrature did not converge on [{a}, {b}]"),
            Some(refined),
        ));
    }
    let ql = log_integrate_rec(g, a, m, tol_log, depth + 1, left)?;
    let qr = log_integrate_rec(g, m, b, tol_log, depth + 1, right)?;
    Ok(lse2(ql, qr))
}

/// Returns `log(integral of exp(g))` over [a, b], combining panel values
/// by log-sum-exp so integrands spanning thousands of e-folds stay finite.
/// `tol_log` is the acceptable discrepancy in log-space (relative error).
pub fn log_integrate<G: Fn(f64) -> f64>(
    g: G,
    a: f64,
    b: f64,
    splits: &[f64],
    tol_log: f64,
) -> Result<f64> {
    let edges = edges_with_splits(a, b, splits)?;
    let mut acc = f64::NEG_INFINITY;
    for w in edges.windows(2) {
        let whole = log_panel(&g, w[0], w[1]);
        let q = log_integrate_rec(&g, w[0], w[1], tol_log, 0, whole)?;
        acc = lse2(acc, q);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// log-sum-exp
// ---------------------------------------------------------------------------

/// Overflow-safe `log(sum_i exp(v_i))`. Entries may be -inf (absorbing).
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("log_sum_exp: empty input"));
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + s.ln())
}

/// `log(1 - exp(la))` for `la <= 0`, stable near both ends.
pub fn log1m_exp(la: f64) -> f64 {
    if la >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if la > -std::f64::consts::LN_2 {
        (-la.exp_m1()).ln()
    } else {
        (-la.exp()).ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Power-law regression
// ---------------------------------------------------------------------------

/// Slope/intercept/R^2 of an ordinary least squares fit of `log y` on
/// `log x`, restricted to the abscissa window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

pub fn fit_power_law(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::usage(format!(
            "fit_power_law: window must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    if xs.len() != ys.len() {
        return Err(Error::usage("fit_power_law: xs and ys lengths differ"));
    }
    if xs.iter().chain(ys.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::usage("fit_power_law: all xs and ys must be positive"));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::usage(format!(
            "fit_power_law: need at least 5 points inside the window, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r_squared = if syy < 1e-30 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    if !slope.is_finite() {
        return Err(Error::numeric("fit_power_law: non-finite slope", None));
    }
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window,
    })
}

// ---------------------------------------------------------------------------
// Reproducible RNG streams
// ---------------------------------------------------------------------------

/// A counter-based random stream: distinct `(seed, stream_id)` pairs give
/// statistically independent sequences and the same pair reproduces the
/// same sequence bit-for-bit. Streams are single-owner; parallel work
/// derives fresh streams instead of sharing one.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh independent stream derived from the same seed.
    pub fn substream(&self, offset: u64) -> Self {
        RngStream::new(self.seed, self.stream_id.wrapping_add(offset))
    }

    pub fn draw_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn draw_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}
