//! Dense-in-law grid discretization of Metropolis transition kernels on a
//! truncated interval, with exact n-step evolution, TV distances,
//! polynomial-rate fits, and spectral gaps.
//!
//! Off-diagonal entries are built from the symmetric flux
//! `F(i,j) = ∫∫ min(pi(x)q(x,y), pi(y)q(y,x)) dy dx` over cell pairs,
//! evaluated with one shared tensor quadrature per pair, so detailed
//! balance (and its skew variant for the lifted walk) holds to floating
//! point roundoff rather than to discretization accuracy.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::numerics::{
    fit_power_law, gauss_legendre_rule, RateFit, GAUSS_TRUNC_SD, LN_SQRT_2PI,
};
use crate::targets::Target;

/// Quadrature order per smooth subinterval of a cell.
const CELL_GL: usize = 7;

/// Row-stochastic sparse transition matrix on a uniform cell grid over
/// `[-L, L]`. Lifted operators double the state space: states `0..n` carry
/// momentum +1, states `n..2n` momentum -1.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub l: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub lifted: bool,
    /// Per state: (column, probability) pairs, diagonal included.
    pub rows: Vec<Vec<(u32, f64)>>,
    /// Per state: accepted mass proposed outside [-L, L], held in place.
    pub leaked: Vec<f64>,
    /// Exact cell masses of the normalized target (split evenly over
    /// momenta when lifted).
    pub pi_grid: Vec<f64>,
    /// Target mass outside [-L, L].
    pub tail_out: f64,
    pub max_leak: f64,
    pub kernel: KernelSpec,
}

fn cell_nodes(target: &Target, l: f64, n: usize, dx: f64) -> Vec<Vec<(f64, f64)>> {
    let (gx, gw) = gauss_legendre_rule(CELL_GL);
    let kinks = target.density_kinks();
    (0..n)
        .map(|i| {
            let a = -l + i as f64 * dx;
            let b = a + dx;
            let mut cuts = vec![a];
            for k in &kinks {
                if *k > a && *k < b {
                    cuts.push(*k);
                }
            }
            cuts.push(b);
            let mut out = Vec::with_capacity(CELL_GL * (cuts.len() - 1));
            for seg in cuts.windows(2) {
                let c = 0.5 * (seg[0] + seg[1]);
                let h = 0.5 * (seg[1] - seg[0]);
                for (x, w) in gx.iter().zip(gw.iter()) {
                    out.push((c + h * x, w * h));
                }
            }
            out
        })
        .collect()
}

/// Symmetric log-flux density `min(log pi(x) + log q(x,y), log pi(y) + log q(y,x))`.
/// `extra` shifts the proposal log-density (ln 2 for the folded guided-walk
/// proposal).
fn log_flux(target: &Target, kernel: &KernelSpec, extra: f64, x: f64, y: f64) -> f64 {
    match kernel {
        KernelSpec::Rwm { eps } | KernelSpec::Gwm { eps, .. } => {
            let z = (y - x) / eps;
            let lq = -0.5 * z * z - LN_SQRT_2PI - eps.ln() + extra;
            let lp = target.log_density_unnorm(x).min(target.log_density_unnorm(y))
                - target.log_norm_const();
            lp + lq
        }
        KernelSpec::Counterexample => {
            let lz = target.log_norm_const();
            let a = target.log_density_unnorm(x) - lz + crate::kernels::counterexample_log_q(x, y);
            let b = target.log_density_unnorm(y) - lz + crate::kernels::counterexample_log_q(y, x);
            a.min(b)
        }
    }
}

/// Tensor-quadrature flux between cell node sets. `pred` filters (x, y)
/// pairs (used for the within-cell directional stay mass).
fn pair_flux(
    target: &Target,
    kernel: &KernelSpec,
    extra: f64,
    xi: &[(f64, f64)],
    yj: &[(f64, f64)],
    pred: impl Fn(f64, f64) -> bool,
) -> f64 {
    let mut s = 0.0;
    for &(x, wx) in xi {
        for &(y, wy) in yj {
            if pred(x, y) {
                s += wx * wy * log_flux(target, kernel, extra, x, y).exp();
            }
        }
    }
    s
}

/// Accepted mass from the x-nodes of one cell into `[ya, yb]` outside the
/// domain, same flux integrand.
fn out_of_domain_flux(
    target: &Target,
    kernel: &KernelSpec,
    extra: f64,
    xi: &[(f64, f64)],
    ya: f64,
    yb: f64,
) -> f64 {
    if yb <= ya {
        return 0.0;
    }
    let (gx, gw) = gauss_legendre_rule(CELL_GL);
    let c = 0.5 * (ya + yb);
    let h = 0.5 * (yb - ya);
    let mut s = 0.0;
    for &(x, wx) in xi {
        for (u, w) in gx.iter().zip(gw.iter()) {
            let y = c + h * u;
            s += wx * w * h * log_flux(target, kernel, extra, x, y).exp();
        }
    }
    s
}

fn grid_masses(target: &Target, l: f64, n: usize, dx: f64) -> Result<(Vec<f64>, f64)> {
    let pi: Vec<f64> = (0..n)
        .map(|i| {
            let a = -l + i as f64 * dx;
            target.cell_mass(a, a + dx)
        })
        .collect::<Result<_>>()?;
    let total: f64 = pi.iter().sum();
    Ok((pi, (1.0 - total).max(0.0)))
}

fn check_dims(l: f64, n: usize) -> Result<()> {
    if !(l > 0.0) {
        return Err(Error::usage(format!("L must be positive, got {l}")));
    }
    if n < 101 || n % 2 == 0 {
        return Err(Error::usage(format!("N must be odd and at least 101, got {n}")));
    }
    Ok(())
}

/// Builds the grid image of an MH kernel; see the module docs for the
/// discretization scheme. `leak_tol` bounds the per-row out-of-domain
/// accepted mass.
pub fn build_grid_operator(
    kernel: &KernelSpec,
    target: &Target,
    l: f64,
    n: usize,
    leak_tol: f64,
) -> Result<GridOperator> {
    kernel.validate()?;
    check_dims(l, n)?;
    let dx = 2.0 * l / n as f64;
    let nodes = cell_nodes(target, l, n, dx);
    let (pi, tail_out) = grid_masses(target, l, n, dx)?;
    match kernel {
        KernelSpec::Rwm { eps } => {
            let hw = ((GAUSS_TRUNC_SD * eps) / dx).ceil() as usize + 1;
            build_unlifted(kernel, target, l, n, dx, &nodes, pi, tail_out, leak_tol, |i| {
                (i.saturating_sub(hw), (i + hw).min(n - 1))
            })
        }
        KernelSpec::Counterexample => build_unlifted(
            kernel,
            target,
            l,
            n,
            dx,
            &nodes,
            pi,
            tail_out,
            leak_tol,
            |_| (0, n - 1),
        ),
        KernelSpec::Gwm { eps, lazy } => build_gwm(
            kernel, target, l, n, dx, &nodes, pi, tail_out, leak_tol, *eps, *lazy,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_unlifted(
    kernel: &KernelSpec,
    target: &Target,
    l: f64,
    n: usize,
    dx: f64,
    nodes: &[Vec<(f64, f64)>],
    pi: Vec<f64>,
    tail_out: f64,
    leak_tol: f64,
    window: impl Fn(usize) -> (usize, usize) + Sync,
) -> Result<GridOperator> {
    let eps_reach = match kernel {
        KernelSpec::Rwm { eps } => GAUSS_TRUNC_SD * eps,
        // the counterexample's Normal component is centered at x/2
        KernelSpec::Counterexample => 0.0,
        KernelSpec::Gwm { .. } => unreachable!(),
    };
    // flux[i][j - i] for j >= i inside the window
    let flux: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (_, hi) = window(i);
            (i..=hi)
                .map(|j| pair_flux(target, kernel, 0.0, &nodes[i], &nodes[j], |_, _| true))
                .collect()
        })
        .collect();
    let leaks: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut leak = 0.0;
            match kernel {
                KernelSpec::Rwm { .. } => {
                    let a = -l + i as f64 * dx;
                    let b = a + dx;
                    leak += out_of_domain_flux(target, kernel, 0.0, &nodes[i], l, b + eps_reach);
                    leak += out_of_domain_flux(target, kernel, 0.0, &nodes[i], a - eps_reach, -l);
                }
                KernelSpec::Counterexample => {
                    // Normal component centered at x/2 with unit scale; the
                    // jump component's out-of-domain acceptance is below
                    // e^{-1e6} and is left on the diagonal.
                    let a = -l + i as f64 * dx;
                    let b = a + dx;
                    let reach = GAUSS_TRUNC_SD + 0.5 * dx;
                    leak += out_of_domain_flux(target, kernel, 0.0, &nodes[i], l, 0.5 * b + reach);
                    leak +=
                        out_of_domain_flux(target, kernel, 0.0, &nodes[i], 0.5 * a - reach, -l);
                }
                KernelSpec::Gwm { .. } => unreachable!(),
            }
            leak / pi[i]
        })
        .collect();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    let mut max_leak = 0.0f64;
    for i in 0..n {
        let (lo, hi) = window(i);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(hi - lo + 2);
        let mut off = 0.0;
        for j in lo..=hi {
            if j == i {
                continue;
            }
            let f = if j > i { flux[i][j - i] } else { flux[j][i - j] };
            let m = f / pi[i];
            if m > 0.0 {
                off += m;
                row.push((j as u32, m));
            }
        }
        let diag = 1.0 - off;
        if diag < -1e-9 {
            return Err(Error::numeric(
                format!("row {i}: off-diagonal mass exceeds 1 by {:.3e}", -diag),
                None,
            ));
        }
        row.push((i as u32, diag.max(0.0)));
        row.sort_unstable_by_key(|e| e.0);
        if leaks[i] > leak_tol {
            return Err(Error::numeric(
                format!("row {i}: leaked mass {:.3e} exceeds tolerance {leak_tol}", leaks[i]),
                None,
            ));
        }
        max_leak = max_leak.max(leaks[i]);
        rows.push(row);
    }
    Ok(GridOperator {
        l,
        n_cells: n,
        dx,
        lifted: false,
        rows,
        leaked: leaks,
        pi_grid: pi,
        tail_out,
        max_leak,
        kernel: *kernel,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_gwm(
    kernel: &KernelSpec,
    target: &Target,
    l: f64,
    n: usize,
    dx: f64,
    nodes: &[Vec<(f64, f64)>],
    pi: Vec<f64>,
    tail_out: f64,
    leak_tol: f64,
    eps: f64,
    lazy: f64,
) -> Result<GridOperator> {
    let hw = ((GAUSS_TRUNC_SD * eps) / dx).ceil() as usize + 1;
    let ln2 = std::f64::consts::LN_2;
    // rightward fluxes: flux[i][j - i] for j > i, plus the directional
    // within-cell stay mass (identical for both momenta by symmetry).
    let flux: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hi = (i + hw).min(n - 1);
            (i..=hi)
                .map(|j| {
                    if j == i {
                        pair_flux(target, kernel, ln2, &nodes[i], &nodes[i], |x, y| y > x)
                    } else {
                        pair_flux(target, kernel, ln2, &nodes[i], &nodes[j], |_, _| true)
                    }
                })
                .collect()
        })
        .collect();
    let (leak_r, leak_l): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = -l + i as f64 * dx;
            let b = a + dx;
            let r = out_of_domain_flux(target, kernel, ln2, &nodes[i], l, b + GAUSS_TRUNC_SD * eps)
                / pi[i];
            let lf =
                out_of_domain_flux(target, kernel, ln2, &nodes[i], a - GAUSS_TRUNC_SD * eps, -l)
                    / pi[i];
            (r, lf)
        })
        .unzip();
    let keep = 1.0 - lazy;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); 2 * n];
    let mut leaked = vec![0.0; 2 * n];
    let mut max_leak = 0.0f64;
    for i in 0..n {
        for (p_idx, leak) in [(0usize, leak_r[i]), (1, leak_l[i])] {
            let state = i + p_idx * n;
            let mut row: Vec<(u32, f64)> = Vec::with_capacity(hw + 3);
            let mut acc = flux[i][0] / pi[i] + leak; // stay + out-of-domain
            if p_idx == 0 {
                for j in (i + 1)..=(i + hw).min(n - 1) {
                    let m = flux[i][j - i] / pi[i];
                    if m > 0.0 {
                        acc += m;
                        row.push((j as u32, keep * m));
                    }
                }
            } else {
                for j in i.saturating_sub(hw)..i {
                    let m = flux[j][i - j] / pi[i];
                    if m > 0.0 {
                        acc += m;
                        row.push(((j + n) as u32, keep * m));
                    }
                }
            }
            if acc > 1.0 + 1e-9 {
                return Err(Error::numeric(
                    format!("row {state}: acceptance mass exceeds 1 by {:.3e}", acc - 1.0),
                    None,
                ));
            }
            let flip = keep * (1.0 - acc).max(0.0);
            let twin = i + (1 - p_idx) * n;
            if flip > 0.0 {
                row.push((twin as u32, flip));
            }
            let diag = lazy + keep * (flux[i][0] / pi[i] + leak);
            row.push((state as u32, diag));
            row.sort_unstable_by_key(|e| e.0);
            if leak > leak_tol {
                return Err(Error::numeric(
                    format!("row {state}: leaked mass {leak:.3e} exceeds tolerance {leak_tol}"),
                    None,
                ));
            }
            leaked[state] = keep * leak;
            max_leak = max_leak.max(keep * leak);
            rows[state] = row;
        }
    }
    let mut pi_grid = Vec::with_capacity(2 * n);
    pi_grid.extend(pi.iter().map(|m| 0.5 * m));
    pi_grid.extend(pi.iter().map(|m| 0.5 * m));
    Ok(GridOperator {
        l,
        n_cells: n,
        dx,
        lifted: true,
        rows,
        leaked,
        pi_grid,
        tail_out,
        max_leak,
        kernel: *kernel,
    })
}

impl GridOperator {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: f64) -> Result<usize> {
        if !(x >= -self.l && x <= self.l) {
            return Err(Error::usage(format!("x = {x} outside [-{}, {}]", self.l, self.l)));
        }
        Ok((((x + self.l) / self.dx) as usize).min(self.n_cells - 1))
    }

    /// State index for a cell and (if lifted) momentum.
    pub fn state_index(&self, cell: usize, p: Option<i8>) -> Result<usize> {
        if cell >= self.n_cells {
            return Err(Error::usage(format!("cell {cell} out of range")));
        }
        match (self.lifted, p) {
            (false, None) => Ok(cell),
            (true, Some(1)) => Ok(cell),
            (true, Some(-1)) => Ok(cell + self.n_cells),
            (true, _) => Err(Error::usage("lifted operator requires momentum +1 or -1")),
            (false, Some(_)) => Err(Error::usage("momentum given for an unlifted operator")),
        }
    }

    pub fn delta(&self, cell: usize, p: Option<i8>) -> Result<Vec<f64>> {
        let s = self.state_index(cell, p)?;
        let mut d = vec![0.0; self.n_states()];
        d[s] = 1.0;
        Ok(d)
    }

    /// One matrix-vector step. Serial by design: the summation order (and
    /// hence the bits of every output) must not depend on thread count.
    fn step(&self, d: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let di = d[i];
            if di == 0.0 {
                continue;
            }
            for &(j, m) in row {
                out[j as usize] += di * m;
            }
        }
    }

    /// `delta_start` advanced `n` steps.
    pub fn evolve(&self, cell: usize, p: Option<i8>, n: usize) -> Result<Vec<f64>> {
        let mut ev = Evolution::new(self, self.delta(cell, p)?);
        ev.advance(n);
        Ok(ev.dist)
    }

    /// TV distance from `dist` to the target, counting the truncated tail
    /// as fully missed.
    pub fn tv_to_target(&self, dist: &[f64]) -> f64 {
        let core: f64 = dist
            .iter()
            .zip(self.pi_grid.iter())
            .map(|(d, p)| (d - p).abs())
            .sum();
        0.5 * core + self.tail_out
    }

    /// Second-eigenvalue gap of the pi-symmetrized matrix. Lifted
    /// operators are non-reversible and rejected.
    pub fn spectral_gap(&self) -> Result<f64> {
        if self.lifted {
            return Err(Error::usage(
                "spectral_gap: lifted operators are non-reversible; not supported",
            ));
        }
        let n = self.n_cells;
        let mut s = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, m) in row {
                let j = j as usize;
                s[(i, j)] = m * (self.pi_grid[i] / self.pi_grid[j]).sqrt();
            }
        }
        // exact symmetry up to sqrt roundoff; fold to enforce it
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let eig = s.symmetric_eigenvalues();
        let mut mags: Vec<f64> = eig.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok((1.0 - mags[1]).clamp(0.0, 1.0))
    }
}

/// Incrementally advanced distribution with a running bound on the error
/// introduced by out-of-domain truncation.
pub struct Evolution<'a> {
    op: &'a GridOperator,
    pub dist: Vec<f64>,
    pub steps: usize,
    pub leaked_bound: f64,
    scratch: Vec<f64>,
}

impl<'a> Evolution<'a> {
    pub fn new(op: &'a GridOperator, dist: Vec<f64>) -> Self {
        let scratch = vec![0.0; dist.len()];
        Evolution { op, dist, steps: 0, leaked_bound: 0.0, scratch }
    }

    pub fn advance(&mut self, k: usize) {
        for _ in 0..k {
            let leak: f64 = self
                .dist
                .iter()
                .zip(self.op.leaked.iter())
                .map(|(d, l)| d * l)
                .sum();
            self.leaked_bound += leak;
            self.op.step(&self.dist, &mut self.scratch);
            std::mem::swap(&mut self.dist, &mut self.scratch);
            self.steps += 1;
        }
    }
}

/// Increasing geometric grid of step counts from `lo` to `hi` (inclusive),
/// about `points` of them after integer rounding.
pub fn geometric_schedule(lo: usize, hi: usize, points: usize) -> Result<Vec<usize>> {
    if lo == 0 || hi <= lo || points < 2 {
        return Err(Error::usage(format!(
            "geometric_schedule: need 0 < lo < hi and points >= 2, got ({lo}, {hi}, {points})"
        )));
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (points - 1) as f64);
    let mut out = Vec::with_capacity(points);
    let mut v = lo as f64;
    for _ in 0..points {
        let k = (v.round() as usize).clamp(lo, hi);
        if out.last() != Some(&k) {
            out.push(k);
        }
        v *= ratio;
    }
    if out.last() != Some(&hi) {
        out.push(hi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct TvPoint {
    pub n: usize,
    pub tv: f64,
    pub leaked_bound: f64,
}

/// Evolves `delta_start` along `schedule` and fits log TV against log n
/// over `window`. Errors if the TV curve inside the window sinks below
/// ten times the truncation tail (rate not resolvable at this L).
pub fn estimate_polynomial_rate(
    op: &GridOperator,
    cell: usize,
    p: Option<i8>,
    schedule: &[usize],
    window: (f64, f64),
) -> Result<(RateFit, Vec<TvPoint>)> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage("estimate_polynomial_rate: schedule must be strictly increasing"));
    }
    let mut ev = Evolution::new(op, op.delta(cell, p)?);
    let mut curve = Vec::with_capacity(schedule.len());
    for &n in schedule {
        ev.advance(n - ev.steps);
        curve.push(TvPoint { n, tv: op.tv_to_target(&ev.dist), leaked_bound: ev.leaked_bound });
    }
    let floor = 10.0 * op.tail_out;
    if let Some(pt) = curve
        .iter()
        .find(|pt| (pt.n as f64) >= window.0 && (pt.n as f64) <= window.1 && pt.tv < floor)
    {
        return Err(Error::numeric(
            format!(
                "TV {:.3e} at n = {} is below 10x the truncation tail {:.3e}; \
                 rate not resolvable at L = {}",
                pt.tv, pt.n, op.tail_out, op.l
            ),
            Some(pt.tv),
        ));
    }
    let ns: Vec<f64> = curve.iter().map(|p| p.n as f64).collect();
    let tvs: Vec<f64> = curve.iter().map(|p| p.tv).collect();
    let fit = fit_power_law(&ns, &tvs, window)?;
    Ok((fit, curve))
}
