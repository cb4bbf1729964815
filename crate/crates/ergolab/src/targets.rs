//! Target distribution families on the real line: a polynomial-tailed
//! density with a constant core plateau, strictly convex-potential
//! (log-concave) densities, and the fixed squared-Gaussian target used by
//! the counterexample kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// `pi(x) = c0 * K^-(1+r)` on the core `|x| <= K` and `c0 * |x|^-(1+r)`
/// outside; continuous at the boundary and normalized analytically with
/// `c0 = r K^r / (2 (r+1))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolyTail {
    pub r: f64,
    pub k: f64,
    pub c0: f64,
}

impl PolyTail {
    pub fn new(r: f64, k: f64) -> Result<Self> {
        if !(r > 0.0) || !(k > 0.0) {
            return Err(Error::usage(format!(
                "poly-tail target needs r > 0 and K > 0, got r={r}, K={k}"
            )));
        }
        let c0 = r * k.powf(r) / (2.0 * (r + 1.0));
        Ok(PolyTail { r, k, c0 })
    }

    /// Exact mass of `[a, infinity)`; only valid outside the core.
    pub fn tail_mass(&self, a: f64) -> Result<f64> {
        if a < self.k {
            return Err(Error::usage(format!(
                "tail_mass: a={a} is inside the core (K={}); formula invalid",
                self.k
            )));
        }
        Ok(self.c0 / (self.r * a.powf(self.r)))
    }

    /// Signed mass from 0 to t of the normalized density.
    fn mass_from_origin(&self, t: f64) -> f64 {
        let s = t.signum();
        let t = t.abs();
        let core_height = self.c0 * self.k.powf(-(1.0 + self.r));
        let m = if t <= self.k {
            core_height * t
        } else {
            core_height * self.k + self.c0 / self.r * (self.k.powf(-self.r) - t.powf(-self.r))
        };
        s * m
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvexPotential {
    pub p: f64,
    pub a: f64,
    log_z: f64,
}

impl ConvexPotential {
    pub fn new(p: f64, a: f64) -> Result<Self> {
        if !(p > 1.0) || !(a > 0.0) {
            return Err(Error::usage(format!(
                "convex-potential target needs p > 1 and a > 0, got p={p}, a={a}"
            )));
        }
        // Normalizing constant by quadrature; the density is below 1e-300
        // beyond a|x|^p = 700, so the truncated mass is negligible.
        let radius = (700.0 / a).powf(1.0 / p);
        let half = numerics::integrate(|x: f64| (-a * x.abs().powf(p)).exp(), 0.0, radius, 1e-13)?;
        Ok(ConvexPotential {
            p,
            a,
            log_z: (2.0 * half.value).ln(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target {
    PolyTail(PolyTail),
    Convex(ConvexPotential),
    /// `pi(x) proportional to exp(-x^2)`; log-density differences are
    /// exactly `x^2 - y^2`.
    SquaredGaussian,
}

impl Target {
    pub fn poly_tail(r: f64, k: f64) -> Result<Self> {
        Ok(Target::PolyTail(PolyTail::new(r, k)?))
    }

    pub fn convex(p: f64, a: f64) -> Result<Self> {
        Ok(Target::Convex(ConvexPotential::new(p, a)?))
    }

    /// Unnormalized log-density; finite for every finite x.
    pub fn log_density_unnorm(&self, x: f64) -> f64 {
        match self {
            Target::PolyTail(t) => t.c0.ln() - (1.0 + t.r) * x.abs().max(t.k).ln(),
            Target::Convex(t) => -t.a * x.abs().powf(t.p),
            Target::SquaredGaussian => -x * x,
        }
    }

    pub fn log_norm_const(&self) -> f64 {
        match self {
            Target::PolyTail(_) => 0.0,
            Target::Convex(t) => t.log_z,
            Target::SquaredGaussian => 0.5 * std::f64::consts::PI.ln(),
        }
    }

    /// Normalized log-density, with the finiteness guard of the public API.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::usage(format!("log_density: non-finite x = {x}")));
        }
        Ok(self.log_density_unnorm(x) - self.log_norm_const())
    }

    /// `log pi(y) - log pi(x)` without touching the normalizing constant.
    /// Exactly antisymmetric in (x, y).
    #[inline]
    pub fn log_ratio(&self, x: f64, y: f64) -> f64 {
        self.log_density_unnorm(y) - self.log_density_unnorm(x)
    }

    /// Potential `U(x) = -log pi(x)` (convex targets only).
    pub fn potential(&self, x: f64) -> Result<f64> {
        match self {
            Target::Convex(t) => Ok(t.a * x.abs().powf(t.p)),
            _ => Err(Error::usage("potential: target has no convex potential")),
        }
    }

    /// `U'(x) = a p sgn(x) |x|^(p-1)`, strictly increasing.
    pub fn potential_prime(&self, x: f64) -> Result<f64> {
        match self {
            Target::Convex(t) => Ok(t.a * t.p * x.signum() * x.abs().powf(t.p - 1.0)),
            _ => Err(Error::usage("potential_prime: target has no convex potential")),
        }
    }

    /// Interior points where the density is non-smooth (quadrature split
    /// candidates).
    pub fn density_kinks(&self) -> Vec<f64> {
        match self {
            Target::PolyTail(t) => vec![-t.k, t.k],
            Target::Convex(_) => vec![0.0],
            Target::SquaredGaussian => vec![],
        }
    }

    /// Exact normalized mass of the interval [lo, hi]. Analytic for the
    /// polynomial-tail family (heavy tails make midpoint mass inaccurate);
    /// quadrature at 1e-13 otherwise.
    pub fn cell_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::usage("cell_mass: need lo < hi"));
        }
        match self {
            Target::PolyTail(t) => Ok(t.mass_from_origin(hi) - t.mass_from_origin(lo)),
            _ => {
                let ln_z = self.log_norm_const();
                let q = numerics::integrate_split(
                    |x| (self.log_density_unnorm(x) - ln_z).exp(),
                    lo,
                    hi,
                    &self.density_kinks(),
                    1e-13,
                )?;
                Ok(q.value)
            }
        }
    }
}
