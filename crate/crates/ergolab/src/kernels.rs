//! Proposal kernels and Metropolis-Hastings steppers: the Gaussian random
//! walk Metropolis, the guided walk Metropolis (lifted, optionally lazy),
//! and the mixture proposal of the geometric-ergodicity counterexample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, LN_SQRT_2PI, RngStream};
use crate::targets::Target;

/// Mixture weight of the counterexample's jump component.
#[inline]
pub fn counterexample_mix_weight(x: f64) -> f64 {
    1.0 / (2.0 + x.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// `y = x + eps Z`, symmetric Gaussian increments.
    Rwm { eps: f64 },
    /// Lifted walk on `R x {-1,+1}`: proposes `x + eps p |Z|`, flips the
    /// momentum on rejection; with probability `lazy` holds in place.
    Gwm { eps: f64, lazy: f64 },
    /// `(1 - eps(x)) N(x/2, 1) + eps(x) Uniform(exp(x^2), exp(x^2)+1)`
    /// with `eps(x) = 1/(2+|x|)`.
    Counterexample,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rwm { eps } => {
                if !(eps > 0.0) {
                    return Err(Error::usage(format!("rwm: eps must be > 0, got {eps}")));
                }
            }
            KernelSpec::Gwm { eps, lazy } => {
                if !(eps > 0.0) {
                    return Err(Error::usage(format!("gwm: eps must be > 0, got {eps}")));
                }
                if !(0.0..1.0).contains(&lazy) {
                    return Err(Error::usage(format!(
                        "gwm: lazy hold probability must be in [0, 1), got {lazy}"
                    )));
                }
            }
            KernelSpec::Counterexample => {}
        }
        Ok(())
    }

    pub fn is_lifted(&self) -> bool {
        matches!(self, KernelSpec::Gwm { .. })
    }
}

/// Position-momentum pair of the lifted chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedState {
    pub x: f64,
    pub p: i8,
}

impl GuidedState {
    pub fn new(x: f64, p: i8) -> Result<Self> {
        if p != 1 && p != -1 {
            return Err(Error::usage(format!("momentum must be +1 or -1, got {p}")));
        }
        Ok(GuidedState { x, p })
    }
}

/// Log-density `q(x, y)` of the RWM proposal. Symmetric in (x, y).
#[inline]
pub fn rwm_log_q(eps: f64, x: f64, y: f64) -> f64 {
    let z = (y - x) / eps;
    -0.5 * z * z - LN_SQRT_2PI - eps.ln()
}

/// Log-density of the counterexample mixture. The jump component's support
/// membership is tested on `log y` against `x^2`, so `exp(x^2)` is never
/// formed in linear space.
pub fn counterexample_log_q(x: f64, y: f64) -> f64 {
    let eps = counterexample_mix_weight(x);
    let d = y - 0.5 * x;
    let normal = (1.0 - eps).ln() - 0.5 * d * d - LN_SQRT_2PI;
    let jump = if y > 0.0 {
        let ly = y.ln();
        let x2 = x * x;
        // support is (exp(x^2), exp(x^2)+1); in log coordinates
        // [x^2, x^2 + log(1 + exp(-x^2))], which degenerates to an empty
        // interval once exp(x^2) exceeds the f64 range.
        let width = (-x2).exp().ln_1p();
        if width > 0.0 && ly >= x2 && ly <= x2 + width {
            eps.ln()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        f64::NEG_INFINITY
    };
    log_sum_exp(&[normal, jump]).expect("two components")
}

/// A proposed counterexample candidate. Jump landings beyond the f64 range
/// are carried only through their log-position; they are rejected with
/// probability 1 up to e^(-x^2)-scale corrections.
#[derive(Debug, Clone, Copy)]
pub enum CounterexampleProposal {
    Point(f64),
    JumpOverflow { log_y: f64 },
}

pub fn counterexample_propose(x: f64, rng: &mut RngStream) -> CounterexampleProposal {
    let eps = counterexample_mix_weight(x);
    if rng.draw_uniform() < eps {
        let u = rng.draw_uniform();
        let x2 = x * x;
        if x2 < 700.0 {
            CounterexampleProposal::Point(x2.exp() + u)
        } else {
            CounterexampleProposal::JumpOverflow {
                log_y: x2 + u * (-x2).exp().ln_1p(),
            }
        }
    } else {
        CounterexampleProposal::Point(0.5 * x + rng.draw_normal())
    }
}

/// Log acceptance probability together with a proposal-support flag.
#[derive(Debug, Clone, Copy)]
pub struct LogAcceptance {
    pub log_alpha: f64,
    pub in_support: bool,
}

/// `min(0, log pi(y) + log q(y,x) - log pi(x) - log q(x,y))`. For symmetric
/// or magnitude-symmetric proposals (RWM, GWM) the candidate densities
/// cancel and the plain density ratio is used.
pub fn mh_log_acceptance(target: &Target, kernel: &KernelSpec, x: f64, y: f64) -> LogAcceptance {
    match kernel {
        KernelSpec::Rwm { .. } | KernelSpec::Gwm { .. } => LogAcceptance {
            log_alpha: target.log_ratio(x, y).min(0.0),
            in_support: true,
        },
        KernelSpec::Counterexample => {
            let lq_fwd = counterexample_log_q(x, y);
            if lq_fwd == f64::NEG_INFINITY {
                return LogAcceptance {
                    log_alpha: f64::NEG_INFINITY,
                    in_support: false,
                };
            }
            let lq_rev = counterexample_log_q(y, x);
            let log_r = target.log_ratio(x, y) + lq_rev - lq_fwd;
            LogAcceptance {
                log_alpha: log_r.min(0.0),
                in_support: true,
            }
        }
    }
}

/// Accept/reject decision. Log-alpha exactly 0 accepts without consuming a
/// uniform draw, which keeps the synchronous coupling construction exact.
#[inline]
fn accept(log_alpha: f64, rng: &mut RngStream) -> bool {
    if log_alpha >= 0.0 {
        true
    } else if log_alpha == f64::NEG_INFINITY {
        false
    } else {
        rng.draw_uniform().ln() < log_alpha
    }
}

/// One RWM transition; returns the next position and the acceptance flag.
pub fn rwm_step(x: f64, target: &Target, eps: f64, rng: &mut RngStream) -> (f64, bool) {
    let y = x + eps * rng.draw_normal();
    let la = target.log_ratio(x, y).min(0.0);
    if accept(la, rng) {
        (y, true)
    } else {
        (x, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GwmOutcome {
    Hold,
    Accepted,
    Rejected,
}

/// One guided walk transition. With probability `lazy` the state is held
/// unchanged (momentum retained); otherwise a move of `eps |Z|` in the
/// momentum direction is proposed and rejection flips the momentum.
pub fn gwm_step(
    s: GuidedState,
    target: &Target,
    eps: f64,
    lazy: f64,
    rng: &mut RngStream,
) -> (GuidedState, GwmOutcome) {
    if lazy > 0.0 && rng.draw_uniform() < lazy {
        return (s, GwmOutcome::Hold);
    }
    let z = rng.draw_normal().abs();
    let y = s.x + eps * f64::from(s.p) * z;
    let la = target.log_ratio(s.x, y).min(0.0);
    if accept(la, rng) {
        (GuidedState { x: y, p: s.p }, GwmOutcome::Accepted)
    } else {
        (GuidedState { x: s.x, p: -s.p }, GwmOutcome::Rejected)
    }
}

/// Recorded sample path. Momenta are present only for lifted kernels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub ps: Option<Vec<i8>>,
    pub accepted: Vec<bool>,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub stream_id: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// CSV export: columns `step,x,p,accepted` with `p` blank for
    /// unlifted kernels.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,x,p,accepted")?;
        for (i, x) in self.xs.iter().enumerate() {
            let p = match &self.ps {
                Some(ps) => ps[i].to_string(),
                None => String::new(),
            };
            let acc = if i == 0 {
                String::new()
            } else {
                (self.accepted[i - 1] as u8).to_string()
            };
            writeln!(w, "{i},{x},{p},{acc}")?;
        }
        Ok(())
    }
}

/// Run `n` steps of the requested kernel, recording states and acceptance
/// flags. Deterministic given the stream's (seed, stream_id).
pub fn run_chain(
    kernel: &KernelSpec,
    target: &Target,
    x0: f64,
    p0: Option<i8>,
    n: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    kernel.validate()?;
    let mut xs = Vec::with_capacity(n + 1);
    let mut accepted = Vec::with_capacity(n);
    xs.push(x0);
    let mut ps = None;
    match kernel {
        KernelSpec::Rwm { eps } => {
            let mut x = x0;
            for _ in 0..n {
                let (nx, acc) = rwm_step(x, target, *eps, rng);
                x = nx;
                xs.push(x);
                accepted.push(acc);
            }
        }
        KernelSpec::Gwm { eps, lazy } => {
            let mut s = GuidedState::new(x0, p0.unwrap_or(1))?;
            let mut pvec = vec![s.p];
            for _ in 0..n {
                let (ns, outcome) = gwm_step(s, target, *eps, *lazy, rng);
                s = ns;
                xs.push(s.x);
                pvec.push(s.p);
                accepted.push(outcome == GwmOutcome::Accepted);
            }
            ps = Some(pvec);
        }
        KernelSpec::Counterexample => {
            let mut x = x0;
            for _ in 0..n {
                let proposal = counterexample_propose(x, rng);
                match proposal {
                    CounterexampleProposal::Point(y) => {
                        let la = mh_log_acceptance(target, kernel, x, y).log_alpha;
                        if accept(la, rng) {
                            x = y;
                            accepted.push(true);
                        } else {
                            accepted.push(false);
                        }
                    }
                    CounterexampleProposal::JumpOverflow { log_y } => {
                        // pi(y) ~ exp(-e^(2x^2)): the acceptance probability
                        // is below the smallest positive double.
                        if accept(f64::NEG_INFINITY, rng) {
                            return Err(Error::numeric(
                                format!("accepted jump beyond representable range (log y = {log_y})"),
                                None,
                            ));
                        }
                        accepted.push(false);
                    }
                }
                xs.push(x);
            }
        }
    }
    Ok(Trajectory {
        xs,
        ps,
        accepted,
        kernel: *kernel,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}
