//! Sequential proposals along a deterministic flow `S_τ` on phase space.
//!
//! A kernel supplies the flow, a velocity involution `R_x`, the log
//! Jacobian of `S_τⁿ` and a refresh probability. [`sp_deterministic_step`]
//! runs one iteration; [`verify_reversibility`] checks the three
//! conditions the construction relies on.

use crate::diagnostics::StepMeta;
use crate::error::{check_dim, Error, Result};
use crate::mass::MassMatrix;
use crate::rng::RngStream;
use crate::spmh::SpMhConfig;
use crate::target::{PhaseState, Target};

/// Log-ratio below which a proposal is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

pub trait DeterministicKernel {
    /// Draws the flow time for an iteration.
    fn draw_tau(&self, rng: &mut RngStream) -> f64;

    /// One application of `S_τ`. Returns [`Error::Divergence`] if the
    /// state can no longer be computed.
    fn flow(&self, s: &PhaseState, tau: f64, rng: &mut RngStream) -> Result<PhaseState>;

    /// `R_x v`.
    fn reflect(&self, x: &[f64], v: &[f64], rng: &mut RngStream) -> Vec<f64>;

    /// `log |det D S_τⁿ|` at `start`.
    fn log_jacobian(&self, _start: &PhaseState, _tau: f64, _n: usize) -> f64 {
        0.0
    }

    fn refresh_prob(&self, x: &[f64]) -> f64;

    /// Whether the velocity density enters the acceptance ratio. Kernels
    /// whose flow preserves `‖v‖_C` exactly may drop it.
    fn velocity_in_ratio(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetOptions {
    /// Draw a fresh `τ` for every proposal instead of once per iteration.
    pub redraw_tau: bool,
}

/// One iteration of the deterministic-kernel sampler.
///
/// Draws `(N, L)`, `τ` and `Λ`, then walks `(Y_n, W_n) = S_τ(Y_{n-1}, W_{n-1})`.
/// A proposal is acceptable when
/// `log Λ < log Π(Y_n, W_n) - log Π(Y_0, W_0) + log|det D S_τⁿ|`.
/// The `L`-th acceptable proposal is taken; otherwise the state becomes
/// `(x, R_x v)`. Finally the velocity is redrawn from `ψ` with probability
/// `refresh_prob(x')`.
pub fn sp_deterministic_step<K: DeterministicKernel + ?Sized>(
    target: &dyn Target,
    kernel: &K,
    s: &PhaseState,
    cfg: &SpMhConfig,
    psi: &MassMatrix,
    opts: DetOptions,
    rng: &mut RngStream,
) -> Result<(PhaseState, StepMeta)> {
    check_dim(psi.dim(), s.dim())?;
    let lp0 = target.log_density(&s.position);
    let vel = kernel.velocity_in_ratio();
    let log_pi = |lp: f64, v: &[f64]| {
        if vel {
            lp + psi.log_velocity_density(v)
        } else {
            lp
        }
    };
    let base = log_pi(lp0, &s.velocity);
    if !base.is_finite() {
        return Err(Error::OutsideSupport(lp0));
    }
    let (n_max, l) = cfg.draw(rng);
    let mut tau = kernel.draw_tau(rng);
    let log_lambda = rng.draw_lambda().ln();

    let mut cur = s.clone();
    let mut found = 0;
    let mut accepted = None;
    let mut divergent = false;
    let mut tried = 0;
    for n in 1..=n_max {
        if n > 1 && opts.redraw_tau {
            tau = kernel.draw_tau(rng);
        }
        tried = n;
        cur = match kernel.flow(&cur, tau, rng) {
            Ok(next) if next.is_finite() => next,
            // nothing past a non-finite state can be acceptable
            _ => {
                divergent = true;
                break;
            }
        };
        let lp = target.log_density(&cur.position);
        let ratio = log_pi(lp, &cur.velocity) - base + kernel.log_jacobian(s, tau, n);
        if ratio.is_nan() || ratio < -DIVERGENCE_THRESHOLD {
            divergent = true;
            continue;
        }
        if log_lambda < ratio {
            found += 1;
            if found == l {
                accepted = Some(n);
                break;
            }
        }
    }
    let mut next = match accepted {
        Some(_) => cur,
        None => PhaseState {
            velocity: kernel.reflect(&s.position, &s.velocity, rng),
            position: s.position.clone(),
        },
    };
    let p = kernel.refresh_prob(&next.position);
    if rng.uniform() < p {
        next.velocity = psi.sample(rng);
    }
    Ok((
        next,
        StepMeta {
            proposals_tried: tried,
            accepted_index: accepted.unwrap_or(0),
            legs: tried,
            epsilon: tau,
            divergent,
        },
    ))
}

/// Maximum deviations found by [`verify_reversibility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversibilityReport {
    /// `max |R_x R_x v - v|`
    pub involution: f64,
    /// `max |‖R_x v‖²_C - ‖v‖²_C| / ‖v‖²_C`
    pub velocity_density: f64,
    /// `max |T S T S (x, v) - (x, v)|` with `T(x, v) = (x, R_x v)`
    pub time_reversal: f64,
    pub tol: f64,
}

impl ReversibilityReport {
    pub fn passed(&self) -> bool {
        self.involution <= self.tol
            && self.velocity_density <= self.tol
            && self.time_reversal <= self.tol
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if self.involution > self.tol {
            f.push("involution");
        }
        if self.velocity_density > self.tol {
            f.push("velocity density");
        }
        if self.time_reversal > self.tol {
            f.push("time reversal");
        }
        f
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// How [`verify_reversibility`] draws its test states: positions are
/// `center + scale·z` with `z ~ N(0, I)`, velocities come from `ψ`.
#[derive(Debug, Clone)]
pub struct StateDraw {
    pub center: Vec<f64>,
    pub scale: f64,
}

/// Checks the involution, velocity-density and time-reversal conditions on
/// `samples` random states. Kernels whose reflection is itself random
/// (mixtures) are not meaningful inputs.
pub fn verify_reversibility<K: DeterministicKernel + ?Sized>(
    kernel: &K,
    psi: &MassMatrix,
    draw: &StateDraw,
    samples: usize,
    tol: f64,
    rng: &mut RngStream,
) -> ReversibilityReport {
    let d = psi.dim();
    let mut rep = ReversibilityReport {
        involution: 0.0,
        velocity_density: 0.0,
        time_reversal: 0.0,
        tol,
    };
    let t = |s: &PhaseState, rng: &mut RngStream| PhaseState {
        velocity: kernel.reflect(&s.position, &s.velocity, rng),
        position: s.position.clone(),
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..d)
            .map(|i| draw.center.get(i).copied().unwrap_or(0.0) + draw.scale * rng.normal())
            .collect();
        let v = psi.sample(rng);
        let rv = kernel.reflect(&x, &v, rng);
        let rrv = kernel.reflect(&x, &rv, rng);
        rep.involution = rep.involution.max(max_abs_diff(&rrv, &v));
        let q0 = psi.quad_unchecked(&v);
        let q1 = psi.quad_unchecked(&rv);
        rep.velocity_density = rep
            .velocity_density
            .max((q1 - q0).abs() / q0.max(f64::MIN_POSITIVE));

        let s0 = PhaseState {
            position: x,
            velocity: v,
        };
        let tau = kernel.draw_tau(rng);
        let round_trip = kernel
            .flow(&s0, tau, rng)
            .map(|s| t(&s, rng))
            .and_then(|s| kernel.flow(&s, tau, rng))
            .map(|s| t(&s, rng));
        let dev = match round_trip {
            Ok(s) => max_abs_diff(&s.position, &s0.position)
                .max(max_abs_diff(&s.velocity, &s0.velocity)),
            Err(_) => f64::INFINITY,
        };
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        rep.time_reversal = rep.time_reversal.max(dev);
    }
    rep
}
