//! Discrete-time bouncy particle sampler with sequential proposals.
//!
//! The flow is `S_τ(x, v) = (x - R_x v τ, -R_x v)`; with `R = -I` that is
//! straight-line motion `(x + vτ, v)`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::detkernel::{sp_deterministic_step, DetOptions, DeterministicKernel};
use crate::diagnostics::StepMeta;
use crate::error::{Error, Result};
use crate::mass::MassMatrix;
use crate::rng::RngStream;
use crate::spmh::SpMhConfig;
use crate::target::{PhaseState, Target};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReflectionOp {
    /// `R_x = -I`
    Negate,
    /// Reflection in the hyperplane `C`-orthogonal to `∇U(x)`.
    Gradient,
    /// Gradient reflection with probability `p`, negation otherwise, chosen
    /// afresh at every use.
    Mixture(f64),
}

#[derive(Debug, Default)]
pub struct ReflectionCounts {
    pub negate: AtomicU64,
    pub gradient: AtomicU64,
    /// Gradient reflections that fell back to negation at a zero gradient.
    pub fallback: AtomicU64,
}

pub struct BpsKernel<'a> {
    pub target: &'a dyn Target,
    pub mass: &'a MassMatrix,
    pub reflection: ReflectionOp,
    pub tau: (f64, f64),
    pub p_ref: f64,
    pub counts: ReflectionCounts,
}

impl<'a> BpsKernel<'a> {
    pub fn new(
        target: &'a dyn Target,
        mass: &'a MassMatrix,
        reflection: ReflectionOp,
        tau: (f64, f64),
        p_ref: f64,
    ) -> Result<Self> {
        if let ReflectionOp::Mixture(p) = reflection {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("mixture probability {p}")));
            }
        }
        if reflection != ReflectionOp::Negate && !target.has_gradient() {
            return Err(Error::GradientUnavailable);
        }
        if !(tau.0 > 0.0 && tau.0 <= tau.1 && tau.1.is_finite()) {
            return Err(Error::InvalidConfig(format!("flow time range {tau:?}")));
        }
        if !(0.0..=1.0).contains(&p_ref) {
            return Err(Error::InvalidConfig(format!("refresh probability {p_ref}")));
        }
        Ok(BpsKernel {
            target,
            mass,
            reflection,
            tau,
            p_ref,
            counts: ReflectionCounts::default(),
        })
    }

    fn gradient_reflect(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        // ∇U = -∇log π; the sign cancels in the reflection
        let ok = self.target.grad_log_density(x, &mut g).is_ok();
        let gg = self.mass.quad_unchecked(&g);
        if !ok || !(gg > 0.0 && gg.is_finite()) {
            self.counts.fallback.fetch_add(1, Ordering::Relaxed);
            return v.iter().map(|a| -a).collect();
        }
        let a = 2.0 * self.mass.inner_unchecked(&g, v) / gg;
        v.iter().zip(&g).map(|(vi, gi)| vi - a * gi).collect()
    }

    /// `R_x v` for a resolved operator.
    pub fn apply(&self, op: ReflectionOp, x: &[f64], v: &[f64], rng: &mut RngStream) -> Vec<f64> {
        match op {
            ReflectionOp::Negate => {
                self.counts.negate.fetch_add(1, Ordering::Relaxed);
                v.iter().map(|a| -a).collect()
            }
            ReflectionOp::Gradient => {
                self.counts.gradient.fetch_add(1, Ordering::Relaxed);
                self.gradient_reflect(x, v)
            }
            ReflectionOp::Mixture(p) => {
                let pick = if rng.uniform() < p {
                    ReflectionOp::Gradient
                } else {
                    ReflectionOp::Negate
                };
                self.apply(pick, x, v, rng)
            }
        }
    }
}

impl DeterministicKernel for BpsKernel<'_> {
    fn draw_tau(&self, rng: &mut RngStream) -> f64 {
        rng.uniform_range(self.tau.0, self.tau.1)
    }

    fn flow(&self, s: &PhaseState, tau: f64, rng: &mut RngStream) -> Result<PhaseState> {
        Ok(bps_flow_with(self, s, tau, rng))
    }

    fn reflect(&self, x: &[f64], v: &[f64], rng: &mut RngStream) -> Vec<f64> {
        self.apply(self.reflection, x, v, rng)
    }

    fn refresh_prob(&self, _x: &[f64]) -> f64 {
        self.p_ref
    }

    fn velocity_in_ratio(&self) -> bool {
        false
    }
}

fn bps_flow_with(k: &BpsKernel<'_>, s: &PhaseState, tau: f64, rng: &mut RngStream) -> PhaseState {
    let rv = k.reflect(&s.position, &s.velocity, rng);
    PhaseState {
        position: s
            .position
            .iter()
            .zip(&rv)
            .map(|(x, r)| x - r * tau)
            .collect(),
        velocity: rv.iter().map(|r| -r).collect(),
    }
}

/// `S_τ(x, v) = (x - R_x v τ, -R_x v)`.
pub fn bps_flow(
    target: &dyn Target,
    s: &PhaseState,
    tau: f64,
    reflection: ReflectionOp,
    mass: &MassMatrix,
    rng: &mut RngStream,
) -> Result<PhaseState> {
    let k = BpsKernel::new(target, mass, reflection, (tau, tau), 0.0)?;
    Ok(bps_flow_with(&k, s, tau, rng))
}

/// One iteration of the bouncy particle sampler with sequential proposals.
/// Acceptability is `Λ < π(Y_n)/π(x)`; a failed iteration reflects the
/// velocity; the velocity is refreshed with probability `p_ref`.
pub fn sp_bps_step(
    kernel: &BpsKernel<'_>,
    s: &PhaseState,
    cfg: &SpMhConfig,
    rng: &mut RngStream,
) -> Result<(PhaseState, StepMeta)> {
    sp_deterministic_step(
        kernel.target,
        kernel,
        s,
        cfg,
        kernel.mass,
        DetOptions::default(),
        rng,
    )
}
