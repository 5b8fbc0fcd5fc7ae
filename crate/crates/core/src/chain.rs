//! Runs any sampler in the crate for many iterations, with optional
//! step-size and diagonal-covariance adaptation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bps::{sp_bps_step, BpsKernel, ReflectionOp};
use crate::diagnostics::{ChainTrace, StepMeta};
use crate::error::{check_dim, Error, Result};
use crate::hmc::{one_jump_acceptance, sp_hmc_step, AdaptState, LeapfrogParams};
use crate::mass::MassMatrix;
use crate::nuts::{
    nuts_step, spnuts1_step, spnuts2_step, NutsConfig, NutsVariant, SpNutsConfig, StoppingAngle,
    TrajectorySchedule,
};
use crate::rng::RngStream;
use crate::spmh::{delayed_rejection_step, sp_mh_step, GaussianRandomWalk, SpMhConfig};
use crate::target::{PhaseState, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Mh,
    Spmh,
    Dr,
    Hmc,
    Sphmc,
    Nuts,
    NutsNaive,
    Spnuts1,
    Spnuts2,
    Bps,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Mh,
        Algorithm::Spmh,
        Algorithm::Dr,
        Algorithm::Hmc,
        Algorithm::Sphmc,
        Algorithm::Nuts,
        Algorithm::NutsNaive,
        Algorithm::Spnuts1,
        Algorithm::Spnuts2,
        Algorithm::Bps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mh => "mh",
            Algorithm::Spmh => "spmh",
            Algorithm::Dr => "dr",
            Algorithm::Hmc => "hmc",
            Algorithm::Sphmc => "sphmc",
            Algorithm::Nuts => "nuts",
            Algorithm::NutsNaive => "nuts-naive",
            Algorithm::Spnuts1 => "spnuts1",
            Algorithm::Spnuts2 => "spnuts2",
            Algorithm::Bps => "bps",
        }
    }

    pub fn needs_gradient(self) -> bool {
        !matches!(self, Algorithm::Mh | Algorithm::Spmh | Algorithm::Dr)
    }

    fn carries_velocity(self) -> bool {
        matches!(self, Algorithm::Hmc | Algorithm::Sphmc | Algorithm::Bps)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown algorithm {s:?}; valid: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Every tuning knob for a run. Fields that do not apply to the chosen
/// algorithm are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub algo: Algorithm,
    pub iters: usize,
    /// Starting position; zeros when absent.
    pub init: Option<Vec<f64>>,
    /// N: proposals per iteration (legs searched per state for spnuts2).
    pub n_proposals: usize,
    /// L: which acceptable proposal is taken.
    pub n_accept: usize,
    /// Random-walk standard deviation for mh, spmh and dr.
    pub proposal_sd: f64,
    /// Initial leapfrog step size.
    pub step_size: f64,
    /// Leapfrog jumps per leg.
    pub jumps: usize,
    pub jitter_lo: f64,
    pub jitter_hi: f64,
    pub adapt_step: bool,
    pub target_accept: f64,
    pub adapt_lambda: f64,
    pub adapt_alpha: f64,
    pub adapt_start: usize,
    pub adapt_mass: bool,
    /// `C₀` is used through this iteration when adapting the mass matrix.
    pub mass_warmup: usize,
    /// Diagonal of `C₀`; the identity when absent.
    pub mass_diag: Option<Vec<f64>>,
    pub max_depth: usize,
    pub jmax: usize,
    /// Stopping cosine drawn from U(lo, hi); fixed when lo == hi.
    pub stop_cos_lo: f64,
    pub stop_cos_hi: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub p_ref: f64,
    pub reflection: Reflection,
    pub mixture_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reflection {
    Negate,
    Gradient,
    Mixture,
}

impl Settings {
    /// Defaults for `algo`.
    pub fn defaults(algo: Algorithm) -> Self {
        let (n, jitter, stop, step) = match algo {
            Algorithm::Mh => (1, (1.0, 1.0), (0.0, 0.0), 0.1),
            Algorithm::Spmh | Algorithm::Dr => (5, (1.0, 1.0), (0.0, 0.0), 0.1),
            Algorithm::Hmc => (1, (0.8, 1.2), (0.0, 0.0), 0.1),
            Algorithm::Sphmc => (10, (0.8, 1.2), (0.0, 0.0), 0.1),
            Algorithm::Nuts | Algorithm::NutsNaive => (1, (1.0, 1.0), (0.0, 0.0), 0.1),
            Algorithm::Spnuts1 => (5, (0.8, 1.2), (0.0, 1.0), 0.1),
            Algorithm::Spnuts2 => (20, (0.8, 1.2), (0.0, 1.0), 0.1),
            Algorithm::Bps => (1, (1.0, 1.0), (0.0, 0.0), 0.1),
        };
        let jumps = match algo {
            Algorithm::Hmc | Algorithm::Sphmc => 50,
            _ => 1,
        };
        Settings {
            algo,
            iters: 1000,
            init: None,
            n_proposals: n,
            n_accept: 1,
            proposal_sd: 2.4,
            step_size: step,
            jumps,
            jitter_lo: jitter.0,
            jitter_hi: jitter.1,
            adapt_step: false,
            target_accept: 0.65,
            adapt_lambda: 1.0,
            adapt_alpha: 0.7,
            adapt_start: 100,
            adapt_mass: false,
            mass_warmup: 100,
            mass_diag: None,
            max_depth: 15,
            jmax: 15,
            stop_cos_lo: stop.0,
            stop_cos_hi: stop.1,
            tau_lo: 0.08,
            tau_hi: 0.12,
            p_ref: 0.1,
            reflection: Reflection::Negate,
            mixture_prob: 0.5,
        }
    }

    fn leapfrog(&self, eps: f64) -> Result<LeapfrogParams> {
        LeapfrogParams::new(eps, self.jumps, (self.jitter_lo, self.jitter_hi))
    }

    fn zeta(&self) -> StoppingAngle {
        if self.stop_cos_lo == self.stop_cos_hi {
            StoppingAngle::Fixed(self.stop_cos_lo)
        } else {
            StoppingAngle::Uniform {
                lo: self.stop_cos_lo,
                hi: self.stop_cos_hi,
            }
        }
    }

    fn reflection_op(&self) -> ReflectionOp {
        match self.reflection {
            Reflection::Negate => ReflectionOp::Negate,
            Reflection::Gradient => ReflectionOp::Gradient,
            Reflection::Mixture => ReflectionOp::Mixture(self.mixture_prob),
        }
    }

    fn c0(&self, d: usize) -> Result<MassMatrix> {
        match &self.mass_diag {
            None => Ok(MassMatrix::identity(d)),
            Some(v) => {
                check_dim(d, v.len())?;
                MassMatrix::diagonal(v.clone())
            }
        }
    }

    /// Checks the settings against a target of dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        SpMhConfig::fixed(self.n_proposals, self.n_accept)?;
        if let Some(x) = &self.init {
            check_dim(d, x.len())?;
        }
        self.c0(d)?;
        if self.algo.needs_gradient() && self.algo != Algorithm::Bps {
            self.leapfrog(self.step_size)?;
        }
        self.zeta().validate()?;
        TrajectorySchedule::doubling(self.jmax)?;
        if self.max_depth == 0 || self.max_depth > 40 {
            return Err(Error::InvalidConfig(format!("max_depth {}", self.max_depth)));
        }
        if !(self.proposal_sd > 0.0) {
            return Err(Error::InvalidConfig(format!("proposal_sd {}", self.proposal_sd)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target_accept {} must lie in (0, 1)",
                self.target_accept
            )));
        }
        if !(self.adapt_alpha > 0.0 && self.adapt_alpha <= 1.0 && self.adapt_lambda > 0.0) {
            return Err(Error::InvalidConfig("adaptation needs λ > 0, α ∈ (0, 1]".into()));
        }
        if self.adapt_step && !self.algo.needs_gradient() {
            return Err(Error::InvalidConfig(format!(
                "step size adaptation needs a leapfrog-based algorithm, not {}",
                self.algo
            )));
        }
        Ok(())
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: ChainTrace,
    /// One-jump acceptance probabilities, one per iteration, when the step
    /// size was adapted.
    pub probes: Vec<f64>,
    pub final_epsilon: f64,
    pub final_mass: Vec<f64>,
}

/// Runs `s.iters` iterations of `s.algo` on `target`.
///
/// With `adapt_step`, each iteration first probes the one-jump acceptance
/// probability from the current position with a fresh velocity and the
/// current (unjittered) ε, then updates ε by the Robbins-Monro recursion.
/// With `adapt_mass`, `C` is the diagonal of running sample variances
/// after the warmup.
pub fn run_chain(target: &dyn Target, s: &Settings, rng: &mut RngStream) -> Result<RunOutput> {
    let d = target.dim();
    s.validate(d)?;
    if s.algo.needs_gradient() && !target.has_gradient() {
        return Err(Error::GradientUnavailable);
    }
    let c0 = s.c0(d)?;
    let mut adapt = AdaptState::new(s.step_size, s.target_accept, c0.clone());
    adapt.lambda = s.adapt_lambda;
    adapt.alpha = s.adapt_alpha;
    adapt.step_start = s.adapt_start;
    adapt.i0 = s.mass_warmup;

    let mut x = s.init.clone().unwrap_or_else(|| vec![0.0; d]);
    let lp = target.log_density(&x);
    if !lp.is_finite() {
        return Err(Error::OutsideSupport(lp));
    }
    let mut v = if s.algo.carries_velocity() {
        c0.sample(rng)
    } else {
        Vec::new()
    };
    adapt.adapt_mass_diagonal(&x);

    let cfg = SpMhConfig::fixed(s.n_proposals, s.n_accept)?;
    let schedule = TrajectorySchedule::doubling(s.jmax)?;
    let rw = GaussianRandomWalk { sd: s.proposal_sd };
    let nuts_cfg = |variant| NutsConfig {
        variant,
        max_depth: s.max_depth,
        stop_cos: s.stop_cos_lo,
    };

    let mut trace = ChainTrace::with_capacity(d, s.iters);
    let mut probes = Vec::new();
    let mut mass = c0.clone();
    for _ in 0..s.iters {
        if s.adapt_mass {
            mass = adapt.mass_matrix();
        }
        let eps = if s.adapt_step {
            adapt.epsilon()
        } else {
            s.step_size
        };
        let probe = if s.adapt_step {
            let pv = mass.sample(rng);
            Some(one_jump_acceptance(target, &x, &pv, eps, &mass))
        } else {
            None
        };

        let meta: StepMeta = match s.algo {
            Algorithm::Mh | Algorithm::Spmh => {
                let (nx, m) = sp_mh_step(target, &x, &rw, &cfg, rng)?;
                x = nx;
                m
            }
            Algorithm::Dr => {
                let (nx, m) = delayed_rejection_step(target, &x, &rw, s.n_proposals, rng)?;
                x = nx;
                m
            }
            Algorithm::Hmc | Algorithm::Sphmc => {
                let st = PhaseState {
                    position: std::mem::take(&mut x),
                    velocity: std::mem::take(&mut v),
                };
                let (ns, m) = sp_hmc_step(target, &st, &s.leapfrog(eps)?, &cfg, &mass, rng)?;
                x = ns.position;
                v = ns.velocity;
                m
            }
            Algorithm::Nuts | Algorithm::NutsNaive => {
                let variant = if s.algo == Algorithm::Nuts {
                    NutsVariant::Efficient
                } else {
                    NutsVariant::Naive
                };
                let e = s.leapfrog(eps)?.draw_epsilon(rng);
                let (nx, m) = nuts_step(target, &x, e, &mass, &nuts_cfg(variant), rng)?;
                x = nx;
                m
            }
            Algorithm::Spnuts1 | Algorithm::Spnuts2 => {
                let c = SpNutsConfig {
                    leapfrog: s.leapfrog(eps)?,
                    schedule: schedule.clone(),
                    zeta: s.zeta(),
                    n: s.n_proposals,
                };
                let (nx, m) = if s.algo == Algorithm::Spnuts1 {
                    spnuts1_step(target, &x, &c, &mass, rng)?
                } else {
                    spnuts2_step(target, &x, &c, &mass, rng)?
                };
                x = nx;
                m
            }
            Algorithm::Bps => {
                let k = BpsKernel::new(
                    target,
                    &mass,
                    s.reflection_op(),
                    (s.tau_lo, s.tau_hi),
                    s.p_ref,
                )?;
                let st = PhaseState {
                    position: std::mem::take(&mut x),
                    velocity: std::mem::take(&mut v),
                };
                let (ns, m) = sp_bps_step(&k, &st, &cfg, rng)?;
                x = ns.position;
                v = ns.velocity;
                m
            }
        };
        trace.push(&x, meta)?;
        adapt.adapt_mass_diagonal(&x);
        if let Some(a) = probe {
            adapt.adapt_step_size(a);
            probes.push(a);
        }
        adapt.advance();
    }
    Ok(RunOutput {
        trace,
        probes,
        final_epsilon: if s.adapt_step {
            adapt.epsilon()
        } else {
            s.step_size
        },
        final_mass: mass.variances(),
    })
}
