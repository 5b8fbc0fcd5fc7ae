//! Leapfrog integration, HMC with sequential proposals, partial velocity
//! refresh and the step-size / diagonal-covariance adaptation.

use crate::detkernel::{sp_deterministic_step, DetOptions, DeterministicKernel};
use crate::diagnostics::StepMeta;
use crate::error::{check_dim, Error, Result};
use crate::mass::MassMatrix;
use crate::rng::RngStream;
use crate::spmh::SpMhConfig;
use crate::target::{PhaseState, Target};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeapfrogParams {
    pub epsilon: f64,
    /// Jumps per proposal.
    pub l: usize,
    /// Multiplicative range for the per-iteration jitter of ε.
    pub jitter: (f64, f64),
}

impl LeapfrogParams {
    pub fn new(epsilon: f64, l: usize, jitter: (f64, f64)) -> Result<Self> {
        let p = LeapfrogParams { epsilon, l, jitter };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.epsilon
            )));
        }
        if self.l == 0 {
            return Err(Error::InvalidConfig("need at least one leapfrog jump".into()));
        }
        let (lo, hi) = self.jitter;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "jitter range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        Ok(())
    }

    /// `ε·U(lo, hi)`. Always consumes one uniform.
    pub fn draw_epsilon(&self, rng: &mut RngStream) -> f64 {
        self.epsilon * rng.uniform_range(self.jitter.0, self.jitter.1)
    }
}

/// Position, velocity and the gradient of `log π` at the position.
#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub g: Vec<f64>,
}

impl Node {
    pub fn new(target: &dyn Target, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let mut g = vec![0.0; x.len()];
        target.grad_log_density(&x, &mut g)?;
        if g.iter().any(|a| !a.is_finite()) {
            return Err(Error::Divergence { jump: 0 });
        }
        Ok(Node { x, v, g })
    }

    pub fn phase(&self) -> PhaseState {
        PhaseState {
            position: self.x.clone(),
            velocity: self.v.clone(),
        }
    }
}

/// `l` jumps starting from a node whose gradient is already known.
pub(crate) fn leapfrog_node(
    target: &dyn Target,
    start: &Node,
    eps: f64,
    l: usize,
    c: &MassMatrix,
) -> Result<Node> {
    let mut x = start.x.clone();
    let mut v = start.v.clone();
    let mut g = start.g.clone();
    c.kick(&mut v, &g, 0.5 * eps);
    for j in 1..=l {
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += eps * vi;
        }
        target.grad_log_density(&x, &mut g)?;
        if g.iter().any(|a| !a.is_finite()) {
            return Err(Error::Divergence { jump: j });
        }
        c.kick(&mut v, &g, if j < l { eps } else { 0.5 * eps });
    }
    Ok(Node { x, v, g })
}

/// `l` leapfrog jumps of size `eps` under the kick metric `C`.
pub fn leapfrog(
    target: &dyn Target,
    s: &PhaseState,
    eps: f64,
    l: usize,
    c: &MassMatrix,
) -> Result<PhaseState> {
    check_dim(target.dim(), s.dim())?;
    let start = Node::new(target, s.position.clone(), s.velocity.clone())?;
    Ok(leapfrog_node(target, &start, eps, l, c)?.phase())
}

/// `H(x, v) = -log π(x) + ½‖v‖²_C`.
pub fn hamiltonian(target: &dyn Target, c: &MassMatrix, x: &[f64], v: &[f64]) -> f64 {
    -target.log_density(x) + 0.5 * c.quad_unchecked(v)
}

/// Leapfrog legs as a deterministic kernel with `R = -I` and full refresh.
pub struct LeapfrogKernel<'a> {
    pub target: &'a dyn Target,
    pub mass: &'a MassMatrix,
    pub params: LeapfrogParams,
}

impl DeterministicKernel for LeapfrogKernel<'_> {
    fn draw_tau(&self, rng: &mut RngStream) -> f64 {
        self.params.draw_epsilon(rng)
    }

    fn flow(&self, s: &PhaseState, tau: f64, _rng: &mut RngStream) -> Result<PhaseState> {
        leapfrog(self.target, s, tau, self.params.l, self.mass)
    }

    fn reflect(&self, _x: &[f64], v: &[f64], _rng: &mut RngStream) -> Vec<f64> {
        v.iter().map(|a| -a).collect()
    }

    fn refresh_prob(&self, _x: &[f64]) -> f64 {
        1.0
    }
}

/// One iteration of HMC with sequential proposals: each proposal is a leg
/// of `l` leapfrog jumps continuing from the previous one, all legs judged
/// against one `Λ`, velocity fully refreshed at the end.
pub fn sp_hmc_step(
    target: &dyn Target,
    s: &PhaseState,
    lf: &LeapfrogParams,
    cfg: &SpMhConfig,
    c: &MassMatrix,
    rng: &mut RngStream,
) -> Result<(PhaseState, StepMeta)> {
    let kernel = LeapfrogKernel {
        target,
        mass: c,
        params: *lf,
    };
    let (next, mut meta) =
        sp_deterministic_step(target, &kernel, s, cfg, c, DetOptions::default(), rng)?;
    meta.legs = meta.proposals_tried * lf.l;
    Ok((next, meta))
}

/// `sin θ · v + cos θ · u` with `u ~ N(0, C)`.
pub fn partial_refresh(v: &[f64], theta: f64, c: &MassMatrix, rng: &mut RngStream) -> Vec<f64> {
    let u = c.sample(rng);
    let (s, co) = theta.sin_cos();
    v.iter().zip(&u).map(|(a, b)| s * a + co * b).collect()
}

/// Robbins-Monro step size recursion and running diagonal covariance.
#[derive(Debug, Clone)]
pub struct AdaptState {
    /// Index of the current iteration, starting at 1.
    pub i: usize,
    pub log_eps: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub target_accept: f64,
    /// First iteration at which the step size is updated.
    pub step_start: usize,
    /// `C₀` is used while `i <= i0`.
    pub i0: usize,
    pub c0: MassMatrix,
    pub floor: f64,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl AdaptState {
    pub fn new(eps0: f64, target_accept: f64, c0: MassMatrix) -> Self {
        let d = c0.dim();
        AdaptState {
            i: 1,
            log_eps: eps0.ln(),
            lambda: 1.0,
            alpha: 0.7,
            target_accept,
            step_start: 100,
            i0: 100,
            c0,
            floor: 1e-12,
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.log_eps.exp()
    }

    /// `log ε ← log ε + (λ / i^α)(a_i - a*)`, applied once `i >= step_start`.
    pub fn adapt_step_size(&mut self, a_i: f64) {
        if self.i >= self.step_start {
            let gain = self.lambda / (self.i as f64).powf(self.alpha);
            self.log_eps += gain * (a_i - self.target_accept);
        }
    }

    /// Adds `x` to the running mean and variance (Welford).
    pub fn adapt_mass_diagonal(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *m;
            *m += delta / n;
            *s += delta * (xi - *m);
        }
    }

    pub fn advance(&mut self) {
        self.i += 1;
    }

    pub fn running_variances(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2
            .iter()
            .map(|s| (s / denom).max(self.floor))
            .collect()
    }

    /// `C₀` for `i <= i0`, otherwise the diagonal of running variances.
    pub fn mass_matrix(&self) -> MassMatrix {
        if self.i <= self.i0 || self.n < 2 {
            self.c0.clone()
        } else {
            MassMatrix::diagonal(self.running_variances())
                .expect("floored variances are positive")
        }
    }
}

/// Acceptance probability `1 ∧ exp(-ΔH)` of a single leapfrog jump from
/// `(x, v)`. Divergent jumps score 0.
pub fn one_jump_acceptance(
    target: &dyn Target,
    x: &[f64],
    v: &[f64],
    eps: f64,
    c: &MassMatrix,
) -> f64 {
    let h0 = hamiltonian(target, c, x, v);
    let s = PhaseState {
        position: x.to_vec(),
        velocity: v.to_vec(),
    };
    match leapfrog(target, &s, eps, 1, c) {
        Ok(e) => {
            let dh = hamiltonian(target, c, &e.position, &e.velocity) - h0;
            if dh.is_finite() {
                (-dh).exp().min(1.0)
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}
