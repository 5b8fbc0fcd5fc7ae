//! No-U-Turn samplers: the original tree-doubling sampler with naive or
//! efficient leaf selection, and the two sequential-proposal variants.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;

use crate::diagnostics::StepMeta;
use crate::error::{Error, Result};
use crate::hmc::{leapfrog_node, LeapfrogParams, Node};
use crate::mass::{c_norm, cos_angle, MassMatrix};
use crate::rng::RngStream;
use crate::target::{PhaseState, Target};

/// Energy excess over `H_max` beyond which a NUTS leaf is divergent.
const NUTS_DIVERGENCE: f64 = 1000.0;

/// True when the pair `(dx, v)` has turned back: `cos∠(dx, v) ≤ c` in the
/// `C` metric. A zero displacement or velocity counts as turned back.
pub fn turned_back(dx: &[f64], v: &[f64], c: f64, m: &MassMatrix) -> bool {
    match cos_angle(dx, v, m) {
        Ok(cos) => cos <= c,
        Err(_) => true,
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// U-turn test between the earliest and latest states of a trajectory.
fn u_turn(minus: &Node, plus: &Node, c: f64, m: &MassMatrix) -> bool {
    let dx = diff(&plus.x, &minus.x);
    turned_back(&dx, &plus.v, c, m) || turned_back(&dx, &minus.v, c, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NutsVariant {
    Naive,
    Efficient,
}

/// Count of acceptable leaves in a subtree and one of them chosen
/// uniformly.
#[derive(Debug, Clone)]
pub struct SubtreeSample<T> {
    pub n_acceptable: usize,
    pub candidate: Option<T>,
}

impl<T> SubtreeSample<T> {
    pub fn leaf(item: T, acceptable: bool) -> Self {
        if acceptable {
            SubtreeSample {
                n_acceptable: 1,
                candidate: Some(item),
            }
        } else {
            SubtreeSample {
                n_acceptable: 0,
                candidate: None,
            }
        }
    }

    /// Joins two subtrees, keeping the candidate uniform over the union.
    pub fn merge(older: Self, newer: Self, rng: &mut RngStream) -> Self {
        let n = older.n_acceptable + newer.n_acceptable;
        let candidate = if newer.n_acceptable == 0 {
            older.candidate
        } else if older.n_acceptable == 0 {
            newer.candidate
        } else if rng.uniform() < newer.n_acceptable as f64 / n as f64 {
            newer.candidate
        } else {
            older.candidate
        };
        SubtreeSample {
            n_acceptable: n,
            candidate,
        }
    }
}

/// The running choice of next state as the tree doubles.
#[derive(Debug, Clone)]
pub struct TreeSelector<T> {
    pub variant: NutsVariant,
    pub n_acceptable: usize,
    pub candidate: T,
}

impl<T> TreeSelector<T> {
    /// Starts from the initial leaf, which is always acceptable.
    pub fn new(variant: NutsVariant, initial: T) -> Self {
        TreeSelector {
            variant,
            n_acceptable: 1,
            candidate: initial,
        }
    }

    /// Adds a newly built, valid half. The efficient variant replaces the
    /// candidate with probability `1 ∧ n_new / n_old`; the naive variant
    /// with `n_new / (n_old + n_new)`, which keeps it uniform over the
    /// whole tree. An empty half never replaces anything.
    pub fn absorb(&mut self, half: SubtreeSample<T>, rng: &mut RngStream) {
        let n_new = half.n_acceptable;
        if let (true, Some(c)) = (n_new > 0, half.candidate) {
            let p = match self.variant {
                NutsVariant::Efficient => (n_new as f64 / self.n_acceptable as f64).min(1.0),
                NutsVariant::Naive => n_new as f64 / (self.n_acceptable + n_new) as f64,
            };
            if rng.uniform() < p {
                self.candidate = c;
            }
        }
        self.n_acceptable += n_new;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsConfig {
    pub variant: NutsVariant,
    pub max_depth: usize,
    /// Stopping cosine; the classic rule is `c = 0`.
    pub stop_cos: f64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            variant: NutsVariant::Efficient,
            max_depth: 15,
            stop_cos: 0.0,
        }
    }
}

struct Subtree {
    // first and last leaves in build order
    first: Node,
    last: Node,
    sample: SubtreeSample<Vec<f64>>,
    size: usize,
}

struct Half {
    valid: bool,
    divergent: bool,
    sample: SubtreeSample<Vec<f64>>,
    frontier: Option<Node>,
    legs: usize,
}

struct TreeCtx<'a> {
    target: &'a dyn Target,
    mass: &'a MassMatrix,
    eps: f64,
    h_max: f64,
    stop_cos: f64,
}

impl TreeCtx<'_> {
    fn ends<'n>(&self, s: &'n Subtree, dir: f64) -> (&'n Node, &'n Node) {
        if dir > 0.0 {
            (&s.first, &s.last)
        } else {
            (&s.last, &s.first)
        }
    }

    /// Builds `size` new leaves beyond `from` in direction `dir`. Subtrees
    /// are merged as soon as two of equal size sit on the stack, and every
    /// merged subtree is tested for a U-turn.
    fn build_half(&self, from: &Node, dir: f64, size: usize, rng: &mut RngStream) -> Half {
        let mut stack: Vec<Subtree> = Vec::new();
        let mut frontier = from.clone();
        let mut legs = 0;
        let fail = |divergent, legs| Half {
            valid: false,
            divergent,
            sample: SubtreeSample::leaf(Vec::new(), false),
            frontier: None,
            legs,
        };
        for _ in 0..size {
            legs += 1;
            let leaf = match leapfrog_node(self.target, &frontier, dir * self.eps, 1, self.mass) {
                Ok(n) => n,
                Err(_) => return fail(true, legs),
            };
            let h = -self.target.log_density(&leaf.x) + 0.5 * self.mass.quad_unchecked(&leaf.v);
            if !h.is_finite() || h - self.h_max > NUTS_DIVERGENCE {
                return fail(true, legs);
            }
            let acceptable = h < self.h_max;
            stack.push(Subtree {
                first: leaf.clone(),
                last: leaf.clone(),
                sample: SubtreeSample::leaf(leaf.x.clone(), acceptable),
                size: 1,
            });
            frontier = leaf;
            while stack.len() >= 2 && stack[stack.len() - 1].size == stack[stack.len() - 2].size {
                let newer = stack.pop().unwrap();
                let older = stack.pop().unwrap();
                let merged = Subtree {
                    first: older.first,
                    last: newer.last,
                    sample: SubtreeSample::merge(older.sample, newer.sample, rng),
                    size: older.size + newer.size,
                };
                let (minus, plus) = self.ends(&merged, dir);
                if u_turn(minus, plus, self.stop_cos, self.mass) {
                    return fail(false, legs);
                }
                stack.push(merged);
            }
        }
        let top = stack.pop().expect("size >= 1");
        debug_assert!(stack.is_empty());
        Half {
            valid: true,
            divergent: false,
            sample: top.sample,
            frontier: Some(frontier),
            legs,
        }
    }
}

/// One iteration of the No-U-Turn sampler.
///
/// Draws `Λ` and `V ~ N(0, C)`, then doubles a leapfrog tree in random
/// directions. A new half containing a U-turning subtree is discarded and
/// ends the iteration; so does a U-turn of the whole tree or reaching
/// `max_depth`. Leaves with `H < H(x, V) - log Λ` are acceptable.
pub fn nuts_step(
    target: &dyn Target,
    x: &[f64],
    eps: f64,
    mass: &MassMatrix,
    cfg: &NutsConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = target.log_density(x);
    if !lp0.is_finite() {
        return Err(Error::OutsideSupport(lp0));
    }
    let log_lambda = rng.draw_lambda().ln();
    let v0 = mass.sample(rng);
    let h_max = -lp0 + 0.5 * mass.quad_unchecked(&v0) - log_lambda;
    let start = Node::new(target, x.to_vec(), v0)?;
    let ctx = TreeCtx {
        target,
        mass,
        eps,
        h_max,
        stop_cos: cfg.stop_cos,
    };
    let mut minus = start.clone();
    let mut plus = start;
    let mut sel = TreeSelector::new(cfg.variant, x.to_vec());
    let mut legs = 0;
    let mut divergent = false;
    for depth in 0..cfg.max_depth {
        let dir = rng.sign();
        let from = if dir > 0.0 { &plus } else { &minus };
        let half = ctx.build_half(from, dir, 1 << depth, rng);
        legs += half.legs;
        divergent |= half.divergent;
        if !half.valid {
            break;
        }
        sel.absorb(half.sample, rng);
        let f = half.frontier.expect("valid halves have a frontier");
        if dir > 0.0 {
            plus = f;
        } else {
            minus = f;
        }
        if u_turn(&minus, &plus, cfg.stop_cos, mass) {
            break;
        }
    }
    let moved = sel.candidate.as_slice() != x;
    Ok((
        sel.candidate,
        StepMeta {
            proposals_tried: legs,
            accepted_index: usize::from(moved),
            legs,
            epsilon: eps,
            divergent,
        },
    ))
}

/// Leaves of a full tree grown from `start` with the given doubling
/// directions (no stopping), in time order.
pub fn trajectory_leaves(
    target: &dyn Target,
    start: &PhaseState,
    eps: f64,
    mass: &MassMatrix,
    directions: &[f64],
) -> Result<Vec<PhaseState>> {
    let first = Node::new(target, start.position.clone(), start.velocity.clone())?;
    let mut leaves = std::collections::VecDeque::from([first]);
    for (depth, &dir) in directions.iter().enumerate() {
        for _ in 0..(1usize << depth) {
            if dir > 0.0 {
                let n = leapfrog_node(target, leaves.back().unwrap(), eps, 1, mass)?;
                leaves.push_back(n);
            } else {
                let n = leapfrog_node(target, leaves.front().unwrap(), -eps, 1, mass)?;
                leaves.push_front(n);
            }
        }
    }
    Ok(leaves.iter().map(Node::phase).collect())
}

/// Checkpoints `b_1 < b_2 < ... < b_jmax` in units of legs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectorySchedule {
    checkpoints: Vec<usize>,
    needed: BTreeSet<usize>,
}

impl TrajectorySchedule {
    pub fn new(checkpoints: Vec<usize>) -> Result<Self> {
        if checkpoints.is_empty() || checkpoints[0] == 0 {
            return Err(Error::InvalidConfig(
                "checkpoints must be positive and non-empty".into(),
            ));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "checkpoints must be strictly increasing".into(),
            ));
        }
        let mut needed = BTreeSet::new();
        for (j, &b) in checkpoints.iter().enumerate() {
            needed.insert(b);
            for &bp in &checkpoints[..j] {
                needed.insert(b - bp);
            }
        }
        Ok(TrajectorySchedule {
            checkpoints,
            needed,
        })
    }

    /// `b_j = 2^{j-1}` for `j = 1..=jmax`.
    pub fn doubling(jmax: usize) -> Result<Self> {
        if jmax == 0 || jmax > 40 {
            return Err(Error::InvalidConfig(format!("jmax {jmax} out of range 1..=40")));
        }
        Self::new((0..jmax).map(|j| 1usize << j).collect())
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn jmax(&self) -> usize {
        self.checkpoints.len()
    }
}

/// Distribution `ζ` of the stopping cosine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingAngle {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl StoppingAngle {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StoppingAngle::Fixed(c) => (-1.0..1.0).contains(&c),
            StoppingAngle::Uniform { lo, hi } => -1.0 <= lo && lo <= hi && hi <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "stopping cosine {self:?} must lie in [-1, 1)"
            )))
        }
    }

    /// A fixed value consumes no randomness.
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        match *self {
            StoppingAngle::Fixed(c) => c,
            StoppingAngle::Uniform { lo, hi } => rng.uniform_range(lo, hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    /// Stopped at a checkpoint and passed the symmetry check.
    Stopped,
    /// Stopped, but the reversed trajectory would have stopped earlier.
    Asymmetric,
    /// A state could not be computed.
    Diverged,
    /// No acceptable state within the allowed legs (acceptable-state walk only).
    Exhausted,
}

/// Where a checkpointed trajectory ended.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub status: TrajectoryStatus,
    pub end: PhaseState,
    /// Index `j` of the checkpoint at which the trajectory stopped.
    pub j: usize,
    /// Trajectory length in steps (legs, or acceptable states).
    pub steps: usize,
    /// Leapfrog legs computed.
    pub legs: usize,
}

enum Advance {
    To(Node, usize),
    Diverged(usize),
    Exhausted(usize),
}

/// Runs the checkpoint stop rule and the symmetry check over the sequence
/// of states produced by `next`.
fn checkpointed(
    start: Node,
    sched: &TrajectorySchedule,
    c: f64,
    mass: &MassMatrix,
    mut next: impl FnMut(&Node) -> Advance,
) -> (TrajectoryOutcome, Node) {
    let mut kept: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let x0 = start.x.clone();
    let v0 = start.v.clone();
    let mut cur = start;
    let mut idx = 0;
    let mut legs = 0;
    let b = sched.checkpoints();
    let outcome = |status, cur: &Node, j, idx, legs| TrajectoryOutcome {
        status,
        end: cur.phase(),
        j,
        steps: idx,
        legs,
    };
    for j in 1..=b.len() {
        while idx < b[j - 1] {
            match next(&cur) {
                Advance::To(n, used) => {
                    legs += used;
                    cur = n;
                    idx += 1;
                    if sched.needed.contains(&idx) {
                        kept.insert(idx, (cur.x.clone(), cur.v.clone()));
                    }
                }
                Advance::Diverged(used) => {
                    let o = outcome(TrajectoryStatus::Diverged, &cur, j, idx, legs + used);
                    return (o, cur);
                }
                Advance::Exhausted(used) => {
                    let o = outcome(TrajectoryStatus::Exhausted, &cur, j, idx, legs + used);
                    return (o, cur);
                }
            }
        }
        let dx = diff(&cur.x, &x0);
        let stop =
            j == b.len() || turned_back(&dx, &v0, c, mass) || turned_back(&dx, &cur.v, c, mass);
        if !stop {
            continue;
        }
        let bj = b[j - 1];
        let symmetric = b[..j - 1].iter().all(|&bp| {
            let (xp, vp) = &kept[&(bj - bp)];
            let dx = diff(&cur.x, xp);
            !turned_back(&dx, &cur.v, c, mass) && !turned_back(&dx, vp, c, mass)
        });
        let status = if symmetric {
            TrajectoryStatus::Stopped
        } else {
            TrajectoryStatus::Asymmetric
        };
        let o = outcome(status, &cur, j, idx, legs);
        return (o, cur);
    }
    unreachable!("the loop always stops at the last checkpoint")
}

/// The leapfrog trajectory of one spNUTS1 proposal: legs of `l` jumps from
/// `start`, stopped by the checkpoint rule with stopping cosine `c`.
pub fn spnuts1_trajectory(
    target: &dyn Target,
    start: &PhaseState,
    eps: f64,
    l: usize,
    sched: &TrajectorySchedule,
    c: f64,
    mass: &MassMatrix,
) -> Result<TrajectoryOutcome> {
    let node = Node::new(target, start.position.clone(), start.velocity.clone())?;
    Ok(run_legs(target, node, eps, l, sched, c, mass).0)
}

fn run_legs(
    target: &dyn Target,
    start: Node,
    eps: f64,
    l: usize,
    sched: &TrajectorySchedule,
    c: f64,
    mass: &MassMatrix,
) -> (TrajectoryOutcome, Node) {
    checkpointed(start, sched, c, mass, |n| {
        match leapfrog_node(target, n, eps, l, mass) {
            Ok(next) => Advance::To(next, 1),
            Err(_) => Advance::Diverged(1),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpNutsConfig {
    pub leapfrog: LeapfrogParams,
    pub schedule: TrajectorySchedule,
    pub zeta: StoppingAngle,
    /// Proposals per iteration (spNUTS1) or legs searched per acceptable
    /// state (spNUTS2).
    pub n: usize,
}

impl SpNutsConfig {
    pub fn validate(&self) -> Result<()> {
        self.leapfrog.validate()?;
        self.zeta.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        Ok(())
    }
}

fn energy(target: &dyn Target, mass: &MassMatrix, x: &[f64], v: &[f64]) -> f64 {
    -target.log_density(x) + 0.5 * mass.quad_unchecked(v)
}

/// One iteration of spNUTS1.
///
/// Each proposal runs a checkpointed trajectory from the previous proposal's
/// endpoint. An asymmetric stop ends the iteration at `x`. A symmetric
/// endpoint with energy below `H_max = H(x, W₀) - log Λ` is returned;
/// otherwise the velocity direction is redrawn with its `C`-norm kept and
/// the next proposal starts there.
pub fn spnuts1_step(
    target: &dyn Target,
    x: &[f64],
    cfg: &SpNutsConfig,
    mass: &MassMatrix,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = target.log_density(x);
    if !lp0.is_finite() {
        return Err(Error::OutsideSupport(lp0));
    }
    let eps = cfg.leapfrog.draw_epsilon(rng);
    let w0 = mass.sample(rng);
    let log_lambda = rng.draw_lambda().ln();
    let h_max = -lp0 + 0.5 * mass.quad_unchecked(&w0) - log_lambda;
    let mut node = Node::new(target, x.to_vec(), w0)?;
    let mut meta = StepMeta {
        epsilon: eps,
        ..StepMeta::default()
    };
    let stay = |meta: StepMeta| Ok((x.to_vec(), meta));
    for n in 1..=cfg.n {
        let c = cfg.zeta.draw(rng);
        let (out, end) = run_legs(target, node, eps, cfg.leapfrog.l, &cfg.schedule, c, mass);
        meta.proposals_tried = n;
        meta.legs += out.legs * cfg.leapfrog.l;
        match out.status {
            TrajectoryStatus::Stopped => {}
            TrajectoryStatus::Diverged => {
                meta.divergent = true;
                return stay(meta);
            }
            _ => return stay(meta),
        }
        let h = energy(target, mass, &end.x, &end.v);
        if h < h_max {
            meta.accepted_index = n;
            return Ok((end.x, meta));
        }
        if !h.is_finite() || h - h_max > NUTS_DIVERGENCE {
            meta.divergent = true;
        }
        let u = mass.sample(rng);
        let scale = c_norm(&end.v, mass)? / c_norm(&u, mass)?;
        node = Node {
            v: u.iter().map(|a| a * scale).collect(),
            ..end
        };
    }
    stay(meta)
}

/// One iteration of spNUTS2: the checkpointed trajectory runs over
/// acceptable states only, each found by searching up to `N` legs ahead.
pub fn spnuts2_step(
    target: &dyn Target,
    x: &[f64],
    cfg: &SpNutsConfig,
    mass: &MassMatrix,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = target.log_density(x);
    if !lp0.is_finite() {
        return Err(Error::OutsideSupport(lp0));
    }
    let eps = cfg.leapfrog.draw_epsilon(rng);
    let v0 = mass.sample(rng);
    let c = cfg.zeta.draw(rng);
    let delta = -rng.draw_lambda().ln();
    let h_max = -lp0 + 0.5 * mass.quad_unchecked(&v0) + delta;
    let start = Node::new(target, x.to_vec(), v0)?;
    let l = cfg.leapfrog.l;
    let mut divergent = false;
    let (out, end) = checkpointed(start, &cfg.schedule, c, mass, |n| {
        let mut cur = n.clone();
        for k in 1..=cfg.n {
            cur = match leapfrog_node(target, &cur, eps, l, mass) {
                Ok(next) => next,
                Err(_) => return Advance::Diverged(k),
            };
            let h = energy(target, mass, &cur.x, &cur.v);
            if h < h_max {
                return Advance::To(cur, k);
            }
            if !h.is_finite() {
                return Advance::Diverged(k);
            }
            if h - h_max > NUTS_DIVERGENCE {
                divergent = true;
            }
        }
        Advance::Exhausted(cfg.n)
    });
    let mut meta = StepMeta {
        proposals_tried: out.steps,
        accepted_index: 0,
        legs: out.legs * l,
        epsilon: eps,
        divergent: divergent || out.status == TrajectoryStatus::Diverged,
    };
    if out.status == TrajectoryStatus::Stopped {
        meta.accepted_index = 1;
        Ok((end.x, meta))
    } else {
        Ok((x.to_vec(), meta))
    }
}

/// `|det|` of the finite-difference Jacobian of
/// `(w', u) ↦ (w'·‖u‖_C/‖w'‖_C, u·‖w'‖_C/‖u‖_C)`.
pub fn refresh_volume_check(w_prime: &[f64], u: &[f64], mass: &MassMatrix) -> Result<f64> {
    let d = w_prime.len();
    crate::error::check_dim(d, u.len())?;
    let map = |z: &[f64]| -> Vec<f64> {
        let (w, u) = z.split_at(d);
        let nw = mass.quad_unchecked(w).sqrt();
        let nu = mass.quad_unchecked(u).sqrt();
        w.iter()
            .map(|a| a * nu / nw)
            .chain(u.iter().map(|a| a * nw / nu))
            .collect()
    };
    let z: Vec<f64> = w_prime.iter().chain(u).copied().collect();
    if mass.quad_unchecked(w_prime) == 0.0 || mass.quad_unchecked(u) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let n = 2 * d;
    let mut jac = DMatrix::zeros(n, n);
    let mut p = z.clone();
    for k in 0..n {
        let h = 1e-6 * (1.0 + z[k].abs());
        p[k] = z[k] + h;
        let up = map(&p);
        p[k] = z[k] - h;
        let down = map(&p);
        p[k] = z[k];
        for i in 0..n {
            jac[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok(jac.determinant().abs())
}
