//! Sequential-proposal Metropolis and Metropolis-Hastings with random
//! proposal kernels, the path-dependent variant, and a delayed-rejection
//! sampler kept as an independent oracle.

use std::collections::HashMap;

use crate::diagnostics::StepMeta;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::target::Target;

/// A proposal kernel `q_k(· | y_{k-1}, ..., y_0)`.
///
/// `history` is ordered most recent first, so `history[0]` is the point the
/// next proposal is drawn from. Kernels with `path_dependent() == false`
/// must only look at `history[0]`.
pub trait ProposalKernel {
    fn sample(&self, history: &[&[f64]], rng: &mut RngStream) -> Vec<f64>;

    fn log_density(&self, y: &[f64], history: &[&[f64]]) -> f64;

    fn path_dependent(&self) -> bool {
        false
    }
}

fn gaussian_log_density(y: &[f64], mean: &[f64], sd: f64) -> f64 {
    let ss: f64 = y
        .iter()
        .zip(mean)
        .map(|(a, m)| {
            let z = (a - m) / sd;
            z * z
        })
        .sum();
    -0.5 * ss - y.len() as f64 * sd.ln()
}

/// Symmetric Gaussian random walk `y ~ N(x, sd² I)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianRandomWalk {
    pub sd: f64,
}

impl ProposalKernel for GaussianRandomWalk {
    fn sample(&self, history: &[&[f64]], rng: &mut RngStream) -> Vec<f64> {
        history[0].iter().map(|a| a + self.sd * rng.normal()).collect()
    }

    fn log_density(&self, y: &[f64], history: &[&[f64]]) -> f64 {
        gaussian_log_density(y, history[0], self.sd)
    }
}

/// Asymmetric kernel `y ~ N(x + shift, sd² I)`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedGaussian {
    pub shift: f64,
    pub sd: f64,
}

impl ProposalKernel for ShiftedGaussian {
    fn sample(&self, history: &[&[f64]], rng: &mut RngStream) -> Vec<f64> {
        history[0]
            .iter()
            .map(|a| a + self.shift + self.sd * rng.normal())
            .collect()
    }

    fn log_density(&self, y: &[f64], history: &[&[f64]]) -> f64 {
        let mean: Vec<f64> = history[0].iter().map(|a| a + self.shift).collect();
        gaussian_log_density(y, &mean, self.sd)
    }
}

/// Gaussian centered at the mean of every point in the history.
#[derive(Debug, Clone, Copy)]
pub struct HistoryMeanGaussian {
    pub sd: f64,
}

impl HistoryMeanGaussian {
    fn mean(history: &[&[f64]]) -> Vec<f64> {
        let d = history[0].len();
        let mut m = vec![0.0; d];
        for h in history {
            for (mi, hi) in m.iter_mut().zip(h.iter()) {
                *mi += hi;
            }
        }
        let k = history.len() as f64;
        m.iter_mut().for_each(|a| *a /= k);
        m
    }
}

impl ProposalKernel for HistoryMeanGaussian {
    fn sample(&self, history: &[&[f64]], rng: &mut RngStream) -> Vec<f64> {
        Self::mean(history)
            .into_iter()
            .map(|m| m + self.sd * rng.normal())
            .collect()
    }

    fn log_density(&self, y: &[f64], history: &[&[f64]]) -> f64 {
        gaussian_log_density(y, &Self::mean(history), self.sd)
    }

    fn path_dependent(&self) -> bool {
        true
    }
}

/// Distribution `ν` over `(N, L)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalCount {
    Fixed { n: usize, l: usize },
    /// `(N, L, probability)` triples.
    Categorical(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpMhConfig {
    pub nu: ProposalCount,
}

impl SpMhConfig {
    pub fn fixed(n: usize, l: usize) -> Result<Self> {
        let cfg = SpMhConfig {
            nu: ProposalCount::Fixed { n, l },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn categorical(pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        let cfg = SpMhConfig {
            nu: ProposalCount::Categorical(pairs),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |n: usize, l: usize| 1 <= l && l <= n;
        match &self.nu {
            ProposalCount::Fixed { n, l } if ok(*n, *l) => Ok(()),
            ProposalCount::Fixed { n, l } => Err(Error::InvalidConfig(format!(
                "need 1 <= L <= N, got N={n}, L={l}"
            ))),
            ProposalCount::Categorical(v) => {
                if v.is_empty() {
                    return Err(Error::InvalidConfig("empty (N, L) distribution".into()));
                }
                let mut total = 0.0;
                for &(n, l, p) in v {
                    if !ok(n, l) || !(p >= 0.0 && p.is_finite()) {
                        return Err(Error::InvalidConfig(format!(
                            "bad (N, L, p) entry ({n}, {l}, {p})"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "(N, L) probabilities sum to {total}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Largest N in the support.
    pub fn max_n(&self) -> usize {
        match &self.nu {
            ProposalCount::Fixed { n, .. } => *n,
            ProposalCount::Categorical(v) => v.iter().map(|t| t.0).max().unwrap_or(1),
        }
    }

    /// Draws `(N, L)`. A fixed pair consumes no randomness.
    pub fn draw(&self, rng: &mut RngStream) -> (usize, usize) {
        match &self.nu {
            ProposalCount::Fixed { n, l } => (*n, *l),
            ProposalCount::Categorical(v) => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for &(n, l, p) in v {
                    acc += p;
                    if u < acc {
                        return (n, l);
                    }
                }
                let last = v[v.len() - 1];
                (last.0, last.1)
            }
        }
    }
}

fn current_log_density(target: &dyn Target, x: &[f64]) -> Result<f64> {
    let lp = target.log_density(x);
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(Error::OutsideSupport(lp))
    }
}

fn finite(v: f64, index: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteKernelDensity { index })
    }
}

fn meta(tried: usize, accepted: usize) -> StepMeta {
    StepMeta {
        proposals_tried: tried,
        accepted_index: accepted,
        legs: tried,
        epsilon: 0.0,
        divergent: false,
    }
}

/// One iteration of sequential-proposal Metropolis with a symmetric kernel.
///
/// Returns the first `Y_n` with `Λ < π(Y_n)/π(x)`, or `x` after `n_max`
/// failures.
pub fn sp_metropolis_step(
    target: &dyn Target,
    x: &[f64],
    q: &dyn ProposalKernel,
    n_max: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = current_log_density(target, x)?;
    let log_lambda = rng.draw_lambda().ln();
    let mut prev = x.to_vec();
    for n in 1..=n_max {
        let y = q.sample(&[&prev], rng);
        let lp = target.log_density(&y);
        if log_lambda < lp - lp0 {
            return Ok((y, meta(n, n)));
        }
        prev = y;
    }
    Ok((x.to_vec(), meta(n_max, 0)))
}

/// One iteration of sequential-proposal Metropolis-Hastings.
///
/// `Y_n` is acceptable when
/// `log Λ < log π(Y_n) - log π(Y_0) + Σ log q(Y_{j-1}|Y_j) - Σ log q(Y_j|Y_{j-1})`.
/// The `L`-th acceptable proposal is returned, or `x` if fewer than `L`
/// turn up among the first `N`.
pub fn sp_mh_step(
    target: &dyn Target,
    x: &[f64],
    q: &dyn ProposalKernel,
    cfg: &SpMhConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = current_log_density(target, x)?;
    let (n_max, l) = cfg.draw(rng);
    let log_lambda = rng.draw_lambda().ln();
    let mut prev = x.to_vec();
    let (mut fwd, mut rev) = (0.0, 0.0);
    let mut found = 0;
    for n in 1..=n_max {
        let y = q.sample(&[&prev], rng);
        fwd += finite(q.log_density(&y, &[&prev]), n)?;
        rev += finite(q.log_density(&prev, &[&y]), n)?;
        let lp = target.log_density(&y);
        if log_lambda < (lp - lp0) + (rev - fwd) {
            found += 1;
            if found == l {
                return Ok((y, meta(n, n)));
            }
        }
        prev = y;
    }
    Ok((x.to_vec(), meta(n_max, 0)))
}

/// Sequential-proposal MH for kernels that may depend on the whole history
/// of the current iteration.
///
/// Acceptability of `Y_n` uses the reversed-history kernel product. Once the
/// `L`-th acceptable `Y_n` is found, the mirror condition is checked: exactly
/// `L-1` of the intermediate points `y_1..y_{n-1}` must pass the test that
/// the reversed sequence `y_n, ..., y_0` would have applied to them. Either
/// way the iteration ends there.
pub fn sp_mh_path_dependent_step(
    target: &dyn Target,
    x: &[f64],
    q: &dyn ProposalKernel,
    cfg: &SpMhConfig,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    let lp0 = current_log_density(target, x)?;
    let (n_max, l) = cfg.draw(rng);
    let log_lambda = rng.draw_lambda().ln();
    let mut ys: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut lps = vec![lp0];
    let mut fwd = 0.0;
    let mut found = 0;
    for n in 1..=n_max {
        let y = {
            let hist: Vec<&[f64]> = ys.iter().rev().map(|v| v.as_slice()).collect();
            let y = q.sample(&hist, rng);
            fwd += finite(q.log_density(&y, &hist), n)?;
            y
        };
        ys.push(y);
        lps.push(target.log_density(&ys[n]));

        // rev_terms[j] = log q_j(y_{n-j} | y_{n-j+1}, ..., y_n)
        let mut rev_terms = vec![0.0; n + 1];
        for j in 1..=n {
            let hist: Vec<&[f64]> = ys[n - j + 1..=n].iter().map(|v| v.as_slice()).collect();
            rev_terms[j] = finite(q.log_density(&ys[n - j], &hist), n)?;
        }
        // summed with j descending, matching the accumulation order of sp_mh_step
        let rev: f64 = (1..=n).rev().map(|j| rev_terms[j]).fold(0.0, |a, b| a + b);

        if log_lambda < (lps[n] - lp0) + (rev - fwd) {
            found += 1;
            if found == l {
                let mut mirror = 0;
                for k in 1..n {
                    let mut num = lps[k];
                    for j in 1..=n - k {
                        let hist: Vec<&[f64]> =
                            ys[k..k + j].iter().rev().map(|v| v.as_slice()).collect();
                        num += finite(q.log_density(&ys[k + j], &hist), n)?;
                    }
                    for term in &rev_terms[n - k + 1..=n] {
                        num += term;
                    }
                    if log_lambda < num - (lp0 + fwd) {
                        mirror += 1;
                    }
                }
                return if mirror == l - 1 {
                    Ok((ys.swap_remove(n), meta(n, n)))
                } else {
                    Ok((x.to_vec(), meta(n, 0)))
                };
            }
        }
    }
    Ok((x.to_vec(), meta(n_max, 0)))
}

/// Stage acceptance probabilities of delayed rejection for a fixed sequence.
struct DrAlphas<'a> {
    lps: &'a [f64],
    // logq[i][j] = log q(y_i | y_j)
    logq: Vec<Vec<f64>>,
    memo: HashMap<(usize, usize), f64>,
}

impl<'a> DrAlphas<'a> {
    fn new(target_lps: &'a [f64], ys: &[Vec<f64>], q: &dyn ProposalKernel) -> Result<Self> {
        let m = ys.len();
        let mut logq = vec![vec![f64::NAN; m]; m];
        for i in 1..m {
            logq[i][i - 1] = finite(q.log_density(&ys[i], &[&ys[i - 1]]), i)?;
            logq[i - 1][i] = finite(q.log_density(&ys[i - 1], &[&ys[i]]), i)?;
        }
        Ok(DrAlphas {
            lps: target_lps,
            logq,
            memo: HashMap::new(),
        })
    }

    /// Acceptance probability for the stage whose sequence runs
    /// `y_a, y_{a±1}, ..., y_b`.
    fn alpha(&mut self, a: usize, b: usize) -> f64 {
        if let Some(&v) = self.memo.get(&(a, b)) {
            return v;
        }
        let up = b > a;
        let m = a.abs_diff(b);
        let at = |i: usize| if up { a + i } else { a - i };
        let back = |i: usize| if up { b - i } else { b + i };
        let mut num = self.lps[b];
        let mut den = self.lps[a];
        for i in 1..=m {
            num += self.logq[at(i - 1)][at(i)];
            den += self.logq[at(i)][at(i - 1)];
        }
        for i in 1..m {
            num += (1.0 - self.alpha(b, back(i))).ln();
            den += (1.0 - self.alpha(a, at(i))).ln();
        }
        let v = if den == f64::NEG_INFINITY {
            // the stage is unreachable from y_a; any value will do
            1.0
        } else if num == f64::NEG_INFINITY {
            0.0
        } else {
            (num - den).exp().min(1.0)
        };
        self.memo.insert((a, b), v);
        v
    }
}

/// `α_k(y_0, ..., y_k)` for `k = 1..n`, the stage acceptance probabilities of
/// delayed rejection along the sequence `ys = (y_0, ..., y_n)`.
pub fn delayed_rejection_alphas(
    target: &dyn Target,
    q: &dyn ProposalKernel,
    ys: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let lps: Vec<f64> = ys.iter().map(|y| target.log_density(y)).collect();
    let mut dr = DrAlphas::new(&lps, ys, q)?;
    Ok((1..ys.len()).map(|k| dr.alpha(0, k)).collect())
}

/// One iteration of delayed rejection: stage `n` draws `y_n ~ q(·|y_{n-1})`
/// and accepts with probability `α_n(y_0..y_n)` using a fresh uniform.
pub fn delayed_rejection_step(
    target: &dyn Target,
    x: &[f64],
    q: &dyn ProposalKernel,
    n_max: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, StepMeta)> {
    if q.path_dependent() {
        return Err(Error::InvalidConfig(
            "delayed rejection needs a kernel that only looks at the last point".into(),
        ));
    }
    let lp0 = current_log_density(target, x)?;
    let mut ys = vec![x.to_vec()];
    let mut lps = vec![lp0];
    for n in 1..=n_max {
        let y = q.sample(&[&ys[n - 1]], rng);
        lps.push(target.log_density(&y));
        ys.push(y);
        let alpha = DrAlphas::new(&lps, &ys, q)?.alpha(0, n);
        if rng.uniform() < alpha {
            return Ok((ys.swap_remove(n), meta(n, n)));
        }
    }
    Ok((x.to_vec(), meta(n_max, 0)))
}
