//! Chain traces, effective sample size, summaries and a few test statistics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Per-iteration bookkeeping written alongside every state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMeta {
    pub proposals_tried: usize,
    /// 1-based index of the accepted proposal, 0 when the chain stayed.
    pub accepted_index: usize,
    /// Legs (or leapfrog jumps, or kernel draws) computed this iteration.
    pub legs: usize,
    /// Step size (or flow time) used this iteration; 0 when not applicable.
    pub epsilon: f64,
    pub divergent: bool,
}

impl Default for StepMeta {
    fn default() -> Self {
        StepMeta {
            proposals_tried: 0,
            accepted_index: 0,
            legs: 0,
            epsilon: 0.0,
            divergent: false,
        }
    }
}

/// An `M × d` matrix of states plus metadata for each row.
#[derive(Debug, Clone, Default)]
pub struct ChainTrace {
    dim: usize,
    states: Vec<f64>,
    meta: Vec<StepMeta>,
}

impl ChainTrace {
    pub fn new(dim: usize) -> Self {
        ChainTrace {
            dim,
            states: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        ChainTrace {
            dim,
            states: Vec::with_capacity(dim * rows),
            meta: Vec::with_capacity(rows),
        }
    }

    pub fn push(&mut self, state: &[f64], meta: StepMeta) -> Result<()> {
        check_dim(self.dim, state.len())?;
        self.states.extend_from_slice(state);
        self.meta.push(meta);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn meta(&self) -> &[StepMeta] {
        &self.meta
    }

    pub fn column(&self, j: usize, from: usize) -> Vec<f64> {
        (from..self.len()).map(|i| self.states[i * self.dim + j]).collect()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Normalized autocorrelations `ρ_0..ρ_{M-1}` computed by FFT.
pub fn autocorrelation(series: &[f64]) -> Vec<f64> {
    let m = series.len();
    if m == 0 {
        return Vec::new();
    }
    let mu = mean(series);
    let n = (2 * m).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|x| Complex::new(x - mu, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let g0 = buf[0].re;
    if g0 <= 0.0 {
        let mut r = vec![0.0; m];
        r[0] = 1.0;
        return r;
    }
    buf[..m].iter().map(|c| c.re / g0).collect()
}

/// Effective sample size `M / τ`, with `τ = -1 + 2 Σ_m P_m` over Geyer's
/// initial monotone positive sequence of paired autocorrelations
/// `P_m = ρ_{2m} + ρ_{2m+1}`.
///
/// `τ` is bounded below by `1 / log10(M)`, so strongly antithetic chains
/// report an ESS above `M` but never an infinite one. A constant series has
/// ESS 1. Meant for series of length 100 or more.
pub fn ess(series: &[f64]) -> f64 {
    let m = series.len();
    if m < 2 {
        return m as f64;
    }
    let mu = mean(series);
    if series.iter().all(|x| (x - mu).abs() == 0.0) {
        return 1.0;
    }
    let rho = autocorrelation(series);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < m {
        let p = rho[k] + rho[k + 1];
        if p <= 0.0 {
            break;
        }
        let p = p.min(prev);
        sum += p;
        prev = p;
        k += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m as f64).log10());
    m as f64 / tau
}

/// Mean and variance of a correlated series, each with an ESS-based
/// standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

pub fn moments(series: &[f64]) -> Moments {
    let mu = mean(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - mu) * (x - mu)).collect();
    let var = mean(&sq);
    let sq_mu = var;
    let sq_var = mean(&sq.iter().map(|s| (s - sq_mu) * (s - sq_mu)).collect::<Vec<_>>());
    Moments {
        mean: mu,
        mean_se: (var / ess(series)).sqrt(),
        variance: var,
        variance_se: (sq_var / ess(&sq)).sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub iterations: usize,
    pub burn_in: usize,
    pub dim: usize,
    pub min_ess: f64,
    pub mean_ess: f64,
    pub ess_per_dim: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub move_fraction: f64,
    pub mean_proposals_tried: f64,
    pub mean_legs: f64,
    pub divergence_count: usize,
}

/// Statistics over rows `burn_in..M` of the trace.
pub fn summarize(trace: &ChainTrace, burn_in: usize) -> Result<Summary> {
    let m = trace.len();
    if burn_in >= m {
        return Err(Error::InvalidConfig(format!(
            "burn-in {burn_in} leaves no rows out of {m}"
        )));
    }
    let kept = m - burn_in;
    let d = trace.dim();
    let mut ess_per_dim = Vec::with_capacity(d);
    let mut means = Vec::with_capacity(d);
    let mut vars = Vec::with_capacity(d);
    for j in 0..d {
        let col = trace.column(j, burn_in);
        let mu = mean(&col);
        means.push(mu);
        vars.push(col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / kept as f64);
        ess_per_dim.push(ess(&col));
    }
    let moves = (burn_in + 1..m)
        .filter(|&i| trace.row(i) != trace.row(i - 1))
        .count();
    let meta = &trace.meta()[burn_in..];
    let min_ess = ess_per_dim.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_ess = mean(&ess_per_dim);
    Ok(Summary {
        iterations: kept,
        burn_in,
        dim: d,
        min_ess: if d == 0 { 0.0 } else { min_ess },
        mean_ess: if d == 0 { 0.0 } else { mean_ess.max(min_ess) },
        ess_per_dim,
        mean: means,
        variance: vars,
        move_fraction: if kept > 1 {
            moves as f64 / (kept - 1) as f64
        } else {
            0.0
        },
        mean_proposals_tried: meta.iter().map(|s| s.proposals_tried as f64).sum::<f64>()
            / kept as f64,
        mean_legs: meta.iter().map(|s| s.legs as f64).sum::<f64>() / kept as f64,
        divergence_count: meta.iter().filter(|s| s.divergent).count(),
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi = std::f64::consts::PI;
        let t = -pi * pi / (8.0 * lambda * lambda);
        let s: f64 = (1..=8)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (t * j * j).exp()
            })
            .sum();
        (1.0 - (2.0 * pi).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    KsResult {
        statistic: d,
        p_value: ks_p(d, ne),
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    }
}

/// Every `k`-th element, starting with the first.
pub fn thin(series: &[f64], k: usize) -> Vec<f64> {
    series.iter().step_by(k.max(1)).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_unit_ess() {
        assert_eq!(ess(&[3.0; 500]), 1.0);
    }

    #[test]
    fn alternating_series_exceeds_length() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = ess(&x);
        assert!(e > 1000.0 && e.is_finite(), "{e}");
    }

    #[test]
    fn kolmogorov_branches_agree() {
        for &l in &[1.1, 1.17, 1.19, 1.25] {
            let pi = std::f64::consts::PI;
            let a: f64 = 1.0
                - (2.0 * pi).sqrt() / l
                    * (1..=20)
                        .map(|k| {
                            let j = (2 * k - 1) as f64;
                            (-j * j * pi * pi / (8.0 * l * l)).exp()
                        })
                        .sum::<f64>();
            let b: f64 = 2.0
                * (1..=100)
                    .map(|k| {
                        let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                        s * (-2.0 * (k * k) as f64 * l * l).exp()
                    })
                    .sum::<f64>();
            assert!((a - b).abs() < 1e-12);
            assert!((kolmogorov_sf(l) - b).abs() < 1e-12);
        }
        // known quantile: Q(1.3581) ≈ 0.05
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn all_stay_trace() {
        let mut t = ChainTrace::new(2);
        for _ in 0..300 {
            t.push(&[1.0, 2.0], StepMeta::default()).unwrap();
        }
        let s = summarize(&t, 10).unwrap();
        assert_eq!(s.move_fraction, 0.0);
        assert_eq!(s.iterations, 290);
        assert!(summarize(&t, 300).is_err());
    }
}
