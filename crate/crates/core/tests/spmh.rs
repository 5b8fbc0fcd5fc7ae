mod common;

use proptest::prelude::*;
use seqmc::diagnostics::{ess, ks_two_sample, thin};
use seqmc::spmh::{
    delayed_rejection_alphas, delayed_rejection_step, sp_metropolis_step, sp_mh_path_dependent_step,
    sp_mh_step, GaussianRandomWalk, HistoryMeanGaussian, ProposalKernel, ShiftedGaussian,
    SpMhConfig,
};
use seqmc::target::Target;
use seqmc::targets::AnisotropicGaussian;
use seqmc::{Error, RngStream};

/// Density on the integers with `π(k)/π(0) = ratios[k-1]`.
struct Table(Vec<f64>);

impl Target for Table {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        let k = x[0].round() as usize;
        if k == 0 {
            0.0
        } else {
            self.0[k - 1].ln()
        }
    }
}

/// Steps deterministically from `y` to `y + 1`; treated as symmetric.
struct Step;

impl ProposalKernel for Step {
    fn sample(&self, history: &[&[f64]], _rng: &mut RngStream) -> Vec<f64> {
        vec![history[0][0] + 1.0]
    }
    fn log_density(&self, _y: &[f64], _history: &[&[f64]]) -> f64 {
        0.0
    }
}

/// A stream whose first `Λ` falls in `(lo, hi)`.
fn stream_with_lambda(lo: f64, hi: f64) -> RngStream {
    (0..)
        .map(|s| RngStream::new(s, 0))
        .find(|r| {
            let l = r.clone().draw_lambda();
            lo < l && l < hi
        })
        .unwrap()
}

#[test]
fn metropolis_takes_first_acceptable() {
    let mut rng = stream_with_lambda(0.28, 0.32);
    let (y, m) = sp_metropolis_step(&Table(vec![0.5]), &[0.0], &Step, 1, &mut rng).unwrap();
    assert_eq!((y[0], m.accepted_index), (1.0, 1));

    let mut rng = stream_with_lambda(0.48, 0.52);
    let (y, m) = sp_metropolis_step(&Table(vec![0.2, 0.8]), &[0.0], &Step, 2, &mut rng).unwrap();
    assert_eq!((y[0], m.proposals_tried), (2.0, 2));

    let mut rng = stream_with_lambda(0.88, 0.92);
    let t = Table(vec![0.5, 0.8, 0.87]);
    let (y, m) = sp_metropolis_step(&t, &[0.0], &Step, 3, &mut rng).unwrap();
    assert_eq!((y[0], m.accepted_index, m.proposals_tried), (0.0, 0, 3));
}

#[test]
fn second_acceptable_is_taken_for_l_two() {
    let mut rng = stream_with_lambda(0.4, 0.6);
    let t = Table(vec![0.9, 0.1, 0.9]);
    let cfg = SpMhConfig::fixed(3, 2).unwrap();
    let (y, m) = sp_mh_step(&t, &[0.0], &Step, &cfg, &mut rng).unwrap();
    assert_eq!((y[0], m.accepted_index), (3.0, 3));
    // with only two proposals there is a single acceptable one
    let mut rng = stream_with_lambda(0.4, 0.6);
    let cfg = SpMhConfig::fixed(2, 2).unwrap();
    let (y, _) = sp_mh_step(&t, &[0.0], &Step, &cfg, &mut rng).unwrap();
    assert_eq!(y[0], 0.0);
}

#[test]
fn config_rejects_bad_pairs() {
    assert!(SpMhConfig::fixed(2, 3).is_err());
    assert!(SpMhConfig::fixed(0, 0).is_err());
    assert!(SpMhConfig::categorical(vec![(2, 1, 0.5), (3, 3, 0.4)]).is_err());
    assert!(SpMhConfig::categorical(vec![(2, 3, 1.0)]).is_err());
    assert!(SpMhConfig::categorical(vec![]).is_err());
    assert_eq!(
        SpMhConfig::categorical(vec![(2, 1, 0.5), (7, 3, 0.5)]).unwrap().max_n(),
        7
    );
}

#[test]
fn start_outside_support_is_an_error() {
    let t = Table(vec![0.0]);
    let mut rng = RngStream::new(0, 0);
    let cfg = SpMhConfig::fixed(1, 1).unwrap();
    let q = GaussianRandomWalk { sd: 1.0 };
    assert!(matches!(
        sp_mh_step(&t, &[1.0], &q, &cfg, &mut rng),
        Err(Error::OutsideSupport(_))
    ));
}

/// Gives a non-finite density to any move starting at or beyond 1.
struct Broken;

impl ProposalKernel for Broken {
    fn sample(&self, history: &[&[f64]], _rng: &mut RngStream) -> Vec<f64> {
        vec![history[0][0] + 1.0]
    }
    fn log_density(&self, _y: &[f64], history: &[&[f64]]) -> f64 {
        if history[0][0] >= 1.0 {
            f64::NAN
        } else {
            0.0
        }
    }
}

#[test]
fn non_finite_kernel_density_names_the_proposal() {
    let t = Table(vec![1e-300, 1e-300, 1e-300]);
    let cfg = SpMhConfig::fixed(3, 1).unwrap();
    let mut rng = RngStream::new(0, 0);
    match sp_mh_step(&t, &[0.0], &Broken, &cfg, &mut rng) {
        Err(Error::NonFiniteKernelDensity { index }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
}

fn chain<F>(iters: usize, x0: f64, mut step: F) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut xs = Vec::with_capacity(iters + 1);
    xs.push(vec![x0]);
    for _ in 0..iters {
        let next = step(xs.last().unwrap());
        xs.push(next);
    }
    xs
}

fn first_coords(xs: &[Vec<f64>]) -> Vec<f64> {
    xs.iter().map(|x| x[0]).collect()
}

#[test]
fn symmetric_kernel_mh_matches_metropolis_bitwise() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 1.5 };
    let cfg = SpMhConfig::fixed(4, 1).unwrap();
    let mut r1 = RngStream::new(17, 2);
    let mut r2 = RngStream::new(17, 2);
    let a = chain(5000, 0.3, |x| sp_metropolis_step(&t, x, &q, 4, &mut r1).unwrap().0);
    let b = chain(5000, 0.3, |x| sp_mh_step(&t, x, &q, &cfg, &mut r2).unwrap().0);
    let bits = |v: &[Vec<f64>]| v.iter().map(|x| x[0].to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn metropolis_n1_is_textbook_metropolis() {
    let t = AnisotropicGaussian::standard(2).unwrap();
    let q = GaussianRandomWalk { sd: 1.0 };
    let mut r1 = RngStream::new(99, 0);
    let mut r2 = RngStream::new(99, 0);
    let mut x = vec![0.5, -0.5];
    let mut y = x.clone();
    for _ in 0..1000 {
        x = sp_metropolis_step(&t, &x, &q, 1, &mut r1).unwrap().0;
        // reference: draw Λ, then the proposal, then compare log ratios
        let u = r2.draw_lambda();
        let prop: Vec<f64> = y.iter().map(|a| a + r2.normal()).collect();
        if u.ln() < t.log_density(&prop) - t.log_density(&y) {
            y = prop;
        }
        assert_eq!(x, y);
    }
}

#[test]
fn single_proposal_matches_closed_form_acceptance() {
    // stationary N(0,1) with a unit random walk accepts with rate 2/π·atan(2)
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 1.0 };
    let cfg = SpMhConfig::fixed(1, 1).unwrap();
    let mut rng = RngStream::new(4, 0);
    let n = 200_000;
    let xs = chain(n, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut rng).unwrap().0);
    let rate = common::move_fraction(&xs);
    let want = 2.0 / std::f64::consts::PI * 2f64.atan();
    // binomial standard error inflated for autocorrelation
    assert!((rate - want).abs() < 0.006, "{rate} vs {want}");
}

#[test]
fn one_lambda_per_iteration() {
    let t = AnisotropicGaussian::standard(3).unwrap();
    let q = GaussianRandomWalk { sd: 2.0 };
    let cfg = SpMhConfig::fixed(6, 2).unwrap();
    let mut rng = RngStream::new(1, 1);
    let mut x = vec![0.0; 3];
    for _ in 0..500 {
        let before = rng.counts();
        let (next, meta) = sp_mh_step(&t, &x, &q, &cfg, &mut rng).unwrap();
        let after = rng.counts();
        assert_eq!(after.lambda - before.lambda, 1);
        assert_eq!(after.uniform, before.uniform);
        assert_eq!(after.normal - before.normal, 3 * meta.proposals_tried as u64);
        x = next;
    }
}

#[test]
fn mh_is_stationary_on_standard_normal() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 2.4 };
    let cfg = SpMhConfig::fixed(5, 1).unwrap();
    let mut rng = RngStream::new(12, 0);
    let xs = chain(100_000, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut rng).unwrap().0);
    common::moments_ok(&first_coords(&xs), 0.0, 1.0).unwrap();
}

#[test]
fn asymmetric_kernel_is_stationary() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = ShiftedGaussian { shift: 0.5, sd: 1.5 };
    let cfg = SpMhConfig::fixed(4, 2).unwrap();
    let mut rng = RngStream::new(13, 0);
    let xs = chain(100_000, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut rng).unwrap().0);
    common::moments_ok(&first_coords(&xs), 0.0, 1.0).unwrap();
}

#[test]
fn categorical_nu_is_stationary() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 2.0 };
    let cfg = SpMhConfig::categorical(vec![(1, 1, 0.3), (4, 2, 0.7)]).unwrap();
    let mut rng = RngStream::new(14, 0);
    let before = rng.counts().uniform;
    let xs = chain(100_000, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut rng).unwrap().0);
    assert_eq!(rng.counts().uniform - before, 100_000);
    common::moments_ok(&first_coords(&xs), 0.0, 1.0).unwrap();
}

#[test]
fn path_dependent_step_reduces_for_markov_kernels() {
    let t = AnisotropicGaussian::standard(2).unwrap();
    let q = GaussianRandomWalk { sd: 1.8 };
    for &(n, l) in &[(1, 1), (5, 1), (5, 2), (6, 3)] {
        let cfg = SpMhConfig::fixed(n, l).unwrap();
        let mut r1 = RngStream::new(3, n as u64);
        let mut r2 = RngStream::new(3, n as u64);
        let mut a = vec![0.1, 0.2];
        let mut b = a.clone();
        for _ in 0..2000 {
            a = sp_mh_step(&t, &a, &q, &cfg, &mut r1).unwrap().0;
            b = sp_mh_path_dependent_step(&t, &b, &q, &cfg, &mut r2).unwrap().0;
            assert_eq!(a, b, "N={n} L={l}");
        }
    }
}

#[test]
fn path_dependent_first_proposal_needs_no_mirror() {
    let mut rng = stream_with_lambda(0.28, 0.32);
    let cfg = SpMhConfig::fixed(1, 1).unwrap();
    let q = HistoryMeanGaussian { sd: 1.0 };
    let t = AnisotropicGaussian::standard(1).unwrap();
    let mut probe = rng.clone();
    let lam = probe.draw_lambda();
    let y = q.sample(&[&[0.0]], &mut probe);
    let accept = lam.ln() < t.log_density(&y) - t.log_density(&[0.0]);
    let (out, _) = sp_mh_path_dependent_step(&t, &[0.0], &q, &cfg, &mut rng).unwrap();
    assert_eq!(out, if accept { y } else { vec![0.0] });
}

#[test]
fn history_mean_kernel_is_stationary() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = HistoryMeanGaussian { sd: 2.0 };
    for (seed, &(n, l)) in [(4, 1), (5, 2)].iter().enumerate() {
        let cfg = SpMhConfig::fixed(n, l).unwrap();
        let mut rng = RngStream::new(20 + seed as u64, 0);
        let xs = chain(100_000, 0.0, |x| {
            sp_mh_path_dependent_step(&t, x, &q, &cfg, &mut rng).unwrap().0
        });
        common::moments_ok(&first_coords(&xs), 0.0, 1.0)
            .unwrap_or_else(|e| panic!("N={n} L={l}: {e}"));
    }
}

#[test]
fn delayed_rejection_first_stage_is_mh() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = ShiftedGaussian { shift: 0.3, sd: 0.7 };
    let ys = vec![vec![0.4], vec![1.1]];
    let a = delayed_rejection_alphas(&t, &q, &ys).unwrap();
    let log_r = t.log_density(&ys[1]) + q.log_density(&ys[0], &[&ys[1]])
        - t.log_density(&ys[0])
        - q.log_density(&ys[1], &[&ys[0]]);
    assert!((a[0] - log_r.exp().min(1.0)).abs() < 1e-15);
}

#[test]
fn delayed_rejection_rejects_path_dependent_kernels() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let mut rng = RngStream::new(0, 0);
    let q = HistoryMeanGaussian { sd: 1.0 };
    assert!(delayed_rejection_step(&t, &[0.0], &q, 2, &mut rng).is_err());
}

#[test]
fn delayed_rejection_matches_sequential_proposals_in_law() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 3.0 };
    let cfg = SpMhConfig::fixed(3, 1).unwrap();
    let mut r1 = RngStream::new(31, 0);
    let mut r2 = RngStream::new(32, 0);
    let n = 100_000;
    let a = first_coords(&chain(n, 0.0, |x| {
        delayed_rejection_step(&t, x, &q, 3, &mut r1).unwrap().0
    }));
    let b = first_coords(&chain(n, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut r2).unwrap().0));
    let k = ((n as f64 / ess(&a).min(ess(&b))).ceil() as usize).max(1);
    let ks = ks_two_sample(&thin(&a, k), &thin(&b, k));
    assert!(ks.p_value > 0.01, "{ks:?}");
}

/// `c_k = π(y_k)Π q(y_{j-1}|y_j) / (π(y_0)Π q(y_j|y_{j-1}))`, computed
/// directly.
fn forward_ratios(t: &dyn Target, q: &dyn ProposalKernel, ys: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut log_c = -t.log_density(&ys[0]);
    for k in 1..ys.len() {
        log_c += q.log_density(&ys[k - 1], &[&ys[k]]) - q.log_density(&ys[k], &[&ys[k - 1]]);
        out.push((log_c + t.log_density(&ys[k])).exp());
    }
    out
}

fn identity_gap(seed: u64, n: usize, q: &dyn ProposalKernel) -> f64 {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let mut ys = vec![vec![rng.normal()]];
    for _ in 0..n {
        let y = q.sample(&[ys.last().unwrap()], &mut rng);
        ys.push(y);
    }
    let alphas = delayed_rejection_alphas(&t, q, &ys).unwrap();
    let lhs: f64 = alphas.iter().map(|a| 1.0 - a).product();
    let c = forward_ratios(&t, q, &ys);
    let rhs = 1.0 - c.iter().cloned().fold(0.0, f64::max).min(1.0);
    (lhs - rhs).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rejection_probability_identity(seed in any::<u64>(), n in 1usize..=10, sd in 0.3f64..3.0) {
        let gap = identity_gap(seed, n, &GaussianRandomWalk { sd });
        prop_assert!(gap < 1e-12, "gap {:e}", gap);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rejection_probability_identity_asymmetric(seed in any::<u64>(), n in 1usize..=8) {
        let gap = identity_gap(seed, n, &ShiftedGaussian { shift: 0.4, sd: 1.2 });
        prop_assert!(gap < 1e-12, "gap {:e}", gap);
    }
}

#[test]
fn more_proposals_move_more_often() {
    let t = AnisotropicGaussian::standard(1).unwrap();
    let q = GaussianRandomWalk { sd: 2.4 };
    let n = 100_000;
    let frac = |nprop: usize| {
        let cfg = SpMhConfig::fixed(nprop, 1).unwrap();
        let mut rng = RngStream::new(50, 0);
        common::move_fraction(&chain(n, 0.0, |x| sp_mh_step(&t, x, &q, &cfg, &mut rng).unwrap().0))
    };
    let (f1, f5) = (frac(1), frac(5));
    let se = (f1 * (1.0 - f1) / n as f64).sqrt();
    assert!(f5 >= f1 - 3.0 * se, "{f5} < {f1}");
}
