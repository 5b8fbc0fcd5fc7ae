use seqmc::diagnostics::{
    autocorrelation, ess, kolmogorov_sf, ks_one_sample, ks_two_sample, moments, summarize, thin,
    ChainTrace, StepMeta,
};
use seqmc::RngStream;

fn ar1(rho: f64, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    let s = (1.0 - rho * rho).sqrt();
    let mut x = rng.normal();
    (0..m)
        .map(|_| {
            x = rho * x + s * rng.normal();
            x
        })
        .collect()
}

#[test]
fn ess_of_iid_is_about_m() {
    for seed in 0..5 {
        let xs = ar1(0.0, 100_000, seed);
        let r = ess(&xs) / xs.len() as f64;
        assert!((0.9..=1.1).contains(&r), "{r}");
    }
}

#[test]
fn ess_of_ar1_matches_the_integrated_time() {
    for seed in 0..5 {
        let xs = ar1(0.5, 100_000, seed);
        let r = ess(&xs) / xs.len() as f64;
        // τ = (1 + ρ) / (1 - ρ) = 3
        assert!((r * 3.0 - 1.0).abs() < 0.2, "{r}");
    }
}

#[test]
fn ess_edge_cases() {
    let alternating: Vec<f64> = (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let e = ess(&alternating);
    assert!(e > 10_000.0 && e.is_finite(), "{e}");
    assert_eq!(ess(&[2.5; 500]), 1.0);
    let xs = ar1(0.3, 5000, 9);
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 7.0).collect();
    assert!((ess(&xs) - ess(&ys)).abs() < 1e-9 * ess(&xs));
}

#[test]
fn autocorrelation_of_ar1() {
    let xs = ar1(0.5, 200_000, 3);
    let rho = autocorrelation(&xs);
    assert_eq!(rho[0], 1.0);
    for (k, r) in rho.iter().take(4).enumerate() {
        assert!((r - 0.5f64.powi(k as i32)).abs() < 0.01, "lag {k}: {r}");
    }
}

#[test]
fn moments_report_ess_based_errors() {
    let xs = ar1(0.5, 100_000, 4);
    let m = moments(&xs);
    assert!(m.mean.abs() < 3.0 * m.mean_se);
    assert!((m.variance - 1.0).abs() < 3.0 * m.variance_se);
    // independent draws would give roughly 1/√M; correlation inflates it by √3
    assert!((m.mean_se * (100_000f64 / 3.0).sqrt() - 1.0).abs() < 0.1);
}

fn trace_of(rows: &[Vec<f64>]) -> ChainTrace {
    let mut t = ChainTrace::new(rows[0].len());
    for r in rows {
        let meta = StepMeta {
            proposals_tried: 2,
            legs: 3,
            ..StepMeta::default()
        };
        t.push(r, meta).unwrap();
    }
    t
}

#[test]
fn summary_statistics() {
    let mut rng = RngStream::new(5, 0);
    let rows: Vec<Vec<f64>> = (0..20_200).map(|_| rng.normal_vec(3)).collect();
    let s = summarize(&trace_of(&rows), 200).unwrap();
    assert_eq!(s.iterations, 20_000);
    assert_eq!(s.ess_per_dim.len(), 3);
    assert!(s.min_ess <= s.mean_ess);
    assert!(s.min_ess > 0.9 * 20_000.0 && s.mean_ess < 1.1 * 20_000.0);
    assert_eq!(s.move_fraction, 1.0);
    assert_eq!((s.mean_legs, s.mean_proposals_tried), (3.0, 2.0));
    assert_eq!(s.divergence_count, 0);

    let still = trace_of(&vec![vec![1.0, 2.0]; 300]);
    let s = summarize(&still, 10).unwrap();
    assert_eq!(s.move_fraction, 0.0);
    assert_eq!(s.min_ess, 1.0);

    assert!(summarize(&still, 300).is_err());
    let mut t = ChainTrace::new(2);
    assert!(t.push(&[1.0], StepMeta::default()).is_err());
}

#[test]
fn ks_statistics() {
    assert_eq!(kolmogorov_sf(0.0), 1.0);
    assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
    assert!((kolmogorov_sf(1.0) - 0.27).abs() < 1e-3);
    let mut rng = RngStream::new(6, 0);
    let u: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
    assert!(ks_one_sample(&u, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
    let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
    assert!(ks_one_sample(&sq, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    let v: Vec<f64> = (0..3000).map(|_| rng.uniform()).collect();
    assert!(ks_two_sample(&u, &v).p_value > 0.01);
    assert!(ks_two_sample(&u, &sq).p_value < 1e-6);
    assert_eq!(thin(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![1.0, 3.0, 5.0]);
}
