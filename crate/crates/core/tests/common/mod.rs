#![allow(dead_code)]

use seqmc::diagnostics::{ess, moments};
use seqmc::mass::MassMatrix;
use seqmc::RngStream;

/// Random SPD matrix `A Aᵀ + d·0.1 I` as rows.
pub fn random_spd(d: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..d).map(|_| rng.normal_vec(d)).collect();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            c[i][j] = (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>();
        }
        c[i][i] += 0.1 * d as f64;
    }
    c
}

pub fn random_mass(d: usize, rng: &mut RngStream) -> MassMatrix {
    MassMatrix::dense(&random_spd(d, rng)).unwrap()
}

/// Mean within 3 SE of `mean` and variance within 3 SE of `var`, with
/// standard errors from the ESS of the series and of its squares.
pub fn moments_ok(series: &[f64], mean: f64, var: f64) -> Result<(), String> {
    let m = moments(series);
    let dm = (m.mean - mean).abs();
    let dv = (m.variance - var).abs();
    if dm > 3.0 * m.mean_se || dv > 3.0 * m.variance_se {
        Err(format!(
            "mean {:.4} ± {:.4}, variance {:.4} ± {:.4} (ess {:.0})",
            m.mean,
            m.mean_se,
            m.variance,
            m.variance_se,
            ess(series)
        ))
    } else {
        Ok(())
    }
}

pub fn move_fraction(xs: &[Vec<f64>]) -> f64 {
    let moves = xs.windows(2).filter(|w| w[0] != w[1]).count();
    moves as f64 / (xs.len() - 1) as f64
}

pub fn std_normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// `|det|` of the central-difference Jacobian of `map` at `z`.
pub fn fd_jacobian_det(map: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> f64 {
    let n = z.len();
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    let mut p = z.to_vec();
    for k in 0..n {
        p[k] = z[k] + h;
        let up = map(&p);
        p[k] = z[k] - h;
        let down = map(&p);
        p[k] = z[k];
        for i in 0..n {
            jac[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs()
}

pub fn split_phase(z: &[f64]) -> seqmc::PhaseState {
    let d = z.len() / 2;
    seqmc::PhaseState {
        position: z[..d].to_vec(),
        velocity: z[d..].to_vec(),
    }
}

pub fn join_phase(s: &seqmc::PhaseState) -> Vec<f64> {
    s.position.iter().chain(&s.velocity).copied().collect()
}
