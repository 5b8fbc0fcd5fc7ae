//! Unnormalized target densities and the position/velocity state.

use crate::error::{Error, Result};

/// An unnormalized density `π` on `R^d`, evaluated in log space.
///
/// `log_density` must never return NaN. Points outside the support return
/// `-inf`.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes `∇ log π(x)` into `out`.
    fn grad_log_density(&self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::GradientUnavailable)
    }

    fn has_gradient(&self) -> bool {
        false
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).grad_log_density(x, out)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
}

impl<T: Target + ?Sized> Target for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).grad_log_density(x, out)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
}

/// Position `x` and velocity `v` of the simulated particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl PhaseState {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(position.len(), velocity.len())?;
        Ok(PhaseState { position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|a| a.is_finite())
    }
}

/// Central-difference gradient with step `1e-5·(1+|x_i|)`.
pub fn finite_difference_gradient(target: &dyn Target, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * (1.0 + x[i].abs());
            p[i] = x[i] + h;
            let up = target.log_density(&p);
            p[i] = x[i] - h;
            let down = target.log_density(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative disagreement between the analytic gradient and central
/// differences at `x`, measured as `|g - fd| / max(1, |g|)`.
pub fn gradient_check(target: &dyn Target, x: &[f64]) -> Result<f64> {
    let mut g = vec![0.0; x.len()];
    target.grad_log_density(x, &mut g)?;
    let fd = finite_difference_gradient(target, x);
    Ok(g.iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}
