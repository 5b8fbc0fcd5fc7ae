//! The velocity covariance `C` and the geometry it induces.
//!
//! `‖v‖_C = sqrt(vᵀ C⁻¹ v)`, `⟨u, w⟩_C = uᵀ C⁻¹ w`. Velocities are drawn from
//! `N(0, C)` and the leapfrog kick is scaled by `C`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
enum Form {
    Identity,
    Diagonal {
        var: Vec<f64>,
        inv: Vec<f64>,
        sd: Vec<f64>,
    },
    Dense {
        cov: DMatrix<f64>,
        // lower Cholesky factor, C = L Lᵀ
        l: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct MassMatrix {
    d: usize,
    form: Form,
}

impl MassMatrix {
    pub fn identity(d: usize) -> Self {
        MassMatrix {
            d,
            form: Form::Identity,
        }
    }

    pub fn diagonal(var: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = var.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidVariance(bad));
        }
        let inv = var.iter().map(|v| 1.0 / v).collect();
        let sd = var.iter().map(|v| v.sqrt()).collect();
        Ok(MassMatrix {
            d: var.len(),
            form: Form::Diagonal { var, inv, sd },
        })
    }

    /// Dense SPD covariance given as rows. Factored once here.
    pub fn dense(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            check_dim(d, r.len())?;
        }
        let cov = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = nalgebra::Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        Ok(MassMatrix {
            d,
            form: Form::Dense { cov, l },
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.form, Form::Identity)
    }

    /// Diagonal of `C`.
    pub fn variances(&self) -> Vec<f64> {
        match &self.form {
            Form::Identity => vec![1.0; self.d],
            Form::Diagonal { var, .. } => var.clone(),
            Form::Dense { cov, .. } => (0..self.d).map(|i| cov[(i, i)]).collect(),
        }
    }

    fn whiten(&self, v: &[f64]) -> DVector<f64> {
        match &self.form {
            Form::Dense { l, .. } => l
                .solve_lower_triangular(&DVector::from_column_slice(v))
                .expect("Cholesky factor has a positive diagonal"),
            _ => unreachable!("whiten is only used for dense forms"),
        }
    }

    /// `uᵀ C⁻¹ w`, without dimension checks.
    pub fn inner_unchecked(&self, u: &[f64], w: &[f64]) -> f64 {
        match &self.form {
            Form::Identity => u.iter().zip(w).map(|(a, b)| a * b).sum(),
            Form::Diagonal { inv, .. } => u
                .iter()
                .zip(w)
                .zip(inv)
                .map(|((a, b), c)| a * b * c)
                .sum(),
            Form::Dense { .. } => self.whiten(u).dot(&self.whiten(w)),
        }
    }

    /// `vᵀ C⁻¹ v`, without dimension checks.
    pub fn quad_unchecked(&self, v: &[f64]) -> f64 {
        match &self.form {
            Form::Identity => v.iter().map(|a| a * a).sum(),
            Form::Diagonal { inv, .. } => v.iter().zip(inv).map(|(a, c)| a * a * c).sum(),
            Form::Dense { .. } => self.whiten(v).norm_squared(),
        }
    }

    pub fn inner(&self, u: &[f64], w: &[f64]) -> Result<f64> {
        check_dim(self.d, u.len())?;
        check_dim(self.d, w.len())?;
        Ok(self.inner_unchecked(u, w))
    }

    pub fn quad(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.d, v.len())?;
        Ok(self.quad_unchecked(v))
    }

    /// `v += scale · C g`.
    pub fn kick(&self, v: &mut [f64], g: &[f64], scale: f64) {
        match &self.form {
            Form::Identity => {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi += scale * gi;
                }
            }
            Form::Diagonal { var, .. } => {
                for ((vi, gi), c) in v.iter_mut().zip(g).zip(var) {
                    *vi += scale * c * gi;
                }
            }
            Form::Dense { cov, .. } => {
                let cg = cov * DVector::from_column_slice(g);
                for (vi, ci) in v.iter_mut().zip(cg.iter()) {
                    *vi += scale * ci;
                }
            }
        }
    }

    /// A draw from `N(0, C)`.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let z = rng.normal_vec(self.d);
        match &self.form {
            Form::Identity => z,
            Form::Diagonal { sd, .. } => z.iter().zip(sd).map(|(a, s)| a * s).collect(),
            Form::Dense { l, .. } => (l * DVector::from_vec(z)).as_slice().to_vec(),
        }
    }

    /// Log density of `N(0, C)` up to a constant: `-½‖v‖²_C`.
    pub fn log_velocity_density(&self, v: &[f64]) -> f64 {
        -0.5 * self.quad_unchecked(v)
    }
}

/// `‖v‖_C`.
pub fn c_norm(v: &[f64], c: &MassMatrix) -> Result<f64> {
    Ok(c.quad(v)?.max(0.0).sqrt())
}

/// Cosine of the angle between `x` and `x2` in the `C` metric.
pub fn cos_angle(x: &[f64], x2: &[f64], c: &MassMatrix) -> Result<f64> {
    let num = c.inner(x, x2)?;
    let nx = c.quad_unchecked(x);
    let ny = c.quad_unchecked(x2);
    if nx <= 0.0 || ny <= 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = num / (nx.sqrt() * ny.sqrt());
    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&cos) {
        return Err(Error::CosineOutOfRange(cos));
    }
    Ok(cos.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_norm_examples() {
        let i2 = MassMatrix::identity(2);
        assert_eq!(c_norm(&[3.0, 4.0], &i2).unwrap(), 5.0);
        let c = MassMatrix::diagonal(vec![4.0, 1.0]).unwrap();
        assert!((c_norm(&[2.0, 0.0], &c).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c_norm(&[0.0, 0.0], &c).unwrap(), 0.0);
    }

    #[test]
    fn c_norm_dimension_mismatch() {
        let c = MassMatrix::identity(3);
        assert!(matches!(
            c_norm(&[1.0, 2.0], &c),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn cos_angle_examples() {
        let i2 = MassMatrix::identity(2);
        assert_eq!(cos_angle(&[1.0, 0.0], &[1.0, 0.0], &i2).unwrap(), 1.0);
        assert_eq!(cos_angle(&[1.0, 0.0], &[0.0, 1.0], &i2).unwrap(), 0.0);
        let c = MassMatrix::diagonal(vec![4.0, 1.0]).unwrap();
        let got = cos_angle(&[1.0, 0.0], &[1.0, 1.0], &c).unwrap();
        // (1/4) / ((1/2)(sqrt(5)/2))
        let want = 0.25 / (0.5 * (5.0f64.sqrt() / 2.0));
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.4472).abs() < 1e-4);
    }

    #[test]
    fn cos_angle_zero_vector() {
        let i2 = MassMatrix::identity(2);
        assert!(matches!(
            cos_angle(&[0.0, 0.0], &[1.0, 0.0], &i2),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn dense_rejects_non_spd() {
        assert!(MassMatrix::dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(MassMatrix::dense(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(MassMatrix::diagonal(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn parallel_vectors_clamp() {
        let c = MassMatrix::dense(&[vec![2.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let x = [0.1, 0.3];
        let y = [0.3, 0.9];
        let cos = cos_angle(&x, &y, &c).unwrap();
        assert!(cos <= 1.0 && cos > 1.0 - 1e-12);
    }
}
