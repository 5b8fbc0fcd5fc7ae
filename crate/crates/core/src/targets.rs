//! Built-in targets: an axis-aligned Gaussian, the German credit logistic
//! regression posterior and the four-ring density used with the bouncy
//! particle sampler.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::target::Target;

/// Zero-mean Gaussian with independent coordinates.
#[derive(Debug, Clone)]
pub struct AnisotropicGaussian {
    sd: Vec<f64>,
    inv_var: Vec<f64>,
}

impl AnisotropicGaussian {
    pub fn new(sd: Vec<f64>) -> Result<Self> {
        if sd.is_empty() {
            return Err(Error::InvalidConfig("Gaussian target needs d >= 1".into()));
        }
        if let Some(&bad) = sd.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidVariance(bad));
        }
        let inv_var = sd.iter().map(|s| 1.0 / (s * s)).collect();
        Ok(AnisotropicGaussian { sd, inv_var })
    }

    pub fn standard(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    /// Standard deviations spaced evenly from `lo` to `hi` inclusive.
    pub fn linspace(d: usize, lo: f64, hi: f64) -> Result<Self> {
        let sd = if d == 1 {
            vec![lo]
        } else {
            (0..d)
                .map(|i| lo + (hi - lo) * i as f64 / (d - 1) as f64)
                .collect()
        };
        Self::new(sd)
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }
}

impl Target for AnisotropicGaussian {
    fn dim(&self) -> usize {
        self.sd.len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * x
            .iter()
            .zip(&self.inv_var)
            .map(|(a, w)| a * a * w)
            .sum::<f64>()
    }

    fn grad_log_density(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for ((o, a), w) in out.iter_mut().zip(x).zip(&self.inv_var) {
            *o = -a * w;
        }
        Ok(())
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub const GERMAN_ROWS: usize = 1000;
pub const GERMAN_ATTRIBUTES: usize = 24;

/// Logistic regression posterior with independent `N(0, 100)` priors on the
/// intercept and the coefficients. Parameters are ordered `(α, β₁..β_p)`.
#[derive(Debug, Clone)]
pub struct GermanCreditLogit {
    p: usize,
    // row-major covariates
    x: Vec<f64>,
    y: Vec<f64>,
}

impl GermanCreditLogit {
    /// Builds the posterior from covariate rows and ±1 labels.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        check_dim(rows.len(), labels.len())?;
        let p = rows.first().map_or(0, |r| r.len());
        let mut x = Vec::with_capacity(rows.len() * p);
        for r in &rows {
            check_dim(p, r.len())?;
            x.extend_from_slice(r);
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1.0 && **l != -1.0) {
            return Err(Error::InvalidConfig(format!("label {bad} is not +1 or -1")));
        }
        Ok(GermanCreditLogit { p, x, y: labels })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        let row = &self.x[i * self.p..(i + 1) * self.p];
        theta[0]
            + row
                .iter()
                .zip(&theta[1..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl Target for GermanCreditLogit {
    fn dim(&self) -> usize {
        self.p + 1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let lik: f64 = (0..self.y.len())
            .map(|i| -softplus(-self.y[i] * self.eta(i, theta)))
            .sum();
        let prior = -theta.iter().map(|t| t * t).sum::<f64>() / 200.0;
        lik + prior
    }

    fn grad_log_density(&self, theta: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = -t / 100.0;
        }
        for i in 0..self.y.len() {
            let yi = self.y[i];
            let w = yi * sigmoid(-yi * self.eta(i, theta));
            out[0] += w;
            let row = &self.x[i * self.p..(i + 1) * self.p];
            for (o, a) in out[1..].iter_mut().zip(row) {
                *o += w * a;
            }
        }
        Ok(())
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

/// Reads the numeric German credit table: 1000 whitespace-separated rows of
/// 24 attributes followed by a label in {1, 2}. Label 1 maps to +1 and 2
/// to -1. Covariates are used as given.
pub fn load_german_credit(path: &Path) -> Result<GermanCreditLogit> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: shown.clone(),
        source,
    })?;
    let perr = |row: usize, msg: String| Error::Parse {
        path: shown.clone(),
        row,
        msg,
    };
    let mut rows = Vec::with_capacity(GERMAN_ROWS);
    let mut labels = Vec::with_capacity(GERMAN_ROWS);
    for (k, line) in text.lines().enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != GERMAN_ATTRIBUTES + 1 {
            return Err(perr(
                row,
                format!(
                    "expected {} columns, found {}",
                    GERMAN_ATTRIBUTES + 1,
                    cells.len()
                ),
            ));
        }
        let mut vals = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| perr(row, format!("column {}: not a number: {cell:?}", c + 1)))?;
            if !v.is_finite() {
                return Err(perr(row, format!("column {}: not finite", c + 1)));
            }
            vals.push(v);
        }
        let label = match vals.pop() {
            Some(v) if v == 1.0 => 1.0,
            Some(v) if v == 2.0 => -1.0,
            Some(v) => return Err(perr(row, format!("label must be 1 or 2, found {v}"))),
            None => unreachable!(),
        };
        rows.push(vals);
        labels.push(label);
    }
    if rows.len() != GERMAN_ROWS {
        return Err(perr(
            rows.len(),
            format!("expected {GERMAN_ROWS} rows, found {}", rows.len()),
        ));
    }
    GermanCreditLogit::from_rows(rows, labels)
}

/// Four open rings in the unit square.
///
/// Each ring is a Gaussian shell `exp(-(‖p-c‖-r)²/(2s²))` cut by a smooth
/// angular mask that removes an arc of `2·half_open` radians facing the
/// nearest corner of the square. A constant floor keeps the log density
/// finite. Outside the square a steep quadratic penalty is subtracted,
/// after any inversion, so both variants vanish there.
#[derive(Debug, Clone)]
pub struct FourCDensity {
    pub centers: [[f64; 2]; 4],
    pub radius: f64,
    pub shell: f64,
    pub half_open: f64,
    /// Angular width of the mask's transition, in radians.
    pub mask_width: f64,
    pub floor: f64,
    /// Scale of the penalty outside the unit square.
    pub wall: f64,
    pub inverted: bool,
}

impl Default for FourCDensity {
    fn default() -> Self {
        FourCDensity {
            centers: [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]],
            radius: 0.17,
            shell: 0.013,
            half_open: 30f64.to_radians(),
            mask_width: 1.5f64.to_radians(),
            floor: 1e-16,
            wall: 0.01,
            inverted: false,
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

impl FourCDensity {
    pub fn inverted() -> Self {
        FourCDensity {
            inverted: true,
            ..Default::default()
        }
    }

    /// Angle from ring `k`'s center toward its nearest square corner.
    pub fn opening_angle(&self, k: usize) -> f64 {
        let c = self.centers[k];
        let corner = [c[0].round().clamp(0.0, 1.0), c[1].round().clamp(0.0, 1.0)];
        (corner[1] - c[1]).atan2(corner[0] - c[0])
    }

    /// Mixture of masked shells, without floor, inversion or wall.
    pub fn shells(&self, p: &[f64]) -> f64 {
        (0..4).map(|k| self.ring_term(k, p, None)).sum()
    }

    fn ring_term(&self, k: usize, p: &[f64], grad: Option<&mut [f64; 2]>) -> f64 {
        let c = self.centers[k];
        let u = [p[0] - c[0], p[1] - c[1]];
        let rho = u[0].hypot(u[1]);
        let z = (rho - self.radius) / self.shell;
        let g = (-0.5 * z * z).exp();
        let signed = wrap_angle(u[1].atan2(u[0]) - self.opening_angle(k));
        let m = 1.0 / (1.0 + (-(signed.abs() - self.half_open) / self.mask_width).exp());
        let term = g * m;
        if let Some(out) = grad {
            if rho > 1e-300 && term > 0.0 {
                let dg = -z / self.shell / rho;
                let dm = (1.0 - m) / self.mask_width * signed.signum() / (rho * rho);
                out[0] += term * (dg * u[0] + dm * -u[1]);
                out[1] += term * (dg * u[1] + dm * u[0]);
            }
        }
        term
    }

    fn outside(&self, p: &[f64]) -> [f64; 2] {
        [
            p[0] - p[0].clamp(0.0, 1.0),
            p[1] - p[1].clamp(0.0, 1.0),
        ]
    }

    pub fn log_density_at(&self, p: &[f64]) -> f64 {
        let base = (self.shells(p) + self.floor).ln();
        let o = self.outside(p);
        let wall = 0.5 * (o[0] * o[0] + o[1] * o[1]) / (self.wall * self.wall);
        let signed = if self.inverted { -base } else { base };
        signed - wall
    }

    /// Nearest ring to `p` when the mixture there is at least half its
    /// maximum, otherwise `None`.
    pub fn component(&self, p: &[f64]) -> Option<usize> {
        if self.shells(p) < 0.5 {
            return None;
        }
        let d2 = |k: usize| {
            let c = self.centers[k];
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
        };
        (0..4).min_by(|&a, &b| d2(a).total_cmp(&d2(b)))
    }
}

/// Quadrant of the unit square containing `p`, numbered like the ring
/// centers: 0 lower left, 1 lower right, 2 upper left, 3 upper right.
pub fn quadrant(p: &[f64]) -> usize {
    usize::from(p[0] >= 0.5) + 2 * usize::from(p[1] >= 0.5)
}

/// Log density of the four-ring target at `p`.
pub fn four_c_log_density(p: &[f64], cfg: &FourCDensity) -> f64 {
    cfg.log_density_at(p)
}

impl Target for FourCDensity {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, p: &[f64]) -> f64 {
        self.log_density_at(p)
    }

    fn grad_log_density(&self, p: &[f64], out: &mut [f64]) -> Result<()> {
        let mut g = [0.0; 2];
        let mut total = self.floor;
        for k in 0..4 {
            total += self.ring_term(k, p, Some(&mut g));
        }
        let sign = if self.inverted { -1.0 } else { 1.0 };
        let o = self.outside(p);
        let w2 = self.wall * self.wall;
        out[0] = sign * g[0] / total - o[0] / w2;
        out[1] = sign * g[1] / total - o[1] / w2;
        Ok(())
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        let z = 3.7f64;
        assert!((softplus(z) - (1.0 + z.exp()).ln()).abs() < 1e-14);
        assert!((softplus(-z) - (1.0 + (-z).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn linspace_endpoints() {
        let g = AnisotropicGaussian::linspace(100, 0.01, 1.0).unwrap();
        assert_eq!(g.sd()[0], 0.01);
        assert!((g.sd()[99] - 1.0).abs() < 1e-15);
        assert!((g.sd()[1] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn four_c_landmarks() {
        let f = FourCDensity::default();
        let ring = [0.25 + 0.17, 0.25];
        let center = [0.25, 0.25];
        let on = f.log_density_at(&ring);
        assert!(on > -0.01, "{on}");
        assert!((f.log_density_at(&center) - f.floor.ln()).abs() < 1e-3);
        let inv = FourCDensity::inverted();
        assert!(inv.log_density_at(&ring) < 0.01);
        assert!(inv.log_density_at(&center) > 18.0);
        // the opening faces the corner
        let gap = [0.25 - 0.17 / 2f64.sqrt(), 0.25 - 0.17 / 2f64.sqrt()];
        assert!(f.log_density_at(&gap) < -15.0);
    }
}
