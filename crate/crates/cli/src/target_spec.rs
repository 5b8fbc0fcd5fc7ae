use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use seqmc::targets::{load_german_credit, AnisotropicGaussian, FourCDensity};
use seqmc::Target;

use crate::Usage;

pub const GERMAN_FILE: &str = "german.data-numeric";

/// A target named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpec {
    /// `stdnorm<d>`: N(0, I_d).
    StdNorm(usize),
    /// `mvnorm<d>`: independent normals with standard deviations evenly
    /// spaced from 0.01 to 1.
    MvNorm(usize),
    /// Bayesian logistic regression on the German credit data.
    Logit,
    FourC,
    FourCInv,
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::StdNorm(d) => write!(f, "stdnorm{d}"),
            TargetSpec::MvNorm(d) => write!(f, "mvnorm{d}"),
            TargetSpec::Logit => f.write_str("logit"),
            TargetSpec::FourC => f.write_str("fourc"),
            TargetSpec::FourCInv => f.write_str("fourc-inv"),
        }
    }
}

impl FromStr for TargetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let dim = |rest: &str| rest.parse::<usize>().ok().filter(|&d| d > 0);
        let parsed = match s {
            "logit" => Some(TargetSpec::Logit),
            "fourc" => Some(TargetSpec::FourC),
            "fourc-inv" => Some(TargetSpec::FourCInv),
            _ => {
                if let Some(d) = s.strip_prefix("stdnorm").and_then(dim) {
                    Some(TargetSpec::StdNorm(d))
                } else if let Some(d) = s.strip_prefix("mvnorm").and_then(dim) {
                    Some(TargetSpec::MvNorm(d))
                } else {
                    None
                }
            }
        };
        parsed.ok_or_else(|| {
            format!("unknown target {s:?}; valid: stdnorm<d>, mvnorm<d>, logit, fourc, fourc-inv")
        })
    }
}

impl TargetSpec {
    /// Path of the German credit data, which must exist.
    pub fn german_path(data_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = data_dir.join(GERMAN_FILE);
        if !path.is_file() {
            return Err(Usage(format!(
                "the logit target needs the German credit data at {}",
                path.display()
            ))
            .into());
        }
        Ok(path)
    }

    pub fn build(self, data_dir: &Path) -> anyhow::Result<Box<dyn Target>> {
        Ok(match self {
            TargetSpec::StdNorm(d) => Box::new(AnisotropicGaussian::standard(d)?),
            TargetSpec::MvNorm(d) => Box::new(AnisotropicGaussian::linspace(d, 0.01, 1.0)?),
            TargetSpec::Logit => Box::new(load_german_credit(&Self::german_path(data_dir)?)?),
            TargetSpec::FourC => Box::new(FourCDensity::default()),
            TargetSpec::FourCInv => Box::new(FourCDensity::inverted()),
        })
    }

    /// Settings overrides that make the target usable out of the box, as a
    /// JSON object of settings keys.
    pub fn default_overrides(self) -> serde_json::Value {
        match self {
            TargetSpec::FourC => serde_json::json!({
                "mass_diag": [0.01, 0.01],
                "init": [0.42, 0.25],
            }),
            TargetSpec::FourCInv => serde_json::json!({
                "mass_diag": [0.01, 0.01],
                "init": [0.25, 0.25],
            }),
            _ => serde_json::json!({}),
        }
    }
}
