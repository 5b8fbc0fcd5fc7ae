//! Sequential-proposal Markov chain Monte Carlo.
//!
//! Every sampler in this crate draws a single uniform `Λ` per iteration and
//! judges a chain of candidates against it in order. The modules are:
//!
//! * [`rng`], [`mass`], [`target`]: shared plumbing (streams, the velocity
//!   covariance `C`, the density trait)
//! * [`targets`]: built-in densities
//! * [`spmh`]: random-kernel samplers and the delayed-rejection oracle
//! * [`detkernel`]: the generic deterministic-kernel sampler
//! * [`hmc`], [`nuts`], [`bps`]: concrete deterministic-kernel samplers
//! * [`diagnostics`]: ESS, traces, summaries
//! * [`chain`]: an adaptive driver that runs any of the above for many iterations

pub mod bps;
pub mod chain;
pub mod detkernel;
pub mod diagnostics;
pub mod error;
pub mod hmc;
pub mod mass;
pub mod nuts;
pub mod rng;
pub mod spmh;
pub mod target;
pub mod targets;

pub use error::{Error, Result};
pub use mass::MassMatrix;
pub use rng::RngStream;
pub use target::{PhaseState, Target};
