//! Cointegrated VAR estimation with Gaussian intra-day noise and
//! alpha-stable noise at inter-day boundaries.
//!
//! Estimators: Johansen reduced-rank regression, a Gaussian conjugate
//! Gibbs baseline, an exact scale-mixture Gibbs sampler for symmetric
//! stable noise, and an adaptive MCMC-ABC sampler for skewed stable noise.

pub mod abc;
pub mod bayes;
pub mod cvar;
pub mod error;
pub mod linalg;
pub mod matvar;
pub mod rng;
pub mod stable;

pub use error::{Error, Result};
