//! Adaptive random-walk Metropolis with a two-component Gaussian mixture
//! proposal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{symmetrize, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Weight of the adapted component once adaptation is active.
    pub adapt_weight: f64,
    /// History length below which only the fixed component is used.
    pub warmup: usize,
    /// Standard deviation scale of the fixed component, divided by √d.
    pub fixed_scale: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            adapt_weight: 0.95,
            warmup: 100,
            fixed_scale: 0.1,
        }
    }
}

/// Running mean and covariance of the chain history (Welford).
#[derive(Debug, Clone)]
pub struct AdaptiveMetropolis {
    cfg: AdaptiveConfig,
    dim: usize,
    count: usize,
    mean: Vector,
    m2: Mat,
}

impl AdaptiveMetropolis {
    pub fn new(dim: usize, cfg: AdaptiveConfig) -> Self {
        AdaptiveMetropolis {
            cfg,
            dim,
            count: 0,
            mean: Vector::zeros(dim),
            m2: Mat::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn history_len(&self) -> usize {
        self.count
    }

    pub fn record(&mut self, x: &Vector) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn empirical_cov(&self) -> Option<Mat> {
        if self.count < 2 {
            return None;
        }
        Some(symmetrize(&(&self.m2 / (self.count - 1) as f64)))
    }

    fn fixed_sd(&self) -> f64 {
        self.cfg.fixed_scale / (self.dim as f64).sqrt()
    }

    /// Cholesky factor of the adapted component, or `None` while warming
    /// up or when the empirical covariance is degenerate.
    fn adapted_factor(&self) -> Option<Mat> {
        if self.count < self.cfg.warmup {
            return None;
        }
        let cov = self.empirical_cov()? * (2.38 * 2.38 / self.dim as f64);
        if cov.iter().any(|v| !v.is_finite()) || cov.diagonal().iter().any(|&v| v <= 0.0) {
            return None;
        }
        let max_diag = cov.diagonal().max();
        let chol = cov.clone().cholesky()?;
        let l = chol.unpack();
        if l.diagonal().iter().any(|&v| v * v < 1e-12 * max_diag) {
            return None;
        }
        Some(l)
    }

    pub fn uses_adapted(&self) -> bool {
        self.adapted_factor().is_some()
    }

    /// Draws from the mixture centred at `current`. The mixture is
    /// symmetric in (current, proposal), so it cancels in the MH ratio.
    pub fn propose<R: Rng + ?Sized>(&self, current: &Vector, rng: &mut R) -> Vector {
        let g = Vector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
        match self.adapted_factor() {
            Some(l) if rng.random::<f64>() < self.cfg.adapt_weight => current + l * g,
            _ => current + g * self.fixed_sd(),
        }
    }

    /// Log density of the current proposal kernel at `to` given `from`.
    pub fn log_proposal_density(&self, from: &Vector, to: &Vector) -> f64 {
        let d = self.dim as f64;
        let diff = to - from;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let s = self.fixed_sd();
        let fixed = -0.5 * d * ln2pi - d * s.ln() - 0.5 * diff.norm_squared() / (s * s);
        match self.adapted_factor() {
            None => fixed,
            Some(l) => {
                let y = l
                    .solve_lower_triangular(&diff)
                    .expect("cholesky factor has a positive diagonal");
                let log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
                let adapted = -0.5 * d * ln2pi - log_det - 0.5 * y.norm_squared();
                let w = self.cfg.adapt_weight;
                let a = w.ln() + adapted;
                let b = (1.0 - w).ln() + fixed;
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
        }
    }

    /// One Metropolis step on `target`, with `current_logp` its value at
    /// `current`. Target errors count as a rejection. The new state is
    /// recorded in the history.
    pub fn step<R, F>(&mut self, current: &Vector, current_logp: f64, target: F, rng: &mut R) -> (Vector, f64, bool)
    where
        R: Rng + ?Sized,
        F: FnOnce(&Vector) -> Result<f64>,
    {
        let proposal = self.propose(current, rng);
        let logp = target(&proposal).unwrap_or(f64::NEG_INFINITY);
        let (next, next_logp, accepted) = if mh_accept(logp - current_logp, rng) {
            (proposal, logp, true)
        } else {
            (current.clone(), current_logp, false)
        };
        self.record(&next);
        (next, next_logp, accepted)
    }
}

/// Metropolis–Hastings decision on a log ratio. A ratio ≥ 0 accepts
/// without consuming randomness; NaN rejects.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}
