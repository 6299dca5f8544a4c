use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Error-correction model `Δx_t = μ + αβᵀx_{t-1} + Σ Ψ_i Δx_{t-i} + ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarParams {
    #[serde(with = "crate::linalg::serde_vec")]
    pub mu: Vector,
    /// n×r adjustment speeds.
    #[serde(with = "crate::linalg::serde_mat")]
    pub alpha_adj: Mat,
    /// n×r cointegration vectors, top r×r block equal to the identity.
    #[serde(with = "crate::linalg::serde_mat")]
    pub beta_coint: Mat,
    /// p−1 lag matrices, each n×n.
    #[serde(with = "crate::linalg::serde_mats")]
    pub psi: Vec<Mat>,
    #[serde(with = "crate::linalg::serde_mat")]
    pub sigma: Mat,
    pub r: usize,
    pub p: usize,
}

impl CvarParams {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Number of regressors `1 + n(p−1) + r`.
    pub fn k(&self) -> usize {
        regressor_count(self.n(), self.p, self.r)
    }

    pub fn pi(&self) -> Mat {
        &self.alpha_adj * self.beta_coint.transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.r == 0 || self.r >= n {
            return Err(Error::Validation(format!("rank r={} must be in 1..{n}", self.r)));
        }
        if self.p == 0 {
            return Err(Error::Validation("lag order p must be at least 1".into()));
        }
        if self.alpha_adj.shape() != (n, self.r) || self.beta_coint.shape() != (n, self.r) {
            return Err(Error::shape(format!("alpha and beta must be {n}x{}", self.r)));
        }
        if self.psi.len() != self.p - 1 || self.psi.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::shape(format!("expected {} lag matrices of size {n}x{n}", self.p - 1)));
        }
        if self.sigma.shape() != (n, n) {
            return Err(Error::shape("sigma must be n×n"));
        }
        let top = self.beta_coint.rows(0, self.r);
        if (top - Mat::identity(self.r, self.r)).amax() > 1e-12 {
            return Err(Error::Validation("beta must have an identity top block".into()));
        }
        Ok(())
    }

    /// Free entries of β below the identity block, (n−r)×r.
    pub fn beta_free(&self) -> Mat {
        self.beta_coint.rows(self.r, self.n() - self.r).into_owned()
    }

    /// Regression coefficient matrix for `W = [1, Δx lags, Zβ]`, rows
    /// `[μᵀ; Ψ_1ᵀ; …; Ψ_{p−1}ᵀ; αᵀ]`.
    pub fn b_matrix(&self) -> Mat {
        let n = self.n();
        let mut b = Mat::zeros(self.k(), n);
        b.row_mut(0).copy_from(&self.mu.transpose());
        for (i, psi) in self.psi.iter().enumerate() {
            b.view_mut((1 + i * n, 0), (n, n)).copy_from(&psi.transpose());
        }
        b.view_mut((1 + n * (self.p - 1), 0), (self.r, n))
            .copy_from(&self.alpha_adj.transpose());
        b
    }

    /// Inverse of [`CvarParams::b_matrix`].
    pub fn from_b(b: &Mat, beta_coint: Mat, sigma: Mat, p: usize) -> Result<Self> {
        let n = b.ncols();
        let r = beta_coint.ncols();
        if b.nrows() != regressor_count(n, p, r) {
            return Err(Error::shape(format!(
                "B has {} rows, expected {}",
                b.nrows(),
                regressor_count(n, p, r)
            )));
        }
        let mu = b.row(0).transpose();
        let psi = (0..p - 1)
            .map(|i| b.rows(1 + i * n, n).transpose())
            .collect();
        let alpha_adj = b.rows(1 + n * (p - 1), r).transpose();
        Ok(CvarParams {
            mu,
            alpha_adj,
            beta_coint,
            psi,
            sigma,
            r,
            p,
        })
    }
}

pub fn regressor_count(n: usize, p: usize, r: usize) -> usize {
    1 + n * (p - 1) + r
}

/// `β = [I_r; beta_free]`.
pub fn assemble_beta(beta_free: &Mat) -> Mat {
    let r = beta_free.ncols();
    let n = r + beta_free.nrows();
    let mut beta = Mat::zeros(n, r);
    beta.rows_mut(0, r).fill_with_identity();
    beta.rows_mut(r, n - r).copy_from(beta_free);
    beta
}

/// Rescales `β` so its top r×r block is the identity and adjusts `α` so that
/// `αβᵀ` is unchanged.
pub fn normalize_beta(alpha: &Mat, beta: &Mat) -> Result<(Mat, Mat)> {
    let r = beta.ncols();
    let top = beta.rows(0, r).into_owned();
    let det = top.determinant();
    if !det.is_finite() || det.abs() < 1e-12 * beta.amax().max(1e-300).powi(r as i32) {
        return Err(Error::Estimation(
            "cointegration vectors have a singular leading block and cannot be normalized".into(),
        ));
    }
    let inv = top
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Estimation("singular leading block of beta".into()))?;
    let mut beta_n = beta * &inv;
    let alpha_n = alpha * top.transpose();
    beta_n.rows_mut(0, r).fill_with_identity();
    Ok((alpha_n, beta_n))
}
