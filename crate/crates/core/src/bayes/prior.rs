use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_spd, cholesky, serde_mat, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaPriorKind {
    /// Improper uniform prior on the free entries.
    #[default]
    Flat,
    /// `log p(β) = −½·tr(Q⁻¹(β − β̄)ᵀH(β − β̄))`.
    MatrixNormal,
}

/// Conjugate hyperparameters: `Σ ~ IW(S, h)`, `B | Σ ~ MN(P, A⁻¹, Σ)` and
/// an optional matrix-normal prior on β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(with = "serde_mat")]
    pub beta_bar: Mat,
    #[serde(with = "serde_mat")]
    pub q_prior: Mat,
    #[serde(with = "serde_mat")]
    pub h_mat: Mat,
    #[serde(with = "serde_mat")]
    pub s_mat: Mat,
    pub h_dof: f64,
    #[serde(with = "serde_mat")]
    pub p_mat: Mat,
    #[serde(with = "serde_mat")]
    pub a_mat: Mat,
    pub beta_prior: BetaPriorKind,
}

impl PriorSpec {
    /// `S = 0.01·I`, `h = n + 2`, `A = 0.01·I`, `P = 0`, flat β prior.
    pub fn vague(n: usize, k: usize, r: usize) -> Self {
        let mut beta_bar = Mat::zeros(n, r);
        beta_bar.rows_mut(0, r).fill_with_identity();
        PriorSpec {
            beta_bar,
            q_prior: Mat::identity(r, r),
            h_mat: Mat::identity(n, n),
            s_mat: Mat::identity(n, n) * 0.01,
            h_dof: n as f64 + 2.0,
            p_mat: Mat::zeros(k, n),
            a_mat: Mat::identity(k, k) * 0.01,
            beta_prior: BetaPriorKind::Flat,
        }
    }

    pub fn n(&self) -> usize {
        self.s_mat.nrows()
    }

    pub fn k(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn validate(&self, n: usize, k: usize, r: usize) -> Result<()> {
        let shapes = [
            ("beta_bar", self.beta_bar.shape(), (n, r)),
            ("q_prior", self.q_prior.shape(), (r, r)),
            ("h_mat", self.h_mat.shape(), (n, n)),
            ("s_mat", self.s_mat.shape(), (n, n)),
            ("p_mat", self.p_mat.shape(), (k, n)),
            ("a_mat", self.a_mat.shape(), (k, k)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::shape(format!("{name} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1)));
            }
        }
        for (name, m) in [("q_prior", &self.q_prior), ("h_mat", &self.h_mat), ("s_mat", &self.s_mat), ("a_mat", &self.a_mat)] {
            check_spd(m, name)?;
        }
        if !(self.h_dof > n as f64 - 1.0) {
            return Err(Error::domain(format!("prior dof h={} must exceed n-1", self.h_dof)));
        }
        Ok(())
    }

    /// Log prior density of β up to a constant.
    pub fn beta_log_prior(&self, beta: &Mat) -> Result<f64> {
        match self.beta_prior {
            BetaPriorKind::Flat => Ok(0.0),
            BetaPriorKind::MatrixNormal => {
                let dev = beta - &self.beta_bar;
                let inner = dev.transpose() * &self.h_mat * &dev;
                let q = cholesky(&self.q_prior, "q_prior")?;
                Ok(-0.5 * q.solve(&inner).trace())
            }
        }
    }
}
