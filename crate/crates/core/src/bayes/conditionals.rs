//! Full conditionals of the scale-mixture model.

use rand::Rng;

use crate::cvar::{ols, DesignSet};
use crate::error::{Error, Result};
use crate::linalg::{log_det_spd, regularize_spd, spd_inverse, symmetrize, Mat, Vector};
use crate::matvar::{
    apply_transform_rows, inverse_wishart_unchecked, sample_matrix_normal, MatrixNormalSpec, TransformSet,
};
use crate::stable::{positive_stable_unchecked, StableParams};

use super::prior::PriorSpec;

/// Responses after whitening the inter-day rows, with the matching
/// location offsets `D̃` (the transformed stable locations on those rows).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedData {
    pub z: Mat,
    pub d_tilde: Mat,
}

impl TransformedData {
    pub fn new(y: &Mat, ts: &TransformSet, delta: &Vector) -> Result<Self> {
        let z = apply_transform_rows(y, ts)?;
        let mut d_tilde = Mat::zeros(y.nrows(), y.ncols());
        if !ts.tau_idx.is_empty() {
            let shifted = (ts.applied_block() * delta).transpose();
            for &t in &ts.tau_idx {
                d_tilde.row_mut(t).copy_from(&shifted);
            }
        }
        Ok(TransformedData { z, d_tilde })
    }

    /// Untransformed data with no offsets.
    pub fn identity(y: &Mat) -> Self {
        TransformedData {
            z: y.clone(),
            d_tilde: Mat::zeros(y.nrows(), y.ncols()),
        }
    }

    pub fn centered(&self) -> Mat {
        &self.z - &self.d_tilde
    }
}

/// `(A⁻¹ + (WᵀW)⁻¹)⁻¹`, computed as `A·(A + WᵀW)⁻¹·WᵀW`.
fn shrinkage_weight(a: &Mat, wtw: &Mat) -> Result<Mat> {
    let az_inv = spd_inverse(&(a + wtw), "A + WᵀW")?;
    Ok(symmetrize(&(a * az_inv * wtw)))
}

/// Parameters `(S_Y, dof)` of the inverse-Wishart conditional of Σ given
/// responses `y` and regressors `w`.
pub fn sigma_posterior(y: &Mat, w: &Mat, priors: &PriorSpec) -> Result<(Mat, f64)> {
    let (b_hat, s_hat) = ols(y, w)?;
    let wtw = symmetrize(&(w.transpose() * w));
    let dev = &priors.p_mat - &b_hat;
    let scale = &priors.s_mat + s_hat + dev.transpose() * shrinkage_weight(&priors.a_mat, &wtw)? * &dev;
    Ok((symmetrize(&scale), y.nrows() as f64 + priors.h_dof))
}

/// Conditional 1: `Σ ~ IW(S_Y, t̃ + h)` from the intra-day rows.
pub fn cond_sigma_draw<R: Rng + ?Sized>(intraday: &DesignSet, priors: &PriorSpec, rng: &mut R) -> Result<Mat> {
    let (scale, dof) = sigma_posterior(&intraday.y, &intraday.w, priors)?;
    draw_iw(&scale, dof, rng)
}

pub(crate) fn draw_iw<R: Rng + ?Sized>(scale: &Mat, dof: f64, rng: &mut R) -> Result<Mat> {
    let scale = regularize_spd(scale, "posterior scale of sigma");
    let draw = inverse_wishart_unchecked(&scale, dof, rng)?;
    Ok(regularize_spd(&draw, "sigma draw"))
}

/// Matrix-normal conditional of `B̃`: row scale `(A + WᵀW)⁻¹`, column
/// scale Σ, mean `(A + WᵀW)⁻¹(A·P + Wᵀ(Z − D̃))`.
pub fn b_tilde_posterior(data: &TransformedData, w: &Mat, sigma: &Mat, priors: &PriorSpec) -> Result<MatrixNormalSpec> {
    let wtw = symmetrize(&(w.transpose() * w));
    let az = symmetrize(&(&priors.a_mat + &wtw));
    let cond = crate::linalg::condition_number(&az);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Conditioning { what: "A + WᵀW".into(), cond });
    }
    let az_inv = spd_inverse(&az, "A + WᵀW")?;
    let mean = &az_inv * (&priors.a_mat * &priors.p_mat + w.transpose() * data.centered());
    Ok(MatrixNormalSpec {
        mean,
        row_scale: az_inv,
        col_scale: regularize_spd(sigma, "sigma"),
    })
}

/// Conditional 2.
pub fn cond_b_tilde_draw<R: Rng + ?Sized>(
    data: &TransformedData,
    d: &DesignSet,
    sigma: &Mat,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<Mat> {
    let spec = b_tilde_posterior(data, &d.w, sigma, priors)?;
    sample_matrix_normal(&spec, rng)
}

/// Conditional 3, up to an additive constant:
/// `log p(β) − ((t + h)/2)·log|S_Z| − (n/2)·log|A_Z|`.
pub fn beta_logpost(beta: &Mat, d: &DesignSet, data: &TransformedData, priors: &PriorSpec) -> Result<f64> {
    let centered = data.centered();
    let (scale, dof) = sigma_posterior(&centered, &d.w, priors)?;
    let az = symmetrize(&(&priors.a_mat + d.w.transpose() * &d.w));
    let n = d.n() as f64;
    let value = priors.beta_log_prior(beta)? - 0.5 * dof * log_det_spd(&scale, "S_Z")?
        - 0.5 * n * log_det_spd(&az, "A_Z")?;
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite beta log-posterior".into()));
    }
    Ok(value)
}

/// Log acceptance ratio of an independence proposal `λ*` drawn from the
/// prior: the Gaussian likelihood ratio of `ε ~ N(0, λγ²)`.
pub fn lambda_log_ratio(residuals: &[f64], gamma: f64, lambda_new: f64, lambda_old: f64) -> f64 {
    if lambda_new == lambda_old {
        return 0.0;
    }
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    let m = residuals.len() as f64;
    let g2 = gamma * gamma;
    -0.5 * m * (lambda_new / lambda_old).ln() - 0.5 * ss / g2 * (1.0 / lambda_new - 1.0 / lambda_old)
}

/// Conditional 4: one independence Metropolis–Hastings update per
/// component. Gaussian components keep `λ = 2`. Returns the new vector and
/// per-component acceptance flags.
pub fn cond_lambda_draw<R: Rng + ?Sized>(
    residuals_tau: &Mat,
    stable: &[StableParams],
    lambda_current: &Vector,
    rng: &mut R,
) -> Result<(Vector, Vec<bool>)> {
    let n = lambda_current.len();
    if stable.len() != n || residuals_tau.ncols() != n {
        return Err(Error::shape("residual columns, stable laws and lambda must agree in length"));
    }
    let mut out = lambda_current.clone();
    let mut accepted = vec![false; n];
    for i in 0..n {
        if stable[i].is_gaussian() {
            out[i] = 2.0;
            accepted[i] = true;
            continue;
        }
        let proposal = positive_stable_unchecked(stable[i].a, rng);
        let resid: Vec<f64> = residuals_tau.column(i).iter().copied().collect();
        let log_ratio = lambda_log_ratio(&resid, stable[i].gamma, proposal, lambda_current[i]);
        let u: f64 = rng.random();
        if log_ratio >= 0.0 || u.ln() < log_ratio {
            out[i] = proposal;
            accepted[i] = true;
        }
    }
    Ok((out, accepted))
}

/// `D_λ = diag(λ_i γ_i²)`.
pub fn d_lambda(lambda: &Vector, stable: &[StableParams]) -> Vector {
    Vector::from_fn(lambda.len(), |i, _| lambda[i] * stable[i].gamma * stable[i].gamma)
}
