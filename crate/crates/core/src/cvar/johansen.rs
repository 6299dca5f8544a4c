//! Johansen reduced-rank regression with an unrestricted constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv_psd, sym_eigen_sorted, symmetrize, Mat};

use super::design::{build_design, DesignSet};
use super::ols::ols;
use super::params::{normalize_beta, CvarParams};
use super::series::SeriesData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JohansenFit {
    pub params: CvarParams,
    /// Squared canonical correlations, descending.
    pub eigenvalues: Vec<f64>,
}

pub fn johansen_estimate(series: &SeriesData, p: usize, r: usize) -> Result<CvarParams> {
    Ok(johansen_fit(series, p, r)?.params)
}

fn residualize(target: &Mat, x: &Mat) -> Result<Mat> {
    let (coef, _) = ols(target, x)?;
    Ok(target - x * coef)
}

pub fn johansen_fit(series: &SeriesData, p: usize, r: usize) -> Result<JohansenFit> {
    let n = series.n();
    if r == 0 || r >= n {
        return Err(Error::Validation(format!("rank r={r} must be in 1..{n}")));
    }
    if series.len() < 10 * n {
        return Err(Error::Estimation(format!(
            "{} observations are too few for {n} series (need at least {})",
            series.len(),
            10 * n
        )));
    }
    // β only enters W, which is not used here
    let mut placeholder = Mat::zeros(n, r);
    placeholder.rows_mut(0, r).fill_with_identity();
    let d = build_design(series, p, &placeholder)?;
    let t = d.t() as f64;
    let r0 = residualize(&d.y, &d.x)?;
    let r1 = residualize(&d.z, &d.x)?;
    let s00 = symmetrize(&(r0.transpose() * &r0 / t));
    let s01 = r0.transpose() * &r1 / t;
    let s11 = symmetrize(&(r1.transpose() * &r1 / t));

    let (s00_inv, _) = pinv_psd(&s00);
    // Directions with R1·v = 0 are exact linear relations among the lagged
    // levels; they are the limiting eigenvalue-one solutions and come first.
    let (e11, v11) = sym_eigen_sorted(&s11);
    let floor = crate::linalg::SPD_REL_FLOOR * e11[0].max(0.0);
    let rank11 = e11.iter().take_while(|&&e| e > floor && e > 0.0).count();
    let null = v11.columns(rank11, n - rank11).into_owned();
    let mut whiten = v11.columns(0, rank11).into_owned();
    for i in 0..rank11 {
        whiten.column_mut(i).scale_mut(1.0 / e11[i].sqrt());
    }
    let c = symmetrize(&(whiten.transpose() * s01.transpose() * &s00_inv * &s01 * &whiten));
    let (lam, u) = sym_eigen_sorted(&c);
    let regular = &whiten * u;

    let mut eigenvalues: Vec<f64> = vec![1.0; n - rank11];
    eigenvalues.extend(lam.iter().copied());
    let mut candidates = Mat::zeros(n, n);
    candidates.columns_mut(0, n - rank11).copy_from(&null);
    candidates.columns_mut(n - rank11, rank11).copy_from(&regular);
    let beta_raw = candidates.columns(0, r).into_owned();
    if beta_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation("eigen-solver returned non-finite vectors".into()));
    }

    let btb = symmetrize(&(beta_raw.transpose() * &s11 * &beta_raw));
    let (btb_inv, _) = pinv_psd(&btb);
    let alpha_raw = &s01 * &beta_raw * btb_inv;
    let (_, beta) = normalize_beta(&alpha_raw, &beta_raw)?;
    let params = fit_given_beta(&d.with_beta(&beta)?, &beta, p)?;
    Ok(JohansenFit { params, eigenvalues })
}

/// OLS of `Y` on `[X, Zβ]` for a fixed β.
pub fn fit_given_beta(d: &DesignSet, beta: &Mat, p: usize) -> Result<CvarParams> {
    let n = d.n();
    let (b, s) = match ols(&d.y, &d.w) {
        Ok(v) => v,
        // exact cointegration makes Zβ collinear with the constant
        Err(Error::Conditioning { .. }) => {
            let (b, s) = ols(&d.y, &d.x)?;
            let mut full = Mat::zeros(d.k(), n);
            full.rows_mut(0, d.x.ncols()).copy_from(&b);
            (full, s)
        }
        Err(e) => return Err(e),
    };
    let sigma = s / d.t() as f64;
    CvarParams::from_b(&b, beta.clone(), sigma, p)
}
