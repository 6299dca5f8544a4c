//! Whitening of inter-day columns and recovery of `B` from the pooled
//! coefficient `B̃`.
//!
//! `q_block = diag(√(F_i / D_i))·Uᵀ` where `Σ = U F Uᵀ`, so that
//! `q_blockᵀ·D·q_block = Σ`. An inter-day innovation `ε ~ N(0, D)` is mapped
//! to `q_blockᵀ·ε`, whose covariance is `q_blockᵀ·D·q_block = Σ`; that
//! transposed block is what [`apply_transform`] multiplies by.

use crate::error::{Error, Result};
use crate::linalg::{check_spd, condition_number, sym_eigen_sorted, Mat, Vector};

/// Condition-number ceiling for `Σ` and for the aggregate recovery block.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSet {
    pub q_block: Mat,
    pub tilde_t: usize,
    pub total_t: usize,
    pub tau_idx: Vec<usize>,
}

impl TransformSet {
    /// The matrix that left-multiplies each inter-day column.
    pub fn applied_block(&self) -> Mat {
        self.q_block.transpose()
    }

    /// `t̃·I + Σ_{τ} applied_block`.
    pub fn aggregate(&self) -> Mat {
        let n = self.q_block.nrows();
        Mat::identity(n, n) * self.tilde_t as f64 + self.applied_block() * self.tau_idx.len() as f64
    }

    pub fn is_inter_day(&self, col: usize) -> bool {
        self.tau_idx.binary_search(&col).is_ok()
    }
}

fn validate_schedule(tilde_t: usize, total_t: usize, tau_idx: &[usize]) -> Result<()> {
    if tilde_t + tau_idx.len() != total_t {
        return Err(Error::shape(format!(
            "intra-day count {tilde_t} plus {} inter-day columns must equal {total_t}",
            tau_idx.len()
        )));
    }
    if tau_idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::shape("inter-day indices must be strictly increasing"));
    }
    if let Some(&last) = tau_idx.last() {
        if last >= total_t {
            return Err(Error::shape(format!("inter-day index {last} out of range 0..{total_t}")));
        }
    }
    Ok(())
}

pub fn build_transform(
    sigma: &Mat,
    d_lambda: &Vector,
    tilde_t: usize,
    total_t: usize,
    tau_idx: &[usize],
) -> Result<TransformSet> {
    let n = sigma.nrows();
    if d_lambda.len() != n {
        return Err(Error::shape(format!("D_lambda has {} entries for n = {n}", d_lambda.len())));
    }
    if d_lambda.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::domain("D_lambda entries must be positive and finite"));
    }
    validate_schedule(tilde_t, total_t, tau_idx)?;
    check_spd(sigma, "sigma")?;
    let cond = condition_number(sigma);
    if cond > MAX_CONDITION {
        return Err(Error::Conditioning { what: "sigma".into(), cond });
    }
    let (f, u) = sym_eigen_sorted(sigma);
    let mut q_block = u.transpose();
    for i in 0..n {
        let s = (f[i] / d_lambda[i]).sqrt();
        q_block.row_mut(i).scale_mut(s);
    }
    Ok(TransformSet {
        q_block,
        tilde_t,
        total_t,
        tau_idx: tau_idx.to_vec(),
    })
}

/// Transforms an n×T matrix whose columns are time points.
pub fn apply_transform(y_star: &Mat, ts: &TransformSet) -> Result<Mat> {
    if y_star.ncols() != ts.total_t {
        return Err(Error::shape(format!(
            "expected {} columns, got {}",
            ts.total_t,
            y_star.ncols()
        )));
    }
    if y_star.nrows() != ts.q_block.nrows() {
        return Err(Error::shape("row count does not match the transform dimension"));
    }
    let block = ts.applied_block();
    let mut out = y_star.clone();
    for &t in &ts.tau_idx {
        let col = &block * y_star.column(t);
        out.set_column(t, &col);
    }
    Ok(out)
}

/// Same as [`apply_transform`] for a T×n matrix whose rows are time points.
pub fn apply_transform_rows(y_rows: &Mat, ts: &TransformSet) -> Result<Mat> {
    if y_rows.nrows() != ts.total_t {
        return Err(Error::shape(format!("expected {} rows, got {}", ts.total_t, y_rows.nrows())));
    }
    if y_rows.ncols() != ts.q_block.nrows() {
        return Err(Error::shape("column count does not match the transform dimension"));
    }
    let mut out = y_rows.clone();
    for &t in &ts.tau_idx {
        // row · blockᵀ = row · q_block
        let row = y_rows.row(t) * &ts.q_block;
        out.set_row(t, &row);
    }
    Ok(out)
}

/// `B̃ᵀ = (t̃·I + Σ_τ Qᵀ)·Bᵀ`.
pub fn forward_b(b: &Mat, ts: &TransformSet) -> Result<Mat> {
    if b.ncols() != ts.q_block.nrows() {
        return Err(Error::shape("B column count does not match the transform dimension"));
    }
    Ok((ts.aggregate() * b.transpose()).transpose())
}

/// Solves `B̃ᵀ = M·Bᵀ` for `B`.
pub fn recover_b(b_tilde: &Mat, ts: &TransformSet) -> Result<Mat> {
    if b_tilde.ncols() != ts.q_block.nrows() {
        return Err(Error::shape("B-tilde column count does not match the transform dimension"));
    }
    let m = ts.aggregate();
    let cond = condition_number(&m);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Conditioning {
            what: "aggregate recovery block".into(),
            cond,
        });
    }
    let lu = m.lu();
    let bt = lu
        .solve(&b_tilde.transpose())
        .ok_or_else(|| Error::Conditioning { what: "aggregate recovery block".into(), cond })?;
    Ok(bt.transpose())
}
