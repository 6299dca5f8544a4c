//! Small dense linear-algebra helpers shared by the samplers and estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue floor used by every SPD check.
pub const SPD_REL_FLOOR: f64 = 1e-10;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order and
/// each eigenvector's largest-magnitude entry made positive.
pub fn sym_eigen_sorted(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut values = Vector::zeros(n);
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Checks symmetry and the relative eigenvalue floor.
pub fn check_spd(m: &Mat, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::shape(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition {
            which: name.to_string(),
            reason: "non-finite entries".into(),
        });
    }
    let scale = m.amax().max(1e-300);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::Decomposition {
            which: name.to_string(),
            reason: format!("not symmetric (max asymmetry {asym:.3e})"),
        });
    }
    let (values, _) = sym_eigen_sorted(m);
    let max = values[0];
    let min = values[values.len() - 1];
    if max <= 0.0 || min <= SPD_REL_FLOOR * max {
        return Err(Error::Decomposition {
            which: name.to_string(),
            reason: format!("not positive definite (eigenvalues {min:.3e} .. {max:.3e})"),
        });
    }
    Ok(())
}

pub fn cholesky(m: &Mat, name: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::Decomposition {
        which: name.to_string(),
        reason: "Cholesky factorization failed".into(),
    })
}

pub fn spd_inverse(m: &Mat, name: &str) -> Result<Mat> {
    Ok(symmetrize(&cholesky(m, name)?.inverse()))
}

pub fn log_det_spd(m: &Mat, name: &str) -> Result<f64> {
    let chol = cholesky(m, name)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Adds `1e-8 * trace / n` to the diagonal when `m` fails the SPD check.
/// Only used on sampler internals, never on reported estimates.
pub fn regularize_spd(m: &Mat, name: &str) -> Mat {
    let sym = symmetrize(m);
    if check_spd(&sym, name).is_ok() {
        return sym;
    }
    let n = sym.nrows() as f64;
    let bump = 1e-8 * sym.trace().abs().max(1e-12) / n;
    log::warn!("{name} failed the SPD check; adding {bump:.3e} to the diagonal");
    let mut out = sym;
    for i in 0..out.nrows() {
        out[(i, i)] += bump;
    }
    out
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &Mat) -> f64 {
    let svd = SVD::new(m.clone(), false, false);
    let s = &svd.singular_values;
    let max = s.max();
    let min = s.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Solves `a x = b` for SPD `a`.
pub fn spd_solve(a: &Mat, b: &Mat, name: &str) -> Result<Mat> {
    Ok(cholesky(a, name)?.solve(b))
}

/// Pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `SPD_REL_FLOOR` times the largest are treated as zero. Also returns the
/// eigenvectors spanning the discarded null space.
pub fn pinv_psd(m: &Mat) -> (Mat, Mat) {
    let (vals, vecs) = sym_eigen_sorted(m);
    let n = vals.len();
    let floor = SPD_REL_FLOOR * vals[0].max(0.0);
    let rank = vals.iter().take_while(|&&v| v > floor && v > 0.0).count();
    let mut inv = Mat::zeros(n, n);
    for i in 0..rank {
        let c = vecs.column(i);
        inv += (c * c.transpose()) / vals[i];
    }
    (inv, vecs.columns(rank, n - rank).into_owned())
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Serializes a matrix as a list of rows.
pub mod serde_mat {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Mat::from_row_slice(rows.len(), ncols, &flat))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serializes a vector as a flat list.
pub mod serde_vec {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serializes a list of matrices as nested row lists.
pub mod serde_mats {
    use super::{serde_mat, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(serde_mat::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| serde_mat::from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}
