//! Matrix-normal and inverse-Wishart kernels plus the whitening transform.
//!
//! Matrix-normal convention: `X ~ MN(M, U, V)` with row scale `U` (k×k) and
//! column scale `V` (n×n) means `Cov(vec X) = V ⊗ U` with column-stacking
//! `vec`; row `i` of `X` has covariance `U_ii·V`.

mod transform;

pub use transform::{apply_transform, apply_transform_rows, build_transform, forward_b, recover_b, TransformSet};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{check_spd, cholesky, log_det_spd, Mat};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNormalSpec {
    pub mean: Mat,
    pub row_scale: Mat,
    pub col_scale: Mat,
}

impl MatrixNormalSpec {
    pub fn new(mean: Mat, row_scale: Mat, col_scale: Mat) -> Result<Self> {
        let spec = MatrixNormalSpec { mean, row_scale, col_scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_scale.nrows() != self.mean.nrows() || self.col_scale.nrows() != self.mean.ncols() {
            return Err(Error::shape(format!(
                "mean {}x{} does not match row scale {}x{} and column scale {}x{}",
                self.mean.nrows(),
                self.mean.ncols(),
                self.row_scale.nrows(),
                self.row_scale.ncols(),
                self.col_scale.nrows(),
                self.col_scale.ncols()
            )));
        }
        check_spd(&self.row_scale, "row_scale")?;
        check_spd(&self.col_scale, "col_scale")
    }
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn sample_matrix_normal<R: Rng + ?Sized>(spec: &MatrixNormalSpec, rng: &mut R) -> Result<Mat> {
    spec.validate()?;
    let lu = cholesky(&spec.row_scale, "row_scale")?.unpack();
    let lv = cholesky(&spec.col_scale, "col_scale")?.unpack();
    let g = standard_normal_matrix(spec.mean.nrows(), spec.mean.ncols(), rng);
    Ok(&spec.mean + lu * g * lv.transpose())
}

pub fn matrix_normal_logpdf(x: &Mat, spec: &MatrixNormalSpec) -> Result<f64> {
    if x.shape() != spec.mean.shape() {
        return Err(Error::shape("matrix-normal argument and mean differ in shape"));
    }
    let (k, n) = x.shape();
    let cu = cholesky(&spec.row_scale, "row_scale")?;
    let cv = cholesky(&spec.col_scale, "col_scale")?;
    let dev = x - &spec.mean;
    // tr(V^-1 Dᵀ U^-1 D)
    let ud = cu.solve(&dev);
    let vd = cv.solve(&dev.transpose());
    let quad = (vd * ud).trace();
    let ldu = log_det_spd(&spec.row_scale, "row_scale")?;
    let ldv = log_det_spd(&spec.col_scale, "col_scale")?;
    Ok(-0.5 * (k * n) as f64 * LN_2PI - 0.5 * n as f64 * ldu - 0.5 * k as f64 * ldv - 0.5 * quad)
}

/// Multivariate log-gamma `ln Γ_n(x)`.
pub fn ln_multigamma(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    nf * (nf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=n).map(|j| ln_gamma(x + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

fn check_iw(scale: &Mat, dof: f64) -> Result<()> {
    let n = scale.nrows() as f64;
    if !(dof > n - 1.0) {
        return Err(Error::domain(format!("inverse-Wishart dof {dof} must exceed n-1 = {}", n - 1.0)));
    }
    check_spd(scale, "inverse-Wishart scale")
}

/// `Σ ~ IW(S, h)` by the Bartlett decomposition of `Σ^-1 ~ W(S^-1, h)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(scale: &Mat, dof: f64, rng: &mut R) -> Result<Mat> {
    check_iw(scale, dof)?;
    Ok(inverse_wishart_unchecked(scale, dof, rng)?)
}

pub(crate) fn inverse_wishart_unchecked<R: Rng + ?Sized>(scale: &Mat, dof: f64, rng: &mut R) -> Result<Mat> {
    let n = scale.nrows();
    let u = cholesky(scale, "inverse-Wishart scale")?.unpack();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new(dof - i as f64).map_err(|e| Error::domain(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // U·A^-T, via solving Aᵀ Xᵀ = Uᵀ
    let a_inv_t = a
        .transpose()
        .solve_upper_triangular(&Mat::identity(n, n))
        .ok_or_else(|| Error::Numeric("singular Bartlett factor".into()))?;
    let f = u * a_inv_t;
    let out = &f * f.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

pub fn inverse_wishart_logpdf(sigma: &Mat, scale: &Mat, dof: f64) -> Result<f64> {
    check_iw(scale, dof)?;
    let n = scale.nrows() as f64;
    let cs = cholesky(sigma, "inverse-Wishart argument")?;
    let tr = cs.solve(scale).trace();
    let ld_sigma = log_det_spd(sigma, "inverse-Wishart argument")?;
    let ld_scale = log_det_spd(scale, "inverse-Wishart scale")?;
    Ok(0.5 * dof * ld_scale
        - 0.5 * dof * n * std::f64::consts::LN_2
        - ln_multigamma(scale.nrows(), dof / 2.0)
        - 0.5 * (dof + n + 1.0) * ld_sigma
        - 0.5 * tr)
}

/// `A·X·B`, the matrix form of `(Bᵀ ⊗ A)·vec(X)`.
pub fn kron_vec_apply(a: &Mat, x: &Mat, b: &Mat) -> Result<Mat> {
    if a.ncols() != x.nrows() || x.ncols() != b.nrows() {
        return Err(Error::shape(format!(
            "cannot form A·X·B with A {}x{}, X {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            x.nrows(),
            x.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * x * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, vec};
    use crate::rng::rng_from_seed;

    fn random_spd<R: Rng>(n: usize, rng: &mut R) -> Mat {
        let g = standard_normal_matrix(n, n, rng);
        &g * g.transpose() + Mat::identity(n, n) * 0.5
    }

    #[test]
    fn standard_matrix_normal_variances() {
        let mut rng = rng_from_seed(21);
        let spec = MatrixNormalSpec::new(Mat::zeros(2, 2), Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        let draws = 10_000;
        let mut sq = Mat::zeros(2, 2);
        for _ in 0..draws {
            let x = sample_matrix_normal(&spec, &mut rng).unwrap();
            sq += x.component_mul(&x);
        }
        sq /= draws as f64;
        // SE of a mean of χ²₁ draws is √(2/N)
        let se = (2.0 / draws as f64).sqrt();
        assert!(sq.iter().all(|v| (v - 1.0).abs() < 3.0 * se), "{sq}");
    }

    #[test]
    fn row_scale_scales_rows() {
        let mut rng = rng_from_seed(22);
        let row = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let spec = MatrixNormalSpec::new(Mat::zeros(2, 3), row, Mat::identity(3, 3)).unwrap();
        let draws = 10_000;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for _ in 0..draws {
            let x = sample_matrix_normal(&spec, &mut rng).unwrap();
            s0 += x.row(0).iter().map(|v| v * v).sum::<f64>() / 3.0;
            s1 += x.row(1).iter().map(|v| v * v).sum::<f64>() / 3.0;
        }
        let (v0, v1) = (s0 / draws as f64, s1 / draws as f64);
        assert!((v0 - 4.0).abs() < 3.0 * 4.0 * (2.0 / (3.0 * draws as f64)).sqrt(), "{v0}");
        assert!((v1 - 1.0).abs() < 3.0 * (2.0 / (3.0 * draws as f64)).sqrt(), "{v1}");
    }

    #[test]
    fn matrix_normal_covariance_is_kronecker() {
        let mut rng = rng_from_seed(23);
        let u = random_spd(2, &mut rng);
        let v = random_spd(2, &mut rng);
        let spec = MatrixNormalSpec::new(Mat::zeros(2, 2), u.clone(), v.clone()).unwrap();
        let draws = 100_000;
        let mut cov = Mat::zeros(4, 4);
        for _ in 0..draws {
            let x = vec(&sample_matrix_normal(&spec, &mut rng).unwrap());
            cov += &x * x.transpose();
        }
        cov /= draws as f64;
        let expected = kron(&v, &u);
        for i in 0..4 {
            for j in 0..4 {
                // SE of E[x_i x_j] is √((Σ_ii Σ_jj + Σ_ij²)/N)
                let se = ((expected[(i, i)] * expected[(j, j)] + expected[(i, j)].powi(2)) / draws as f64).sqrt();
                assert!((cov[(i, j)] - expected[(i, j)]).abs() < 4.0 * se, "({i},{j}) {} vs {}", cov[(i, j)], expected[(i, j)]);
            }
        }
    }

    #[test]
    fn non_spd_scale_is_named() {
        let bad = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = MatrixNormalSpec::new(Mat::zeros(2, 2), bad, Mat::identity(2, 2)).unwrap_err();
        assert!(err.to_string().contains("row_scale"));
    }

    #[test]
    fn inverse_wishart_means() {
        let mut rng = rng_from_seed(24);
        let draws = 10_000;
        for (scale, dof, expect) in [
            (Mat::identity(2, 2), 10.0, Mat::identity(2, 2) / 7.0),
            (
                Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0])),
                8.0,
                Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.4, 0.2])),
            ),
        ] {
            let mut sum = Mat::zeros(2, 2);
            let mut sq = Mat::zeros(2, 2);
            for _ in 0..draws {
                let s = sample_inverse_wishart(&scale, dof, &mut rng).unwrap();
                check_spd(&s, "draw").unwrap();
                sq += s.component_mul(&s);
                sum += s;
            }
            let mean = &sum / draws as f64;
            let var = &sq / draws as f64 - mean.component_mul(&mean);
            for i in 0..2 {
                for j in 0..2 {
                    let se = (var[(i, j)] / draws as f64).sqrt();
                    assert!((mean[(i, j)] - expect[(i, j)]).abs() < 3.0 * se + 1e-12, "{mean}");
                }
            }
        }
    }

    #[test]
    fn inverse_wishart_dof_domain() {
        let mut rng = rng_from_seed(25);
        assert!(sample_inverse_wishart(&Mat::identity(3, 3), 1.5, &mut rng).is_err());
    }

    #[test]
    fn inverse_wishart_logpdf_one_dimensional() {
        // n = 1: IW(s, h) is inverse-gamma(h/2, s/2)
        let (s, h, x): (f64, f64, f64) = (3.0, 5.0, 0.7);
        let (shape, rate) = (h / 2.0, s / 2.0);
        let expect = shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x;
        let got = inverse_wishart_logpdf(&Mat::from_element(1, 1, x), &Mat::from_element(1, 1, s), h).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn matrix_normal_logpdf_matches_vectorised_gaussian() {
        let mut rng = rng_from_seed(26);
        let u = random_spd(3, &mut rng);
        let v = random_spd(2, &mut rng);
        let m = standard_normal_matrix(3, 2, &mut rng);
        let x = standard_normal_matrix(3, 2, &mut rng);
        let spec = MatrixNormalSpec::new(m.clone(), u.clone(), v.clone()).unwrap();
        let cov = kron(&v, &u);
        let d = vec(&(x.clone() - m));
        let chol = cholesky(&cov, "cov").unwrap();
        let quad = (d.transpose() * chol.solve(&d))[(0, 0)];
        let expect = -0.5 * 6.0 * LN_2PI - 0.5 * log_det_spd(&cov, "cov").unwrap() - 0.5 * quad;
        assert!((matrix_normal_logpdf(&x, &spec).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn kron_identity_cases() {
        let mut rng = rng_from_seed(27);
        let x = standard_normal_matrix(3, 2, &mut rng);
        assert_eq!(kron_vec_apply(&Mat::identity(3, 3), &x, &Mat::identity(2, 2)).unwrap(), x);
        let a = standard_normal_matrix(3, 3, &mut rng);
        let mut b = Mat::zeros(2, 4);
        b[(1, 2)] = 1.0;
        let out = kron_vec_apply(&a, &x, &b).unwrap();
        let ax = &a * &x;
        for j in 0..4 {
            for i in 0..3 {
                let expect = if j == 2 { ax[(i, 1)] } else { 0.0 };
                assert_eq!(out[(i, j)], expect);
            }
        }
        assert!(kron_vec_apply(&a, &x, &Mat::identity(3, 3)).is_err());
    }

    #[test]
    fn kron_matches_materialized() {
        let mut rng = rng_from_seed(28);
        let a = standard_normal_matrix(3, 2, &mut rng);
        let x = standard_normal_matrix(2, 2, &mut rng);
        let b = standard_normal_matrix(2, 4, &mut rng);
        let fast = vec(&kron_vec_apply(&a, &x, &b).unwrap());
        let slow = kron(&b.transpose(), &a) * vec(&x);
        assert!((fast - slow).amax() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn kron_identity_property(seed in 0u64..1_000_000, r in 1usize..5, c in 1usize..5, k in 1usize..5, m in 1usize..5) {
            let mut rng = rng_from_seed(seed);
            let a = standard_normal_matrix(m, r, &mut rng);
            let x = standard_normal_matrix(r, c, &mut rng);
            let b = standard_normal_matrix(c, k, &mut rng);
            let fast = vec(&kron_vec_apply(&a, &x, &b).unwrap());
            let slow = kron(&b.transpose(), &a) * vec(&x);
            proptest::prop_assert!((fast - slow).amax() < 1e-12);
        }
    }
}
