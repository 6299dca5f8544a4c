use crate::error::{Error, Result};
use crate::linalg::{condition_number, log_det_spd, symmetrize, Mat};

use super::design::DesignSet;

/// Condition-number ceiling on the regressor matrix.
pub const MAX_DESIGN_CONDITION: f64 = 1e10;

/// `B̂ = (WᵀW)⁻¹WᵀY`, `Ŝ = (Y − WB̂)ᵀ(Y − WB̂)`.
pub fn ols(y: &Mat, w: &Mat) -> Result<(Mat, Mat)> {
    if y.nrows() != w.nrows() {
        return Err(Error::shape("Y and W differ in row count"));
    }
    if w.nrows() < w.ncols() {
        return Err(Error::Conditioning {
            what: "regressor matrix (fewer rows than columns)".into(),
            cond: f64::INFINITY,
        });
    }
    let cond = condition_number(w);
    if !cond.is_finite() || cond > MAX_DESIGN_CONDITION {
        return Err(Error::Conditioning { what: "regressor matrix".into(), cond });
    }
    let wtw = symmetrize(&(w.transpose() * w));
    let chol = wtw.cholesky().ok_or(Error::Conditioning { what: "WᵀW".into(), cond: cond * cond })?;
    let b_hat = chol.solve(&(w.transpose() * y));
    let resid = y - w * &b_hat;
    let s_hat = symmetrize(&(resid.transpose() * &resid));
    Ok((b_hat, s_hat))
}

pub fn ols_stats(d: &DesignSet) -> Result<(Mat, Mat)> {
    ols(&d.y, &d.w)
}

/// Matrix-variate Gaussian log-likelihood of `Y = WB + E`, rows of `E`
/// i.i.d. `N(0, Σ)`.
pub fn log_likelihood(d: &DesignSet, b: &Mat, sigma: &Mat) -> Result<f64> {
    let resid = &d.y - &d.w * b;
    let chol = crate::linalg::cholesky(sigma, "sigma")?;
    let quad = chol.solve(&(resid.transpose() * &resid)).trace();
    let (t, n) = (d.t() as f64, d.n() as f64);
    Ok(-0.5 * t * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * t * log_det_spd(sigma, "sigma")? - 0.5 * quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::design::build_design;
    use crate::cvar::series::{SeriesData, SeriesMeta};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(r: usize, c: usize, rng: &mut impl Rng) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn noiseless_regression() {
        let mut rng = rng_from_seed(51);
        let w = gaussian(30, 3, &mut rng);
        let b0 = gaussian(3, 2, &mut rng);
        let (b, s) = ols(&(&w * &b0), &w).unwrap();
        assert!((b - b0).amax() < 1e-10);
        assert!(s.amax() < 1e-10);
    }

    #[test]
    fn ones_column_gives_means() {
        let mut rng = rng_from_seed(52);
        let y = gaussian(20, 2, &mut rng);
        let (b, _) = ols(&y, &Mat::from_element(20, 1, 1.0)).unwrap();
        for j in 0..2 {
            assert!((b[(0, j)] - y.column(j).mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_qr_and_residuals_orthogonal() {
        let mut rng = rng_from_seed(53);
        let w = gaussian(40, 4, &mut rng);
        let y = gaussian(40, 2, &mut rng);
        let (b, s) = ols(&y, &w).unwrap();
        let qr = w.clone().qr();
        let qty = qr.q().transpose() * &y;
        let b_qr = qr.r().solve_upper_triangular(&qty).unwrap();
        assert!((&b - b_qr).amax() < 1e-8);
        let resid = &y - &w * &b;
        assert!((w.transpose() * &resid).amax() < 1e-10);
        assert!((resid.transpose() * resid - s).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_rejected() {
        let mut w = Mat::from_element(10, 2, 1.0);
        w[(0, 0)] = 1.0;
        let y = Mat::zeros(10, 1);
        match ols(&y, &w) {
            Err(Error::Conditioning { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn likelihood_maximized_at_ols() {
        let mut rng = rng_from_seed(54);
        let prices = Mat::from_fn(60, 2, |_, _| rng.sample::<f64, _>(StandardNormal)).cumsum_rows();
        let s = SeriesData::new(prices, vec![], SeriesMeta::default()).unwrap();
        let d = build_design(&s, 1, &Mat::from_row_slice(2, 1, &[1.0, -0.5])).unwrap();
        let (b, sh) = ols_stats(&d).unwrap();
        let sigma = &sh / d.t() as f64;
        let best = log_likelihood(&d, &b, &sigma).unwrap();
        for _ in 0..100 {
            let pert = &b + gaussian(b.nrows(), b.ncols(), &mut rng) * 0.05;
            assert!(log_likelihood(&d, &pert, &sigma).unwrap() <= best);
        }
    }

    trait CumSum {
        fn cumsum_rows(self) -> Mat;
    }

    impl CumSum for Mat {
        fn cumsum_rows(mut self) -> Mat {
            for i in 1..self.nrows() {
                let prev = self.row(i - 1).into_owned();
                let mut row = self.row_mut(i);
                row += prev;
            }
            self
        }
    }
}
