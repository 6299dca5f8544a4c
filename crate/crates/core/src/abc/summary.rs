use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Continuous, Normal};

use crate::cvar::{build_design, ols, SeriesData};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stable::quantile;

/// Quantile levels of the inter-day block.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Fewest inter-day differences per asset for the quantile block.
pub const MIN_QUANTILE_POINTS: usize = 10;

/// Which summary blocks to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarySpec {
    /// Coefficients of `Y` on the unrestricted regressors `[X, Z − Z̄]`.
    pub ols: bool,
    /// Upper triangle of the residual covariance.
    pub covariance: bool,
    /// Per-asset quantiles of the inter-day differences.
    pub quantiles: bool,
}

impl Default for SummarySpec {
    fn default() -> Self {
        SummarySpec {
            ols: true,
            covariance: true,
            quantiles: true,
        }
    }
}

impl SummarySpec {
    fn id(&self) -> String {
        let mut parts = Vec::new();
        if self.ols {
            parts.push("ols");
        }
        if self.covariance {
            parts.push("cov");
        }
        if self.quantiles {
            parts.push("q5");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub values: Vec<f64>,
    pub spec_id: String,
}

impl SummaryVector {
    pub fn distance(&self, other: &SummaryVector) -> Result<f64> {
        if self.spec_id != other.spec_id || self.values.len() != other.values.len() {
            return Err(Error::Comparison(self.spec_id.clone(), other.spec_id.clone()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Raw statistics of one series, before scaling.
struct RawStats {
    ols: Vec<f64>,
    ols_se: Vec<f64>,
    cov: Vec<f64>,
    cov_se: Vec<f64>,
    quantiles: Vec<f64>,
    quantile_se: Vec<f64>,
}

fn raw_stats(series: &SeriesData, p: usize, r: usize, spec: SummarySpec) -> Result<RawStats> {
    let n = series.n();
    if r == 0 || r >= n {
        return Err(Error::Validation(format!("rank r={r} must be in 1..{n}")));
    }
    let mut placeholder = Mat::zeros(n, r);
    placeholder.rows_mut(0, r).fill_with_identity();
    let d = build_design(series, p, &placeholder)?;
    // centred levels keep the intercept free of the price level
    let mut w = d.unrestricted_regressors();
    let nx = d.x.ncols();
    for mut col in w.columns_mut(nx, d.z.ncols()).column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let (coef, s_hat) = ols(&d.y, &w)?;
    let t = d.t() as f64;
    let dof = (t - w.ncols() as f64).max(1.0);
    let wtw_inv = (w.transpose() * &w)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("regressor cross-product is singular".into()))?;

    let mut ols_vals = Vec::new();
    let mut ols_se = Vec::new();
    for i in 0..coef.nrows() {
        for j in 0..n {
            ols_vals.push(coef[(i, j)]);
            ols_se.push((wtw_inv[(i, i)] * s_hat[(j, j)] / dof).sqrt());
        }
    }
    let c = s_hat / t;
    let mut cov = Vec::new();
    let mut cov_se = Vec::new();
    for i in 0..n {
        for j in i..n {
            cov.push(c[(i, j)]);
            cov_se.push(((c[(i, i)] * c[(j, j)] + c[(i, j)] * c[(i, j)]) / t).sqrt());
        }
    }

    let mut quantiles = Vec::new();
    let mut quantile_se = Vec::new();
    if spec.quantiles {
        let std_normal = Normal::standard();
        for mut col in series.inter_day_differences() {
            if col.len() < MIN_QUANTILE_POINTS {
                return Ok(RawStats {
                    ols: ols_vals,
                    ols_se,
                    cov,
                    cov_se,
                    quantiles: Vec::new(),
                    quantile_se: Vec::new(),
                });
            }
            col.sort_by(f64::total_cmp);
            let m = col.len() as f64;
            let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
            let spread = iqr / 1.349;
            for &lvl in &QUANTILE_LEVELS {
                quantiles.push(quantile(&col, lvl));
                let z = std_normal.inverse_cdf(lvl);
                quantile_se.push(spread * (lvl * (1.0 - lvl)).sqrt() / (std_normal.pdf(z) * m.sqrt()));
            }
        }
    }
    Ok(RawStats {
        ols: ols_vals,
        ols_se,
        cov,
        cov_se,
        quantiles,
        quantile_se,
    })
}

/// Summary map with scales frozen from an observed series. Entry `k` of
/// every vector is `stat_k / scale_k`, where `scale_k` is the approximate
/// standard error of `stat_k` on the observed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryBuilder {
    pub p: usize,
    pub r: usize,
    /// Requested blocks; the quantile block is dropped when the observed
    /// series has too few boundary points.
    pub requested: SummarySpec,
    pub effective: SummarySpec,
    pub scales: Vec<f64>,
}

impl SummaryBuilder {
    pub fn new(observed: &SeriesData, p: usize, r: usize, spec: SummarySpec) -> Result<Self> {
        if !(spec.ols || spec.covariance || spec.quantiles) {
            return Err(Error::Validation("summary spec selects no statistics".into()));
        }
        let raw = raw_stats(observed, p, r, spec)?;
        let mut effective = spec;
        if spec.quantiles && raw.quantiles.is_empty() {
            log::warn!(
                "fewer than {MIN_QUANTILE_POINTS} inter-day points per asset; dropping the quantile summary block"
            );
            effective.quantiles = false;
        }
        let mut scales: Vec<f64> = Vec::new();
        if effective.ols {
            scales.extend(&raw.ols_se);
        }
        if effective.covariance {
            scales.extend(&raw.cov_se);
        }
        if effective.quantiles {
            scales.extend(&raw.quantile_se);
        }
        let mut floored = 0;
        for s in scales.iter_mut() {
            if !(*s > 0.0 && s.is_finite()) {
                *s = 1.0;
                floored += 1;
            }
        }
        if floored > 0 {
            log::warn!("{floored} summary scales were degenerate and set to 1");
        }
        Ok(SummaryBuilder {
            p,
            r,
            requested: spec,
            effective,
            scales,
        })
    }

    pub fn spec_id(&self) -> String {
        self.effective.id()
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn compute(&self, series: &SeriesData) -> Result<SummaryVector> {
        let raw = raw_stats(series, self.p, self.r, self.effective)?;
        let mut values: Vec<f64> = Vec::with_capacity(self.len());
        if self.effective.ols {
            values.extend(&raw.ols);
        }
        if self.effective.covariance {
            values.extend(&raw.cov);
        }
        if self.effective.quantiles {
            if raw.quantiles.is_empty() {
                return Err(Error::Comparison(
                    self.spec_id(),
                    SummarySpec { quantiles: false, ..self.effective }.id(),
                ));
            }
            values.extend(&raw.quantiles);
        }
        if values.len() != self.len() {
            return Err(Error::shape("summary length differs from the reference"));
        }
        for (v, s) in values.iter_mut().zip(&self.scales) {
            *v /= s;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite summary statistic".into()));
        }
        Ok(SummaryVector {
            values,
            spec_id: self.spec_id(),
        })
    }
}

/// Summary of `series` standardized by scales computed from itself.
pub fn summary_stats(series: &SeriesData, p: usize, r: usize) -> Result<SummaryVector> {
    SummaryBuilder::new(series, p, r, SummarySpec::default())?.compute(series)
}
