use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Mat, Vector};
use crate::rng::rng_from_seed;
use crate::stable::{sample_stable_one, StableParams};

use super::params::CvarParams;
use super::series::{SeriesData, SeriesMeta};

/// Modulus bound above which the companion matrix is reported as explosive.
const EXPLOSIVE_TOL: f64 = 1e-6;

/// Levels-VAR companion matrix implied by the error-correction form.
pub fn companion_matrix(params: &CvarParams) -> Mat {
    let n = params.n();
    let p = params.p;
    let pi = params.pi();
    let mut a: Vec<Mat> = Vec::with_capacity(p);
    let eye = Mat::identity(n, n);
    if p == 1 {
        a.push(&eye + &pi);
    } else {
        a.push(&eye + &pi + &params.psi[0]);
        for i in 1..p - 1 {
            a.push(&params.psi[i] - &params.psi[i - 1]);
        }
        a.push(-&params.psi[p - 2]);
    }
    let mut c = Mat::zeros(n * p, n * p);
    for (i, ai) in a.iter().enumerate() {
        c.view_mut((0, i * n), (n, n)).copy_from(ai);
    }
    for i in 1..p {
        c.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
    }
    c
}

pub fn max_companion_modulus(params: &CvarParams) -> f64 {
    companion_matrix(params)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Simulates `T` steps of the model from `x_0 = 0` with Gaussian
/// innovations off the boundary rows and per-asset stable innovations on
/// them. Row `t−1` of the output holds `x_t`.
///
/// Gaussian innovations are drawn at every step from one sub-stream and
/// stable draws come from a second one, so two calls with the same seed
/// share their Gaussian path regardless of the boundary schedule.
pub fn simulate_cvar<R: Rng + ?Sized>(
    params: &CvarParams,
    stable: &[StableParams],
    tau_idx: &[usize],
    t_len: usize,
    rng: &mut R,
) -> Result<SeriesData> {
    simulate_path(params, stable, tau_idx, t_len, None, rng)
}

/// Like [`simulate_cvar`] but with row 0 pinned to `x_init`; rows from 1
/// on are simulated from it. Innovations are drawn for row 0 as well, so
/// the random streams line up with [`simulate_cvar`].
pub fn simulate_cvar_from<R: Rng + ?Sized>(
    params: &CvarParams,
    stable: &[StableParams],
    tau_idx: &[usize],
    t_len: usize,
    x_init: &Vector,
    rng: &mut R,
) -> Result<SeriesData> {
    if x_init.len() != params.n() || x_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::shape("initial level must be a finite vector of length n"));
    }
    simulate_path(params, stable, tau_idx, t_len, Some(x_init), rng)
}

fn simulate_path<R: Rng + ?Sized>(
    params: &CvarParams,
    stable: &[StableParams],
    tau_idx: &[usize],
    t_len: usize,
    x_init: Option<&Vector>,
    rng: &mut R,
) -> Result<SeriesData> {
    params.validate()?;
    let n = params.n();
    if stable.len() != n && !tau_idx.is_empty() {
        return Err(Error::shape(format!("{} stable laws given for {n} assets", stable.len())));
    }
    for s in stable {
        s.validate()?;
    }
    if t_len == 0 {
        return Err(Error::Validation("series length must be positive".into()));
    }
    if tau_idx.windows(2).any(|w| w[0] >= w[1]) || tau_idx.last().is_some_and(|&t| t >= t_len) {
        return Err(Error::Validation("boundary rows must be increasing and within the series".into()));
    }
    let chol = cholesky(&params.sigma, "sigma")?.unpack();
    let mut gauss_rng = rng_from_seed(rng.next_u64());
    let mut stable_rng = rng_from_seed(rng.next_u64());

    let pi = params.pi();
    let mut prices = Mat::zeros(t_len, n);
    let mut x_prev = Vector::zeros(n);
    let mut lags: Vec<Vector> = vec![Vector::zeros(n); params.p.saturating_sub(1)];
    let mut next_tau = tau_idx.iter().peekable();
    for row in 0..t_len {
        let g = Vector::from_fn(n, |_, _| gauss_rng.sample::<f64, _>(StandardNormal));
        let eps = if next_tau.next_if(|&&t| t == row).is_some() {
            Vector::from_fn(n, |i, _| sample_stable_one(&stable[i], &mut stable_rng))
        } else {
            &chol * g
        };
        let mut dx = &params.mu + &pi * &x_prev + eps;
        for (psi, lag) in params.psi.iter().zip(&lags) {
            dx += psi * lag;
        }
        let x = match x_init {
            Some(x0) if row == 0 => x0.clone(),
            _ => &x_prev + &dx,
        };
        prices.row_mut(row).copy_from(&x.transpose());
        if !lags.is_empty() && !(x_init.is_some() && row == 0) {
            lags.rotate_right(1);
            lags[0] = dx;
        }
        x_prev = x;
    }
    if prices.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("simulated series diverged".into()));
    }

    let mut warnings = Vec::new();
    let modulus = max_companion_modulus(params);
    if modulus > 1.0 + EXPLOSIVE_TOL {
        let msg = format!("explosive parameters: companion eigenvalue modulus {modulus:.6}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    SeriesData::new(
        prices,
        tau_idx.to_vec(),
        SeriesMeta {
            assets: (1..=n).map(|i| format!("asset{i}")).collect(),
            interval: "step".into(),
            timestamps: Vec::new(),
            warnings,
        },
    )
}
