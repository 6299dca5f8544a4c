//! Approximate Bayesian computation for the skewed-stable model.

mod sampler;
mod summary;

pub use sampler::{run_hadmcmc_abc, AbcConfig, AbcTarget, EpsilonSpec, RandomWalkScales};
pub use summary::{summary_stats, SummaryBuilder, SummarySpec, SummaryVector, MIN_QUANTILE_POINTS, QUANTILE_LEVELS};

use rand::Rng;

use crate::cvar::{simulate_cvar_from, CvarParams, SeriesData};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::stable::{quantile, StableParams};

/// Hard-decision kernel: 1 iff `‖s_obs − s_sim‖₂ ≤ ε`.
pub fn abc_kernel(s_obs: &SummaryVector, s_sim: &SummaryVector, epsilon: f64) -> Result<u8> {
    if !(epsilon >= 0.0) {
        return Err(Error::domain(format!("tolerance must be non-negative, got {epsilon}")));
    }
    Ok((s_obs.distance(s_sim)? <= epsilon) as u8)
}

/// Synthetic data set under `theta` with the observed boundary schedule.
/// Row 0 is pinned to the observed first row so level-dependent terms
/// line up; boundary innovations are fresh draws from the (possibly
/// skewed) stable laws.
pub fn simulate_synthetic<R: Rng + ?Sized>(
    theta: &CvarParams,
    stable: &[StableParams],
    tau_idx: &[usize],
    t_len: usize,
    x_init: &Vector,
    rng: &mut R,
) -> Result<SeriesData> {
    simulate_cvar_from(theta, stable, tau_idx, t_len, x_init, rng)
}

/// First row of a series as a vector.
pub fn first_row(series: &SeriesData) -> Vector {
    series.prices.row(0).transpose()
}

/// The `q`-quantile of same-θ distances: summaries of `count` pairs of
/// independent synthetic data sets, both simulated at `pilot` with the
/// observed boundary schedule and start.
pub fn calibrate_epsilon<R: Rng + ?Sized>(
    observed: &SeriesData,
    builder: &SummaryBuilder,
    pilot: &CvarParams,
    stable: &[StableParams],
    q: f64,
    count: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || count == 0 {
        return Err(Error::Validation(format!(
            "calibration needs a quantile in [0,1] and at least one pair, got q={q}, count={count}"
        )));
    }
    let x0 = first_row(observed);
    let simulate = |rng: &mut R| -> Result<SummaryVector> {
        let syn = simulate_synthetic(pilot, stable, &observed.tau_idx, observed.len(), &x0, rng)?;
        builder.compute(&syn)
    };
    let mut dist = Vec::with_capacity(count);
    let mut failures = 0;
    while dist.len() < count {
        match simulate(rng).and_then(|a| Ok((a, simulate(rng)?))) {
            Ok((a, b)) => dist.push(a.distance(&b)?),
            Err(e) => {
                failures += 1;
                if failures > count {
                    return Err(e);
                }
            }
        }
    }
    dist.sort_by(f64::total_cmp);
    Ok(quantile(&dist, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::TauSpec;
    use crate::linalg::Mat;
    use crate::rng::rng_from_seed;

    fn sv(values: Vec<f64>) -> SummaryVector {
        SummaryVector {
            values,
            spec_id: "x".into(),
        }
    }

    #[test]
    fn kernel_boundaries() {
        let a = sv(vec![0.0, 0.0]);
        assert_eq!(abc_kernel(&a, &a, 0.0).unwrap(), 1);
        let b = sv(vec![3.0, 4.0]);
        assert_eq!(abc_kernel(&a, &b, 5.0).unwrap(), 1);
        assert_eq!(abc_kernel(&a, &b, 5.0 - 1e-9).unwrap(), 0);
        let c = sv(vec![0.0, 0.5]);
        assert_eq!(abc_kernel(&a, &c, 0.5).unwrap(), 1);
        let mut other = a.clone();
        other.spec_id = "y".into();
        assert!(matches!(abc_kernel(&a, &other, 1.0), Err(Error::Comparison(..))));
        assert!(abc_kernel(&a, &a, -1.0).is_err());
    }

    fn truth() -> CvarParams {
        CvarParams {
            mu: Vector::zeros(2),
            alpha_adj: Mat::from_row_slice(2, 1, &[0.1, -0.3]),
            beta_coint: Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            psi: vec![],
            sigma: Mat::identity(2, 2),
            r: 1,
            p: 1,
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let st = vec![StableParams::new(1.3, 0.5, 1.0, 0.0).unwrap(); 2];
        let tau = TauSpec::Modulus { modulus: 50 }.row_indices(200).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 2.0]);
        let a = simulate_synthetic(&truth(), &st, &tau, 200, &x0, &mut rng_from_seed(3)).unwrap();
        let b = simulate_synthetic(&truth(), &st, &tau, 200, &x0, &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_closure() {
        let st = vec![StableParams::new(1.3, 0.5, 1.0, 0.0).unwrap(); 2];
        let tau = TauSpec::Modulus { modulus: 50 }.row_indices(500).unwrap();
        let obs = crate::cvar::simulate_cvar(&truth(), &st, &tau, 500, &mut rng_from_seed(11)).unwrap();
        let builder = SummaryBuilder::new(&obs, 1, 1, SummarySpec::default()).unwrap();
        let eps = calibrate_epsilon(&obs, &builder, &truth(), &st, 0.1, 200, &mut rng_from_seed(12)).unwrap();
        // each attempt: a fresh data set from the truth against a fresh simulation
        let x0 = first_row(&obs);
        let mut rng = rng_from_seed(13);
        let hits = (0..200)
            .filter(|_| {
                let a = simulate_synthetic(&truth(), &st, &tau, 500, &x0, &mut rng).unwrap();
                let b = simulate_synthetic(&truth(), &st, &tau, 500, &x0, &mut rng).unwrap();
                abc_kernel(&builder.compute(&a).unwrap(), &builder.compute(&b).unwrap(), eps).unwrap() == 1
            })
            .count();
        assert!((10..=30).contains(&hits), "{hits} of 200");
    }
}
