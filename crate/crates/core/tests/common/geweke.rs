//! Successive-conditional simulators: alternate data draws given the
//! parameters with one conditional update given the data. If the
//! conditional is right, the parameters keep their prior marginal.

use rand::Rng;
use rand_distr::StandardNormal;
use stablecvar::bayes::{cond_b_tilde_draw, cond_lambda_draw, cond_sigma_draw, d_lambda, PriorSpec, TransformedData};
use stablecvar::cvar::{build_design, simulate_cvar, CvarParams, TauSpec};
use stablecvar::linalg::{Mat, Vector};
use stablecvar::matvar::{build_transform, sample_inverse_wishart, sample_matrix_normal, MatrixNormalSpec};
use stablecvar::rng::rng_from_seed;
use stablecvar::stable::{sample_positive_stable, StableParams};

use super::{batch_mean_se, gaussian, mean_se};

const BATCHES: usize = 50;

pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub se: f64,
}

impl Check {
    fn from_chain(name: String, xs: &[f64], expected: f64, oracle_se: f64) -> Self {
        let (value, se) = batch_mean_se(xs, BATCHES);
        Check {
            name,
            value,
            expected,
            se: (se * se + oracle_se * oracle_se).sqrt(),
        }
    }

    pub fn z(&self) -> f64 {
        (self.value - self.expected) / self.se
    }

    pub fn within(&self, k: f64) -> bool {
        self.z().abs() <= k
    }
}

fn beta() -> Mat {
    Mat::from_column_slice(2, 1, &[1.0, -0.5])
}

fn gaussian_placeholder() -> Vec<StableParams> {
    vec![StableParams::new(2.0, 0.0, 1.0, 0.0).unwrap(); 2]
}

/// Σ by its marginal conditional, then B given Σ, on Gaussian data with
/// n = 2 and 20 design rows.
pub fn sigma_and_b(cycles: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng_from_seed(seed);
    let mut priors = PriorSpec::vague(2, 2, 1);
    priors.s_mat = Mat::identity(2, 2);
    priors.h_dof = 6.0;
    priors.a_mat = Mat::identity(2, 2) * 25.0;
    let a_inv = 1.0 / 25.0;
    let mut sigma = sample_inverse_wishart(&priors.s_mat, priors.h_dof, &mut rng).unwrap();
    let prior_b = |sigma: &Mat| MatrixNormalSpec::new(priors.p_mat.clone(), Mat::identity(2, 2) * a_inv, sigma.clone()).unwrap();
    let mut b = sample_matrix_normal(&prior_b(&sigma), &mut rng).unwrap();
    let stable = gaussian_placeholder();
    let mut trace = Vec::with_capacity(cycles);
    let mut b_rows = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let params = CvarParams::from_b(&b, beta(), sigma.clone(), 1).unwrap();
        let series = simulate_cvar(&params, &stable, &[], 21, &mut rng).unwrap();
        let d = build_design(&series, 1, &beta()).unwrap();
        sigma = cond_sigma_draw(&d, &priors, &mut rng).unwrap();
        b = cond_b_tilde_draw(&TransformedData::identity(&d.y), &d, &sigma, &priors, &mut rng).unwrap();
        trace.push(sigma.trace());
        b_rows.push(b.clone());
    }
    // IW(S, h) mean is S/(h − n − 1); B | Σ ~ MN(0, A⁻¹, Σ)
    let mean_sigma = 1.0 / (priors.h_dof - 3.0);
    let mut out = vec![Check::from_chain("trace(sigma)".into(), &trace, 2.0 * mean_sigma, 0.0)];
    for i in 0..2 {
        for j in 0..2 {
            let v: Vec<f64> = b_rows.iter().map(|m| m[(i, j)]).collect();
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            out.push(Check::from_chain(format!("b_{}_{}", i + 1, j + 1), &v, 0.0, 0.0));
            out.push(Check::from_chain(format!("b_{}_{}^2", i + 1, j + 1), &sq, a_inv * mean_sigma, 0.0));
        }
    }
    out
}

/// B̃ given Σ and λ on whitened data with inter-day rows, n = 2 and 20
/// design rows.
pub fn b_tilde(cycles: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng_from_seed(seed);
    let sigma = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let stable = vec![
        StableParams::new(1.5, 0.0, 0.8, 0.2).unwrap(),
        StableParams::new(1.5, 0.0, 1.2, -0.1).unwrap(),
    ];
    let delta = Vector::from_vec(vec![0.2, -0.1]);
    let lambda = Vector::from_vec(vec![2.5, 0.7]);
    let params = CvarParams::from_b(&Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.1, -0.2]), beta(), sigma.clone(), 1).unwrap();
    let tau = TauSpec::Modulus { modulus: 5 }.row_indices(21).unwrap();
    let series = simulate_cvar(&params, &stable, &tau, 21, &mut rng).unwrap();
    let d = build_design(&series, 1, &beta()).unwrap();
    assert!(!d.inter.is_empty());
    let ts = build_transform(&sigma, &d_lambda(&lambda, &stable), d.t() - d.inter.len(), d.t(), &d.inter).unwrap();
    let q_inv = ts.q_block.clone().try_inverse().unwrap();
    let offset = (ts.applied_block() * &delta).transpose();

    let mut priors = PriorSpec::vague(2, 2, 1);
    // prior precision comparable to WᵀW so the chain mixes
    priors.a_mat = Mat::identity(2, 2) * 50.0;
    priors.p_mat = Mat::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.05]);
    let a_inv = 1.0 / 50.0;
    let prior = MatrixNormalSpec::new(priors.p_mat.clone(), Mat::identity(2, 2) * a_inv, sigma.clone()).unwrap();
    let chol = sigma.clone().cholesky().unwrap().l();
    let mut bt = sample_matrix_normal(&prior, &mut rng).unwrap();
    let mut draws = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        // whitened responses follow W·B̃ + D̃ + E with rows of E ~ N(0, Σ);
        // map the inter-day rows back through the inverse transform
        let e = gaussian(d.t(), 2, &mut rng) * chol.transpose();
        let mut y = &d.w * &bt + e;
        for &t in &d.inter {
            let z = y.row(t) + &offset;
            y.set_row(t, &(z * &q_inv));
        }
        let data = TransformedData::new(&y, &ts, &delta).unwrap();
        bt = cond_b_tilde_draw(&data, &d, &sigma, &priors, &mut rng).unwrap();
        draws.push(bt.clone());
    }
    let mut out = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let v: Vec<f64> = draws.iter().map(|m| m[(i, j)]).collect();
            let p = priors.p_mat[(i, j)];
            let sq: Vec<f64> = v.iter().map(|x| (x - p).powi(2)).collect();
            out.push(Check::from_chain(format!("b_tilde_{}_{}", i + 1, j + 1), &v, p, 0.0));
            out.push(Check::from_chain(
                format!("(b_tilde_{}_{} - p)^2", i + 1, j + 1),
                &sq,
                a_inv * sigma[(j, j)],
                0.0,
            ));
        }
    }
    out
}

/// λ by independence Metropolis–Hastings given four inter-day residuals
/// per asset.
pub fn lambda(cycles: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng_from_seed(seed);
    let a = 1.5;
    let stable = vec![
        StableParams::new(a, 0.0, 1.0, 0.0).unwrap(),
        StableParams::new(a, 0.0, 2.0, 0.0).unwrap(),
    ];
    // oracle: independent prior draws
    let mut prior: Vec<f64> = (0..200_000).map(|_| sample_positive_stable(a, &mut rng).unwrap()).collect();
    let logs: Vec<f64> = prior.iter().map(|v| v.ln()).collect();
    let (log_mean, log_se) = mean_se(&logs);
    prior.sort_by(f64::total_cmp);
    let median = prior[prior.len() / 2];

    let m = 4;
    let mut lam = Vector::from_fn(2, |_, _| sample_positive_stable(a, &mut rng).unwrap());
    let mut draws = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let resid = Mat::from_fn(m, 2, |_, j| {
            let z: f64 = rng.sample(StandardNormal);
            lam[j].sqrt() * stable[j].gamma * z
        });
        lam = cond_lambda_draw(&resid, &stable, &lam, &mut rng).unwrap().0;
        draws.push(lam.clone());
    }
    let mut out = Vec::new();
    for j in 0..2 {
        let logs: Vec<f64> = draws.iter().map(|l| l[j].ln()).collect();
        let below: Vec<f64> = draws.iter().map(|l| (l[j] <= median) as u8 as f64).collect();
        out.push(Check::from_chain(format!("log lambda_{}", j + 1), &logs, log_mean, log_se));
        out.push(Check::from_chain(
            format!("P(lambda_{} <= prior median)", j + 1),
            &below,
            0.5,
            (0.25 / 200_000.0f64).sqrt(),
        ));
    }
    out
}
