mod common;

use stablecvar::abc::{run_hadmcmc_abc, AbcConfig, AbcTarget, EpsilonSpec, RandomWalkScales};
use stablecvar::bayes::{BetaPriorKind, ChainConfig, ChainTrace, PriorSpec};
use stablecvar::cvar::{simulate_cvar, CvarParams, SeriesData, TauSpec};
use stablecvar::linalg::{Mat, Vector};
use stablecvar::matvar::sample_inverse_wishart;
use stablecvar::rng::rng_from_seed;
use stablecvar::stable::StableParams;

use common::{batch_mean_se, ks_critical_1pct, ks_statistic};

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

fn observed(t: usize, seed: u64) -> (SeriesData, Vec<StableParams>) {
    let st = vec![StableParams::new(1.4, 0.0, 1.0, 0.0).unwrap(); 2];
    let tau = TauSpec::Modulus { modulus: 5 }.row_indices(t).unwrap();
    (simulate_cvar(&truth(), &st, &tau, t, &mut rng_from_seed(seed)).unwrap(), st)
}

fn cfg(burnin: usize, draws: usize, eps: f64, seed: u64) -> AbcConfig {
    let mut c = AbcConfig::new(ChainConfig::new(burnin, draws, seed));
    c.pilot = ChainConfig::new(100, 200, seed);
    c.epsilon = EpsilonSpec::Absolute { value: eps };
    c
}

fn run(s: &SeriesData, st: &[StableParams], priors: &PriorSpec, c: &AbcConfig, seed: u64) -> ChainTrace {
    run_hadmcmc_abc(s, 1, 1, st, priors, c, &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn a_looser_tolerance_accepts_first_where_replayed_chains_diverge() {
    // identical seeds give identical proposals until the first differing
    // decision; there the larger tolerance must be the one accepting
    let (s, st) = observed(120, 1);
    let priors = PriorSpec::vague(2, 2, 1);
    let eps = [40.0, 20.0, 10.0, 6.0];
    let traces: Vec<_> = eps.iter().map(|&e| run(&s, &st, &priors, &cfg(300, 1, e, 2), 3)).collect();
    let mut diverged = 0;
    for (k, pair) in traces.windows(2).enumerate() {
        let (loose, tight) = (&pair[0].iterations, &pair[1].iterations);
        if let Some(i) = (0..loose.len().min(tight.len())).find(|&i| loose[i].accepted != tight[i].accepted) {
            assert!(loose[i].accepted, "eps {} rejected where {} accepted at iteration {i}", eps[k], eps[k + 1]);
            diverged += 1;
        }
        let rate = |t: &ChainTrace| t.acceptance.joint.rate().unwrap();
        assert!(rate(&pair[0]) >= rate(&pair[1]), "acceptance rose as eps fell from {} to {}", eps[k], eps[k + 1]);
    }
    assert!(diverged > 0, "tolerances too loose to separate the chains");
}

#[test]
fn every_recorded_distance_is_within_tolerance() {
    let (s, st) = observed(120, 4);
    let priors = PriorSpec::vague(2, 2, 1);
    for block_updates in [false, true] {
        let mut c = cfg(200, 400, 0.0, 5);
        c.epsilon = EpsilonSpec::Calibrate { quantile: 0.3, draws: 60 };
        c.block_updates = block_updates;
        let t = run(&s, &st, &priors, &c, 6);
        assert_eq!(t.draws.len(), 400);
        for d in &t.draws {
            assert!(d.distance.unwrap() <= d.epsilon.unwrap());
        }
    }
}

#[test]
fn stored_draws_are_valid_states() {
    let (s, st) = observed(120, 7);
    let priors = PriorSpec::vague(2, 2, 1);
    let mut c = cfg(100, 200, 0.0, 8);
    c.epsilon = EpsilonSpec::Calibrate { quantile: 0.5, draws: 50 };
    let t = run(&s, &st, &priors, &c, 9);
    for d in &t.draws {
        assert!(d.state.sigma.clone().cholesky().is_some());
        assert!(d.state.lambda.iter().all(|&l| l > 0.0));
        assert_eq!(d.state.beta()[(0, 0)], 1.0);
        let p = CvarParams::from_b(&d.b, d.state.beta(), d.state.sigma.clone(), 1).unwrap();
        assert!((p.b_matrix() - &d.b).amax() < 1e-12);
    }
}

#[test]
fn kernel_free_prior_chain_recovers_the_prior() {
    // prior target, no kernel, random-walk moves. Conditional proposals
    // are data-concentrated and mix too slowly against the prior for a
    // marginal test; their ratio has its own unit test.
    let (s, st) = observed(50, 10);
    let mut priors = PriorSpec::vague(2, 2, 1);
    priors.s_mat = Mat::identity(2, 2) * 3.0;
    priors.h_dof = 6.0;
    priors.a_mat = Mat::identity(2, 2);
    priors.beta_prior = BetaPriorKind::MatrixNormal;
    let mut rng = rng_from_seed(13);
    let prior: Vec<f64> = (0..20_000)
        .map(|_| sample_inverse_wishart(&priors.s_mat, priors.h_dof, &mut rng).unwrap().trace())
        .collect();

    // larger (Σ, B̃) steps drop acceptance to ~1% and need far longer chains
    for (k, seed) in [12, 14].into_iter().enumerate() {
        let walk = RandomWalkScales { beta: 1.0, sigma: 0.5, b_tilde: 0.8 };
        let mut c = cfg(2000, 60_000, 0.0, 11 + k as u64);
        c.target = AbcTarget::Prior;
        c.block_updates = true;
        c.use_kernel = false;
        c.symmetric_proposals = Some(walk);
        let t = run(&s, &st, &priors, &c, seed);

        let trace_sigma: Vec<f64> = t.draws.iter().map(|d| d.state.sigma.trace()).collect();
        let beta: Vec<f64> = t.draws.iter().map(|d| d.state.beta_free[(0, 0)]).collect();

        // trace of IW(3I, 6) at n = 2 has mean 2; β_free ~ N(0, 1)
        let (m, se) = batch_mean_se(&trace_sigma, 50);
        assert!((m - 2.0).abs() < 3.5 * se, "{walk:?}: trace mean {m} ± {se}");
        let (m, se) = batch_mean_se(&beta, 50);
        assert!(m.abs() < 3.5 * se, "{walk:?}: beta mean {m} ± {se}");
        let sq: Vec<f64> = beta.iter().map(|b| b * b).collect();
        let (m, se) = batch_mean_se(&sq, 50);
        assert!((m - 1.0).abs() < 3.5 * se, "{walk:?}: beta second moment {m} ± {se}");

        let thinned: Vec<f64> = trace_sigma.iter().step_by(60).copied().collect();
        let d = ks_statistic(&thinned, &prior);
        assert!(d < ks_critical_1pct(thinned.len(), prior.len()), "{walk:?}: KS {d:.4}");
    }
}
