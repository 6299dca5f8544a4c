//! Hybrid adaptive MCMC-ABC.
//!
//! State `θ = (λ, β, Σ, B̃)`, target `π(θ)·1{‖s(y_θ) − s(y)‖ ≤ ε}` where the
//! synthetic data `y_θ` come from the full, possibly skewed, model.
//!
//! - [`AbcTarget::Posterior`] (default): `π` is the symmetric-model
//!   posterior. A proposal is one sweep of its exact moves: Σ from the
//!   intra-day inverse-Wishart conditional, B̃ from the whitened
//!   matrix-normal conditional, λ by independence MH with prior proposals,
//!   β by adaptive Metropolis on its log-posterior. Each move leaves its
//!   symmetric-model conditional invariant, so the proposal densities cancel
//!   against the target and the kernel alone decides.
//! - [`AbcTarget::Prior`]: `π` is the prior. λ is proposed from its prior,
//!   β by adaptive Metropolis and (Σ, B̃) from the conjugate conditionals
//!   (or symmetric random walks); the log ratio is
//!   `[log p(θ*) − log q(θ*)] − [log p(θ) − log q(θ)]`, the λ prior
//!   cancelling against its own proposal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    b_tilde_posterior, gaussian_bayes_estimate, mh_accept, sigma_posterior, AcceptanceStats, AdaptiveConfig,
    AdaptiveMetropolis, ChainConfig, ChainState, ChainTrace, Draw, IterationRecord, PriorSpec,
};
use crate::bayes::{at_iteration, check_state, draw_iw, MixtureContext};
use crate::cvar::{assemble_beta, build_design, CvarParams, SeriesData};
use crate::error::{Error, Result};
use crate::linalg::{check_spd, symmetrize, unvec, vec as vec_of, Mat, Vector};
use crate::matvar::{
    forward_b, inverse_wishart_logpdf, matrix_normal_logpdf, sample_matrix_normal, MatrixNormalSpec,
};
use crate::stable::{positive_stable_unchecked, StableParams};

use super::summary::{SummaryBuilder, SummarySpec, SummaryVector};
use super::{calibrate_epsilon, first_row, simulate_synthetic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSpec {
    Absolute { value: f64 },
    /// `quantile` of `draws` distances between the observed summary and
    /// data simulated at the Gaussian-baseline pilot estimate.
    Calibrate { quantile: f64, draws: usize },
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        EpsilonSpec::Calibrate {
            quantile: 0.1,
            draws: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbcTarget {
    /// Symmetric-model posterior; exact-conditional sweeps as proposals.
    #[default]
    Posterior,
    /// Prior; explicit prior and proposal densities in the ratio.
    Prior,
}

/// Standard deviations of the symmetric random-walk proposals used in
/// place of the conjugate moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkScales {
    pub beta: f64,
    pub sigma: f64,
    pub b_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub target: AbcTarget,
    pub epsilon: EpsilonSpec,
    /// Strictly decreasing tolerances spread evenly over the burn-in.
    pub anneal: Option<Vec<f64>>,
    pub summary: SummarySpec,
    pub chain: ChainConfig,
    /// Gaussian-baseline chain giving the starting point and the pilot θ.
    pub pilot: ChainConfig,
    /// Iterations without an acceptance before giving up.
    pub stall_window: usize,
    /// Update λ, β and (Σ, B̃) as separate accept/reject blocks, each with
    /// its own synthetic data set.
    pub block_updates: bool,
    /// When false no data are simulated and every kernel value is 1.
    pub use_kernel: bool,
    /// Replace the β, Σ and B̃ proposals by symmetric random walks. Prior
    /// target only.
    pub symmetric_proposals: Option<RandomWalkScales>,
}

impl AbcConfig {
    pub fn new(chain: ChainConfig) -> Self {
        let seed = chain.seed;
        AbcConfig {
            target: AbcTarget::default(),
            epsilon: EpsilonSpec::default(),
            anneal: None,
            summary: SummarySpec::default(),
            chain,
            pilot: ChainConfig::new(500, 1000, seed),
            stall_window: 5000,
            block_updates: false,
            use_kernel: true,
            symmetric_proposals: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.pilot.validate()?;
        match &self.epsilon {
            EpsilonSpec::Absolute { value } if !(*value >= 0.0) => {
                return Err(Error::Validation(format!("tolerance must be non-negative, got {value}")))
            }
            EpsilonSpec::Calibrate { quantile, draws } if !(0.0..=1.0).contains(quantile) || *draws == 0 => {
                return Err(Error::Validation("calibration quantile must be in [0,1] with at least one draw".into()))
            }
            _ => {}
        }
        if let Some(a) = &self.anneal {
            if a.is_empty() || a.iter().any(|v| !(*v >= 0.0)) || a.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Validation("anneal schedule must be non-empty, non-negative and strictly decreasing".into()));
            }
        }
        if self.stall_window == 0 {
            return Err(Error::Validation("stall window must be positive".into()));
        }
        if let Some(rw) = &self.symmetric_proposals {
            if self.target != AbcTarget::Prior {
                return Err(Error::Validation("random-walk proposals need the prior target".into()));
            }
            if !(rw.beta > 0.0 && rw.sigma > 0.0 && rw.b_tilde > 0.0) {
                return Err(Error::Validation("random-walk scales must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Log prior and log conjugate-proposal density `log C1(Σ | β) +
/// log C2(B̃ | Σ, β, λ)` of one state; the latter is 0 under random walks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogTerms {
    pub prior: f64,
    pub proposal: f64,
}

/// Prior-target log MH ratio, kernel aside. `conditional` is set when
/// (Σ, B̃) were drawn from the conjugate conditionals at the proposed
/// (β, λ); otherwise the move is symmetric.
pub(crate) fn abc_log_ratio(current: &LogTerms, proposed: &LogTerms, conditional: bool) -> f64 {
    let d_prior = proposed.prior - current.prior;
    if conditional {
        d_prior - (proposed.proposal - current.proposal)
    } else {
        d_prior
    }
}

#[derive(Debug, Clone)]
struct AbcState {
    lambda: Vector,
    beta_free: Vector,
    sigma: Mat,
    b_tilde: Mat,
    b: Mat,
    distance: f64,
    terms: LogTerms,
}

struct Engine<'a> {
    ctx: MixtureContext<'a>,
    intra_pos: Vec<usize>,
    priors: &'a PriorSpec,
    stable: &'a [StableParams],
    symmetric: Option<RandomWalkScales>,
    builder: SummaryBuilder,
    s_obs: SummaryVector,
    x0: Vector,
    tau_idx: &'a [usize],
    t_len: usize,
    n: usize,
    r: usize,
}

impl Engine<'_> {
    fn beta(&self, beta_free: &Vector) -> Mat {
        assemble_beta(&unvec(beta_free, self.n - self.r, self.r))
    }

    fn log_prior(&self, beta_free: &Vector, sigma: &Mat, b_tilde: &Mat) -> Result<f64> {
        let pr = self.priors;
        let b_prior = MatrixNormalSpec {
            mean: pr.p_mat.clone(),
            row_scale: crate::linalg::spd_inverse(&pr.a_mat, "A")?,
            col_scale: sigma.clone(),
        };
        Ok(pr.beta_log_prior(&self.beta(beta_free))?
            + inverse_wishart_logpdf(sigma, &pr.s_mat, pr.h_dof)?
            + matrix_normal_logpdf(b_tilde, &b_prior)?)
    }

    /// Conjugate conditionals given (β, λ): Σ's inverse-Wishart parameters
    /// and, for a given Σ, B̃'s matrix-normal law.
    fn sigma_law(&self, beta_free: &Vector) -> Result<(Mat, f64)> {
        let d = self.ctx.design.with_beta(&self.beta(beta_free))?.subset(&self.intra_pos);
        sigma_posterior(&d.y, &d.w, self.priors)
    }

    fn b_tilde_law(&self, beta_free: &Vector, lambda: &Vector, sigma: &Mat) -> Result<MatrixNormalSpec> {
        let d = self.ctx.design.with_beta(&self.beta(beta_free))?;
        let ts = self.ctx.transform(sigma, lambda)?;
        b_tilde_posterior(&self.ctx.data(&ts)?, &d.w, sigma, self.priors)
    }

    fn log_proposal(&self, beta_free: &Vector, lambda: &Vector, sigma: &Mat, b_tilde: &Mat) -> Result<f64> {
        if self.symmetric.is_some() {
            return Ok(0.0);
        }
        let (scale, dof) = self.sigma_law(beta_free)?;
        let spec = self.b_tilde_law(beta_free, lambda, sigma)?;
        Ok(inverse_wishart_logpdf(sigma, &crate::linalg::regularize_spd(&scale, "sigma scale"), dof)?
            + matrix_normal_logpdf(b_tilde, &spec)?)
    }

    fn terms(&self, beta_free: &Vector, lambda: &Vector, sigma: &Mat, b_tilde: &Mat) -> Result<LogTerms> {
        Ok(LogTerms {
            prior: self.log_prior(beta_free, sigma, b_tilde)?,
            proposal: self.log_proposal(beta_free, lambda, sigma, b_tilde)?,
        })
    }

    fn draw_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.n,
            self.stable
                .iter()
                .map(|s| if s.is_gaussian() { 2.0 } else { positive_stable_unchecked(s.a, rng) }),
        )
    }

    /// New (Σ, B̃) given (β, λ): conjugate draws, or random-walk moves
    /// from the current values. `None` when a random-walk Σ leaves the SPD
    /// cone.
    fn draw_conjugate<R: Rng + ?Sized>(
        &self,
        beta_free: &Vector,
        lambda: &Vector,
        current: &AbcState,
        rng: &mut R,
    ) -> Result<Option<(Mat, Mat)>> {
        match self.symmetric {
            Some(rw) => {
                let e = Mat::from_fn(self.n, self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let sigma = &current.sigma + symmetrize(&(&e + e.transpose())) * (rw.sigma / 2f64.sqrt());
                let (k, n) = current.b_tilde.shape();
                let b_tilde = &current.b_tilde + Mat::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal)) * rw.b_tilde;
                if check_spd(&sigma, "sigma").is_err() {
                    return Ok(None);
                }
                Ok(Some((sigma, b_tilde)))
            }
            None => {
                let (scale, dof) = self.sigma_law(beta_free)?;
                let sigma = draw_iw(&scale, dof, rng)?;
                let spec = self.b_tilde_law(beta_free, lambda, &sigma)?;
                let b_tilde = sample_matrix_normal(&spec, rng)?;
                Ok(Some((sigma, b_tilde)))
            }
        }
    }

    fn recover(&self, b_tilde: &Mat, sigma: &Mat, lambda: &Vector) -> Result<Mat> {
        let ts = self.ctx.transform(sigma, lambda)?;
        self.ctx.recover(b_tilde, &ts)
    }

    /// Distance of a synthetic data set simulated at the state; `None` on
    /// simulation or summary failure.
    fn distance<R: Rng + ?Sized>(&self, beta_free: &Vector, sigma: &Mat, b: &Mat, rng: &mut R) -> Option<f64> {
        let theta = CvarParams::from_b(b, self.beta(beta_free), sigma.clone(), 1).ok()?;
        let syn = simulate_synthetic(&theta, self.stable, self.tau_idx, self.t_len, &self.x0, rng).ok()?;
        let s = self.builder.compute(&syn).ok()?;
        self.s_obs.distance(&s).ok()
    }

    /// Prior-target candidate from partial changes to the current state.
    fn candidate(
        &self,
        current: &AbcState,
        lambda: Vector,
        beta_free: Vector,
        conj: Option<(Mat, Mat)>,
    ) -> Result<AbcState> {
        let (sigma, b_tilde) = conj.unwrap_or_else(|| (current.sigma.clone(), current.b_tilde.clone()));
        let b = self.recover(&b_tilde, &sigma, &lambda)?;
        let terms = self.terms(&beta_free, &lambda, &sigma, &b_tilde)?;
        Ok(AbcState {
            lambda,
            beta_free,
            sigma,
            b_tilde,
            b,
            distance: f64::NAN,
            terms,
        })
    }

    /// Accept/reject a candidate. Rejects early, before simulating, when
    /// the uniform draw already exceeds the density ratio.
    fn decide<R: Rng + ?Sized>(&self, log_ratio: f64, cand: &mut AbcState, eps: f64, use_kernel: bool, rng: &mut R) -> bool {
        if !mh_accept(log_ratio, rng) {
            return false;
        }
        if !use_kernel {
            return true;
        }
        match self.distance(&cand.beta_free, &cand.sigma, &cand.b, rng) {
            Some(d) => {
                cand.distance = d;
                d <= eps
            }
            None => false,
        }
    }
}

/// Tolerance in force at iteration `it`.
fn epsilon_at(it: usize, burnin: usize, anneal: Option<&Vec<f64>>, eps: f64) -> f64 {
    match anneal {
        Some(a) if it < burnin => {
            let stage = it * a.len() / burnin.max(1);
            a[stage.min(a.len() - 1)]
        }
        _ => eps,
    }
}

/// Outcome of one iteration's accept/reject steps.
#[derive(Default)]
struct Step {
    lambda: Option<bool>,
    beta: Option<bool>,
    conj: Option<bool>,
    joint: Option<bool>,
}

impl Step {
    fn any(&self) -> bool {
        [self.lambda, self.beta, self.conj, self.joint].iter().any(|f| *f == Some(true))
    }

    fn record(&self, stats: &mut AcceptanceStats) {
        if let Some(a) = self.lambda {
            stats.lambda.add(a);
        }
        if let Some(a) = self.beta {
            stats.beta.add(a);
        }
        if let Some(a) = self.conj {
            stats.sigma.add(a);
            stats.b_tilde.add(a);
        }
        if let Some(a) = self.joint {
            stats.joint.add(a);
        }
    }
}

impl Engine<'_> {
    /// Sweep-proposal state with no density terms.
    fn swept(lambda: Vector, beta_free: Vector, sigma: Mat, b_tilde: Mat, b: Mat) -> AbcState {
        AbcState {
            lambda,
            beta_free,
            sigma,
            b_tilde,
            b,
            distance: f64::NAN,
            terms: LogTerms { prior: 0.0, proposal: 0.0 },
        }
    }

    /// Kernel-only decision on a sweep proposal; the design is reset to
    /// the current β on rejection.
    fn settle<R: Rng + ?Sized>(
        &mut self,
        cur: &mut AbcState,
        mut cand: AbcState,
        eps: f64,
        use_kernel: bool,
        rng: &mut R,
    ) -> Result<bool> {
        let acc = self.decide(0.0, &mut cand, eps, use_kernel, rng);
        if acc {
            *cur = cand;
        }
        self.ctx.set_beta_free(&cur.beta_free)?;
        Ok(acc)
    }

    fn posterior_iteration<R: Rng + ?Sized>(
        &mut self,
        cur: &mut AbcState,
        am: &mut AdaptiveMetropolis,
        cfg: &AbcConfig,
        eps: f64,
        rng: &mut R,
    ) -> Result<Step> {
        let steps = cfg.chain.beta_steps;
        let mut out = Step::default();
        if cfg.block_updates {
            let (sigma, b_tilde, b) = self.ctx.conjugate_draw(&cur.lambda, rng)?;
            let cand = Self::swept(cur.lambda.clone(), cur.beta_free.clone(), sigma, b_tilde, b);
            out.conj = Some(self.settle(cur, cand, eps, cfg.use_kernel, rng)?);

            let (lambda, _) = self.ctx.lambda_move(&cur.b, &cur.lambda, rng)?;
            // a proposal equal to the current state is not a move
            out.lambda = Some(if lambda != cur.lambda {
                let cand = Self::swept(lambda, cur.beta_free.clone(), cur.sigma.clone(), cur.b_tilde.clone(), cur.b.clone());
                self.settle(cur, cand, eps, cfg.use_kernel, rng)?
            } else {
                false
            });

            let (beta, _) = self.ctx.beta_moves(am, &cur.beta_free, &cur.sigma, &cur.lambda, steps, rng)?;
            out.beta = Some(if beta != cur.beta_free {
                let cand = Self::swept(cur.lambda.clone(), beta, cur.sigma.clone(), cur.b_tilde.clone(), cur.b.clone());
                self.settle(cur, cand, eps, cfg.use_kernel, rng)?
            } else {
                false
            });
        } else {
            let (sigma, b_tilde, b) = self.ctx.conjugate_draw(&cur.lambda, rng)?;
            let (lambda, _) = self.ctx.lambda_move(&b, &cur.lambda, rng)?;
            let (beta, _) = self.ctx.beta_moves(am, &cur.beta_free, &sigma, &lambda, steps, rng)?;
            let cand = Self::swept(lambda, beta, sigma, b_tilde, b);
            out.joint = Some(self.settle(cur, cand, eps, cfg.use_kernel, rng)?);
        }
        Ok(out)
    }

    fn prior_iteration<R: Rng + ?Sized>(
        &self,
        cur: &mut AbcState,
        am: &mut AdaptiveMetropolis,
        cfg: &AbcConfig,
        eps: f64,
        rng: &mut R,
    ) -> Result<Step> {
        let conditional = self.symmetric.is_none();
        let mut out = Step::default();
        // numerically unusable candidates are rejections
        let try_move = |cur: &mut AbcState, cand: Result<Option<AbcState>>, conditional: bool, rng: &mut R| match cand {
            Ok(Some(mut cand)) => {
                let lr = abc_log_ratio(&cur.terms, &cand.terms, conditional);
                let acc = self.decide(lr, &mut cand, eps, cfg.use_kernel, rng);
                if acc {
                    *cur = cand;
                }
                acc
            }
            _ => false,
        };
        if cfg.block_updates {
            let lambda = self.draw_lambda(rng);
            let cand = self.candidate(cur, lambda, cur.beta_free.clone(), None).map(Some);
            out.lambda = Some(try_move(cur, cand, false, rng));

            let mut beta_acc = false;
            for _ in 0..cfg.chain.beta_steps {
                let beta = am.propose(&cur.beta_free, rng);
                let cand = self.candidate(cur, cur.lambda.clone(), beta, None).map(Some);
                beta_acc |= try_move(cur, cand, false, rng);
                am.record(&cur.beta_free);
            }
            out.beta = Some(beta_acc);

            let cand = self
                .draw_conjugate(&cur.beta_free, &cur.lambda, cur, rng)
                .and_then(|c| c.map(|c| self.candidate(cur, cur.lambda.clone(), cur.beta_free.clone(), Some(c))).transpose());
            out.conj = Some(try_move(cur, cand, conditional, rng));
        } else {
            let lambda = self.draw_lambda(rng);
            let beta = am.propose(&cur.beta_free, rng);
            let cand = self
                .draw_conjugate(&beta, &lambda, cur, rng)
                .and_then(|c| c.map(|c| self.candidate(cur, lambda, beta, Some(c))).transpose());
            out.joint = Some(try_move(cur, cand, conditional, rng));
            am.record(&cur.beta_free);
        }
        Ok(out)
    }
}

/// HAdMCMC-ABC sampler. Stable laws are fixed inputs and may be skewed;
/// requires `p = 1`.
pub fn run_hadmcmc_abc<R: Rng + ?Sized>(
    series: &SeriesData,
    p: usize,
    r: usize,
    stable: &[StableParams],
    priors: &PriorSpec,
    cfg: &AbcConfig,
    rng: &mut R,
) -> Result<ChainTrace> {
    cfg.validate()?;
    let n = series.n();
    if p != 1 {
        return Err(Error::Validation(format!(
            "the transformed sampler supports lag order 1 only, got p={p}"
        )));
    }
    if r == 0 || r >= n {
        return Err(Error::Validation(format!("rank r={r} must be in 1..{n}")));
    }
    if stable.len() != n {
        return Err(Error::shape(format!("{} stable laws given for {n} assets", stable.len())));
    }
    for s in stable {
        s.validate()?;
    }
    priors.validate(n, crate::cvar::regressor_count(n, p, r), r)?;

    let pilot_trace = gaussian_bayes_estimate(series, p, r, priors, &cfg.pilot, rng)?;
    let pilot = pilot_trace.mmse_params()?;
    let builder = SummaryBuilder::new(series, p, r, cfg.summary)?;
    let eps = match &cfg.epsilon {
        EpsilonSpec::Absolute { value } => *value,
        EpsilonSpec::Calibrate { quantile, draws } => {
            calibrate_epsilon(series, &builder, &pilot, stable, *quantile, *draws, rng)?
        }
    };
    log::info!("ABC tolerance {eps:.4} on summary spec {}", builder.spec_id());

    let design = build_design(series, p, &pilot.beta_coint)?;
    let intra_pos = design.intra();
    let mut engine = Engine {
        ctx: MixtureContext::new(design, stable, priors),
        intra_pos,
        priors,
        stable,
        symmetric: cfg.symmetric_proposals,
        s_obs: builder.compute(series)?,
        builder,
        x0: first_row(series),
        tau_idx: &series.tau_idx,
        t_len: series.len(),
        n,
        r,
    };

    // start at the pilot β with Gaussian mixing; (Σ, B̃) from the
    // conditionals there so the state is typical under its own proposal
    let lambda0 = Vector::from_element(n, 2.0);
    let beta0 = vec_of(&pilot.beta_free());
    let ts0 = engine.ctx.transform(&pilot.sigma, &lambda0)?;
    let seed_state = AbcState {
        lambda: lambda0.clone(),
        beta_free: beta0.clone(),
        sigma: pilot.sigma.clone(),
        b_tilde: forward_b(&pilot.b_matrix(), &ts0)? / ts0.total_t as f64,
        b: pilot.b_matrix(),
        distance: f64::NAN,
        terms: LogTerms { prior: 0.0, proposal: 0.0 },
    };
    let mut cur = match cfg.target {
        AbcTarget::Posterior => {
            let (sigma, b_tilde, b) = engine.ctx.conjugate_draw(&lambda0, rng)?;
            Engine::swept(lambda0, beta0, sigma, b_tilde, b)
        }
        AbcTarget::Prior => {
            let conj0 = match cfg.symmetric_proposals {
                Some(_) => None,
                None => engine.draw_conjugate(&beta0, &lambda0, &seed_state, rng)?,
            };
            engine.candidate(&seed_state, lambda0, beta0, conj0)?
        }
    };
    if cfg.use_kernel {
        cur.distance = engine
            .distance(&cur.beta_free, &cur.sigma, &cur.b, rng)
            .ok_or_else(|| Error::Numeric("simulation at the starting point failed".into()))?;
    }

    let adaptive = match cfg.symmetric_proposals {
        Some(rw) => AdaptiveConfig {
            adapt_weight: 0.0,
            warmup: usize::MAX,
            fixed_scale: rw.beta * (cur.beta_free.len() as f64).sqrt(),
        },
        None => cfg.chain.adaptive,
    };
    let mut am = AdaptiveMetropolis::new(cur.beta_free.len(), adaptive);
    let mut stats = AcceptanceStats::default();
    let mut draws = Vec::with_capacity(cfg.chain.draws);
    let mut iterations = Vec::new();
    let mut last_accept = 0usize;
    let mut it = 0usize;

    while draws.len() < cfg.chain.draws {
        let eps_it = epsilon_at(it, cfg.chain.burnin, cfg.anneal.as_ref(), eps);
        let step = match cfg.target {
            AbcTarget::Posterior => engine.posterior_iteration(&mut cur, &mut am, cfg, eps_it, rng),
            AbcTarget::Prior => engine.prior_iteration(&mut cur, &mut am, cfg, eps_it, rng),
        };
        let step = match step {
            Ok(s) => s,
            // a failed sweep proposes nothing; the design is back at the current β
            Err(e) => {
                log::debug!("iteration {it}: {}", at_iteration(it)(e));
                engine.ctx.set_beta_free(&cur.beta_free)?;
                Step::default()
            }
        };
        step.record(&mut stats);
        let any_accept = step.any();

        if any_accept {
            last_accept = it;
        } else if it - last_accept >= cfg.stall_window {
            return Err(Error::Stall { window: cfg.stall_window });
        }
        iterations.push(IterationRecord {
            epsilon: eps_it,
            distance: cur.distance,
            accepted: any_accept,
        });

        // the sampling phase starts once the current state satisfies the
        // final tolerance
        let valid = !cfg.use_kernel || cur.distance <= eps;
        if it >= cfg.chain.burnin && (valid || !draws.is_empty()) {
            let state = ChainState {
                sigma: cur.sigma.clone(),
                b_tilde: cur.b_tilde.clone(),
                beta_free: unvec(&cur.beta_free, n - r, r),
                lambda: cur.lambda.clone(),
            };
            check_state(&state, &cur.b, it)?;
            draws.push(Draw {
                state,
                b: cur.b.clone(),
                distance: cfg.use_kernel.then_some(cur.distance),
                epsilon: Some(eps),
            });
        }
        it += 1;
    }

    let mut config = cfg.chain.clone();
    config.adaptive = adaptive;
    Ok(ChainTrace {
        sampler: "abc".into(),
        draws,
        iterations,
        acceptance: stats,
        config,
        p,
    })
}
