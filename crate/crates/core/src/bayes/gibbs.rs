use rand::Rng;

use crate::cvar::{assemble_beta, build_design, johansen_estimate, DesignSet, SeriesData};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, unvec, vec as vec_of, Mat, Vector};
use crate::matvar::{build_transform, recover_b, TransformSet};
use crate::stable::StableParams;

use super::adaptive::AdaptiveMetropolis;
use super::conditionals::{
    beta_logpost, cond_b_tilde_draw, cond_lambda_draw, cond_sigma_draw, d_lambda, TransformedData,
};
use super::prior::PriorSpec;
use super::trace::{AcceptanceStats, ChainConfig, ChainState, ChainTrace, Draw};

/// Wraps numeric failures inside a sweep with the iteration index.
pub(crate) fn at_iteration(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(_) | Error::Conditioning { .. } | Error::Decomposition { .. } => Error::Sampler {
            iteration,
            reason: e.to_string(),
        },
        other => other,
    }
}

pub(crate) fn check_state(state: &ChainState, b: &Mat, iteration: usize) -> Result<()> {
    let finite = all_finite(&state.sigma) && all_finite(&state.b_tilde) && all_finite(&state.beta_free) && all_finite(b);
    if !finite || state.lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Sampler {
            iteration,
            reason: "non-finite or non-positive chain state".into(),
        });
    }
    Ok(())
}

/// Starting β: the Johansen estimate when it exists, otherwise zeros in the
/// free block.
pub(crate) fn initial_beta_free(series: &SeriesData, p: usize, r: usize) -> Mat {
    let n = series.n();
    match johansen_estimate(series, p, r) {
        Ok(params) if all_finite(&params.beta_coint) => params.beta_free(),
        _ => Mat::zeros(n - r, r),
    }
}

/// Everything a sweep of the mixture model needs that does not change
/// between sweeps, plus the design for the current β.
pub(crate) struct MixtureContext<'a> {
    pub design: DesignSet,
    pub stable: &'a [StableParams],
    pub priors: &'a PriorSpec,
    pub delta: Vector,
}

impl<'a> MixtureContext<'a> {
    pub fn new(design: DesignSet, stable: &'a [StableParams], priors: &'a PriorSpec) -> Self {
        let delta = Vector::from_iterator(stable.len(), stable.iter().map(|s| s.delta));
        MixtureContext {
            design,
            stable,
            priors,
            delta,
        }
    }

    pub fn intraday(&self) -> DesignSet {
        self.design.subset(&self.design.intra())
    }

    pub fn transform(&self, sigma: &Mat, lambda: &Vector) -> Result<TransformSet> {
        let d = &self.design;
        build_transform(
            sigma,
            &d_lambda(lambda, self.stable),
            d.t() - d.inter.len(),
            d.t(),
            &d.inter,
        )
    }

    pub fn data(&self, ts: &TransformSet) -> Result<TransformedData> {
        TransformedData::new(&self.design.y, ts, &self.delta)
    }

    /// `B` from the pooled coefficient of the whitened regression.
    pub fn recover(&self, b_tilde: &Mat, ts: &TransformSet) -> Result<Mat> {
        recover_b(&(b_tilde * ts.total_t as f64), ts)
    }

    /// `(y − δ) − Bᵀw` on the inter-day rows, one row per boundary.
    pub fn tau_residuals(&self, b: &Mat) -> Mat {
        let d = &self.design;
        let y = d.y.select_rows(d.inter.iter());
        let w = d.w.select_rows(d.inter.iter());
        let mut e = y - w * b;
        for mut row in e.row_iter_mut() {
            row -= self.delta.transpose();
        }
        e
    }

    pub fn beta_target(&self, beta_free: &Vector, data: &TransformedData) -> Result<f64> {
        let r = self.design.r();
        let beta = assemble_beta(&unvec(beta_free, self.design.n() - r, r));
        let d = self.design.with_beta(&beta)?;
        beta_logpost(&beta, &d, data, self.priors)
    }

    /// Σ from the intra-day conditional, then B̃ from the whitened
    /// conditional at `lambda`, and the recovered `B`.
    pub fn conjugate_draw<R: Rng + ?Sized>(&self, lambda: &Vector, rng: &mut R) -> Result<(Mat, Mat, Mat)> {
        let sigma = cond_sigma_draw(&self.intraday(), self.priors, rng)?;
        let ts = self.transform(&sigma, lambda)?;
        let data = self.data(&ts)?;
        let b_tilde = cond_b_tilde_draw(&data, &self.design, &sigma, self.priors, rng)?;
        let b = self.recover(&b_tilde, &ts)?;
        Ok((sigma, b_tilde, b))
    }

    /// Per-asset independence MH update of λ given `B`; no-op without
    /// boundary rows.
    pub fn lambda_move<R: Rng + ?Sized>(&self, b: &Mat, lambda: &Vector, rng: &mut R) -> Result<(Vector, Vec<bool>)> {
        if self.design.inter.is_empty() {
            return Ok((lambda.clone(), Vec::new()));
        }
        cond_lambda_draw(&self.tau_residuals(b), self.stable, lambda, rng)
    }

    /// `steps` adaptive Metropolis moves on the β log-posterior of the data
    /// whitened at (Σ, λ). Leaves the design at the final β.
    pub fn beta_moves<R: Rng + ?Sized>(
        &mut self,
        am: &mut AdaptiveMetropolis,
        beta_free: &Vector,
        sigma: &Mat,
        lambda: &Vector,
        steps: usize,
        rng: &mut R,
    ) -> Result<(Vector, Vec<bool>)> {
        let ts = self.transform(sigma, lambda)?;
        let data = self.data(&ts)?;
        let mut current = beta_free.clone();
        let mut logp = self.beta_target(&current, &data).unwrap_or(f64::NEG_INFINITY);
        let mut flags = Vec::with_capacity(steps);
        for _ in 0..steps {
            let (next, next_logp, acc) = am.step(&current, logp, |v| self.beta_target(v, &data), rng);
            current = next;
            logp = next_logp;
            flags.push(acc);
        }
        self.set_beta_free(&current)?;
        Ok((current, flags))
    }

    pub fn set_beta_free(&mut self, beta_free: &Vector) -> Result<()> {
        let r = self.design.r();
        let beta = assemble_beta(&unvec(beta_free, self.design.n() - r, r));
        self.design = self.design.with_beta(&beta)?;
        Ok(())
    }
}

fn validate_inputs(series: &SeriesData, p: usize, r: usize, priors: &PriorSpec, cfg: &ChainConfig) -> Result<()> {
    let n = series.n();
    if r == 0 || r >= n {
        return Err(Error::Validation(format!("rank r={r} must be in 1..{n}")));
    }
    cfg.validate()?;
    priors.validate(n, crate::cvar::regressor_count(n, p, r), r)
}

/// Exact sampler for the symmetric-stable mixture model.
///
/// Sweep order: Σ from the intra-day rows, rebuild the transform, B̃,
/// per-asset λ, then `cfg.beta_steps` adaptive Metropolis steps on β.
/// Requires `p = 1` and symmetric stable laws.
pub fn run_gibbs<R: Rng + ?Sized>(
    series: &SeriesData,
    p: usize,
    r: usize,
    stable: &[StableParams],
    priors: &PriorSpec,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ChainTrace> {
    let n = series.n();
    if p != 1 {
        return Err(Error::Validation(format!(
            "the transformed sampler supports lag order 1 only, got p={p}"
        )));
    }
    if stable.len() != n {
        return Err(Error::shape(format!("{} stable laws given for {n} assets", stable.len())));
    }
    for s in stable {
        s.validate()?;
        if !s.is_symmetric() {
            return Err(Error::Validation(format!(
                "exact sampler needs symmetric stable noise (b = 0), got b = {}; use the ABC sampler for skewed noise",
                s.b
            )));
        }
    }
    validate_inputs(series, p, r, priors, cfg)?;

    let beta0 = initial_beta_free(series, p, r);
    let mut ctx = MixtureContext::new(build_design(series, p, &assemble_beta(&beta0))?, stable, priors);
    let mut beta_free = vec_of(&beta0);
    let mut lambda = Vector::from_element(n, 2.0);
    let mut am = AdaptiveMetropolis::new(beta_free.len(), cfg.adaptive);
    let mut stats = AcceptanceStats::default();
    let mut draws = Vec::with_capacity(cfg.draws);

    for it in 0..cfg.burnin + cfg.draws {
        let wrap = at_iteration(it);
        let (sigma, b_tilde, b) = ctx.conjugate_draw(&lambda, rng).map_err(&wrap)?;
        stats.sigma.add(true);
        stats.b_tilde.add(true);
        let (next, flags) = ctx.lambda_move(&b, &lambda, rng)?;
        lambda = next;
        flags.into_iter().for_each(|f| stats.lambda.add(f));
        let (next, flags) = ctx
            .beta_moves(&mut am, &beta_free, &sigma, &lambda, cfg.beta_steps, rng)
            .map_err(&wrap)?;
        beta_free = next;
        flags.into_iter().for_each(|f| stats.beta.add(f));

        let state = ChainState {
            sigma,
            b_tilde,
            beta_free: unvec(&beta_free, n - r, r),
            lambda: lambda.clone(),
        };
        check_state(&state, &b, it)?;
        if it >= cfg.burnin {
            draws.push(Draw {
                state,
                b,
                distance: None,
                epsilon: None,
            });
        }
    }
    Ok(ChainTrace {
        sampler: "gibbs-exact".into(),
        draws,
        iterations: Vec::new(),
        acceptance: stats,
        config: cfg.clone(),
        p,
    })
}

/// Gaussian-noise conjugate baseline on all rows: adaptive Metropolis on
/// the marginal posterior of β, then Σ and B from their conditionals.
pub fn gaussian_bayes_estimate<R: Rng + ?Sized>(
    series: &SeriesData,
    p: usize,
    r: usize,
    priors: &PriorSpec,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ChainTrace> {
    let n = series.n();
    validate_inputs(series, p, r, priors, cfg)?;
    let beta0 = initial_beta_free(series, p, r);
    let design = build_design(series, p, &assemble_beta(&beta0))?;
    let data = TransformedData::identity(&design.y);
    let target = |v: &Vector| -> Result<f64> {
        let beta = assemble_beta(&unvec(v, n - r, r));
        beta_logpost(&beta, &design.with_beta(&beta)?, &data, priors)
    };
    let mut beta_free = vec_of(&beta0);
    let mut logp = target(&beta_free).unwrap_or(f64::NEG_INFINITY);
    let mut am = AdaptiveMetropolis::new(beta_free.len(), cfg.adaptive);
    let mut stats = AcceptanceStats::default();
    let mut draws = Vec::with_capacity(cfg.draws);

    for it in 0..cfg.burnin + cfg.draws {
        let wrap = at_iteration(it);
        for _ in 0..cfg.beta_steps {
            let (next, next_logp, acc) = am.step(&beta_free, logp, target, rng);
            beta_free = next;
            logp = next_logp;
            stats.beta.add(acc);
        }
        let beta = assemble_beta(&unvec(&beta_free, n - r, r));
        let d = design.with_beta(&beta)?;
        let sigma = cond_sigma_draw(&d, priors, rng).map_err(&wrap)?;
        stats.sigma.add(true);
        let b = cond_b_tilde_draw(&data, &d, &sigma, priors, rng).map_err(&wrap)?;
        stats.b_tilde.add(true);
        let state = ChainState {
            sigma,
            b_tilde: b.clone(),
            beta_free: unvec(&beta_free, n - r, r),
            lambda: Vector::from_element(n, 2.0),
        };
        check_state(&state, &b, it)?;
        if it >= cfg.burnin {
            draws.push(Draw {
                state,
                b,
                distance: None,
                epsilon: None,
            });
        }
    }
    Ok(ChainTrace {
        sampler: "gaussian-bayes".into(),
        draws,
        iterations: Vec::new(),
        acceptance: stats,
        config: cfg.clone(),
        p,
    })
}
