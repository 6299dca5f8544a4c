//! Conjugate and adaptive-Metropolis samplers for the mixture model and its
//! Gaussian baseline.

mod adaptive;
mod conditionals;
mod gibbs;
mod prior;
mod trace;

pub use adaptive::{mh_accept, AdaptiveConfig, AdaptiveMetropolis};
pub use conditionals::{
    b_tilde_posterior, beta_logpost, cond_b_tilde_draw, cond_lambda_draw, cond_sigma_draw, d_lambda,
    lambda_log_ratio, sigma_posterior, TransformedData,
};
pub use gibbs::{gaussian_bayes_estimate, run_gibbs};
pub use prior::{BetaPriorKind, PriorSpec};
pub use trace::{
    config_hash, AcceptanceRates, AcceptanceStats, BlockCounter, ChainConfig, ChainState, ChainTrace, Draw,
    IterationRecord, ParamSummary, TraceSummary,
};

pub(crate) use conditionals::draw_iw;
pub(crate) use gibbs::{at_iteration, check_state, MixtureContext};
