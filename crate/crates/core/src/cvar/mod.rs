//! Error-correction model mechanics: parameters, series, regression design,
//! simulation, least squares and the Johansen estimator.

mod design;
mod johansen;
mod ols;
mod params;
mod series;
mod simulate;

pub use design::{build_design, DesignSet};
pub use johansen::{fit_given_beta, johansen_estimate, johansen_fit, JohansenFit};
pub use ols::{log_likelihood, ols, ols_stats, MAX_DESIGN_CONDITION};
pub use params::{assemble_beta, normalize_beta, regressor_count, CvarParams};
pub use series::{SeriesData, SeriesMeta, TauSpec};
pub use simulate::{companion_matrix, max_companion_modulus, simulate_cvar, simulate_cvar_from};
