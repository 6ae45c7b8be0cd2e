//! Independent references for the estimators: moment profiles, closed-form
//! estimator variances, exact ANOVA on finite grids and the winding lag
//! structure.

mod anova;
mod lag;
mod moments;
mod variance;

use thiserror::Error;

pub use anova::{anova_enumerate, Subset, VarianceComponents, MAX_DIMS, MAX_GRID, MAX_TABLE_ENTRIES};
pub use lag::{
    chain_variance_product, product_step_covariance, winding_lag_covariance_structure, LagClass,
    LagStructure,
};
pub use moments::{gauss_legendre, MomentProfile, MomentSource};
pub use variance::{
    covariance_sign_condition, lemma1_moments, nu_product, product_truth, var_additive,
    var_product, Lemma1Moments, ProductTruth,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("outside the oracle's domain: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("grid too large: {0}")]
    GridTooLarge(String),
}
