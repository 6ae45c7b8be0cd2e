//! Mean dimension and Sobol' index estimation for black-box functions.
//!
//! The crate provides seedable product-measure input models
//! ([`model::InputModel`]), four estimators of `delta = sum_j tau_bar_j^2`
//! ([`estimators`]), exact oracles for the estimators' variances and for the
//! ANOVA of small discrete functions ([`oracles`]), analytical test functions
//! ([`testfns`]) and a small classifier evaluator ([`nn`]).

pub mod distribution;
pub mod estimators;
pub mod model;
pub mod nn;
pub mod oracles;
pub mod rng;
pub mod sum;
pub mod testfns;

pub use estimators::{BlackBox, DeltaEstimate, EstimateOptions, EstimatorError, Strategy};
pub use model::{InputModel, Point};
pub use rng::RngPlan;
