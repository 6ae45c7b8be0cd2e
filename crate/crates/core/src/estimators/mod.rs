//! Estimators of `delta = sum_j tau_bar_j^2`, the numerator of the mean
//! dimension, and of single Sobol' indices.
//!
//! Four sampling strategies are provided. They all average squared
//! differences of `f` at points that differ in one coordinate; they differ in
//! how those pairs of points are arranged:
//!
//! * [`Strategy::Naive`]: a fresh pair of points for every variable, `2Nd`
//!   evaluations.
//! * [`Strategy::Radial`]: one baseline point per replicate shared by all `d`
//!   single-coordinate changes, `N(d+1)` evaluations.
//! * [`Strategy::WindingFull`]: one long cyclic Gibbs chain changing a single
//!   coordinate per step, `Nd+1` evaluations.
//! * [`Strategy::WindingTruncated`]: `N` independent chains of `d+1` points,
//!   `N(d+1)` evaluations.
//!
//! All reductions happen in a fixed order over fixed-size chunks, so results are
//! bit-identical for any number of worker threads.

mod delta;
mod engine;
mod replicate;
mod single;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delta::{estimate_delta, estimate_delta_multi, EstimateOptions};
pub use replicate::{replicate_variance, replicate_variance_multi, ReplicateSummary};
pub use single::{
    estimate_lower_index, estimate_lower_indices, estimate_sigma2, estimate_total_index_pairs,
    IndexEstimate, LowerIndices,
};

/// A deterministic function of `d` real inputs with one or more real outputs.
pub trait BlackBox: Sync {
    fn dims(&self) -> usize;

    fn outputs(&self) -> usize {
        1
    }

    /// Writes all outputs at `x` into `out` (`out.len() == self.outputs()`).
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Convenience for the first output.
    fn eval(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; self.outputs()];
        self.eval_into(x, &mut out);
        out[0]
    }
}

impl<B: BlackBox + ?Sized> BlackBox for &B {
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn outputs(&self) -> usize {
        (**self).outputs()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

/// Wraps a scalar closure as a [`BlackBox`].
pub struct FnBox<F> {
    dims: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnBox<F> {
    pub fn new(dims: usize, f: F) -> Self {
        FnBox { dims, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> BlackBox for FnBox<F> {
    fn dims(&self) -> usize {
        self.dims
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (self.f)(x);
    }
}

/// Views one output of a multi-output box as a scalar box.
pub struct SelectOutput<B> {
    pub inner: B,
    pub output: usize,
}

impl<B: BlackBox> BlackBox for SelectOutput<B> {
    fn dims(&self) -> usize {
        self.inner.dims()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut all = vec![0.0; self.inner.outputs()];
        self.inner.eval_into(x, &mut all);
        out[0] = all[self.output];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Naive,
    Radial,
    WindingFull,
    WindingTruncated,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Naive,
        Strategy::Radial,
        Strategy::WindingFull,
        Strategy::WindingTruncated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Radial => "radial",
            Strategy::WindingFull => "winding_full",
            Strategy::WindingTruncated => "winding_truncated",
        }
    }

    /// Number of function evaluations used with `n` replicates in `d` dimensions.
    pub fn evaluations(self, n: u64, d: u64) -> Option<u64> {
        let nd = n.checked_mul(d)?;
        match self {
            Strategy::Naive => nd.checked_mul(2),
            Strategy::Radial | Strategy::WindingTruncated => n.checked_mul(d.checked_add(1)?),
            Strategy::WindingFull => nd.checked_add(1),
        }
    }

    /// Which evaluations feed the variance estimate in the denominator of `nu`.
    pub fn sigma2_source(self) -> &'static str {
        match self {
            Strategy::Naive => "all evaluations",
            Strategy::Radial => "baseline points",
            Strategy::WindingFull | Strategy::WindingTruncated => "all chain evaluations",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "naive" => Ok(Strategy::Naive),
            "radial" => Ok(Strategy::Radial),
            "winding_full" | "winding" | "full" => Ok(Strategy::WindingFull),
            "winding_truncated" | "truncated" => Ok(Strategy::WindingTruncated),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("function returned {value} at point {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("sample size overflows: N = {n}, d = {d}")]
    Overflow { n: u64, d: u64 },
    #[error("estimated variance is zero; mean dimension undefined")]
    DegenerateVariance,
    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<EstimatorError>,
    },
}

/// One estimate of `delta`, the per-variable total indices, `sigma^2` and `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n: u64,
    pub d: usize,
    pub seed: u64,
    pub replicate: u64,
    /// Which output of a multi-output function this refers to.
    pub output: usize,
    pub delta_hat: f64,
    pub tau_total: Vec<f64>,
    /// Standard errors of `tau_total`; absent for the full winding chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_std_error: Option<Vec<f64>>,
    /// Sample mean of the evaluations behind `sigma2_hat`.
    pub mean_hat: f64,
    pub sigma2_hat: f64,
    /// `delta_hat / sigma2_hat`; absent when `sigma2_hat` is zero.
    pub nu_hat: Option<f64>,
    pub n_evals: u64,
    pub sigma2_source: String,
    /// Sample variance of the `N` independent per-block contributions to
    /// `delta_hat`; `var(delta_hat)` is this over `N`. Absent for the full
    /// winding chain, whose blocks are dependent.
    pub block_variance: Option<f64>,
}

impl DeltaEstimate {
    /// The mean dimension estimate, failing when the variance estimate is zero.
    pub fn nu(&self) -> Result<f64, EstimatorError> {
        self.nu_hat.ok_or(EstimatorError::DegenerateVariance)
    }

    /// Standard error of `delta_hat` from the block variance, when available.
    pub fn delta_std_error(&self) -> Option<f64> {
        self.block_variance.map(|v| (v / self.n as f64).sqrt())
    }
}

pub(crate) fn check_permutation(order: &[usize], d: usize) -> Result<(), EstimatorError> {
    if order.len() != d {
        return Err(EstimatorError::InvalidArgument(format!(
            "ordering has {} entries, expected {d}",
            order.len()
        )));
    }
    let mut seen = vec![false; d];
    for &j in order {
        if j >= d || std::mem::replace(&mut seen[j], true) {
            return Err(EstimatorError::InvalidArgument(format!(
                "ordering is not a permutation of 0..{d}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_counts() {
        assert_eq!(Strategy::Naive.evaluations(10, 3), Some(60));
        assert_eq!(Strategy::Radial.evaluations(10, 3), Some(40));
        assert_eq!(Strategy::WindingFull.evaluations(10, 3), Some(31));
        assert_eq!(Strategy::WindingTruncated.evaluations(10, 3), Some(40));
        assert_eq!(Strategy::Naive.evaluations(u64::MAX / 2, 3), None);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("sideways".parse::<Strategy>().is_err());
    }

    #[test]
    fn permutation_check() {
        assert!(check_permutation(&[2, 0, 1], 3).is_ok());
        assert!(check_permutation(&[0, 0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1], 3).is_err());
        assert!(check_permutation(&[0, 1, 3], 3).is_err());
    }
}
