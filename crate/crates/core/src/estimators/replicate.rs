use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_delta_multi, BlackBox, DeltaEstimate, EstimateOptions, EstimatorError, Strategy};
use crate::model::InputModel;
use crate::rng::RngPlan;
use crate::sum::RunningMoments;

/// Spread of `delta_hat` over independent replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "R")]
    pub r: u64,
    pub seed: u64,
    pub output: usize,
    pub mean: f64,
    /// Unbiased sample variance of `delta_hat` across replicates.
    pub variance: f64,
    pub values: Vec<f64>,
    pub estimates: Vec<DeltaEstimate>,
}

impl ReplicateSummary {
    /// `N * var(delta_hat)`, the quantity the closed-form oracles predict.
    pub fn scaled_variance(&self) -> f64 {
        self.n as f64 * self.variance
    }

    /// Standard error of [`Self::variance`], from the fourth central moment of
    /// the replicate values.
    pub fn variance_std_error(&self) -> f64 {
        let r = self.values.len() as f64;
        let m4 = self
            .values
            .iter()
            .map(|v| (v - self.mean).powi(4))
            .sum::<f64>()
            / r;
        let s2 = self.variance;
        ((m4 - s2 * s2 * (r - 3.0) / (r - 1.0)) / r).max(0.0).sqrt()
    }

    /// Mean of the per-replicate `nu_hat` values that are defined.
    pub fn mean_nu(&self) -> Option<f64> {
        let nus: RunningMoments = self.estimates.iter().filter_map(|e| e.nu_hat).collect();
        (nus.count() > 0).then(|| nus.mean())
    }

    /// Average of the per-replicate block variances divided by `N`: a pooled
    /// estimate of `var(delta_hat)` available for strategies whose blocks are
    /// independent. Returns `(estimate, standard error)`.
    pub fn pooled_block_variance(&self) -> Option<(f64, f64)> {
        let per: Option<Vec<f64>> = self
            .estimates
            .iter()
            .map(|e| e.block_variance.map(|v| v / self.n as f64))
            .collect();
        let m: RunningMoments = per?.into_iter().collect();
        Some((m.mean(), (m.variance() / m.count() as f64).sqrt()))
    }
}

/// Runs `r` independent replicates (replicate ids `0..r`) and summarizes the
/// first output.
pub fn replicate_variance<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    strategy: Strategy,
    n: u64,
    r: u64,
    seed: u64,
    options: &EstimateOptions,
) -> Result<ReplicateSummary, EstimatorError> {
    Ok(replicate_variance_multi(f, model, strategy, n, r, seed, options)?
        .into_iter()
        .next()
        .expect("at least one output"))
}

/// Like [`replicate_variance`] but summarizes every output.
pub fn replicate_variance_multi<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    strategy: Strategy,
    n: u64,
    r: u64,
    seed: u64,
    options: &EstimateOptions,
) -> Result<Vec<ReplicateSummary>, EstimatorError> {
    if r < 2 {
        return Err(EstimatorError::InvalidArgument(
            "at least two replicates are needed".into(),
        ));
    }
    let runs: Vec<Result<Vec<DeltaEstimate>, EstimatorError>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            estimate_delta_multi(f, model, strategy, n, RngPlan::new(seed).with_replicate(rep), options)
                .map_err(|e| EstimatorError::Replicate {
                    index: rep,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut per_rep = Vec::with_capacity(r as usize);
    for run in runs {
        per_rep.push(run?);
    }
    let outputs = per_rep[0].len();
    Ok((0..outputs)
        .map(|o| {
            let estimates: Vec<DeltaEstimate> = per_rep.iter().map(|v| v[o].clone()).collect();
            let values: Vec<f64> = estimates.iter().map(|e| e.delta_hat).collect();
            let moments: RunningMoments = values.iter().copied().collect();
            ReplicateSummary {
                strategy,
                n,
                r,
                seed,
                output: o,
                mean: moments.mean(),
                variance: moments.variance(),
                values,
                estimates,
            }
        })
        .collect())
}
