//! Sensitivity analysis of a classifier: per-pixel index maps and mean
//! dimension tables over input samplers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{softmax, NetworkError, NetworkSpec};
use crate::estimators::{
    estimate_delta, estimate_delta_multi, estimate_lower_indices, BlackBox, EstimateOptions,
    EstimatorError, SelectOutput, Strategy,
};
use crate::model::InputModel;
use crate::rng::RngPlan;

/// Pre-softmax scores `g_y` or softmax probabilities `f_y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "g")]
    Logit,
    #[serde(rename = "f")]
    Softmax,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Logit => "g",
            Target::Softmax => "f",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g" | "logit" | "logits" => Ok(Target::Logit),
            "f" | "softmax" => Ok(Target::Softmax),
            other => Err(format!("unknown target `{other}` (expected f or g)")),
        }
    }
}

/// The network as a black box with `2k` outputs: `g_0..g_{k-1}` followed by
/// `f_0..f_{k-1}`. Evaluation failures yield NaN, which the estimators reject.
pub struct NetworkFunction<'a> {
    pub net: &'a NetworkSpec,
}

impl NetworkFunction<'_> {
    pub fn classes(&self) -> usize {
        self.net.output_len()
    }

    pub fn output_index(&self, target: Target, y: usize) -> usize {
        match target {
            Target::Logit => y,
            Target::Softmax => self.classes() + y,
        }
    }
}

impl BlackBox for NetworkFunction<'_> {
    fn dims(&self) -> usize {
        self.net.input_len()
    }

    fn outputs(&self) -> usize {
        2 * self.net.output_len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let k = self.net.output_len();
        match self.net.logits(x) {
            Ok(g) => {
                out[..k].copy_from_slice(&g);
                out[k..].copy_from_slice(&softmax(&g));
            }
            Err(_) => out.fill(f64::NAN),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {y} out of range for a network with {classes} outputs")]
    BadClass { y: usize, classes: usize },
    #[error("sampler `{sampler}` has {found} coordinates, network expects {expected}")]
    SamplerSize {
        sampler: String,
        expected: usize,
        found: usize,
    },
    #[error("sampler `{sampler}`: {source}")]
    Estimator {
        sampler: String,
        #[source]
        source: EstimatorError,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// Closed indices `tau_lower^2_j`.
    Lower,
    /// Total indices `tau_bar^2_j`.
    Total,
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower" => Ok(IndexKind::Lower),
            "total" | "upper" => Ok(IndexKind::Total),
            other => Err(format!("unknown index kind `{other}`")),
        }
    }
}

/// Per-pixel Sobol' indices laid out in raster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMap {
    pub height: usize,
    pub width: usize,
    pub kind: IndexKind,
    pub target: Target,
    pub y: usize,
    pub sampler: String,
    /// Strategy used for total indices.
    pub strategy: Option<Strategy>,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub values: Vec<f64>,
    /// Absent when the strategy gives no per-variable errors.
    pub std_errors: Option<Vec<f64>>,
    /// Variance of the target under the sampler, when the strategy reports it.
    pub sigma2_hat: Option<f64>,
}

impl IndexMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Row and column of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        (k / self.width, k % self.width)
    }

    /// 16-bit binary PGM, black at 0 and white at the largest value. Negative
    /// values (possible for noisy lower indices) are shown as black.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &v in &self.values {
            let level = if max > 0.0 {
                (v.max(0.0) / max * 65535.0).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
        out
    }
}

/// Settings for [`index_map`].
#[derive(Debug, Clone)]
pub struct MapRequest<'a> {
    pub y: usize,
    pub target: Target,
    pub sampler: &'a str,
    pub model: &'a InputModel,
    pub kind: IndexKind,
    pub strategy: Strategy,
    pub n: u64,
    pub seed: u64,
}

/// Estimates one index per pixel for output `(target, y)`. Total indices use
/// the requested strategy with pixels visited in raster order.
pub fn index_map(net: &NetworkSpec, req: &MapRequest<'_>) -> Result<IndexMap, EvalError> {
    let nf = NetworkFunction { net };
    check_request(&nf, req.y, req.sampler, req.model)?;
    let one = SelectOutput {
        inner: &nf,
        output: nf.output_index(req.target, req.y),
    };
    let plan = RngPlan::new(req.seed);
    let wrap = |source| EvalError::Estimator {
        sampler: req.sampler.to_string(),
        source,
    };
    let (values, std_errors, sigma2_hat, strategy) = match req.kind {
        IndexKind::Total => {
            let e = estimate_delta(&one, req.model, req.strategy, req.n, plan, &EstimateOptions::default())
                .map_err(wrap)?;
            (e.tau_total, e.tau_std_error, Some(e.sigma2_hat), Some(req.strategy))
        }
        IndexKind::Lower => {
            let l = estimate_lower_indices(&one, req.model, req.n, plan).map_err(wrap)?;
            (l.values, Some(l.std_errors), None, None)
        }
    };
    let shape = net.input_shape();
    Ok(IndexMap {
        height: shape.channels * shape.height,
        width: shape.width,
        kind: req.kind,
        target: req.target,
        y: req.y,
        sampler: req.sampler.to_string(),
        strategy,
        n: req.n,
        seed: req.seed,
        values,
        std_errors,
        sigma2_hat,
    })
}

fn check_request(
    nf: &NetworkFunction<'_>,
    y: usize,
    sampler: &str,
    model: &InputModel,
) -> Result<(), EvalError> {
    if y >= nf.classes() {
        return Err(EvalError::BadClass {
            y,
            classes: nf.classes(),
        });
    }
    if model.dims() != nf.dims() {
        return Err(EvalError::SamplerSize {
            sampler: sampler.to_string(),
            expected: nf.dims(),
            found: model.dims(),
        });
    }
    Ok(())
}

/// Why a mean dimension cell is not trustworthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// `sigma2_hat` is below the variance floor.
    TinyVariance,
    /// `nu_hat` exceeds the number of inputs, which no function can attain.
    ExceedsDimension,
}

/// One cell of a mean dimension table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sampler: String,
    pub target: Target,
    pub y: usize,
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
    pub delta_hat: f64,
    pub sigma2_hat: f64,
    pub nu_hat: Option<f64>,
    pub variance_floor: f64,
    pub flag: Option<Degeneracy>,
}

/// Mean dimension of every `(target, y)` under every sampler. One estimator
/// pass per sampler serves all outputs.
///
/// A cell is flagged when `sigma2_hat < floor * scale^2`, with scale 1 for
/// softmax outputs (they lie in `[0, 1]`) and the root mean square of the
/// sampled values for logits, or when `nu_hat > d`.
pub fn mean_dimension_report(
    net: &NetworkSpec,
    samplers: &[(String, InputModel)],
    targets: &[Target],
    n: u64,
    strategy: Strategy,
    seed: u64,
    floor: f64,
) -> Result<Vec<ReportRow>, EvalError> {
    let nf = NetworkFunction { net };
    let d = nf.dims() as f64;
    let mut rows = Vec::new();
    for (name, model) in samplers {
        check_request(&nf, 0, name, model)?;
        let estimates = estimate_delta_multi(&nf, model, strategy, n, RngPlan::new(seed), &EstimateOptions::default())
            .map_err(|source| EvalError::Estimator {
                sampler: name.clone(),
                source,
            })?;
        for &target in targets {
            for y in 0..nf.classes() {
                let e = &estimates[nf.output_index(target, y)];
                let scale2 = match target {
                    Target::Softmax => 1.0,
                    Target::Logit => e.sigma2_hat + e.mean_hat * e.mean_hat,
                };
                let variance_floor = floor * scale2;
                let flag = if !(e.sigma2_hat >= variance_floor && e.sigma2_hat > 0.0) {
                    Some(Degeneracy::TinyVariance)
                } else if e.nu_hat.is_some_and(|v| v > d) {
                    Some(Degeneracy::ExceedsDimension)
                } else {
                    None
                };
                rows.push(ReportRow {
                    sampler: name.clone(),
                    target,
                    y,
                    strategy,
                    n,
                    seed,
                    delta_hat: e.delta_hat,
                    sigma2_hat: e.sigma2_hat,
                    nu_hat: e.nu_hat,
                    variance_floor,
                    flag,
                });
            }
        }
    }
    Ok(rows)
}
