use serde::{Deserialize, Serialize};

use super::engine::{evaluate, run_blocks};
use super::{BlackBox, EstimatorError};
use crate::model::InputModel;
use crate::rng::{RngPlan, Role};

/// A Monte Carlo mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_evals: u64,
}

fn validate<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    j: Option<usize>,
    n: u64,
    min_n: u64,
) -> Result<(), EstimatorError> {
    let d = model.dims();
    if f.dims() != d {
        return Err(EstimatorError::InvalidArgument(format!(
            "function takes {} inputs but the model has {d}",
            f.dims()
        )));
    }
    if let Some(j) = j {
        if j >= d {
            return Err(EstimatorError::InvalidArgument(format!(
                "variable index {j} out of range for d = {d}"
            )));
        }
    }
    if n < min_n {
        return Err(EstimatorError::InvalidArgument(format!(
            "N must be at least {min_n}"
        )));
    }
    Ok(())
}

/// Jansen's estimate of the total index of variable `j`:
/// `(1/2N) sum_i (f(x_i) - f(x_i with coordinate j from z_i))^2`.
pub fn estimate_total_index_pairs<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    j: usize,
    n: u64,
    plan: RngPlan,
) -> Result<IndexEstimate, EstimatorError> {
    validate(f, model, Some(j), n, 1)?;
    let d = model.dims();
    let m = f.outputs();
    let acc = run_blocks(n, m, 1, |i, acc| {
        let mut stream = plan.stream(Role::TotalPairs, i);
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; m];
        let mut fy = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        let zj = model.coord(j).sample(&mut stream);
        evaluate(f, &x, &mut fx, acc)?;
        x[j] = zj;
        evaluate(f, &x, &mut fy, acc)?;
        let diff = fx[0] - fy[0];
        acc.add_term(0, 0, 0.5 * diff * diff);
        Ok(())
    })?;
    Ok(mean_estimate(acc.term_sum(0, 0), acc.term_variance(0, 0, n), n, acc.evals))
}

fn mean_estimate(sum: f64, term_var: f64, n: u64, n_evals: u64) -> IndexEstimate {
    IndexEstimate {
        value: sum / n as f64,
        std_error: (term_var / n as f64).sqrt(),
        n_evals,
    }
}

/// Estimate of the lower (closed) index of variable `j`:
/// `(1/N) sum_i f(x_i) (f(z_i with coordinate j from x_i) - f(z_i))`.
pub fn estimate_lower_index<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    j: usize,
    n: u64,
    plan: RngPlan,
) -> Result<IndexEstimate, EstimatorError> {
    validate(f, model, Some(j), n, 1)?;
    let d = model.dims();
    let m = f.outputs();
    let acc = run_blocks(n, m, 1, |i, acc| {
        let mut stream = plan.stream(Role::LowerPairs, i);
        let mut x = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut fx = vec![0.0; m];
        let mut fz = vec![0.0; m];
        let mut fy = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        model.sample_into(&mut stream, &mut z);
        evaluate(f, &x, &mut fx, acc)?;
        evaluate(f, &z, &mut fz, acc)?;
        z[j] = x[j];
        evaluate(f, &z, &mut fy, acc)?;
        acc.add_term(0, 0, fx[0] * (fy[0] - fz[0]));
        Ok(())
    })?;
    Ok(mean_estimate(acc.term_sum(0, 0), acc.term_variance(0, 0, n), n, acc.evals))
}

/// Lower indices of every variable and every output from shared baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerIndices {
    pub outputs: usize,
    pub d: usize,
    /// Indexed `o * d + j`.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_evals: u64,
}

impl LowerIndices {
    pub fn output(&self, o: usize) -> &[f64] {
        &self.values[o * self.d..(o + 1) * self.d]
    }

    pub fn output_std_errors(&self, o: usize) -> &[f64] {
        &self.std_errors[o * self.d..(o + 1) * self.d]
    }
}

/// All `d` lower indices at once with `N(d + 2)` evaluations: every block
/// shares `f(x_i)` and `f(z_i)` across variables.
pub fn estimate_lower_indices<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
) -> Result<LowerIndices, EstimatorError> {
    validate(f, model, None, n, 1)?;
    let d = model.dims();
    let m = f.outputs();
    let acc = run_blocks(n, m, d, |i, acc| {
        let mut stream = plan.stream(Role::LowerPairs, i);
        let mut x = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut fx = vec![0.0; m];
        let mut fz = vec![0.0; m];
        let mut fy = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        model.sample_into(&mut stream, &mut z);
        evaluate(f, &x, &mut fx, acc)?;
        evaluate(f, &z, &mut fz, acc)?;
        for j in 0..d {
            let keep = z[j];
            z[j] = x[j];
            evaluate(f, &z, &mut fy, acc)?;
            z[j] = keep;
            for o in 0..m {
                acc.add_term(o, j, fx[o] * (fy[o] - fz[o]));
            }
        }
        Ok(())
    })?;
    let mut values = Vec::with_capacity(m * d);
    let mut std_errors = Vec::with_capacity(m * d);
    for o in 0..m {
        for j in 0..d {
            let e = mean_estimate(acc.term_sum(o, j), acc.term_variance(o, j, n), n, acc.evals);
            values.push(e.value);
            std_errors.push(e.std_error);
        }
    }
    Ok(LowerIndices {
        outputs: m,
        d,
        values,
        std_errors,
        n_evals: acc.evals,
    })
}

/// Unbiased sample variance of the first output over `N` independent draws.
pub fn estimate_sigma2<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
) -> Result<f64, EstimatorError> {
    validate(f, model, None, n, 2)?;
    let d = model.dims();
    let m = f.outputs();
    let acc = run_blocks(n, m, 1, |i, acc| {
        let mut stream = plan.stream(Role::Sigma2, i);
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        evaluate(f, &x, &mut fx, acc)?;
        acc.values[0].push(fx[0]);
        Ok(())
    })?;
    Ok(acc.values[0].variance())
}
