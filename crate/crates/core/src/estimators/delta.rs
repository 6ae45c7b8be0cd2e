use super::engine::{evaluate, run_blocks, Accum};
use super::{check_permutation, BlackBox, DeltaEstimate, EstimatorError, Strategy};
use crate::model::InputModel;
use crate::rng::{RngPlan, Role};
use crate::sum::KahanSum;

/// Options shared by the `delta` estimators.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    /// Order in which winding stairs visits the variables (a permutation of
    /// `0..d`). Ascending order when absent. Ignored by naive and radial.
    pub ordering: Option<Vec<usize>>,
}

/// Estimates `delta` for the first output of `f`.
pub fn estimate_delta<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    strategy: Strategy,
    n: u64,
    plan: RngPlan,
    options: &EstimateOptions,
) -> Result<DeltaEstimate, EstimatorError> {
    Ok(estimate_delta_multi(f, model, strategy, n, plan, options)?
        .into_iter()
        .next()
        .expect("at least one output"))
}

/// Estimates `delta` for every output of `f` from a single set of evaluations.
pub fn estimate_delta_multi<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    strategy: Strategy,
    n: u64,
    plan: RngPlan,
    options: &EstimateOptions,
) -> Result<Vec<DeltaEstimate>, EstimatorError> {
    let d = model.dims();
    if f.dims() != d {
        return Err(EstimatorError::InvalidArgument(format!(
            "function takes {} inputs but the model has {d}",
            f.dims()
        )));
    }
    if f.outputs() == 0 {
        return Err(EstimatorError::InvalidArgument(
            "function has no outputs".into(),
        ));
    }
    if n == 0 {
        return Err(EstimatorError::InvalidArgument("N must be at least 1".into()));
    }
    let expected_evals = strategy
        .evaluations(n, d as u64)
        .ok_or(EstimatorError::Overflow { n, d: d as u64 })?;
    let order: Vec<usize> = match &options.ordering {
        Some(o) => {
            check_permutation(o, d)?;
            o.clone()
        }
        None => (0..d).collect(),
    };

    let acc = match strategy {
        Strategy::Naive => naive(f, model, n, plan)?,
        Strategy::Radial => radial(f, model, n, plan)?,
        Strategy::WindingTruncated => truncated(f, model, n, plan, &order)?,
        Strategy::WindingFull => winding_full(f, model, n, plan, &order)?,
    };
    debug_assert_eq!(acc.evals, expected_evals);

    let nf = n as f64;
    Ok((0..f.outputs())
        .map(|o| {
            let tau_total: Vec<f64> = (0..d).map(|j| acc.term_sum(o, j) / (2.0 * nf)).collect();
            let delta_hat = tau_total.iter().copied().collect::<KahanSum>().value();
            let sigma2_hat = acc.values[o].variance();
            let nu_hat = (sigma2_hat > 0.0).then(|| delta_hat / sigma2_hat);
            let (block_variance, tau_std_error) = match strategy {
                Strategy::WindingFull => (None, None),
                _ => (
                    Some(acc.blocks[o].variance()),
                    Some(
                        (0..d)
                            .map(|j| 0.5 * (acc.term_variance(o, j, n) / nf).sqrt())
                            .collect(),
                    ),
                ),
            };
            DeltaEstimate {
                strategy,
                n,
                d,
                seed: plan.seed,
                replicate: plan.replicate,
                output: o,
                delta_hat,
                tau_total,
                tau_std_error,
                mean_hat: acc.values[o].mean(),
                sigma2_hat,
                nu_hat,
                n_evals: acc.evals,
                sigma2_source: strategy.sigma2_source().to_string(),
                block_variance,
            }
        })
        .collect())
}

/// Fresh `(x, z)` for every variable and every block.
fn naive<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
) -> Result<Accum, EstimatorError> {
    let d = model.dims();
    let m = f.outputs();
    run_blocks(n, m, d, |i, acc| {
        let mut stream = plan.stream(Role::NaiveBlock, i);
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; m];
        let mut fy = vec![0.0; m];
        let mut block = vec![0.0; m];
        model.sample_into(&mut stream, &mut z);
        for j in 0..d {
            model.sample_into(&mut stream, &mut x);
            evaluate(f, &x, &mut fx, acc)?;
            x[j] = z[j];
            evaluate(f, &x, &mut fy, acc)?;
            for o in 0..m {
                let diff = fx[o] - fy[o];
                acc.add_term(o, j, diff * diff);
                block[o] += 0.5 * diff * diff;
                acc.values[o].push(fx[o]);
                acc.values[o].push(fy[o]);
            }
        }
        for o in 0..m {
            acc.blocks[o].push(block[o]);
        }
        Ok(())
    })
}

/// One baseline per block compared against each single-coordinate change.
fn radial<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
) -> Result<Accum, EstimatorError> {
    let d = model.dims();
    let m = f.outputs();
    run_blocks(n, m, d, |i, acc| {
        let mut stream = plan.stream(Role::RadialBlock, i);
        let mut x = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut fx = vec![0.0; m];
        let mut fy = vec![0.0; m];
        let mut block = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        model.sample_into(&mut stream, &mut z);
        evaluate(f, &x, &mut fx, acc)?;
        for o in 0..m {
            acc.values[o].push(fx[o]);
        }
        for j in 0..d {
            let keep = x[j];
            x[j] = z[j];
            evaluate(f, &x, &mut fy, acc)?;
            x[j] = keep;
            for o in 0..m {
                let diff = fx[o] - fy[o];
                acc.add_term(o, j, diff * diff);
                block[o] += 0.5 * diff * diff;
            }
        }
        for o in 0..m {
            acc.blocks[o].push(block[o]);
        }
        Ok(())
    })
}

/// `N` independent winding chains of `d + 1` points each.
fn truncated<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
    order: &[usize],
) -> Result<Accum, EstimatorError> {
    let d = model.dims();
    let m = f.outputs();
    run_blocks(n, m, d, |i, acc| {
        let mut stream = plan.stream(Role::TruncatedChain, i);
        let mut x = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut prev = vec![0.0; m];
        let mut cur = vec![0.0; m];
        let mut block = vec![0.0; m];
        model.sample_into(&mut stream, &mut x);
        model.sample_into(&mut stream, &mut z);
        evaluate(f, &x, &mut prev, acc)?;
        for o in 0..m {
            acc.values[o].push(prev[o]);
        }
        for &j in order {
            x[j] = z[j];
            evaluate(f, &x, &mut cur, acc)?;
            for o in 0..m {
                let diff = cur[o] - prev[o];
                acc.add_term(o, j, diff * diff);
                block[o] += 0.5 * diff * diff;
                acc.values[o].push(cur[o]);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        for o in 0..m {
            acc.blocks[o].push(block[o]);
        }
        Ok(())
    })
}

/// A single cyclic chain of `Nd + 1` points. Inherently sequential.
fn winding_full<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
    n: u64,
    plan: RngPlan,
    order: &[usize],
) -> Result<Accum, EstimatorError> {
    let d = model.dims();
    let m = f.outputs();
    let mut acc = Accum::new(m, d);
    let mut stream = plan.stream(Role::WindingChain, 0);
    let mut x = vec![0.0; d];
    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    let mut block = vec![0.0; m];
    model.sample_into(&mut stream, &mut x);
    evaluate(f, &x, &mut prev, &mut acc)?;
    for o in 0..m {
        acc.values[o].push(prev[o]);
    }
    for _ in 0..n {
        block.iter_mut().for_each(|b| *b = 0.0);
        for &j in order {
            x[j] = model.coord(j).sample(&mut stream);
            evaluate(f, &x, &mut cur, &mut acc)?;
            for o in 0..m {
                let diff = cur[o] - prev[o];
                acc.add_term(o, j, diff * diff);
                block[o] += 0.5 * diff * diff;
                acc.values[o].push(cur[o]);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        for o in 0..m {
            acc.blocks[o].push(block[o]);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FnBox;

    fn opts() -> EstimateOptions {
        EstimateOptions::default()
    }

    #[test]
    fn evaluation_counts_match_contract() {
        let f = FnBox::new(3, |x: &[f64]| x.iter().sum());
        let model = InputModel::uniform(3).unwrap();
        for s in Strategy::ALL {
            let e = estimate_delta(&f, &model, s, 17, RngPlan::new(1), &opts()).unwrap();
            assert_eq!(e.n_evals, s.evaluations(17, 3).unwrap(), "{s}");
        }
    }

    #[test]
    fn constant_function_gives_exact_zero() {
        let f = FnBox::new(4, |_: &[f64]| 2.5);
        let model = InputModel::gaussian(4).unwrap();
        for s in Strategy::ALL {
            let e = estimate_delta(&f, &model, s, 100, RngPlan::new(5), &opts()).unwrap();
            assert_eq!(e.delta_hat, 0.0);
            assert!(e.tau_total.iter().all(|&t| t == 0.0));
            assert_eq!(e.sigma2_hat, 0.0);
            assert_eq!(e.nu_hat, None);
            assert_eq!(e.nu(), Err(EstimatorError::DegenerateVariance));
        }
    }

    #[test]
    fn delta_is_sum_of_taus() {
        let f = FnBox::new(5, |x: &[f64]| x.iter().product::<f64>() + x[0]);
        let model = InputModel::gaussian(5).unwrap();
        for s in Strategy::ALL {
            let e = estimate_delta(&f, &model, s, 300, RngPlan::new(8), &opts()).unwrap();
            let direct = e.tau_total.iter().copied().collect::<KahanSum>().value();
            assert_eq!(e.delta_hat, direct);
            assert!(e.tau_total.iter().all(|&t| t >= 0.0));
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let f = FnBox::new(3, |x: &[f64]| (x[0] * x[1]).sin() + x[2]);
        let model = InputModel::uniform(3).unwrap();
        for s in Strategy::ALL {
            let a = estimate_delta(&f, &model, s, 1000, RngPlan::new(77), &opts()).unwrap();
            let b = estimate_delta(&f, &model, s, 1000, RngPlan::new(77), &opts()).unwrap();
            assert_eq!(a, b);
            let c = estimate_delta(&f, &model, s, 1000, RngPlan::new(78), &opts()).unwrap();
            assert_ne!(a.delta_hat, c.delta_hat);
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let f = FnBox::new(4, |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt());
        let model = InputModel::gaussian(4).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    Strategy::ALL
                        .iter()
                        .map(|&s| {
                            estimate_delta(&f, &model, s, 5000, RngPlan::new(3), &opts()).unwrap()
                        })
                        .collect::<Vec<_>>()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn non_finite_output_reports_point() {
        let f = FnBox::new(2, |x: &[f64]| if x[0] > 0.9 { f64::NAN } else { x[1] });
        let model = InputModel::uniform(2).unwrap();
        let err = estimate_delta(&f, &model, Strategy::Radial, 1000, RngPlan::new(1), &opts())
            .unwrap_err();
        match err {
            EstimatorError::NonFinite { point, value } => {
                assert!(value.is_nan());
                assert!(point[0] > 0.9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = FnBox::new(2, |x: &[f64]| x[0]);
        let model = InputModel::uniform(3).unwrap();
        assert!(estimate_delta(&f, &model, Strategy::Naive, 10, RngPlan::new(1), &opts()).is_err());
        let model = InputModel::uniform(2).unwrap();
        assert!(estimate_delta(&f, &model, Strategy::Naive, 0, RngPlan::new(1), &opts()).is_err());
        let bad = EstimateOptions {
            ordering: Some(vec![1, 1]),
        };
        assert!(estimate_delta(&f, &model, Strategy::WindingFull, 4, RngPlan::new(1), &bad).is_err());
        assert!(matches!(
            estimate_delta(&f, &model, Strategy::Naive, u64::MAX, RngPlan::new(1), &opts()),
            Err(EstimatorError::Overflow { .. })
        ));
    }

    #[test]
    fn ordering_changes_winding_but_not_radial() {
        let f = FnBox::new(3, |x: &[f64]| x[0] * x[1] * x[2]);
        let model = InputModel::gaussian(3).unwrap();
        let rev = EstimateOptions {
            ordering: Some(vec![2, 1, 0]),
        };
        let a = estimate_delta(&f, &model, Strategy::Radial, 200, RngPlan::new(2), &opts()).unwrap();
        let b = estimate_delta(&f, &model, Strategy::Radial, 200, RngPlan::new(2), &rev).unwrap();
        assert_eq!(a, b);
        let a = estimate_delta(&f, &model, Strategy::WindingFull, 200, RngPlan::new(2), &opts())
            .unwrap();
        let b =
            estimate_delta(&f, &model, Strategy::WindingFull, 200, RngPlan::new(2), &rev).unwrap();
        assert_ne!(a.delta_hat, b.delta_hat);
    }

    #[test]
    fn multi_output_matches_single_output_runs() {
        struct Two;
        impl BlackBox for Two {
            fn dims(&self) -> usize {
                2
            }
            fn outputs(&self) -> usize {
                2
            }
            fn eval_into(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] + x[1];
                out[1] = x[0] * x[1];
            }
        }
        let model = InputModel::uniform(2).unwrap();
        for s in Strategy::ALL {
            let both =
                estimate_delta_multi(&Two, &model, s, 400, RngPlan::new(4), &opts()).unwrap();
            let second = crate::estimators::SelectOutput {
                inner: Two,
                output: 1,
            };
            let single = estimate_delta(&second, &model, s, 400, RngPlan::new(4), &opts()).unwrap();
            assert_eq!(both[1].delta_hat, single.delta_hat);
            assert_eq!(both[1].sigma2_hat, single.sigma2_hat);
            assert_eq!(both[1].output, 1);
        }
    }
}
