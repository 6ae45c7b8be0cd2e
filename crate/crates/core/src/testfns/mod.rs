//! Analytical test functions with their exact variance, total indices and
//! mean dimension where these are known.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{CoordinateDistribution, FiniteSupport};
use crate::estimators::BlackBox;
use crate::model::{InputModel, ModelError};
use crate::oracles::{anova_enumerate, product_truth, MomentProfile, OracleError};
use crate::rng::{stream_id, RandomStream};

#[derive(Debug, Error)]
pub enum TestFnError {
    #[error("factor {index}: {message}")]
    Factor { index: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One factor `g(x)` of an additive or product function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSpec {
    /// `intercept + slope * x`
    Linear {
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `x^exponent`
    Power { exponent: i32 },
    /// `exp(rate * x)`
    Exp { rate: f64 },
    Constant { value: f64 },
    /// `(|4x - 2| + a) / (1 + a)`
    SobolG { a: f64 },
    /// `values[k]` at the `k`-th support point of a finite coordinate.
    Table { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// A factor bound to its coordinate.
#[derive(Debug, Clone, PartialEq)]
struct Factor {
    spec: FactorSpec,
    /// Support of the coordinate, for table lookups.
    support: Vec<f64>,
}

impl Factor {
    fn new(index: usize, spec: FactorSpec, coord: &CoordinateDistribution) -> Result<Self, TestFnError> {
        let err = |message: String| TestFnError::Factor { index, message };
        let support = match (&spec, coord.finite_support()) {
            (FactorSpec::Table { values }, Some((s, _))) => {
                if values.len() != s.len() {
                    return Err(err(format!(
                        "table has {} entries for {} support points",
                        values.len(),
                        s.len()
                    )));
                }
                s
            }
            (FactorSpec::Table { .. }, None) => {
                return Err(err("table factor needs a finite coordinate".into()))
            }
            (FactorSpec::SobolG { a }, _) if !(*a >= 0.0 && a.is_finite()) => {
                return Err(err(format!("g-function constant {a} must be >= 0")))
            }
            _ => Vec::new(),
        };
        Ok(Factor { spec, support })
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match &self.spec {
            FactorSpec::Linear { slope, intercept } => intercept + slope * x,
            FactorSpec::Power { exponent } => x.powi(*exponent),
            FactorSpec::Exp { rate } => (rate * x).exp(),
            FactorSpec::Constant { value } => *value,
            FactorSpec::SobolG { a } => ((4.0 * x - 2.0).abs() + a) / (1.0 + a),
            FactorSpec::Table { values } => self
                .support
                .iter()
                .position(|&s| s == x)
                .map_or(f64::NAN, |k| values[k]),
        }
    }

    /// Moments of `g(X)`: closed forms where available, otherwise exact
    /// summation (finite support) or quadrature.
    fn profile(&self, coord: &CoordinateDistribution) -> Result<MomentProfile, OracleError> {
        let base = match coord {
            CoordinateDistribution::Uniform01 => Some(MomentProfile::uniform(0.0, 1.0)),
            CoordinateDistribution::StdGaussian => Some(MomentProfile::standard_gaussian()),
            CoordinateDistribution::Bernoulli01 => Some(MomentProfile::bernoulli(0.5)),
            _ => None,
        };
        match (&self.spec, base, coord) {
            (FactorSpec::Constant { value }, _, _) => Ok(MomentProfile::constant(*value)),
            (FactorSpec::Linear { slope, intercept }, Some(b), _) => Ok(b.affine(*intercept, *slope)),
            // |4x - 2| is uniform on [0, 2] when x is uniform on [0, 1]
            (FactorSpec::SobolG { a }, _, CoordinateDistribution::Uniform01) => {
                Ok(MomentProfile::uniform(0.0, 2.0).affine(a / (1.0 + a), 1.0 / (1.0 + a)))
            }
            _ => MomentProfile::from_quadrature(|x| self.eval(x), coord),
        }
    }
}

/// Exact quantities attached to a test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactValues {
    pub sigma2: f64,
    pub delta: f64,
    pub nu: f64,
    pub tau_total: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Additive { mu: f64, factors: Vec<Factor>, centers: Vec<f64> },
    Product { factors: Vec<Factor> },
    TwoNorm,
    Discrete { supports: Vec<Vec<f64>>, table: Vec<f64> },
}

/// JSON description of a test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionDescriptor {
    Additive {
        #[serde(default)]
        mu: f64,
        factors: Vec<FactorSpec>,
    },
    Product { factors: Vec<FactorSpec> },
    SobolG { a: Vec<f64> },
    TwoNorm { d: usize },
    /// `table` lists `f` over the grid of a finite-support model with
    /// variable 0 varying fastest; without a table, one is drawn at random.
    Discrete {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<Vec<f64>>,
        #[serde(default)]
        seed: u64,
    },
}

impl FunctionDescriptor {
    /// The input model the function is defined on when none is given:
    /// uniform for the g-function, Gaussian for the two-norm.
    pub fn default_model(&self) -> Option<InputModel> {
        match self {
            FunctionDescriptor::SobolG { a } => InputModel::uniform(a.len()).ok(),
            FunctionDescriptor::TwoNorm { d } => InputModel::gaussian(*d).ok(),
            _ => None,
        }
    }

    pub fn build(&self, model: &InputModel) -> Result<TestFunction, TestFnError> {
        match self {
            FunctionDescriptor::Additive { mu, factors } => make_additive(*mu, factors, model),
            FunctionDescriptor::Product { factors } => make_product(factors, model),
            FunctionDescriptor::SobolG { a } => {
                if model.coords().iter().any(|c| *c != CoordinateDistribution::Uniform01) {
                    return Err(TestFnError::Invalid(
                        "the g-function is defined on uniform inputs".into(),
                    ));
                }
                make_sobol_g(a)
            }
            FunctionDescriptor::TwoNorm { d } => {
                if model.dims() != *d {
                    return Err(TestFnError::Invalid(format!(
                        "two-norm with d = {d} on a model with {} coordinates",
                        model.dims()
                    )));
                }
                Ok(make_two_norm(*d)?.with_model(model.clone()))
            }
            FunctionDescriptor::Discrete { table, seed } => match table {
                Some(t) => make_discrete(model, t.clone()),
                None => make_random_discrete(model, *seed),
            },
        }
    }
}

/// A test function together with its input model and any exact values.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub descriptor: FunctionDescriptor,
    pub model: InputModel,
    pub exact: Option<ExactValues>,
    /// Moments of each factor, for additive and product functions.
    pub profiles: Option<Vec<MomentProfile>>,
    form: Form,
}

impl TestFunction {
    fn with_model(mut self, model: InputModel) -> Self {
        self.model = model;
        self
    }

    pub fn dims(&self) -> usize {
        self.model.dims()
    }
}

impl BlackBox for TestFunction {
    fn dims(&self) -> usize {
        self.model.dims()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = match &self.form {
            Form::Additive { mu, factors, centers } => {
                mu + factors
                    .iter()
                    .zip(centers)
                    .zip(x)
                    .map(|((g, c), &v)| g.eval(v) - c)
                    .sum::<f64>()
            }
            Form::Product { factors } => factors.iter().zip(x).map(|(g, &v)| g.eval(v)).product(),
            Form::TwoNorm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Form::Discrete { supports, table } => {
                let mut pos = 0;
                let mut stride = 1;
                for (s, &v) in supports.iter().zip(x) {
                    match s.iter().position(|&p| p == v) {
                        Some(k) => pos += k * stride,
                        None => {
                            out[0] = f64::NAN;
                            return;
                        }
                    }
                    stride *= s.len();
                }
                table[pos]
            }
        };
    }
}

fn bind(factors: &[FactorSpec], model: &InputModel) -> Result<Vec<Factor>, TestFnError> {
    if factors.len() != model.dims() {
        return Err(TestFnError::Invalid(format!(
            "{} factors for a model with {} coordinates",
            factors.len(),
            model.dims()
        )));
    }
    factors
        .iter()
        .zip(model.coords())
        .enumerate()
        .map(|(j, (s, c))| Factor::new(j, s.clone(), c))
        .collect()
}

fn profiles_of(factors: &[Factor], model: &InputModel) -> Result<Vec<MomentProfile>, TestFnError> {
    factors
        .iter()
        .zip(model.coords())
        .enumerate()
        .map(|(j, (g, c))| {
            let p = g.profile(c).map_err(|e| TestFnError::Factor {
                index: j,
                message: e.to_string(),
            })?;
            if !(p.mu4.is_finite() && p.eta.is_finite()) {
                return Err(TestFnError::Factor {
                    index: j,
                    message: "moments are not finite".into(),
                });
            }
            Ok(p)
        })
        .collect()
}

/// `mu + sum_j (g_j(x_j) - E g_j)`. Each factor is centered internally, so
/// `mu` is the mean of the function.
pub fn make_additive(
    mu: f64,
    factors: &[FactorSpec],
    model: &InputModel,
) -> Result<TestFunction, TestFnError> {
    let bound = bind(factors, model)?;
    let profiles = profiles_of(&bound, model)?;
    let centers: Vec<f64> = profiles.iter().map(|p| p.mu).collect();
    let tau_total: Vec<f64> = profiles.iter().map(|p| p.sigma2).collect();
    let sigma2: f64 = tau_total.iter().sum();
    let profiles: Vec<MomentProfile> = profiles.iter().map(|p| p.affine(-p.mu, 1.0)).collect();
    Ok(TestFunction {
        descriptor: FunctionDescriptor::Additive {
            mu,
            factors: factors.to_vec(),
        },
        model: model.clone(),
        exact: Some(ExactValues {
            sigma2,
            delta: sigma2,
            nu: 1.0,
            tau_total,
        }),
        profiles: Some(profiles),
        form: Form::Additive {
            mu,
            factors: bound,
            centers,
        },
    })
}

/// `prod_j g_j(x_j)`.
pub fn make_product(factors: &[FactorSpec], model: &InputModel) -> Result<TestFunction, TestFnError> {
    let bound = bind(factors, model)?;
    let profiles = profiles_of(&bound, model)?;
    let truth = product_truth(&profiles)?;
    Ok(TestFunction {
        descriptor: FunctionDescriptor::Product {
            factors: factors.to_vec(),
        },
        model: model.clone(),
        exact: Some(ExactValues {
            sigma2: truth.sigma2,
            delta: truth.delta,
            nu: truth.nu,
            tau_total: truth.tau_total,
        }),
        profiles: Some(profiles),
        form: Form::Product { factors: bound },
    })
}

/// Sobol's g-function `prod_j (|4 x_j - 2| + a_j) / (1 + a_j)` on `[0, 1]^d`.
pub fn make_sobol_g(a: &[f64]) -> Result<TestFunction, TestFnError> {
    let model = InputModel::uniform(a.len())?;
    let specs: Vec<FactorSpec> = a.iter().map(|&a| FactorSpec::SobolG { a }).collect();
    let mut t = make_product(&specs, &model)?;
    t.descriptor = FunctionDescriptor::SobolG { a: a.to_vec() };
    Ok(t)
}

/// `||x||_2` on standard Gaussian inputs.
pub fn make_two_norm(d: usize) -> Result<TestFunction, TestFnError> {
    Ok(TestFunction {
        descriptor: FunctionDescriptor::TwoNorm { d },
        model: InputModel::gaussian(d)?,
        exact: None,
        profiles: None,
        form: Form::TwoNorm,
    })
}

/// A function given by its values on the grid of a finite-support model
/// (variable 0 varies fastest). Exact values come from enumeration.
pub fn make_discrete(model: &InputModel, table: Vec<f64>) -> Result<TestFunction, TestFnError> {
    let supports: Vec<Vec<f64>> = model
        .coords()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            c.finite_support().map(|(v, _)| v).ok_or_else(|| TestFnError::Factor {
                index: j,
                message: "discrete functions need finite coordinates".into(),
            })
        })
        .collect::<Result<_, _>>()?;
    let grid: usize = supports.iter().map(Vec::len).product();
    if table.len() != grid {
        return Err(TestFnError::Invalid(format!(
            "table has {} entries for a grid of {grid}",
            table.len()
        )));
    }
    let mut t = TestFunction {
        descriptor: FunctionDescriptor::Discrete {
            table: Some(table.clone()),
            seed: 0,
        },
        model: model.clone(),
        exact: None,
        profiles: None,
        form: Form::Discrete { supports, table },
    };
    let vc = anova_enumerate(&t, model)?;
    let tau_total = (0..vc.d).map(|j| vc.tau_total(j)).collect();
    t.exact = vc.nu.map(|nu| ExactValues {
        sigma2: vc.total_variance,
        delta: vc.delta,
        nu,
        tau_total,
    });
    Ok(t)
}

/// A discrete function with standard Gaussian values drawn from `seed`.
pub fn make_random_discrete(model: &InputModel, seed: u64) -> Result<TestFunction, TestFnError> {
    let grid: usize = model
        .coords()
        .iter()
        .map(|c| c.finite_support().map_or(0, |(v, _)| v.len()))
        .product();
    let mut stream = RandomStream::new(seed, stream_id(&[0x0074_6162_6c65]));
    let table = (0..grid).map(|_| stream.standard_normal()).collect();
    let mut t = make_discrete(model, table)?;
    t.descriptor = FunctionDescriptor::Discrete { table: None, seed };
    Ok(t)
}

/// A random finite-support model: `d` coordinates, each with `2..=max_support`
/// distinct atoms and random probabilities.
pub fn random_finite_model(d: usize, max_support: usize, seed: u64) -> Result<InputModel, TestFnError> {
    if max_support < 2 {
        return Err(TestFnError::Invalid("need at least two atoms".into()));
    }
    let mut stream = RandomStream::new(seed, stream_id(&[0x006d_6f64_656c]));
    let coords = (0..d)
        .map(|_| {
            let k = 2 + (stream.next_u64() % (max_support as u64 - 1)) as usize;
            let mut values: Vec<f64> = Vec::with_capacity(k);
            let mut v = stream.standard_normal();
            for _ in 0..k {
                values.push(v);
                v += 0.1 + stream.uniform();
            }
            let w: Vec<f64> = (0..k).map(|_| 0.2 + stream.uniform()).collect();
            let total: f64 = w.iter().sum();
            let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let rest: f64 = probs[..k - 1].iter().sum();
            probs[k - 1] = 1.0 - rest;
            FiniteSupport::new(values, probs).map(CoordinateDistribution::FiniteSupport)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| TestFnError::Invalid(e.to_string()))?;
    Ok(InputModel::new(coords)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn additive_uniform() {
        let model = InputModel::uniform(5).unwrap();
        let f = make_additive(0.0, &vec![FactorSpec::Linear { slope: 1.0, intercept: -0.5 }; 5], &model)
            .unwrap();
        let e = f.exact.as_ref().unwrap();
        assert!(approx(e.sigma2, 5.0 / 12.0, 1e-15));
        assert_eq!(e.nu, 1.0);
        assert!(approx(f.eval(&[0.5; 5]), 0.0, 1e-15));
        for p in f.profiles.as_ref().unwrap() {
            assert!(p.mu.abs() < 1e-15);
        }
    }

    #[test]
    fn additive_centers_internally() {
        let model = InputModel::gaussian(1).unwrap();
        let f = make_additive(2.0, &[FactorSpec::Exp { rate: 1.0 }], &model).unwrap();
        // E exp(Z) = e^{1/2}
        assert!(approx(f.eval(&[0.0]), 2.0 + 1.0 - 0.5f64.exp(), 1e-9));
        let e = f.exact.unwrap();
        // var exp(Z) = (e - 1) e
        let want = (1f64.exp() - 1.0) * 1f64.exp();
        assert!(approx(e.sigma2, want, 1e-8 * want));
    }

    #[test]
    fn gaussian_product_has_nu_d() {
        let model = InputModel::gaussian(3).unwrap();
        let f = make_product(&vec![FactorSpec::Linear { slope: 1.0, intercept: 0.0 }; 3], &model).unwrap();
        let e = f.exact.unwrap();
        assert!(approx(e.nu, 3.0, 1e-12));
        assert!(approx(e.sigma2, 1.0, 1e-12));
    }

    #[test]
    fn constant_factor_drops_out() {
        let model = InputModel::gaussian(3).unwrap();
        let lin = FactorSpec::Linear { slope: 1.0, intercept: 1.0 };
        let with_c = make_product(
            &[lin.clone(), FactorSpec::Constant { value: 3.0 }, lin.clone()],
            &InputModel::gaussian(3).unwrap(),
        )
        .unwrap();
        let without = make_product(&[lin.clone(), lin], &InputModel::gaussian(2).unwrap()).unwrap();
        assert!(approx(with_c.exact.unwrap().nu, without.exact.unwrap().nu, 1e-12));
        let _ = model;
    }

    #[test]
    fn bernoulli_product_matches_enumeration() {
        let model = InputModel::bernoulli(3).unwrap();
        let f = make_product(&vec![FactorSpec::Linear { slope: 1.0, intercept: 0.0 }; 3], &model).unwrap();
        let vc = anova_enumerate(&f, &model).unwrap();
        let nu = f.exact.unwrap().nu;
        assert!(approx(nu, 12.0 / 7.0, 1e-12));
        assert!(approx(vc.nu.unwrap(), nu, 1e-12));
    }

    #[test]
    fn sobol_g_moments() {
        let f = make_sobol_g(&[0.0, 0.0]).unwrap();
        let e = f.exact.as_ref().unwrap();
        assert!(approx(e.nu, 0.5 / 0.4375, 1e-12));
        for p in f.profiles.as_ref().unwrap() {
            assert!(approx(p.mu, 1.0, 1e-15));
            assert!(approx(p.sigma2, 1.0 / 3.0, 1e-15));
        }
        let g = make_sobol_g(&[2.0]).unwrap();
        let p = &g.profiles.as_ref().unwrap()[0];
        assert!(approx(p.sigma2, 1.0 / 27.0, 1e-15));
        // agrees with quadrature of the same factor
        let q = MomentProfile::from_quadrature(
            |x| ((4.0 * x - 2.0).abs() + 2.0) / 3.0,
            &CoordinateDistribution::Uniform01,
        )
        .unwrap();
        assert!(approx(q.mu4, p.mu4, 1e-12) && approx(q.eta, p.eta, 1e-12));
        assert!(make_sobol_g(&[1.0, -0.5]).is_err());
        assert!(approx(make_sobol_g(&[0.0]).unwrap().exact.unwrap().nu, 1.0, 1e-12));
        let inert = |a: f64| make_sobol_g(&[0.0, a, a]).unwrap().exact.unwrap().nu;
        assert!(inert(10.0) > inert(100.0) && inert(100.0) > inert(1000.0));
        assert!(inert(1000.0) > 1.0 && inert(1000.0) < 1.0 + 1e-5);
    }

    #[test]
    fn two_norm_values() {
        let f = make_two_norm(3).unwrap();
        assert_eq!(f.eval(&[0.0; 3]), 0.0);
        assert_eq!(f.eval(&[1.0, 0.0, 0.0]), 1.0);
        assert!(f.exact.is_none());
    }

    #[test]
    fn discrete_lookup_and_exact() {
        let model = InputModel::bernoulli(2).unwrap();
        let f = make_discrete(&model, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.eval(&[1.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[1.0, 1.0]), 2.0);
        assert!(f.eval(&[0.5, 0.0]).is_nan());
        assert!(approx(f.exact.unwrap().nu, 1.0, 1e-12));
        assert!(make_discrete(&model, vec![0.0; 3]).is_err());
    }

    #[test]
    fn random_discrete_is_reproducible() {
        let model = random_finite_model(3, 4, 8).unwrap();
        let a = make_random_discrete(&model, 5).unwrap();
        let b = make_random_discrete(&model, 5).unwrap();
        assert_eq!(a, b);
        let e = a.exact.unwrap();
        assert!(e.nu >= 1.0 && e.nu <= 3.0);
        assert!(approx(e.nu * e.sigma2, e.delta, 1e-12));
    }

    #[test]
    fn descriptors_parse_and_build() {
        let d: FunctionDescriptor = serde_json::from_str(r#"{"kind": "sobol_g", "a": [0, 0]}"#).unwrap();
        let f = d.build(&d.default_model().unwrap()).unwrap();
        assert!(approx(f.exact.unwrap().nu, 8.0 / 7.0, 1e-12));
        let d: FunctionDescriptor = serde_json::from_str(
            r#"{"kind": "additive", "mu": 1, "factors": [{"kind": "linear"}, {"kind": "power", "exponent": 2}]}"#,
        )
        .unwrap();
        let f = d.build(&InputModel::gaussian(2).unwrap()).unwrap();
        assert!(approx(f.exact.unwrap().sigma2, 3.0, 1e-9));
        let bad = FunctionDescriptor::TwoNorm { d: 3 };
        assert!(bad.build(&InputModel::gaussian(2).unwrap()).is_err());
    }
}
