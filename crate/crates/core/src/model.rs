//! Product input models, points and hybrid points.
//!
//! Variable indices are zero based throughout the crate.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{CoordinateDistribution, DistributionError, HistogramMode};
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("an input model needs at least one coordinate")]
    NoCoordinates,
    #[error("model declares d = {declared} but lists {found} coordinates")]
    DimensionMismatch { declared: usize, found: usize },
    #[error("variable index {index} out of range for d = {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("points have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("model description must give exactly one of `coords`, `all` or `histograms`")]
    AmbiguousDescription,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("histogram file: {0}")]
    Histogram(String),
    #[error("reading model description: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing model description: {0}")]
    Json(#[from] serde_json::Error),
}

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// The hybrid point that takes coordinate `j` from `z` and every other
/// coordinate from `x`.
pub fn hybrid(x: &Point, z: &Point, j: usize) -> Result<Point, ModelError> {
    if x.len() != z.len() {
        return Err(ModelError::LengthMismatch(x.len(), z.len()));
    }
    if j >= x.len() {
        return Err(ModelError::IndexOutOfRange {
            index: j,
            d: x.len(),
        });
    }
    let mut y = x.clone();
    y.0[j] = z.0[j];
    Ok(y)
}

/// Independent coordinates: the product measure of its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct InputModel {
    coords: Vec<CoordinateDistribution>,
}

impl InputModel {
    pub fn new(coords: Vec<CoordinateDistribution>) -> Result<Self, ModelError> {
        if coords.is_empty() {
            return Err(ModelError::NoCoordinates);
        }
        Ok(InputModel { coords })
    }

    /// `d` copies of one marginal.
    pub fn iid(dist: CoordinateDistribution, d: usize) -> Result<Self, ModelError> {
        InputModel::new(vec![dist; d])
    }

    pub fn uniform(d: usize) -> Result<Self, ModelError> {
        InputModel::iid(CoordinateDistribution::Uniform01, d)
    }

    pub fn gaussian(d: usize) -> Result<Self, ModelError> {
        InputModel::iid(CoordinateDistribution::StdGaussian, d)
    }

    pub fn bernoulli(d: usize) -> Result<Self, ModelError> {
        InputModel::iid(CoordinateDistribution::Bernoulli01, d)
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[CoordinateDistribution] {
        &self.coords
    }

    pub fn coord(&self, j: usize) -> &CoordinateDistribution {
        &self.coords[j]
    }

    pub fn sample_point(&self, stream: &mut RandomStream) -> Point {
        let mut v = vec![0.0; self.dims()];
        self.sample_into(stream, &mut v);
        Point(v)
    }

    /// Fills `out` with one draw; `out.len()` must equal `d`.
    #[inline]
    pub fn sample_into(&self, stream: &mut RandomStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dims());
        for (o, c) in out.iter_mut().zip(&self.coords) {
            *o = c.sample(stream);
        }
    }

    pub fn with_histogram_mode(self, mode: HistogramMode) -> Self {
        InputModel {
            coords: self
                .coords
                .into_iter()
                .map(|c| c.with_histogram_mode(mode))
                .collect(),
        }
    }

    /// Parses the JSON model description, resolving histogram files relative to
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ModelError> {
        let spec: InputModelSpec = serde_json::from_str(text)?;
        spec.resolve(base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        InputModel::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// JSON description of an [`InputModel`].
///
/// Exactly one of `coords` (one entry per variable), `all` (one marginal for
/// every variable) or `histograms` (path to a pixel histogram file) is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputModelSpec {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<CoordinateDistribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<CoordinateDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histograms: Option<String>,
    #[serde(default)]
    pub mode: HistogramMode,
}

impl InputModelSpec {
    pub fn resolve(&self, base_dir: &Path) -> Result<InputModel, ModelError> {
        let model = match (&self.coords, &self.all, &self.histograms) {
            (Some(coords), None, None) => InputModel::new(coords.clone())?,
            (None, Some(all), None) => InputModel::iid(all.clone(), self.d)?,
            (None, None, Some(path)) => {
                let set = crate::nn::histogram::PixelHistogramSet::read(&base_dir.join(path))
                    .map_err(|e| ModelError::Histogram(e.to_string()))?;
                set.input_model(HistogramMode::Smooth)
                    .map_err(|e| ModelError::Histogram(e.to_string()))?
            }
            _ => return Err(ModelError::AmbiguousDescription),
        };
        if model.dims() != self.d {
            return Err(ModelError::DimensionMismatch {
                declared: self.d,
                found: model.dims(),
            });
        }
        Ok(model.with_histogram_mode(self.mode))
    }
}

/// Step at which winding stairs last replaced variable `j` (zero based) on or
/// before step `i`: `d * floor((i - j') / d) + j'` with `j' = j + 1`.
///
/// Under the convention that the chain starts from `x_0 = (z_{1-d}, ..., z_0)`,
/// coordinate `j` of `x_i` is `z_{replacement_step(d, i, j)}`.
pub fn replacement_step(d: usize, i: i64, j: usize) -> i64 {
    assert!(j < d, "variable index {j} out of range for d = {d}");
    let d = d as i64;
    let jj = j as i64 + 1;
    d * (i - jj).div_euclid(d) + jj
}

/// Variable updated at winding stairs step `i >= 1` under a cyclic order.
pub fn updated_variable(d: usize, i: u64) -> usize {
    assert!(i >= 1);
    ((i - 1) % d as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    #[test]
    fn hybrid_examples() {
        assert_eq!(
            hybrid(&p(&[1., 2., 3.]), &p(&[9., 9., 9.]), 1).unwrap(),
            p(&[1., 9., 3.])
        );
        assert_eq!(hybrid(&p(&[4., 5.]), &p(&[4., 5.]), 0).unwrap(), p(&[4., 5.]));
        assert_eq!(
            hybrid(&p(&[0.; 4]), &p(&[1.; 4]), 3).unwrap(),
            p(&[0., 0., 0., 1.])
        );
    }

    #[test]
    fn hybrid_rejects_bad_index() {
        assert!(matches!(
            hybrid(&p(&[1., 2.]), &p(&[3., 4.]), 2),
            Err(ModelError::IndexOutOfRange { index: 2, d: 2 })
        ));
        assert!(matches!(
            hybrid(&p(&[1., 2.]), &p(&[3.]), 0),
            Err(ModelError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn replacement_steps_for_d3() {
        // x_3 = (z_1, z_2, z_3)
        assert_eq!(
            (0..3).map(|j| replacement_step(3, 3, j)).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        // x_4 = (z_4, z_2, z_3)
        assert_eq!(
            (0..3).map(|j| replacement_step(3, 4, j)).collect::<Vec<_>>(),
            vec![4, 2, 3]
        );
    }

    #[test]
    fn initial_point_for_d2() {
        // x_0 = (z_{-1}, z_0)
        assert_eq!(replacement_step(2, 0, 0), -1);
        assert_eq!(replacement_step(2, 0, 1), 0);
    }

    #[test]
    fn cyclic_update_order() {
        let seq: Vec<_> = (1..=7).map(|i| updated_variable(3, i)).collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn chain_points_share_no_draws_after_d_steps() {
        for d in 1..=10usize {
            for i in 0..=100i64 {
                for k in d as i64..=(d as i64 + 12) {
                    for j in 0..d {
                        let a: Vec<i64> = (0..d).map(|t| replacement_step(d, i, t)).collect();
                        let b = replacement_step(d, i + k, j);
                        assert!(!a.contains(&b), "d={d} i={i} k={k} j={j}");
                    }
                }
            }
        }
    }

    #[test]
    fn replacement_step_matches_simulated_chain() {
        // Track which z index each coordinate holds while running the cycle.
        for d in 1..=6usize {
            let mut held: Vec<i64> = (0..d as i64).map(|t| t + 1 - d as i64).collect();
            for i in 0..60i64 {
                if i > 0 {
                    held[updated_variable(d, i as u64)] = i;
                }
                for (j, &h) in held.iter().enumerate() {
                    assert_eq!(replacement_step(d, i, j), h);
                }
            }
        }
    }

    #[test]
    fn model_json_forms() {
        let m = InputModel::from_json(
            r#"{"d": 2, "coords": [{"kind": "uniform01"}, {"kind": "std_gaussian"}]}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(m.dims(), 2);
        let m = InputModel::from_json(r#"{"d": 5, "all": {"kind": "bernoulli01"}}"#, Path::new("."))
            .unwrap();
        assert_eq!(m.dims(), 5);
        assert!(matches!(
            InputModel::from_json(r#"{"d": 3, "coords": [{"kind": "uniform01"}]}"#, Path::new(".")),
            Err(ModelError::DimensionMismatch { declared: 3, found: 1 })
        ));
        assert!(matches!(
            InputModel::from_json(r#"{"d": 3}"#, Path::new(".")),
            Err(ModelError::AmbiguousDescription)
        ));
    }

    proptest! {
        #[test]
        fn hybrid_touches_only_j_and_is_idempotent(
            x in prop::collection::vec(-10f64..10., 1..12),
            seed in any::<u64>(),
            jr in any::<prop::sample::Index>(),
        ) {
            let d = x.len();
            let j = jr.index(d);
            let mut s = RandomStream::new(seed, 0);
            let z = InputModel::gaussian(d).unwrap().sample_point(&mut s);
            let x = Point(x);
            let y = hybrid(&x, &z, j).unwrap();
            for k in 0..d {
                if k == j {
                    prop_assert_eq!(y.0[k], z.0[k]);
                } else {
                    prop_assert_eq!(y.0[k], x.0[k]);
                }
            }
            prop_assert_eq!(hybrid(&y, &z, j).unwrap(), y);
        }
    }
}
