//! Per-coordinate input distributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;

/// Tolerance on the total mass of a discrete distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("probabilities must be finite and nonnegative (entry {index} is {value})")]
    BadProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    BadMass(f64),
    #[error("histogram edges must be finite and strictly increasing (at edge {0})")]
    BadEdges(usize),
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("support values must be finite")]
    BadSupport,
    #[error("a distribution needs at least one atom or bin")]
    Empty,
}

/// How histogram coordinates are resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    /// Draw a bin, then a uniform point inside it.
    #[default]
    Smooth,
    /// Draw a bin and return its gray level exactly (see [`Histogram::levels`]).
    Levels,
}

/// A histogram over contiguous bins. Sampling draws a bin by inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        if edges.len() != probs.len() + 1 {
            return Err(DistributionError::LengthMismatch {
                what: "histogram edges",
                expected: probs.len() + 1,
                found: edges.len(),
            });
        }
        for (i, w) in edges.windows(2).enumerate() {
            if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
                return Err(DistributionError::BadEdges(i + 1));
            }
        }
        let cdf = cumulative(&probs)?;
        Ok(Histogram { edges, probs, cdf })
    }

    /// Equal-width bins on `[0, 1]`.
    pub fn unit_bins(probs: Vec<f64>) -> Result<Self, DistributionError> {
        let b = probs.len();
        let edges = (0..=b).map(|i| i as f64 / b as f64).collect();
        Histogram::new(edges, probs)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    /// Representative value of each bin for exact resampling. Bin `i` of `b`
    /// represents the level `lo + (hi - lo) * i / (b - 1)`, so data quantized to
    /// `b` evenly spaced levels on `[lo, hi]` is reproduced exactly.
    pub fn levels(&self) -> Vec<f64> {
        let b = self.bins();
        let lo = self.edges[0];
        let hi = self.edges[b];
        if b == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..b)
            .map(|i| lo + (hi - lo) * i as f64 / (b - 1) as f64)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * 0.5 * (self.edges[i] + self.edges[i + 1]))
            .sum()
    }

    fn draw_bin(&self, stream: &mut RandomStream) -> usize {
        let u = stream.uniform();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.probs.len() - 1)
    }

    fn sample(&self, stream: &mut RandomStream) -> f64 {
        let b = self.draw_bin(stream);
        let (lo, hi) = (self.edges[b], self.edges[b + 1]);
        lo + (hi - lo) * stream.uniform()
    }
}

/// Finitely many atoms with given probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSupport {
    values: Vec<f64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl FiniteSupport {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        if values.is_empty() {
            return Err(DistributionError::Empty);
        }
        if values.len() != probs.len() {
            return Err(DistributionError::LengthMismatch {
                what: "support probabilities",
                expected: values.len(),
                found: probs.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::BadSupport);
        }
        let cdf = cumulative(&probs)?;
        Ok(FiniteSupport { values, probs, cdf })
    }

    pub fn uniform_over(values: Vec<f64>) -> Result<Self, DistributionError> {
        let n = values.len();
        FiniteSupport::new(values, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn sample(&self, stream: &mut RandomStream) -> f64 {
        let u = stream.uniform();
        let k = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.values.len() - 1);
        self.values[k]
    }
}

fn cumulative(probs: &[f64]) -> Result<Vec<f64>, DistributionError> {
    for (index, &value) in probs.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(DistributionError::BadProbability { index, value });
        }
    }
    let total = crate::sum::ksum(probs);
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(DistributionError::BadMass(total));
    }
    let mut acc = crate::sum::KahanSum::new();
    Ok(probs
        .iter()
        .map(|&p| {
            acc.add(p);
            acc.value()
        })
        .collect())
}

/// Distribution of one input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoordinateSpec", into = "CoordinateSpec")]
pub enum CoordinateDistribution {
    Uniform01,
    /// Fair coin on {0, 1}.
    Bernoulli01,
    StdGaussian,
    Histogram(Histogram),
    FiniteSupport(FiniteSupport),
}

impl CoordinateDistribution {
    #[inline]
    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match self {
            CoordinateDistribution::Uniform01 => stream.uniform(),
            CoordinateDistribution::Bernoulli01 => stream.bit(),
            CoordinateDistribution::StdGaussian => stream.standard_normal(),
            CoordinateDistribution::Histogram(h) => h.sample(stream),
            CoordinateDistribution::FiniteSupport(s) => s.sample(stream),
        }
    }

    /// Atoms and their probabilities, for distributions with finite support.
    pub fn finite_support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            CoordinateDistribution::Bernoulli01 => Some((vec![0.0, 1.0], vec![0.5, 0.5])),
            CoordinateDistribution::FiniteSupport(s) => {
                Some((s.values.clone(), s.probs.clone()))
            }
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CoordinateDistribution::Uniform01 | CoordinateDistribution::Bernoulli01 => 0.5,
            CoordinateDistribution::StdGaussian => 0.0,
            CoordinateDistribution::Histogram(h) => h.mean(),
            CoordinateDistribution::FiniteSupport(s) => {
                s.values.iter().zip(&s.probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Converts a histogram to its exact-level form; other kinds are unchanged.
    pub fn with_histogram_mode(self, mode: HistogramMode) -> Self {
        match (self, mode) {
            (CoordinateDistribution::Histogram(h), HistogramMode::Levels) => {
                let fs = FiniteSupport::new(h.levels(), h.probs.clone())
                    .expect("histogram probabilities already validated");
                CoordinateDistribution::FiniteSupport(fs)
            }
            (other, _) => other,
        }
    }
}

/// Serialized form of a [`CoordinateDistribution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordinateSpec {
    Uniform01,
    Bernoulli01,
    StdGaussian,
    Histogram { edges: Vec<f64>, probs: Vec<f64> },
    FiniteSupport { values: Vec<f64>, probs: Vec<f64> },
}

impl TryFrom<CoordinateSpec> for CoordinateDistribution {
    type Error = DistributionError;

    fn try_from(spec: CoordinateSpec) -> Result<Self, Self::Error> {
        Ok(match spec {
            CoordinateSpec::Uniform01 => CoordinateDistribution::Uniform01,
            CoordinateSpec::Bernoulli01 => CoordinateDistribution::Bernoulli01,
            CoordinateSpec::StdGaussian => CoordinateDistribution::StdGaussian,
            CoordinateSpec::Histogram { edges, probs } => {
                CoordinateDistribution::Histogram(Histogram::new(edges, probs)?)
            }
            CoordinateSpec::FiniteSupport { values, probs } => {
                CoordinateDistribution::FiniteSupport(FiniteSupport::new(values, probs)?)
            }
        })
    }
}

impl From<CoordinateDistribution> for CoordinateSpec {
    fn from(d: CoordinateDistribution) -> Self {
        match d {
            CoordinateDistribution::Uniform01 => CoordinateSpec::Uniform01,
            CoordinateDistribution::Bernoulli01 => CoordinateSpec::Bernoulli01,
            CoordinateDistribution::StdGaussian => CoordinateSpec::StdGaussian,
            CoordinateDistribution::Histogram(h) => CoordinateSpec::Histogram {
                edges: h.edges,
                probs: h.probs,
            },
            CoordinateDistribution::FiniteSupport(s) => CoordinateSpec::FiniteSupport {
                values: s.values,
                probs: s.probs,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_mass_and_edges() {
        assert!(matches!(
            FiniteSupport::new(vec![0.0, 1.0], vec![0.5, 0.6]),
            Err(DistributionError::BadMass(_))
        ));
        assert!(matches!(
            FiniteSupport::new(vec![0.0, 1.0], vec![1.5, -0.5]),
            Err(DistributionError::BadProbability { index: 1, .. })
        ));
        assert!(matches!(
            Histogram::new(vec![0.0, 0.5, 0.5], vec![0.5, 0.5]),
            Err(DistributionError::BadEdges(2))
        ));
        assert!(matches!(
            Histogram::new(vec![0.0, 1.0], vec![0.5, 0.5]),
            Err(DistributionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_support_always_returns_its_atom() {
        let d = CoordinateDistribution::FiniteSupport(
            FiniteSupport::new(vec![7.0], vec![1.0]).unwrap(),
        );
        let mut s = RandomStream::new(3, 0);
        for _ in 0..1000 {
            assert_eq!(d.sample(&mut s), 7.0);
        }
    }

    #[test]
    fn zero_probability_bins_are_never_drawn() {
        let h = Histogram::unit_bins(vec![0.0, 1.0, 0.0]).unwrap();
        let d = CoordinateDistribution::Histogram(h);
        let mut s = RandomStream::new(9, 1);
        for _ in 0..10_000 {
            let x = d.sample(&mut s);
            assert!((1.0 / 3.0..2.0 / 3.0).contains(&x), "{x}");
        }
    }

    #[test]
    fn levels_reproduce_binary_pixels() {
        let h = Histogram::unit_bins(vec![0.5, 0.5]).unwrap();
        assert_eq!(h.levels(), vec![0.0, 1.0]);
        let d = CoordinateDistribution::Histogram(h).with_histogram_mode(HistogramMode::Levels);
        assert_eq!(d.finite_support(), Some((vec![0.0, 1.0], vec![0.5, 0.5])));
    }

    #[test]
    fn json_round_trip_validates() {
        let json = r#"{"kind":"finite_support","values":[1,2],"probs":[0.25,0.75]}"#;
        let d: CoordinateDistribution = serde_json::from_str(json).unwrap();
        assert_eq!(d.mean(), 1.75);
        let back = serde_json::to_string(&d).unwrap();
        let again: CoordinateDistribution = serde_json::from_str(&back).unwrap();
        assert_eq!(d, again);
        let bad = r#"{"kind":"finite_support","values":[1,2],"probs":[0.25,0.5]}"#;
        assert!(serde_json::from_str::<CoordinateDistribution>(bad).is_err());
    }
}
