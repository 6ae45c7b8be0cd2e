//! Per-pixel gray-level histograms and the MDHS container.
//!
//! ```text
//! "MDHS" | version u32 | class id i32 (-1 = all classes) | image count u64
//! | dataset id length u32 | dataset id (UTF-8) | pixel count u32
//! per pixel: bins u32 | edges f64[bins + 1] | probabilities f64[bins]
//! ```
//!
//! All fields little-endian.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{CoordinateDistribution, DistributionError, Histogram, HistogramMode};
use crate::model::{InputModel, ModelError};

pub const MAGIC: &[u8; 4] = b"MDHS";
pub const VERSION: u32 = 1;
/// Tolerance on each histogram's total probability.
pub const HISTOGRAM_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramClass {
    Digit(u8),
    Combined,
}

impl HistogramClass {
    pub fn id(self) -> i32 {
        match self {
            HistogramClass::Digit(y) => y as i32,
            HistogramClass::Combined => -1,
        }
    }

    pub fn from_id(id: i32) -> Option<Self> {
        match id {
            -1 => Some(HistogramClass::Combined),
            0..=255 => Some(HistogramClass::Digit(id as u8)),
            _ => None,
        }
    }
}

impl fmt::Display for HistogramClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistogramClass::Digit(y) => write!(f, "h{y}"),
            HistogramClass::Combined => f.write_str("combined"),
        }
    }
}

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("not an MDHS file (bad magic)")]
    BadMagic,
    #[error("unsupported MDHS version {0}")]
    Version(u32),
    #[error("file truncated while reading {0}")]
    Truncated(String),
    #[error("invalid class id {0}")]
    BadClass(i32),
    #[error("pixel {pixel}: {source}")]
    Pixel {
        pixel: usize,
        #[source]
        source: DistributionError,
    },
    #[error("pixel {pixel}: probabilities sum to {sum}")]
    Mass { pixel: usize, sum: f64 },
    #[error("{0} images but {1} labels")]
    CountMismatch(usize, usize),
    #[error("class {0} has no images")]
    EmptyClass(HistogramClass),
    #[error("images have different sizes")]
    RaggedImages,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("{0} unexpected bytes at end of file")]
    TrailingBytes(usize),
    #[error("dataset id is not UTF-8")]
    BadText,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One histogram per pixel, for one class or for all images.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelHistogramSet {
    pub class: HistogramClass,
    pub images: u64,
    pub dataset: String,
    pub pixels: Vec<Histogram>,
}

impl PixelHistogramSet {
    pub fn new(
        class: HistogramClass,
        images: u64,
        dataset: String,
        pixels: Vec<Histogram>,
    ) -> Result<Self, HistogramError> {
        for (pixel, h) in pixels.iter().enumerate() {
            let sum: f64 = h.probs().iter().sum();
            if (sum - 1.0).abs() > HISTOGRAM_MASS_TOLERANCE {
                return Err(HistogramError::Mass { pixel, sum });
            }
        }
        Ok(PixelHistogramSet {
            class,
            images,
            dataset,
            pixels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Per-pixel means of the histogram distribution (bin midpoints).
    pub fn pixel_means(&self) -> Vec<f64> {
        self.pixels.iter().map(Histogram::mean).collect()
    }

    /// Input model drawing every pixel independently from its histogram.
    pub fn input_model(&self, mode: HistogramMode) -> Result<InputModel, ModelError> {
        let coords = self
            .pixels
            .iter()
            .map(|h| CoordinateDistribution::Histogram(h.clone()).with_histogram_mode(mode))
            .collect();
        InputModel::new(coords)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.class.id().to_le_bytes());
        out.extend_from_slice(&self.images.to_le_bytes());
        out.extend_from_slice(&(self.dataset.len() as u32).to_le_bytes());
        out.extend_from_slice(self.dataset.as_bytes());
        out.extend_from_slice(&(self.pixels.len() as u32).to_le_bytes());
        for h in &self.pixels {
            out.extend_from_slice(&(h.bins() as u32).to_le_bytes());
            for v in h.edges().iter().chain(h.probs()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, HistogramError> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<&[u8], HistogramError> {
            if bytes.len() - pos < n {
                return Err(HistogramError::Truncated(what.into()));
            }
            pos += n;
            Ok(&bytes[pos - n..pos])
        };
        if take(4, "magic").map_err(|_| HistogramError::BadMagic)? != MAGIC {
            return Err(HistogramError::BadMagic);
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4, "version")?);
        if version != VERSION {
            return Err(HistogramError::Version(version));
        }
        let id = i32::from_le_bytes(take(4, "class id")?.try_into().unwrap());
        let class = HistogramClass::from_id(id).ok_or(HistogramError::BadClass(id))?;
        let images = u64::from_le_bytes(take(8, "image count")?.try_into().unwrap());
        let len = u32_at(take(4, "dataset id length")?) as usize;
        let dataset = std::str::from_utf8(take(len, "dataset id")?)
            .map_err(|_| HistogramError::BadText)?
            .to_string();
        let count = u32_at(take(4, "pixel count")?) as usize;
        let mut pixels = Vec::with_capacity(count.min(1 << 16));
        for pixel in 0..count {
            let bins = u32_at(take(4, "bin count")?) as usize;
            let raw = take(
                (2 * bins + 1).saturating_mul(8),
                &format!("pixel {pixel} histogram"),
            )?;
            let vals: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let (edges, probs) = vals.split_at(bins + 1);
            let h = Histogram::new(edges.to_vec(), probs.to_vec())
                .map_err(|source| HistogramError::Pixel { pixel, source })?;
            pixels.push(h);
        }
        if pos != bytes.len() {
            return Err(HistogramError::TrailingBytes(bytes.len() - pos));
        }
        PixelHistogramSet::new(class, images, dataset, pixels)
    }

    pub fn read(path: &Path) -> Result<Self, HistogramError> {
        PixelHistogramSet::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), HistogramError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }
}

/// Histograms for each digit class `0..classes` and for all images together.
/// A class without images yields an error in its slot; the others proceed.
pub fn build_histograms(
    images: &[Vec<f64>],
    labels: &[u8],
    classes: u8,
    bins: usize,
    dataset: &str,
) -> Result<Vec<(HistogramClass, Result<PixelHistogramSet, HistogramError>)>, HistogramError> {
    if images.len() != labels.len() {
        return Err(HistogramError::CountMismatch(images.len(), labels.len()));
    }
    if bins == 0 {
        return Err(HistogramError::NoBins);
    }
    let pixels = images.first().map_or(0, Vec::len);
    if images.iter().any(|im| im.len() != pixels) {
        return Err(HistogramError::RaggedImages);
    }
    let build = |class: HistogramClass| {
        let members: Vec<&Vec<f64>> = images
            .iter()
            .zip(labels)
            .filter(|(_, &l)| match class {
                HistogramClass::Digit(y) => l == y,
                HistogramClass::Combined => true,
            })
            .map(|(im, _)| im)
            .collect();
        if members.is_empty() {
            return Err(HistogramError::EmptyClass(class));
        }
        let mut counts = vec![0u64; pixels * bins];
        for im in &members {
            for (p, &v) in im.iter().enumerate() {
                let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
                counts[p * bins + b] += 1;
            }
        }
        let total = members.len() as f64;
        let hists = (0..pixels)
            .map(|p| {
                let probs = counts[p * bins..(p + 1) * bins]
                    .iter()
                    .map(|&c| c as f64 / total)
                    .collect();
                Histogram::unit_bins(probs).map_err(|source| HistogramError::Pixel { pixel: p, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        PixelHistogramSet::new(class, members.len() as u64, dataset.to_string(), hists)
    };
    Ok((0..classes)
        .map(HistogramClass::Digit)
        .chain([HistogramClass::Combined])
        .map(|c| (c, build(c)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn black_white() -> (Vec<Vec<f64>>, Vec<u8>) {
        (vec![vec![0.0; 6], vec![1.0; 6]], vec![3, 3])
    }

    #[test]
    fn half_and_half() {
        let (images, labels) = black_white();
        let sets = build_histograms(&images, &labels, 10, 2, "bw").unwrap();
        let (class, combined) = sets.last().unwrap();
        assert_eq!(*class, HistogramClass::Combined);
        let combined = combined.as_ref().unwrap();
        assert_eq!(combined.images, 2);
        for h in &combined.pixels {
            assert_eq!(h.probs(), &[0.5, 0.5]);
        }
        let model = combined.input_model(HistogramMode::Levels).unwrap();
        assert_eq!(
            model.coord(0).finite_support().unwrap(),
            (vec![0.0, 1.0], vec![0.5, 0.5])
        );
    }

    #[test]
    fn empty_class_is_reported_and_others_proceed() {
        let (images, labels) = black_white();
        let sets = build_histograms(&images, &labels, 10, 4, "bw").unwrap();
        assert!(matches!(sets[0].1, Err(HistogramError::EmptyClass(HistogramClass::Digit(0)))));
        assert!(sets[3].1.is_ok());
        assert_eq!(sets.len(), 11);
    }

    #[test]
    fn count_mismatch() {
        let (images, _) = black_white();
        assert!(matches!(
            build_histograms(&images, &[1], 10, 2, "x"),
            Err(HistogramError::CountMismatch(2, 1))
        ));
    }

    #[test]
    fn file_round_trip_and_errors() {
        let (images, labels) = black_white();
        let set = build_histograms(&images, &labels, 4, 256, "bw").unwrap()[3]
            .1
            .as_ref()
            .unwrap()
            .clone();
        let bytes = set.encode();
        assert_eq!(PixelHistogramSet::decode(&bytes).unwrap(), set);
        assert!(matches!(
            PixelHistogramSet::decode(&bytes[..bytes.len() - 1]),
            Err(HistogramError::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[1] = b'x';
        assert!(matches!(PixelHistogramSet::decode(&bad), Err(HistogramError::BadMagic)));
    }

    #[test]
    fn levels_reproduce_quantized_values() {
        // Gray levels k/255 land in bin k of 256 and map back exactly.
        let images: Vec<Vec<f64>> = [0u32, 17, 128, 255].iter().map(|&k| vec![k as f64 / 255.0]).collect();
        let labels = vec![0; 4];
        let sets = build_histograms(&images, &labels, 1, 256, "q").unwrap();
        let set = sets[0].1.as_ref().unwrap();
        let (values, probs) = set
            .input_model(HistogramMode::Levels)
            .unwrap()
            .coord(0)
            .finite_support()
            .unwrap();
        for (k, v) in [0u32, 17, 128, 255].iter().zip(
            values.iter().zip(&probs).filter(|(_, &p)| p > 0.0).map(|(v, _)| *v),
        ) {
            assert_eq!(v, *k as f64 / 255.0);
        }
    }
}
