//! Chunked, order-deterministic accumulation shared by the estimators.

use rayon::prelude::*;

use super::{BlackBox, EstimatorError};
use crate::sum::{KahanSum, RunningMoments};

/// Blocks per work item. Fixed so the reduction tree never depends on threads.
pub(crate) const CHUNK: u64 = 64;
/// Work items reduced together before moving on, bounding peak memory.
const WAVE: usize = 128;

/// Per-output, per-variable accumulators.
#[derive(Debug, Clone)]
pub(crate) struct Accum {
    pub d: usize,
    /// Sum over blocks of the term for (output, variable), indexed `o * d + j`.
    pub terms: Vec<KahanSum>,
    /// Sum of squared terms, for per-variable standard errors.
    pub terms_sq: Vec<KahanSum>,
    /// Per-output moments of block contributions.
    pub blocks: Vec<RunningMoments>,
    /// Per-output moments of the function values feeding `sigma^2`.
    pub values: Vec<RunningMoments>,
    pub evals: u64,
}

impl Accum {
    pub fn new(outputs: usize, d: usize) -> Self {
        Accum {
            d,
            terms: vec![KahanSum::new(); outputs * d],
            terms_sq: vec![KahanSum::new(); outputs * d],
            blocks: vec![RunningMoments::new(); outputs],
            values: vec![RunningMoments::new(); outputs],
            evals: 0,
        }
    }

    #[inline]
    pub fn add_term(&mut self, o: usize, j: usize, t: f64) {
        let k = o * self.d + j;
        self.terms[k].add(t);
        self.terms_sq[k].add(t * t);
    }

    pub fn merge(&mut self, other: &Accum) {
        for (a, b) in self.terms.iter_mut().zip(&other.terms) {
            a.merge(b);
        }
        for (a, b) in self.terms_sq.iter_mut().zip(&other.terms_sq) {
            a.merge(b);
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.merge(b);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.merge(b);
        }
        self.evals += other.evals;
    }

    pub fn term_sum(&self, o: usize, j: usize) -> f64 {
        self.terms[o * self.d + j].value()
    }

    /// Sample variance of the `n` per-block terms for (o, j).
    pub fn term_variance(&self, o: usize, j: usize, n: u64) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let k = o * self.d + j;
        let s = self.terms[k].value();
        let ss = self.terms_sq[k].value();
        let nf = n as f64;
        ((ss - s * s / nf) / (nf - 1.0)).max(0.0)
    }
}

/// Evaluates `f` at `x`, counting the evaluation and rejecting non-finite output.
#[inline]
pub(crate) fn evaluate<B: BlackBox + ?Sized>(
    f: &B,
    x: &[f64],
    out: &mut [f64],
    acc: &mut Accum,
) -> Result<(), EstimatorError> {
    f.eval_into(x, out);
    acc.evals += 1;
    if let Some(&value) = out.iter().find(|v| !v.is_finite()) {
        return Err(EstimatorError::NonFinite {
            point: x.to_vec(),
            value,
        });
    }
    Ok(())
}

/// Runs `kernel(block_index, accum)` for blocks `0..n` in parallel chunks and
/// reduces them in block order. The first failing block (in block order) wins.
pub(crate) fn run_blocks<K>(
    n: u64,
    outputs: usize,
    d: usize,
    kernel: K,
) -> Result<Accum, EstimatorError>
where
    K: Fn(u64, &mut Accum) -> Result<(), EstimatorError> + Sync,
{
    let chunks: Vec<(u64, u64)> = (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect();
    let mut total = Accum::new(outputs, d);
    for wave in chunks.chunks(WAVE) {
        let parts: Vec<Result<Accum, EstimatorError>> = wave
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = Accum::new(outputs, d);
                for i in lo..hi {
                    kernel(i, &mut acc)?;
                }
                Ok(acc)
            })
            .collect();
        for part in parts {
            total.merge(&part?);
        }
    }
    Ok(total)
}
