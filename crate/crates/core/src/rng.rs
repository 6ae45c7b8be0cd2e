//! Seedable, splittable random streams.
//!
//! Every random draw in the crate comes from a [`RandomStream`] identified by a
//! `(seed, stream id)` pair. The generator is ChaCha8, which is counter based:
//! the stream id selects an independent keystream, so work items can be handed
//! their own stream and produce the same draws regardless of which thread runs
//! them or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Roles separate the stream id space of different consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Baseline = 1,
    Replacement = 2,
    NaiveBlock = 3,
    RadialBlock = 4,
    WindingChain = 5,
    TruncatedChain = 6,
    Sigma2 = 7,
    TotalPairs = 8,
    LowerPairs = 9,
    Points = 10,
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of integers into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6D65_616E_6469_6D00, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Where a computation draws its randomness from: a user seed plus a replicate
/// number. Work items derive their stream ids from this and their own indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    pub seed: u64,
    pub replicate: u64,
}

impl RngPlan {
    pub fn new(seed: u64) -> Self {
        RngPlan { seed, replicate: 0 }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        RngPlan { replicate, ..self }
    }

    /// Stream for work item `index` playing `role`.
    pub fn stream(&self, role: Role, index: u64) -> RandomStream {
        RandomStream::new(
            self.seed,
            stream_id(&[self.replicate, role as u64, index]),
        )
    }
}

/// A deterministic random stream. Two streams with the same `(seed, id)` yield
/// bit-identical sequences.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        RandomStream { seed, id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Fair coin returning 0.0 or 1.0.
    #[inline]
    pub fn bit(&mut self) -> f64 {
        (self.rng.next_u32() & 1) as f64
    }
}
