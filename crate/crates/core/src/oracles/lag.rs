//! Which squared differences along a winding-stairs chain can be correlated,
//! and their exact covariances for product functions.
//!
//! Step `i >= 1` of the chain changes the variable at position `(i - 1) mod d`
//! and `Delta_i = f(x_i) - f(x_{i-1})` involves the draws
//! `z_{i-d+1}, ..., z_i` and `z_{i-d}`. Two differences share a draw exactly
//! when their steps are at most `d` apart.

use serde::{Deserialize, Serialize};

use super::{MomentProfile, OracleError};
use crate::model::replacement_step;

/// Dependency structure of `Delta_1, Delta_2, ...` for a chain in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagStructure {
    pub d: usize,
}

/// How two steps relate within the cyclic sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagClass {
    /// The same step.
    Same,
    /// Positions `p < q` in one sweep, `q - p` steps apart.
    SameSweep { p: usize, q: usize },
    /// Position `p` one sweep after position `q > p`.
    NextSweep { p: usize, q: usize },
    /// The same position in consecutive sweeps.
    SamePosition { p: usize },
    /// No shared draws.
    Independent,
}

pub fn winding_lag_covariance_structure(d: usize) -> Result<LagStructure, OracleError> {
    if d == 0 {
        return Err(OracleError::Domain("d must be at least 1".into()));
    }
    Ok(LagStructure { d })
}

impl LagStructure {
    /// Whether `Delta_i` and `Delta_k` can be dependent.
    pub fn may_covary(&self, i: u64, k: u64) -> bool {
        i.abs_diff(k) <= self.d as u64
    }

    /// Indices of the draws `Delta_i` depends on, in position order followed by
    /// the replaced draw. Draw indices may be negative before the first sweep
    /// (`z_j` for `j <= 0` denotes the starting point).
    pub fn draws(&self, i: u64) -> Vec<i64> {
        assert!(i >= 1, "steps start at 1");
        let d = self.d;
        let i = i as i64;
        let mut z: Vec<i64> = (0..d).map(|t| replacement_step(d, i, t)).collect();
        z.push(i - d as i64);
        z
    }

    /// Number of draws two differences share.
    pub fn shared_draws(&self, i: u64, k: u64) -> usize {
        let a = self.draws(i);
        let b = self.draws(k);
        a.iter().filter(|z| b.contains(z)).count()
    }

    pub fn classify(&self, i: u64, k: u64) -> LagClass {
        let d = self.d as u64;
        if i == k {
            return LagClass::Same;
        }
        if !self.may_covary(i, k) {
            return LagClass::Independent;
        }
        let (lo, hi) = (i.min(k), i.max(k));
        let (plo, phi) = (((lo - 1) % d) as usize, ((hi - 1) % d) as usize);
        if hi - lo == d {
            LagClass::SamePosition { p: plo }
        } else if plo < phi {
            LagClass::SameSweep { p: plo, q: phi }
        } else {
            LagClass::NextSweep { p: phi, q: plo }
        }
    }

    /// Every class that occurs at a positive lag, with its lag.
    pub fn lag_table(&self) -> Vec<(u64, LagClass)> {
        let d = self.d as u64;
        let mut out = Vec::new();
        for i in d + 1..=2 * d {
            for lag in 1..=d {
                out.push((lag, self.classify(i, i + lag)));
            }
        }
        out
    }
}

/// One coordinate's factor in `Delta_i`: either `g(z_a)^2`-type (unchanged)
/// or a difference `g(z_a) - g(z_b)`.
#[derive(Clone, Copy)]
enum Factor {
    Kept(i64),
    Diff(i64, i64),
}

fn factors(lag: &LagStructure, i: u64) -> Vec<Factor> {
    let d = lag.d;
    let pos = ((i - 1) % d as u64) as usize;
    let ii = i as i64;
    (0..d)
        .map(|t| {
            if t == pos {
                Factor::Diff(ii, ii - d as i64)
            } else {
                Factor::Kept(replacement_step(d, ii, t))
            }
        })
        .collect()
}

fn pair_expectation(p: &MomentProfile, a: Factor, b: Factor) -> f64 {
    let s4 = p.sigma2 * p.sigma2;
    match (a, b) {
        (Factor::Kept(x), Factor::Kept(y)) => {
            if x == y {
                p.mu4
            } else {
                p.mu2 * p.mu2
            }
        }
        (Factor::Kept(x), Factor::Diff(u, v)) | (Factor::Diff(u, v), Factor::Kept(x)) => {
            if x == u || x == v {
                p.eta
            } else {
                2.0 * p.sigma2 * p.mu2
            }
        }
        (Factor::Diff(u, v), Factor::Diff(w, y)) => {
            let shared = [u, v].iter().filter(|z| **z == w || **z == y).count();
            match shared {
                2 => p.fourth_of_difference(),
                1 => (6.0 + p.kappa) * s4,
                _ => 4.0 * s4,
            }
        }
    }
}

/// `cov(Delta_i^2, Delta_k^2)` for `f = prod_t g_t` where `profiles[t]`
/// describes the variable changed at position `t`.
pub fn product_step_covariance(lag: &LagStructure, profiles: &[MomentProfile], i: u64, k: u64) -> f64 {
    assert_eq!(profiles.len(), lag.d);
    if !lag.may_covary(i, k) {
        return 0.0;
    }
    let fi = factors(lag, i);
    let fk = factors(lag, k);
    let joint: f64 = profiles
        .iter()
        .zip(fi.iter().zip(&fk))
        .map(|(p, (&a, &b))| pair_expectation(p, a, b))
        .product();
    let mean = |fs: &[Factor]| -> f64 {
        profiles
            .iter()
            .zip(fs)
            .map(|(p, f)| match f {
                Factor::Kept(_) => p.mu2,
                Factor::Diff(..) => 2.0 * p.sigma2,
            })
            .product()
    };
    joint - mean(&fi) * mean(&fk)
}

/// Variance of a winding-stairs `delta` estimate for a product function,
/// obtained by summing step covariances directly. `truncated` selects `N`
/// independent chains of one sweep each; otherwise one chain of `N` sweeps.
pub fn chain_variance_product(
    profiles_by_position: &[MomentProfile],
    n: u64,
    truncated: bool,
) -> Result<f64, OracleError> {
    let d = profiles_by_position.len();
    let lag = winding_lag_covariance_structure(d)?;
    if n == 0 {
        return Err(OracleError::Domain("N must be at least 1".into()));
    }
    let steps = if truncated { d as u64 } else { n * d as u64 };
    // Start one sweep in so every draw index is a genuine draw; covariances
    // depend only on positions, so the shift changes nothing.
    let off = d as u64;
    let mut total = 0.0;
    for a in 1..=steps {
        let lo = a.saturating_sub(d as u64).max(1);
        let hi = (a + d as u64).min(steps);
        for b in lo..=hi {
            total += product_step_covariance(&lag, profiles_by_position, a + off, b + off);
        }
    }
    let nf = n as f64;
    Ok(if truncated {
        total / (4.0 * nf)
    } else {
        total / (4.0 * nf * nf)
    })
}
