//! Closed-form variances of the four `delta` estimators for additive and
//! product functions, the product-function mean dimension, and the fourth
//! moment identities for differences of i.i.d. variables.
//!
//! All variances are exact for finite `N`.
//!
//! Notation for the product function `f(x) = prod_t g_t(x_t)`: `m2_t = E g_t^2`,
//! `m4_t = E g_t^4`, `eta_t = E[g_t(x)^2 (g_t(x) - g_t(z))^2]` and
//! `V_j = var((f(x) - f(x with x_j resampled))^2)`.
//!
//! For winding stairs with variables visited in positions `p < q`, the squared
//! differences made at those positions in one sweep share the `z` draws of every
//! variable outside `[p, q]`, while the draws between them differ; the
//! difference at position `p` of the next sweep instead shares the draws
//! between them. The same variable also covaries with itself one sweep later.

use serde::{Deserialize, Serialize};

use super::{MomentProfile, OracleError};
use crate::estimators::Strategy;

/// The four moment identities for i.i.d. `Y1..Y4` with variance `sigma2` and
/// excess kurtosis `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Moments {
    /// `E (Y1 - Y2)^4`
    pub fourth: f64,
    /// `var((Y1 - Y2)^2)`
    pub var_square: f64,
    /// `E[(Y1 - Y2)^2 (Y3 - Y4)^2]`
    pub disjoint: f64,
    /// `E[(Y1 - Y2)^2 (Y1 - Y3)^2]`
    pub shared: f64,
}

pub fn lemma1_moments(sigma2: f64, kappa: f64) -> Result<Lemma1Moments, OracleError> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(OracleError::Domain(format!("variance {sigma2} must be >= 0")));
    }
    if !(kappa >= -2.0 && kappa.is_finite()) {
        return Err(OracleError::Domain(format!("kurtosis {kappa} must be >= -2")));
    }
    let s4 = sigma2 * sigma2;
    Ok(Lemma1Moments {
        fourth: (12.0 + 2.0 * kappa) * s4,
        var_square: (8.0 + 2.0 * kappa) * s4,
        disjoint: 4.0 * s4,
        shared: (6.0 + kappa) * s4,
    })
}

fn check_n(n: u64) -> Result<f64, OracleError> {
    if n == 0 {
        return Err(OracleError::Domain("N must be at least 1".into()));
    }
    Ok(n as f64)
}

/// Variance of the `delta` estimate for `f(x) = mu + sum_j g_j(x_j)`, where
/// `profiles[j]` describes `g_j(x_j)`.
pub fn var_additive(
    strategy: Strategy,
    profiles: &[MomentProfile],
    n: u64,
) -> Result<f64, OracleError> {
    let nf = check_n(n)?;
    let mut base = 0.0;
    let mut lag = 0.0;
    for p in profiles {
        let s4 = p.sigma2 * p.sigma2;
        base += (2.0 + 0.5 * p.kappa) * s4;
        lag += (p.kappa + 2.0) * s4;
    }
    let v = base / nf;
    Ok(match strategy {
        Strategy::Naive | Strategy::Radial | Strategy::WindingTruncated => v,
        Strategy::WindingFull => v + (nf - 1.0) / (2.0 * nf * nf) * lag,
    })
}

/// Products of per-variable quantities over index ranges, evaluated by
/// prefix products with an explicit skip so zero moments are handled exactly.
struct Factors<'a> {
    p: Vec<&'a MomentProfile>,
}

impl Factors<'_> {
    fn prod<F: Fn(&MomentProfile) -> f64>(&self, pick: F, keep: impl Fn(usize) -> bool) -> f64 {
        self.p
            .iter()
            .enumerate()
            .filter(|(t, _)| keep(*t))
            .map(|(_, p)| pick(p))
            .product()
    }

    fn m2sq(p: &MomentProfile) -> f64 {
        p.mu2 * p.mu2
    }

    fn m4(p: &MomentProfile) -> f64 {
        p.mu4
    }

    /// `var(Delta_j^2)`
    fn single(&self, j: usize) -> f64 {
        let pj = self.p[j];
        pj.fourth_of_difference() * self.prod(Self::m4, |t| t != j)
            - 4.0 * pj.sigma2 * pj.sigma2 * self.prod(Self::m2sq, |t| t != j)
    }

    /// `4 sigma_j^2 sigma_k^2 m2_j m2_k prod_{t != j,k} m2_t^2`, the product of
    /// the means of two squared differences.
    fn mean_product(&self, j: usize, k: usize) -> f64 {
        let (pj, pk) = (self.p[j], self.p[k]);
        4.0 * pj.sigma2 * pk.sigma2 * pj.mu2 * pk.mu2
            * self.prod(Self::m2sq, |t| t != j && t != k)
    }

    /// Radial: both differences share the baseline point entirely.
    fn radial_cov(&self, j: usize, k: usize) -> f64 {
        self.p[j].eta * self.p[k].eta * self.prod(Self::m4, |t| t != j && t != k)
            - self.mean_product(j, k)
    }

    /// Winding, positions `j < k` within one sweep.
    fn same_sweep_cov(&self, j: usize, k: usize) -> f64 {
        self.p[j].eta
            * self.p[k].eta
            * self.prod(Self::m2sq, |t| t > j && t < k)
            * self.prod(Self::m4, |t| t < j || t > k)
            - self.mean_product(j, k)
    }

    /// Winding, position `j` of one sweep against position `k > j` of the
    /// previous sweep.
    fn next_sweep_cov(&self, j: usize, k: usize) -> f64 {
        self.p[j].eta
            * self.p[k].eta
            * self.prod(Self::m4, |t| t > j && t < k)
            * self.prod(Self::m2sq, |t| t < j || t > k)
            - self.mean_product(j, k)
    }

    /// Winding, the same position in consecutive sweeps.
    fn lag_sweep_cov(&self, j: usize) -> f64 {
        let pj = self.p[j];
        let (_, m4) = pj.central34();
        (m4 - pj.sigma2 * pj.sigma2) * self.prod(Self::m2sq, |t| t != j)
    }
}

/// Variance of the `delta` estimate for `f(x) = prod_j g_j(x_j)`.
///
/// `ordering[p]` is the variable winding stairs changes at position `p` of
/// each sweep; it only affects the winding strategies.
pub fn var_product(
    strategy: Strategy,
    profiles: &[MomentProfile],
    n: u64,
    ordering: &[usize],
) -> Result<f64, OracleError> {
    let nf = check_n(n)?;
    let d = profiles.len();
    crate::estimators::check_permutation(ordering, d)
        .map_err(|e| OracleError::Domain(e.to_string()))?;
    let fac = Factors {
        p: ordering.iter().map(|&j| &profiles[j]).collect(),
    };
    let diag: f64 = (0..d).map(|j| fac.single(j)).sum::<f64>() / 4.0;
    let pairs = || (0..d).flat_map(move |j| (j + 1..d).map(move |k| (j, k)));
    let scaled = match strategy {
        Strategy::Naive => diag,
        Strategy::Radial => diag + 0.5 * pairs().map(|(j, k)| fac.radial_cov(j, k)).sum::<f64>(),
        Strategy::WindingTruncated => {
            diag + 0.5 * pairs().map(|(j, k)| fac.same_sweep_cov(j, k)).sum::<f64>()
        }
        Strategy::WindingFull => {
            let carry = (nf - 1.0) / nf;
            diag + 0.5 * carry * (0..d).map(|j| fac.lag_sweep_cov(j)).sum::<f64>()
                + 0.5
                    * pairs()
                        .map(|(j, k)| fac.same_sweep_cov(j, k) + carry * fac.next_sweep_cov(j, k))
                        .sum::<f64>()
        }
    };
    Ok(scaled / nf)
}

/// Exact variance, total indices and mean dimension of a product function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTruth {
    pub sigma2: f64,
    pub tau_total: Vec<f64>,
    pub delta: f64,
    pub nu: f64,
}

/// Mean dimension of `prod_j g_j(x_j)`:
/// `sum_j s_j / (1 - prod_j (1 - s_j))` with `s_j = sigma_j^2 / (mu_j^2 + sigma_j^2)`.
pub fn nu_product(profiles: &[MomentProfile]) -> Result<f64, OracleError> {
    if profiles.iter().any(|p| p.mu2 <= 0.0) {
        return Err(OracleError::Degenerate(
            "a factor is identically zero".into(),
        ));
    }
    let num: f64 = profiles.iter().map(|p| p.sigma2 / p.mu2).sum();
    let den = 1.0 - profiles.iter().map(|p| p.mu * p.mu / p.mu2).product::<f64>();
    if den <= 0.0 || num <= 0.0 {
        return Err(OracleError::Degenerate(
            "every factor has zero variance".into(),
        ));
    }
    Ok(num / den)
}

/// `sigma^2`, the total indices and `delta` of a product function computed from
/// the ANOVA of a product rather than the mean dimension formula.
pub fn product_truth(profiles: &[MomentProfile]) -> Result<ProductTruth, OracleError> {
    let nu = nu_product(profiles)?;
    let all_m2: f64 = profiles.iter().map(|p| p.mu2).product();
    let all_mu2: f64 = profiles.iter().map(|p| p.mu * p.mu).product();
    let sigma2 = all_m2 - all_mu2;
    let tau_total: Vec<f64> = (0..profiles.len())
        .map(|j| {
            profiles[j].sigma2
                * profiles
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| *t != j)
                    .map(|(_, p)| p.mu2)
                    .product::<f64>()
        })
        .collect();
    let delta = tau_total.iter().sum();
    Ok(ProductTruth {
        sigma2,
        tau_total,
        delta,
        nu,
    })
}

/// Whether each factor meets the kurtosis condition `kappa_j >= -5/16` under
/// which radial sampling cannot beat naive sampling for a product function.
pub fn covariance_sign_condition(profiles: &[MomentProfile]) -> Vec<bool> {
    profiles.iter().map(|p| p.kappa >= -5.0 / 16.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(d: usize) -> Vec<MomentProfile> {
        vec![MomentProfile::standard_gaussian(); d]
    }

    fn ident(d: usize) -> Vec<usize> {
        (0..d).collect()
    }

    #[test]
    fn lemma1_values() {
        let g = lemma1_moments(1.0, 0.0).unwrap();
        assert_eq!((g.fourth, g.var_square, g.disjoint, g.shared), (12.0, 8.0, 4.0, 6.0));
        let z = lemma1_moments(0.0, 0.0).unwrap();
        assert_eq!((z.fourth, z.var_square, z.disjoint, z.shared), (0.0, 0.0, 0.0, 0.0));
        let u = lemma1_moments(1.0 / 12.0, -1.2).unwrap();
        let s4 = 1.0 / 144.0;
        assert!((u.fourth - 9.6 * s4).abs() < 1e-15);
        assert!((u.var_square - 5.6 * s4).abs() < 1e-15);
        assert!((u.disjoint - 4.0 * s4).abs() < 1e-15);
        assert!((u.shared - 4.8 * s4).abs() < 1e-15);
        assert!(lemma1_moments(-1.0, 0.0).is_err());
        assert!(lemma1_moments(1.0, -2.5).is_err());
    }

    #[test]
    fn additive_substitution() {
        let p = gauss(1);
        assert!((var_additive(Strategy::Naive, &p, 100).unwrap() - 0.02).abs() < 1e-15);
        assert!((var_additive(Strategy::WindingFull, &p, 100).unwrap() - 0.0299).abs() < 1e-15);
        let zero = vec![MomentProfile::constant(3.0); 4];
        for s in Strategy::ALL {
            assert_eq!(var_additive(s, &zero, 10).unwrap(), 0.0);
        }
        assert!(var_additive(Strategy::Naive, &p, 0).is_err());
    }

    #[test]
    fn uniform_additive_pair() {
        let p = vec![MomentProfile::uniform(0.0, 1.0); 2];
        let v = var_additive(Strategy::Radial, &p, 256).unwrap() * 256.0;
        assert!((v - 2.0 * 1.4 / 144.0).abs() < 1e-15);
    }

    #[test]
    fn full_minus_truncated_surplus_is_nonnegative() {
        for kappa in [-2.0, -1.2, 0.0, 3.0] {
            let sigma2: f64 = 0.7;
            let m4 = (kappa + 3.0) * sigma2 * sigma2;
            let p = MomentProfile::from_central(0.0, sigma2, 0.0, m4, super::super::MomentSource::Exact)
                .unwrap();
            let ps = vec![p; 3];
            for n in [1, 2, 10, 1000] {
                let full = var_additive(Strategy::WindingFull, &ps, n).unwrap();
                let trunc = var_additive(Strategy::WindingTruncated, &ps, n).unwrap();
                let nf = n as f64;
                let surplus = (nf - 1.0) / (2.0 * nf * nf) * 3.0 * (kappa + 2.0) * sigma2 * sigma2;
                assert!((full - trunc - surplus).abs() < 1e-14);
                assert!(full - trunc >= 0.0);
            }
        }
    }

    #[test]
    fn gaussian_product_d3() {
        let p = gauss(3);
        let o = ident(3);
        // d (3^d - 1)
        assert!((var_product(Strategy::Naive, &p, 1, &o).unwrap() - 78.0).abs() < 1e-12);
        // 78 + (1/2) * 3 pairs * (16 * 3 - 4)
        assert!((var_product(Strategy::Radial, &p, 1, &o).unwrap() - 144.0).abs() < 1e-12);
        // 78 + (1/2) * (44 + 12 + 44)
        assert!((var_product(Strategy::WindingTruncated, &p, 1, &o).unwrap() - 128.0).abs() < 1e-12);
        // N = 64: 128 + (63/128) * 3 * 2 + (63/128) * (12 + 44 + 12)
        let full = var_product(Strategy::WindingFull, &p, 64, &o).unwrap() * 64.0;
        assert!((full - (128.0 + 63.0 / 128.0 * (6.0 + 68.0))).abs() < 1e-10);
    }

    #[test]
    fn single_variable_product_strategies_coincide_at_n1() {
        for p in [MomentProfile::gaussian(1.0, 2.0), MomentProfile::uniform(0.0, 1.0)] {
            let ps = vec![p];
            let naive = var_product(Strategy::Naive, &ps, 1, &[0]).unwrap();
            for s in Strategy::ALL {
                assert!((var_product(s, &ps, 1, &[0]).unwrap() - naive).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn truncated_equals_radial_at_d2() {
        let ps = vec![MomentProfile::gaussian(0.3, 1.1), MomentProfile::uniform(-1.0, 2.0)];
        for n in [1, 7] {
            let r = var_product(Strategy::Radial, &ps, n, &[0, 1]).unwrap();
            let t = var_product(Strategy::WindingTruncated, &ps, n, &[0, 1]).unwrap();
            assert!((r - t).abs() < 1e-14 * r.abs().max(1.0));
        }
    }

    #[test]
    fn ordering_matters_for_winding_only() {
        let ps = vec![
            MomentProfile::gaussian(0.0, 1.0),
            MomentProfile::gaussian(2.0, 1.0),
            MomentProfile::uniform(0.0, 1.0),
        ];
        let a = [0, 1, 2];
        let b = [1, 0, 2];
        for s in [Strategy::Naive, Strategy::Radial] {
            assert_eq!(var_product(s, &ps, 5, &a).unwrap(), var_product(s, &ps, 5, &b).unwrap());
        }
        assert_ne!(
            var_product(Strategy::WindingTruncated, &ps, 5, &a).unwrap(),
            var_product(Strategy::WindingTruncated, &ps, 5, &b).unwrap()
        );
    }

    #[test]
    fn covariance_sum_shrinks_as_means_grow() {
        let mut last = f64::INFINITY;
        for mu in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let ps = vec![MomentProfile::gaussian(mu, 1.0); 3];
            let o = ident(3);
            let naive = var_product(Strategy::Naive, &ps, 1, &o).unwrap();
            let radial = var_product(Strategy::Radial, &ps, 1, &o).unwrap();
            // relative to the scale of the naive variance
            let rel = (radial - naive) / naive;
            assert!(rel < last, "mu = {mu}: {rel} >= {last}");
            last = rel;
        }
    }

    #[test]
    fn nu_product_examples() {
        assert!((nu_product(&gauss(3)).unwrap() - 3.0).abs() < 1e-15);
        let p = vec![MomentProfile::gaussian(1.0, 1.0); 2];
        assert!((nu_product(&p).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((nu_product(&[MomentProfile::uniform(2.0, 5.0)]).unwrap() - 1.0).abs() < 1e-15);
        let b = vec![MomentProfile::bernoulli(0.5); 3];
        assert!((nu_product(&b).unwrap() - 1.5 / 0.875).abs() < 1e-14);
        assert!(nu_product(&vec![MomentProfile::constant(2.0); 3]).is_err());
        assert!(nu_product(&[MomentProfile::constant(0.0), MomentProfile::standard_gaussian()]).is_err());
    }

    #[test]
    fn product_truth_is_consistent_with_nu() {
        let ps = vec![
            MomentProfile::gaussian(1.0, 0.5),
            MomentProfile::uniform(0.0, 3.0),
            MomentProfile::bernoulli(0.2),
        ];
        let t = product_truth(&ps).unwrap();
        assert!((t.delta / t.sigma2 - t.nu).abs() < 1e-12);
    }

    #[test]
    fn sign_condition_boundary() {
        let k = |kappa: f64| {
            MomentProfile::from_central(0.0, 1.0, 0.0, kappa + 3.0, super::super::MomentSource::Exact)
                .unwrap()
        };
        assert_eq!(
            covariance_sign_condition(&[k(0.0), k(-1.2), k(-5.0 / 16.0)]),
            vec![true, false, true]
        );
    }
}
