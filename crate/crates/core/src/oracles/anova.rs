//! Exact ANOVA decomposition by enumeration over a finite product grid.

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::estimators::BlackBox;
use crate::model::InputModel;

/// Largest grid `f` is evaluated on.
pub const MAX_GRID: usize = 1_000_000;
/// Largest number of variables.
pub const MAX_DIMS: usize = 20;
/// Largest total size of all effect tables, `prod_j (1 + |S_j|)`.
pub const MAX_TABLE_ENTRIES: usize = 1 << 23;

/// Subsets of `0..d` are bitmasks; bit `j` set means variable `j` is in the set.
pub type Subset = usize;

/// The exact ANOVA of a function on a finite product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub d: usize,
    pub mean: f64,
    /// `Var(f)` computed directly on the grid.
    pub total_variance: f64,
    /// `sigma^2_u` indexed by subset; entry 0 (the empty set) is zero.
    pub components: Vec<f64>,
    /// `sum_u |u| sigma^2_u`.
    pub delta: f64,
    /// `delta / total_variance`; absent when the variance is zero.
    pub nu: Option<f64>,
    /// Effect `f_u` tabulated over the grid of the variables in `u` (lowest
    /// variable varies fastest).
    pub effects: Vec<Vec<f64>>,
    /// Support sizes and probabilities of each variable.
    pub support_sizes: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

impl VarianceComponents {
    pub fn component(&self, u: Subset) -> f64 {
        self.components[u]
    }

    /// `sum_{u contains j} sigma^2_u`.
    pub fn tau_total(&self, j: usize) -> f64 {
        let bit = 1 << j;
        self.components
            .iter()
            .enumerate()
            .filter(|(u, _)| u & bit != 0)
            .map(|(_, s)| s)
            .sum()
    }

    /// `sum_{v subset of u} sigma^2_v`.
    pub fn tau_lower(&self, u: Subset) -> f64 {
        self.components
            .iter()
            .enumerate()
            .filter(|(v, _)| v & !u == 0)
            .map(|(_, s)| s)
            .sum()
    }

    /// Value of `f_u` at the grid point with support indices `idx` (one per
    /// variable; entries outside `u` are ignored).
    pub fn effect_at(&self, u: Subset, idx: &[usize]) -> f64 {
        let mut pos = 0;
        let mut stride = 1;
        for (j, &k) in idx.iter().enumerate() {
            if u & (1 << j) != 0 {
                pos += k * stride;
                stride *= self.support_sizes[j];
            }
        }
        self.effects[u][pos]
    }

    /// Probability of the grid point `idx`.
    pub fn weight(&self, idx: &[usize]) -> f64 {
        idx.iter().enumerate().map(|(j, &k)| self.probs[j][k]).product()
    }
}

/// Enumerates the grid of `model` (every coordinate must have finite support)
/// and returns the exact ANOVA of the first output of `f`.
pub fn anova_enumerate<B: BlackBox + ?Sized>(
    f: &B,
    model: &InputModel,
) -> Result<VarianceComponents, OracleError> {
    let d = model.dims();
    if f.dims() != d {
        return Err(OracleError::Domain(format!(
            "function takes {} inputs but the model has {d}",
            f.dims()
        )));
    }
    if d > MAX_DIMS {
        return Err(OracleError::GridTooLarge(format!("d = {d} exceeds {MAX_DIMS}")));
    }
    let mut values = Vec::with_capacity(d);
    let mut probs = Vec::with_capacity(d);
    for j in 0..d {
        let (v, p) = model.coord(j).finite_support().ok_or_else(|| {
            OracleError::Domain(format!("coordinate {j} does not have finite support"))
        })?;
        values.push(v);
        probs.push(p);
    }
    let sizes: Vec<usize> = values.iter().map(Vec::len).collect();
    let grid = sizes
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s).filter(|&g| g <= MAX_GRID))
        .ok_or_else(|| OracleError::GridTooLarge(format!("grid exceeds {MAX_GRID} points")))?;
    sizes
        .iter()
        .try_fold(1usize, |acc, &s| {
            acc.checked_mul(s + 1).filter(|&t| t <= MAX_TABLE_ENTRIES)
        })
        .ok_or_else(|| {
            OracleError::GridTooLarge(format!("effect tables exceed {MAX_TABLE_ENTRIES} entries"))
        })?;

    // f on the full grid, variable 0 fastest.
    let mut fvals = Vec::with_capacity(grid);
    let mut idx = vec![0usize; d];
    let mut x: Vec<f64> = (0..d).map(|j| values[j][0]).collect();
    let mut out = vec![0.0; f.outputs()];
    for _ in 0..grid {
        f.eval_into(&x, &mut out);
        if !out[0].is_finite() {
            return Err(OracleError::Domain(format!(
                "function returned {} at {x:?}",
                out[0]
            )));
        }
        fvals.push(out[0]);
        for j in 0..d {
            idx[j] += 1;
            if idx[j] < sizes[j] {
                x[j] = values[j][idx[j]];
                break;
            }
            idx[j] = 0;
            x[j] = values[j][0];
        }
    }

    let full: Subset = (1 << d) - 1;
    let nsub = 1usize << d;
    // Conditional expectations E[f | x_u], computed from the superset that adds
    // the lowest missing variable. Supersets have larger masks.
    let mut cond: Vec<Vec<f64>> = vec![Vec::new(); nsub];
    cond[full] = fvals;
    for u in (0..full).rev() {
        let k = (!u).trailing_zeros() as usize;
        let parent = u | (1 << k);
        cond[u] = marginalize(&cond[parent], parent, k, &sizes, &probs[k]);
    }

    let mean = cond[0][0];
    let centered: Vec<f64> = cond[full].iter().map(|v| v - mean).collect();
    let total_variance = weighted_square_sum(&centered, full, &sizes, &probs);
    let mut effects = cond;
    let mut components = vec![0.0; nsub];
    effects[0] = vec![0.0];
    for u in 1..nsub {
        let table = &mut effects[u];
        for j in (0..d).filter(|j| u & (1 << j) != 0) {
            center_axis(table, u, j, &sizes, &probs[j]);
        }
        components[u] = weighted_square_sum(table, u, &sizes, &probs);
    }

    let delta: f64 = components
        .iter()
        .enumerate()
        .map(|(u, s)| u.count_ones() as f64 * s)
        .sum();
    let nu = (total_variance > 0.0).then(|| delta / total_variance);
    Ok(VarianceComponents {
        d,
        mean,
        total_variance,
        components,
        delta,
        nu,
        effects,
        support_sizes: sizes,
        probs,
    })
}

/// Stride of variable `j` in the table of subset `u`, and the product of the
/// sizes of the variables of `u` above `j`.
fn axis_layout(u: Subset, j: usize, sizes: &[usize]) -> (usize, usize) {
    let mut inner = 1;
    let mut outer = 1;
    for (t, &s) in sizes.iter().enumerate() {
        if u & (1 << t) == 0 || t == j {
            continue;
        }
        if t < j {
            inner *= s;
        } else {
            outer *= s;
        }
    }
    (inner, outer)
}

fn marginalize(parent: &[f64], pmask: Subset, k: usize, sizes: &[usize], pk: &[f64]) -> Vec<f64> {
    let (inner, outer) = axis_layout(pmask, k, sizes);
    let sk = sizes[k];
    let mut out = vec![0.0; inner * outer];
    for c in 0..outer {
        for a in 0..inner {
            let mut acc = 0.0;
            for (m, p) in pk.iter().enumerate() {
                acc += p * parent[a + inner * (m + sk * c)];
            }
            out[a + inner * c] = acc;
        }
    }
    out
}

/// Applies `I - E_j` along axis `j` of the table for subset `u`.
fn center_axis(table: &mut [f64], u: Subset, j: usize, sizes: &[usize], pj: &[f64]) {
    let (inner, outer) = axis_layout(u, j, sizes);
    let sj = sizes[j];
    for c in 0..outer {
        for a in 0..inner {
            let at = |m: usize| a + inner * (m + sj * c);
            let mean: f64 = pj.iter().enumerate().map(|(m, p)| p * table[at(m)]).sum();
            for m in 0..sj {
                table[at(m)] -= mean;
            }
        }
    }
}

fn weighted_square_sum(table: &[f64], u: Subset, sizes: &[usize], probs: &[Vec<f64>]) -> f64 {
    let vars: Vec<usize> = (0..sizes.len()).filter(|j| u & (1 << j) != 0).collect();
    let mut idx = vec![0usize; vars.len()];
    let mut total = crate::sum::KahanSum::new();
    for &v in table {
        let w: f64 = vars.iter().zip(&idx).map(|(&j, &k)| probs[j][k]).product();
        total.add(w * v * v);
        for (t, &j) in vars.iter().enumerate() {
            idx[t] += 1;
            if idx[t] < sizes[j] {
                break;
            }
            idx[t] = 0;
        }
    }
    total.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{CoordinateDistribution, FiniteSupport};
    use crate::estimators::FnBox;

    #[test]
    fn additive_pair() {
        let f = FnBox::new(2, |x: &[f64]| x[0] + x[1]);
        let vc = anova_enumerate(&f, &InputModel::bernoulli(2).unwrap()).unwrap();
        assert!((vc.component(0b01) - 0.25).abs() < 1e-15);
        assert!((vc.component(0b10) - 0.25).abs() < 1e-15);
        assert!(vc.component(0b11).abs() < 1e-15);
        assert!((vc.nu.unwrap() - 1.0).abs() < 1e-12);
        assert!((vc.mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_interaction() {
        let f = FnBox::new(2, |x: &[f64]| (2.0 * x[0] - 1.0) * (2.0 * x[1] - 1.0));
        let vc = anova_enumerate(&f, &InputModel::bernoulli(2).unwrap()).unwrap();
        assert!(vc.component(0b01).abs() < 1e-15);
        assert!(vc.component(0b10).abs() < 1e-15);
        assert!((vc.component(0b11) - 1.0).abs() < 1e-15);
        assert!((vc.nu.unwrap() - 2.0).abs() < 1e-12);
        assert!(vc.tau_lower(0b01).abs() < 1e-15);
    }

    #[test]
    fn product_of_bits_matches_closed_form() {
        let f = FnBox::new(3, |x: &[f64]| x[0] * x[1] * x[2]);
        let vc = anova_enumerate(&f, &InputModel::bernoulli(3).unwrap()).unwrap();
        assert!((vc.nu.unwrap() - 1.5 / 0.875).abs() < 1e-12);
    }

    #[test]
    fn x1x2_total_index() {
        let f = FnBox::new(2, |x: &[f64]| x[0] * x[1]);
        let vc = anova_enumerate(&f, &InputModel::bernoulli(2).unwrap()).unwrap();
        assert!((vc.tau_total(1) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn components_sum_to_variance_and_effects_are_orthogonal() {
        let model = InputModel::new(vec![
            CoordinateDistribution::FiniteSupport(
                FiniteSupport::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap(),
            ),
            CoordinateDistribution::Bernoulli01,
            CoordinateDistribution::FiniteSupport(
                FiniteSupport::new(vec![-1.0, 2.0], vec![0.7, 0.3]).unwrap(),
            ),
        ])
        .unwrap();
        let f = FnBox::new(3, |x: &[f64]| (x[0] * x[1]).exp() + x[2] * x[0] * x[0] - x[1]);
        let vc = anova_enumerate(&f, &model).unwrap();
        let sum: f64 = vc.components.iter().sum();
        assert!((sum - vc.total_variance).abs() < 1e-10);
        assert!(vc.components.iter().all(|&s| s >= -1e-15));
        // E[f_u f_v] = 0 for u != v, E[f_u^2] = sigma^2_u
        let sizes = vc.support_sizes.clone();
        for u in 1..8usize {
            for v in 1..8usize {
                let mut acc = 0.0;
                for a in 0..sizes[0] {
                    for b in 0..sizes[1] {
                        for c in 0..sizes[2] {
                            let idx = [a, b, c];
                            acc += vc.weight(&idx) * vc.effect_at(u, &idx) * vc.effect_at(v, &idx);
                        }
                    }
                }
                let want = if u == v { vc.component(u) } else { 0.0 };
                assert!((acc - want).abs() < 1e-10, "u={u} v={v}: {acc}");
            }
        }
        // effects reconstruct f
        for a in 0..3 {
            for b in 0..2 {
                for c in 0..2 {
                    let idx = [a, b, c];
                    let rebuilt: f64 =
                        vc.mean + (1..8).map(|u| vc.effect_at(u, &idx)).sum::<f64>();
                    let (xs, _) = (vec![[0.0, 1.0, 3.0][a], b as f64, [-1.0, 2.0][c]], ());
                    assert!((rebuilt - f.eval(&xs)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_continuous_and_oversized() {
        let f = FnBox::new(2, |x: &[f64]| x[0]);
        assert!(matches!(
            anova_enumerate(&f, &InputModel::uniform(2).unwrap()),
            Err(OracleError::Domain(_))
        ));
        let big = InputModel::iid(
            CoordinateDistribution::FiniteSupport(FiniteSupport::uniform_over((0..40).map(f64::from).collect()).unwrap()),
            4,
        )
        .unwrap();
        let g = FnBox::new(4, |x: &[f64]| x[0]);
        assert!(matches!(anova_enumerate(&g, &big), Err(OracleError::GridTooLarge(_))));
    }
}
