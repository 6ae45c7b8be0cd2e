//! Moments of one factor `g_j(x_j)` of an additive or product function.

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::distribution::CoordinateDistribution;

/// How a [`MomentProfile`] was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "detail")]
pub enum MomentSource {
    Analytic(String),
    Quadrature,
    Exact,
    Sample(u64),
}

/// Mean, variance, shape and raw moments of a scalar random variable `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub mu: f64,
    pub sigma2: f64,
    /// Skewness; zero when `sigma2 == 0`.
    pub gamma: f64,
    /// Excess kurtosis; zero when `sigma2 == 0`.
    pub kappa: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    /// `E[Y^2 (Y - Y')^2]` for an independent copy `Y'`.
    pub eta: f64,
    pub source: MomentSource,
}

impl MomentProfile {
    /// From the mean and central moments of orders 2, 3 and 4.
    pub fn from_central(
        mu: f64,
        sigma2: f64,
        m3: f64,
        m4: f64,
        source: MomentSource,
    ) -> Result<Self, OracleError> {
        if !(mu.is_finite() && sigma2.is_finite() && m3.is_finite() && m4.is_finite()) {
            return Err(OracleError::Domain("moments must be finite".into()));
        }
        if sigma2 < 0.0 || m4 < 0.0 {
            return Err(OracleError::Domain(format!(
                "negative even moment (sigma2 = {sigma2}, m4 = {m4})"
            )));
        }
        let (gamma, kappa) = if sigma2 > 0.0 {
            (m3 / sigma2.powf(1.5), m4 / (sigma2 * sigma2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        // Pearson's inequality: kurtosis - skewness^2 >= -2
        if kappa < -2.0 - 1e-9 {
            return Err(OracleError::Domain(format!("kurtosis {kappa} below -2")));
        }
        let mu2 = sigma2 + mu * mu;
        let mu3 = m3 + 3.0 * mu * sigma2 + mu.powi(3);
        let mu4 = m4 + 4.0 * mu * m3 + 6.0 * mu * mu * sigma2 + mu.powi(4);
        // mu4 - 2 mu mu3 + mu2^2 expanded in central moments, which avoids
        // cancellation when |mu| >> sigma.
        let eta = m4 + 2.0 * mu * m3 + 2.0 * mu * mu * sigma2 + sigma2 * sigma2;
        Ok(MomentProfile {
            mu,
            sigma2,
            gamma,
            kappa,
            mu2,
            mu3,
            mu4,
            eta,
            source,
        })
    }

    /// From raw moments `E Y`, `E Y^2`, `E Y^3`, `E Y^4`.
    pub fn from_raw(
        mu: f64,
        mu2: f64,
        mu3: f64,
        mu4: f64,
        source: MomentSource,
    ) -> Result<Self, OracleError> {
        let sigma2 = (mu2 - mu * mu).max(0.0);
        let m3 = mu3 - 3.0 * mu * mu2 + 2.0 * mu.powi(3);
        let m4 = (mu4 - 4.0 * mu * mu3 + 6.0 * mu * mu * mu2 - 3.0 * mu.powi(4)).max(0.0);
        MomentProfile::from_central(mu, sigma2, m3, m4, source)
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        let s2 = sd * sd;
        MomentProfile::from_central(mean, s2, 0.0, 3.0 * s2 * s2, analytic("gaussian"))
            .expect("finite parameters")
    }

    pub fn standard_gaussian() -> Self {
        MomentProfile::gaussian(0.0, 1.0)
    }

    /// Uniform on `[a, b]`.
    pub fn uniform(a: f64, b: f64) -> Self {
        let w = b - a;
        MomentProfile::from_central(
            0.5 * (a + b),
            w * w / 12.0,
            0.0,
            w.powi(4) / 80.0,
            analytic("uniform"),
        )
        .expect("finite parameters")
    }

    /// Bernoulli on `{0, 1}` with success probability `p`.
    pub fn bernoulli(p: f64) -> Self {
        let q = 1.0 - p;
        MomentProfile::from_central(
            p,
            p * q,
            p * q * (q - p),
            p * q * (1.0 - 3.0 * p * q),
            analytic("bernoulli"),
        )
        .expect("finite parameters")
    }

    pub fn constant(c: f64) -> Self {
        MomentProfile::from_central(c, 0.0, 0.0, 0.0, analytic("constant")).expect("finite")
    }

    /// Moments of `a + b * Y`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let (m3, m4) = self.central34();
        MomentProfile::from_central(
            a + b * self.mu,
            b * b * self.sigma2,
            b.powi(3) * m3,
            b.powi(4) * m4,
            self.source.clone(),
        )
        .expect("affine image of valid moments")
    }

    /// Exact moments of a discrete distribution.
    pub fn from_finite(values: &[f64], probs: &[f64]) -> Result<Self, OracleError> {
        let mu: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
        let mut c = [0.0; 3];
        for (v, p) in values.iter().zip(probs) {
            let e = v - mu;
            c[0] += p * e * e;
            c[1] += p * e.powi(3);
            c[2] += p * e.powi(4);
        }
        MomentProfile::from_central(mu, c[0], c[1], c[2], MomentSource::Exact)
    }

    /// Plug-in moments of a sample.
    pub fn from_samples(xs: &[f64]) -> Result<Self, OracleError> {
        if xs.is_empty() {
            return Err(OracleError::Domain("empty sample".into()));
        }
        let n = xs.len() as f64;
        let mu = xs.iter().sum::<f64>() / n;
        let mut c = [0.0; 3];
        for x in xs {
            let e = x - mu;
            c[0] += e * e;
            c[1] += e.powi(3);
            c[2] += e.powi(4);
        }
        MomentProfile::from_central(
            mu,
            c[0] / n,
            c[1] / n,
            c[2] / n,
            MomentSource::Sample(xs.len() as u64),
        )
    }

    /// Moments of `g(X)` for `X` drawn from `dist`, by exact summation for
    /// discrete distributions and Gauss-Legendre quadrature otherwise.
    pub fn from_quadrature<G: Fn(f64) -> f64>(
        g: G,
        dist: &CoordinateDistribution,
    ) -> Result<Self, OracleError> {
        let (nodes, weights) = quadrature_rule(dist);
        let mu: f64 = nodes.iter().zip(&weights).map(|(&x, w)| w * g(x)).sum();
        let mut c = [0.0; 3];
        for (&x, w) in nodes.iter().zip(&weights) {
            let e = g(x) - mu;
            c[0] += w * e * e;
            c[1] += w * e.powi(3);
            c[2] += w * e.powi(4);
        }
        let source = if dist.finite_support().is_some() {
            MomentSource::Exact
        } else {
            MomentSource::Quadrature
        };
        MomentProfile::from_central(mu, c[0], c[1], c[2], source)
    }

    /// Third and fourth central moments.
    pub fn central34(&self) -> (f64, f64) {
        if self.sigma2 > 0.0 {
            (
                self.gamma * self.sigma2.powf(1.5),
                (self.kappa + 3.0) * self.sigma2 * self.sigma2,
            )
        } else {
            (0.0, 0.0)
        }
    }

    /// `E (Y1 - Y2)^4 = (12 + 2 kappa) sigma^4`.
    pub fn fourth_of_difference(&self) -> f64 {
        let (_, m4) = self.central34();
        2.0 * m4 + 6.0 * self.sigma2 * self.sigma2
    }

    /// Checks the internal consistency of the stored moments.
    pub fn consistency_error(&self) -> f64 {
        let mut worst: f64 = (self.mu2 - (self.sigma2 + self.mu * self.mu)).abs();
        let eta_raw = self.mu4 - 2.0 * self.mu * self.mu3 + self.mu2 * self.mu2;
        worst = worst.max((self.eta - eta_raw).abs() / self.eta.abs().max(1.0));
        if self.sigma2 > 0.0 {
            let s4 = self.sigma2 * self.sigma2;
            let m4 = self.mu4 - 4.0 * self.mu * self.mu3 + 6.0 * self.mu * self.mu * self.mu2
                - 3.0 * self.mu.powi(4);
            worst = worst.max((m4 / s4 - 3.0 - self.kappa).abs());
            let eta_shape = (self.kappa + 4.0) * s4
                + 2.0 * self.mu * self.sigma2.powf(1.5) * self.gamma
                + 2.0 * self.mu * self.mu * self.sigma2;
            worst = worst.max((self.eta - eta_shape).abs() / self.eta.abs().max(1.0));
        }
        worst
    }
}

fn analytic(name: &str) -> MomentSource {
    MomentSource::Analytic(name.to_string())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule for `[a, b]` with `panels` panels.
fn composite(a: f64, b: f64, panels: usize, density: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(16);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 16);
    let mut weights = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            let t = lo + 0.5 * h * (x + 1.0);
            nodes.push(t);
            weights.push(0.5 * h * w * density(t));
        }
    }
    (nodes, weights)
}

fn quadrature_rule(dist: &CoordinateDistribution) -> (Vec<f64>, Vec<f64>) {
    if let Some(support) = dist.finite_support() {
        return support;
    }
    match dist {
        CoordinateDistribution::Uniform01 => composite(0.0, 1.0, 256, |_| 1.0),
        CoordinateDistribution::StdGaussian => {
            let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            composite(-12.0, 12.0, 512, |x| c * (-0.5 * x * x).exp())
        }
        CoordinateDistribution::Histogram(h) => {
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (b, &p) in h.probs().iter().enumerate() {
                let (lo, hi) = (h.edges()[b], h.edges()[b + 1]);
                let dens = p / (hi - lo);
                let (n, w) = composite(lo, hi, 4, |_| dens);
                nodes.extend(n);
                weights.extend(w);
            }
            (nodes, weights)
        }
        CoordinateDistribution::Bernoulli01 | CoordinateDistribution::FiniteSupport(_) => {
            unreachable!("finite support handled above")
        }
    }
}
