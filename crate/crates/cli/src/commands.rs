//! The subcommands. Each one computes everything in memory and returns the
//! files to write, so a failure leaves no partial output behind.

use std::fmt;

use anyhow::anyhow;
use meandim::estimators::{estimate_delta, replicate_variance, EstimateOptions, ReplicateSummary};
use meandim::nn::{
    build_histograms, index_map, load_archive, mean_dimension_report, HistogramClass, HistogramError,
    IndexKind, MapRequest, Target,
};
use meandim::oracles::{covariance_sign_condition, var_additive, var_product, MomentProfile};
use meandim::testfns::{ExactValues, FunctionDescriptor, TestFunction};
use meandim::{InputModel, RngPlan, Strategy};
use serde::Serialize;

use crate::config::{Experiment, Subject};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum CmdError {
    Config(anyhow::Error),
    Eval(anyhow::Error),
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Config(e) => write!(f, "configuration error: {e:#}"),
            CmdError::Eval(e) => write!(f, "evaluation error: {e:#}"),
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, CmdError>;
    fn eval(self) -> Result<T, CmdError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Config(e.into()))
    }

    fn eval(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Eval(e.into()))
    }
}

/// Files produced by a command, in the order they are written.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CmdError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).eval()?;
        }
        self.add(name, w.into_inner().map_err(|e| anyhow!("{e}")).eval()?);
        Ok(())
    }

    fn json<V: Serialize + ?Sized>(&mut self, name: &str, value: &V) -> Result<(), CmdError> {
        let mut bytes = serde_json::to_vec_pretty(value).eval()?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }
}

fn options(x: &Experiment, d: usize) -> Result<EstimateOptions, CmdError> {
    if let Some(o) = &x.cfg.ordering {
        let mut seen = vec![false; d];
        if o.len() != d || o.iter().any(|&j| j >= d || std::mem::replace(&mut seen[j], true)) {
            return Err(CmdError::Config(anyhow!(
                "ordering {o:?} is not a permutation of 0..{d}"
            )));
        }
    }
    Ok(EstimateOptions {
        ordering: x.cfg.ordering.clone(),
    })
}

fn exact_of(subject: &Subject) -> Option<&ExactValues> {
    match subject {
        Subject::Test(f) => f.exact.as_ref(),
        Subject::Network { .. } => None,
    }
}

#[derive(Serialize)]
struct EstimateRow {
    strategy: Strategy,
    #[serde(rename = "N")]
    n: u64,
    d: usize,
    seed: u64,
    delta_hat: f64,
    delta_se: Option<f64>,
    sigma2_hat: f64,
    nu_hat: Option<f64>,
    nu_exact: Option<f64>,
    n_evals: u64,
    sigma2_source: String,
}

pub fn estimate(x: &Experiment) -> Result<Outputs, CmdError> {
    let seed = x.seed().config()?;
    let n = x.n().config()?;
    let subject = x.subject().config()?;
    let opts = options(x, subject.model().dims())?;
    let estimates = x
        .strategies(&Strategy::ALL)
        .into_iter()
        .map(|s| subject.with(|f| estimate_delta(f, subject.model(), s, n, RngPlan::new(seed), &opts)))
        .collect::<Result<Vec<_>, _>>()
        .eval()?;
    let nu_exact = exact_of(&subject).map(|e| e.nu);
    let rows: Vec<EstimateRow> = estimates
        .iter()
        .map(|e| EstimateRow {
            strategy: e.strategy,
            n: e.n,
            d: e.d,
            seed: e.seed,
            delta_hat: e.delta_hat,
            delta_se: e.delta_std_error(),
            sigma2_hat: e.sigma2_hat,
            nu_hat: e.nu_hat,
            nu_exact,
            n_evals: e.n_evals,
            sigma2_source: e.sigma2_source.clone(),
        })
        .collect();
    let mut out = Outputs::default();
    out.csv("estimates.csv", &rows)?;
    out.json("estimates.json", &estimates)?;
    Ok(out)
}

/// Closed-form `var(delta_hat)` when the function is additive or a product.
fn oracle_variance(f: &TestFunction, s: Strategy, n: u64, order: &[usize]) -> Option<f64> {
    let profiles = f.profiles.as_ref()?;
    match f.descriptor {
        FunctionDescriptor::Additive { .. } => var_additive(s, profiles, n).ok(),
        FunctionDescriptor::Product { .. } | FunctionDescriptor::SobolG { .. } => {
            var_product(s, profiles, n, order).ok()
        }
        _ => None,
    }
}

fn product_profiles(f: &TestFunction) -> Option<&[MomentProfile]> {
    match f.descriptor {
        FunctionDescriptor::Product { .. } | FunctionDescriptor::SobolG { .. } => f.profiles.as_deref(),
        _ => None,
    }
}

#[derive(Serialize)]
struct VarianceRow {
    strategy: Strategy,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "R")]
    r: u64,
    seed: u64,
    mean_delta: f64,
    n_var: f64,
    n_var_se: f64,
    n_var_pooled: Option<f64>,
    n_var_pooled_se: Option<f64>,
    n_var_oracle: Option<f64>,
    oracle_ratio: Option<f64>,
    /// `var(this) / var(naive)`
    ratio_to_naive: Option<f64>,
    /// `var(radial) / var(this)`
    radial_ratio: Option<f64>,
    mean_nu: Option<f64>,
    /// For product functions: every factor has kurtosis at least -5/16, so
    /// radial sampling cannot have smaller variance than naive sampling.
    radial_not_better: Option<bool>,
}

pub fn compare_variance(x: &Experiment) -> Result<Outputs, CmdError> {
    let seed = x.seed().config()?;
    let n = x.n().config()?;
    let r = x.r().config()?;
    if r < 2 {
        return Err(CmdError::Config(anyhow!("R must be at least 2 to estimate a variance")));
    }
    if r < 100 {
        eprintln!("warning: R = {r} replicates give a rough variance estimate; 100 or more is advised");
    }
    let subject = x.subject().config()?;
    let d = subject.model().dims();
    let opts = options(x, d)?;
    let order = x.cfg.ordering.clone().unwrap_or_else(|| (0..d).collect());
    let summaries: Vec<ReplicateSummary> = x
        .strategies(&Strategy::ALL)
        .into_iter()
        .map(|s| subject.with(|f| replicate_variance(f, subject.model(), s, n, r, seed, &opts)))
        .collect::<Result<_, _>>()
        .eval()?;
    let var_of = |s: Strategy| summaries.iter().find(|m| m.strategy == s).map(|m| m.variance);
    let sign = match &subject {
        Subject::Test(f) => product_profiles(f).map(|p| covariance_sign_condition(p).iter().all(|&b| b)),
        Subject::Network { .. } => None,
    };
    let rows: Vec<VarianceRow> = summaries
        .iter()
        .map(|m| {
            let oracle = match &subject {
                Subject::Test(f) => oracle_variance(f, m.strategy, n, &order).map(|v| v * n as f64),
                Subject::Network { .. } => None,
            };
            let pooled = m.pooled_block_variance();
            let n_var = m.scaled_variance();
            VarianceRow {
                strategy: m.strategy,
                n,
                r,
                seed,
                mean_delta: m.mean,
                n_var,
                n_var_se: n as f64 * m.variance_std_error(),
                n_var_pooled: pooled.map(|p| n as f64 * p.0),
                n_var_pooled_se: pooled.map(|p| n as f64 * p.1),
                n_var_oracle: oracle,
                oracle_ratio: oracle.map(|o| n_var / o),
                ratio_to_naive: var_of(Strategy::Naive).map(|v| m.variance / v),
                radial_ratio: var_of(Strategy::Radial).map(|v| v / m.variance),
                mean_nu: m.mean_nu(),
                radial_not_better: sign,
            }
        })
        .collect();
    let mut out = Outputs::default();
    out.csv("variance.csv", &rows)?;
    out.json("variance.json", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct HistogramRow {
    class: String,
    images: u64,
    pixels: usize,
    bins: usize,
    mean_intensity: f64,
    file: String,
}

pub fn histograms(x: &Experiment) -> Result<Outputs, CmdError> {
    let a = x
        .cfg
        .archive
        .as_ref()
        .ok_or_else(|| anyhow!("`histograms` needs an `archive` section"))
        .config()?;
    let labels = a.labels.as_ref().map(|p| x.resolve(p));
    let archive = load_archive(&x.resolve(&a.images), labels.as_deref()).config()?;
    let sets = build_histograms(&archive.images, &archive.labels, a.classes, a.bins, &a.dataset).config()?;
    let mut out = Outputs::default();
    let mut rows = Vec::new();
    for (class, set) in sets {
        match set {
            Ok(set) => {
                let file = format!("{class}.mdhs");
                rows.push(HistogramRow {
                    class: class.to_string(),
                    images: set.images,
                    pixels: set.len(),
                    bins: set.pixels.first().map_or(0, |h| h.bins()),
                    mean_intensity: set.pixel_means().iter().sum::<f64>() / set.len().max(1) as f64,
                    file: file.clone(),
                });
                out.add(file, set.encode());
            }
            Err(HistogramError::EmptyClass(c)) if c != HistogramClass::Combined => {
                eprintln!("warning: class {c} has no images; skipped");
            }
            Err(e) => return Err(CmdError::Config(e.into())),
        }
    }
    out.csv("histograms.csv", &rows)?;
    Ok(out)
}

/// Named samplers from `samplers`, or the top-level `model` called "model".
fn samplers(x: &Experiment) -> Result<Vec<(String, InputModel)>, CmdError> {
    if !x.cfg.samplers.is_empty() {
        return x
            .cfg
            .samplers
            .iter()
            .map(|s| Ok((s.name.clone(), x.model_from(&s.model).config()?)))
            .collect();
    }
    match &x.cfg.model {
        Some(spec) => Ok(vec![("model".to_string(), x.model_from(spec).config()?)]),
        None => Err(CmdError::Config(anyhow!("give `samplers` or a `model`"))),
    }
}

fn first_strategy(x: &Experiment, default: Strategy) -> Result<Strategy, CmdError> {
    match x.cfg.strategies.as_deref() {
        None => Ok(default),
        Some([s]) => Ok(*s),
        Some(other) => Err(CmdError::Config(anyhow!(
            "this command takes one strategy, got {}",
            other.len()
        ))),
    }
}

fn kind_name(k: IndexKind) -> &'static str {
    match k {
        IndexKind::Lower => "lower",
        IndexKind::Total => "total",
    }
}

#[derive(Serialize)]
struct MapRow {
    y: usize,
    target: Target,
    kind: &'static str,
    row: usize,
    col: usize,
    value: f64,
    std_error: Option<f64>,
}

pub fn maps(x: &Experiment) -> Result<Outputs, CmdError> {
    let seed = x.seed().config()?;
    let n = x.n().config()?;
    let (net, _) = x.network().config()?;
    let mc = x
        .cfg
        .maps
        .as_ref()
        .ok_or_else(|| anyhow!("`maps` needs a `maps` section"))
        .config()?;
    let strategy = first_strategy(x, Strategy::WindingTruncated)?;
    let all = samplers(x)?;
    let (name, model) = match &mc.sampler {
        Some(want) => all
            .iter()
            .find(|(n, _)| n == want)
            .ok_or_else(|| anyhow!("no sampler named `{want}`"))
            .config()?,
        None if all.len() == 1 => &all[0],
        None => bail_config("several samplers are defined; choose one with `maps.sampler`")?,
    };
    if model.dims() != net.input_len() {
        return bail_config(&format!(
            "sampler `{name}` has {} coordinates but the network takes {} inputs",
            model.dims(),
            net.input_len()
        ));
    }
    if let Some(&y) = mc.outputs.iter().find(|&&y| y >= net.output_len()) {
        return bail_config(&format!("output y = {y} but the network has {} classes", net.output_len()));
    }
    let mut out = Outputs::default();
    let mut rows = Vec::new();
    let mut maps = Vec::new();
    for &y in &mc.outputs {
        let map = index_map(
            &net,
            &MapRequest {
                y,
                target: mc.target,
                sampler: name,
                model,
                kind: mc.kind,
                strategy,
                n,
                seed,
            },
        )
        .eval()?;
        for (k, &value) in map.values.iter().enumerate() {
            rows.push(MapRow {
                y,
                target: mc.target,
                kind: kind_name(mc.kind),
                row: k / map.width,
                col: k % map.width,
                value,
                std_error: map.std_errors.as_ref().map(|s| s[k]),
            });
        }
        out.add(format!("map-{}-{}-y{y}.pgm", mc.target.name(), kind_name(mc.kind)), map.to_pgm());
        maps.push(map);
    }
    out.csv("maps.csv", &rows)?;
    out.json("maps.json", &maps)?;
    Ok(out)
}

fn bail_config<T>(msg: &str) -> Result<T, CmdError> {
    Err(CmdError::Config(anyhow!("{msg}")))
}

pub fn report(x: &Experiment) -> Result<Outputs, CmdError> {
    let seed = x.seed().config()?;
    let n = x.n().config()?;
    let (net, _) = x.network().config()?;
    let strategy = first_strategy(x, Strategy::WindingTruncated)?;
    let samplers = samplers(x)?;
    for (name, m) in &samplers {
        if m.dims() != net.input_len() {
            return bail_config(&format!(
                "sampler `{name}` has {} coordinates but the network takes {} inputs",
                m.dims(),
                net.input_len()
            ));
        }
    }
    let targets = x.cfg.targets.clone().unwrap_or(vec![Target::Logit, Target::Softmax]);
    let rows = mean_dimension_report(&net, &samplers, &targets, n, strategy, seed, x.variance_floor()).eval()?;
    let mut out = Outputs::default();
    out.csv("report.csv", &rows)?;
    out.json("report.json", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct OracleRow {
    quantity: &'static str,
    strategy: Option<Strategy>,
    variable: Option<usize>,
    value: f64,
}

#[derive(Serialize)]
struct OracleDump<'a> {
    function: &'a FunctionDescriptor,
    d: usize,
    #[serde(rename = "N")]
    n: u64,
    exact: Option<&'a ExactValues>,
    /// `N * var(delta_hat)` for each strategy with a closed form.
    n_var: Vec<(Strategy, f64)>,
    radial_not_better: Option<bool>,
}

pub fn oracles(x: &Experiment) -> Result<Outputs, CmdError> {
    let n = x.n().config()?;
    let f = match x.subject().config()? {
        Subject::Test(f) => f,
        Subject::Network { .. } => return bail_config("`oracles` applies to test functions only"),
    };
    let d = f.dims();
    options(x, d)?;
    let order = x.cfg.ordering.clone().unwrap_or_else(|| (0..d).collect());
    let n_var: Vec<(Strategy, f64)> = x
        .strategies(&Strategy::ALL)
        .into_iter()
        .filter_map(|s| oracle_variance(&f, s, n, &order).map(|v| (s, v * n as f64)))
        .collect();
    if f.exact.is_none() && n_var.is_empty() {
        eprintln!("warning: no closed-form values are known for this function");
    }
    let mut rows = Vec::new();
    if let Some(e) = &f.exact {
        for (quantity, value) in [("sigma2", e.sigma2), ("delta", e.delta), ("nu", e.nu)] {
            rows.push(OracleRow { quantity, strategy: None, variable: None, value });
        }
        for (j, &value) in e.tau_total.iter().enumerate() {
            rows.push(OracleRow { quantity: "tau_total", strategy: None, variable: Some(j), value });
        }
    }
    for &(s, value) in &n_var {
        rows.push(OracleRow { quantity: "n_var", strategy: Some(s), variable: None, value });
    }
    let dump = OracleDump {
        function: &f.descriptor,
        d,
        n,
        exact: f.exact.as_ref(),
        n_var,
        radial_not_better: product_profiles(&f).map(|p| covariance_sign_condition(p).iter().all(|&b| b)),
    };
    let mut out = Outputs::default();
    out.csv("oracles.csv", &rows)?;
    out.json("oracles.json", &dump)?;
    Ok(out)
}
