//! Experiment configuration: one JSON file plus command-line overrides.
//!
//! Relative paths inside the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use meandim::estimators::{BlackBox, SelectOutput};
use meandim::model::InputModelSpec;
use meandim::nn::eval::NetworkFunction;
use meandim::nn::{load_network, IndexKind, NetworkSpec, Target};
use meandim::testfns::{FunctionDescriptor, TestFunction};
use meandim::{InputModel, Strategy};
use serde::Deserialize;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: Option<FunctionDescriptor>,
    pub network: Option<NetworkConfig>,
    /// Input model for `function` or `network`.
    pub model: Option<InputModelSpec>,
    /// Named input models for `report` and `maps`.
    #[serde(default)]
    pub samplers: Vec<SamplerConfig>,
    pub strategies: Option<Vec<Strategy>>,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[serde(rename = "R")]
    pub r: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub variance_floor: Option<f64>,
    /// Winding stairs visiting order, a permutation of `0..d`.
    pub ordering: Option<Vec<usize>>,
    pub archive: Option<ArchiveConfig>,
    pub maps: Option<MapsConfig>,
    /// Targets tabulated by `report`.
    pub targets: Option<Vec<Target>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub path: PathBuf,
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default)]
    pub y: usize,
}

fn default_target() -> Target {
    Target::Logit
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub name: String,
    pub model: InputModelSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveConfig {
    /// IDX image file, or a CSV archive (`label,pixel...` per row).
    pub images: PathBuf,
    pub labels: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_classes")]
    pub classes: u8,
    pub dataset: String,
}

fn default_bins() -> usize {
    32
}

fn default_classes() -> u8 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsConfig {
    pub outputs: Vec<usize>,
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default = "default_kind")]
    pub kind: IndexKind,
    /// Name of an entry in `samplers`; the top-level `model` when absent.
    pub sampler: Option<String>,
}

fn default_kind() -> IndexKind {
    IndexKind::Total
}

/// Values given on the command line, which take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub strategies: Option<Vec<Strategy>>,
    pub n: Option<u64>,
    pub r: Option<u64>,
}

/// A configuration with overrides applied and paths made absolute.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub base: PathBuf,
    pub out_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: Option<&Path>, ov: Overrides) -> anyhow::Result<Self> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: ExperimentConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                (cfg, p.parent().unwrap_or(Path::new(".")).to_path_buf())
            }
            None => (ExperimentConfig::default(), PathBuf::from(".")),
        };
        cfg.seed = ov.seed.or(cfg.seed);
        cfg.n = ov.n.or(cfg.n);
        cfg.r = ov.r.or(cfg.r);
        cfg.strategies = ov.strategies.or(cfg.strategies);
        let out_dir = match (ov.out_dir, &cfg.out_dir) {
            (Some(o), _) => o,
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("."),
        };
        if cfg.n == Some(0) {
            bail!("N must be at least 1");
        }
        if cfg.r == Some(0) {
            bail!("R must be at least 1");
        }
        if let Some(f) = cfg.variance_floor {
            if !(f >= 0.0 && f.is_finite()) {
                bail!("variance_floor must be a nonnegative number, got {f}");
            }
        }
        Ok(Experiment { cfg, base, out_dir })
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.cfg
            .seed
            .ok_or_else(|| anyhow!("no seed: set `seed` in the config or pass --seed"))
    }

    pub fn n(&self) -> anyhow::Result<u64> {
        self.cfg
            .n
            .ok_or_else(|| anyhow!("no sample size: set `N` in the config or pass --N"))
    }

    pub fn r(&self) -> anyhow::Result<u64> {
        self.cfg
            .r
            .ok_or_else(|| anyhow!("no replicate count: set `R` in the config or pass --R"))
    }

    pub fn strategies(&self, default: &[Strategy]) -> Vec<Strategy> {
        self.cfg.strategies.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn variance_floor(&self) -> f64 {
        self.cfg.variance_floor.unwrap_or(DEFAULT_VARIANCE_FLOOR)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn model_from(&self, spec: &InputModelSpec) -> anyhow::Result<InputModel> {
        spec.resolve(&self.base).context("building input model")
    }

    pub fn network(&self) -> anyhow::Result<(NetworkSpec, &NetworkConfig)> {
        let nc = self
            .cfg
            .network
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs a `network` section"))?;
        let path = self.resolve(&nc.path);
        let net = load_network(&path).with_context(|| format!("loading network {}", path.display()))?;
        Ok((net, nc))
    }

    /// The function under study and its input model.
    pub fn subject(&self) -> anyhow::Result<Subject> {
        match (&self.cfg.function, &self.cfg.network) {
            (Some(desc), None) => {
                let model = match (&self.cfg.model, desc.default_model()) {
                    (Some(spec), _) => self.model_from(spec)?,
                    (None, Some(m)) => m,
                    (None, None) => bail!("function `{desc:?}` needs a `model`"),
                };
                let f = desc.build(&model).context("building test function")?;
                Ok(Subject::Test(f))
            }
            (None, Some(_)) => {
                let (net, nc) = self.network()?;
                let spec = self
                    .cfg
                    .model
                    .as_ref()
                    .ok_or_else(|| anyhow!("a network experiment needs a `model`"))?;
                let model = self.model_from(spec)?;
                if model.dims() != net.input_len() {
                    bail!(
                        "model has {} coordinates but the network takes {} inputs",
                        model.dims(),
                        net.input_len()
                    );
                }
                if nc.y >= net.output_len() {
                    bail!("output y = {} but the network has {} classes", nc.y, net.output_len());
                }
                Ok(Subject::Network {
                    net,
                    target: nc.target,
                    y: nc.y,
                    model,
                })
            }
            (Some(_), Some(_)) => bail!("give either `function` or `network`, not both"),
            (None, None) => bail!("this command needs a `function` or `network` section"),
        }
    }
}

pub enum Subject {
    Test(TestFunction),
    Network {
        net: NetworkSpec,
        target: Target,
        y: usize,
        model: InputModel,
    },
}

impl Subject {
    pub fn model(&self) -> &InputModel {
        match self {
            Subject::Test(f) => &f.model,
            Subject::Network { model, .. } => model,
        }
    }

    /// Runs `body` with the scalar function being studied.
    pub fn with<R>(&self, body: impl FnOnce(&dyn BlackBox) -> R) -> R {
        match self {
            Subject::Test(f) => body(f),
            Subject::Network { net, target, y, .. } => {
                let nf = NetworkFunction { net };
                let output = nf.output_index(*target, *y);
                body(&SelectOutput { inner: &nf, output })
            }
        }
    }
}
