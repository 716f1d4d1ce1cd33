//! Run configuration as read from TOML.
//!
//! ```toml
//! task = "fashion-mnist"
//! epochs = 5
//! batch_size = 128
//! seeds = [0, 1, 2]
//! milestones = []          # omit for the 50% / 75% default
//! preset = "fmnist-cnn"    # optional tuned values, overridden by [optimizer]
//!
//! [model]
//! type = "mlp"
//! hidden = [256]
//!
//! [optimizer]
//! name = "arturo"
//! epsilon = 0.085675
//! ```

use std::path::{Path, PathBuf};

use arturo::{ArturoConfig, BaselineConfig, BaselineKind, Mode};
use arturo_zoo::{Arch, Loss};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};
use crate::presets::PresetSet;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "ARTURO_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FashionMnist,
    Cifar10,
    Cifar100,
    /// Noisy diagonal quadratic; `batch_size` is the number of averaged draws.
    Quadratic,
}

impl Task {
    pub fn id(&self) -> &'static str {
        match self {
            Task::FashionMnist => "fashion-mnist",
            Task::Cifar10 => "cifar10",
            Task::Cifar100 => "cifar100",
            Task::Quadratic => "quadratic",
        }
    }

    /// `(channels, height, width, classes)` of the image tasks.
    pub fn image_shape(&self) -> Option<(usize, usize, usize, usize)> {
        match self {
            Task::FashionMnist => Some((1, 28, 28, 10)),
            Task::Cifar10 => Some((3, 32, 32, 10)),
            Task::Cifar100 => Some((3, 32, 32, 100)),
            Task::Quadratic => None,
        }
    }

    /// Directory below the data root holding this task's files.
    pub fn data_subdir(&self) -> &'static str {
        match self {
            Task::FashionMnist => "fashion-mnist",
            Task::Cifar10 => "cifar-10-batches-bin",
            Task::Cifar100 => "cifar-100-binary",
            Task::Quadratic => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp { hidden: Vec<usize> },
    SmallCnn,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mlp { hidden: vec![256] }
    }
}

impl ModelSpec {
    pub fn arch(&self, task: Task) -> Option<Arch> {
        let (c, h, w, k) = task.image_shape()?;
        Some(match self {
            ModelSpec::Mlp { hidden } => {
                let mut sizes = vec![c * h * w];
                sizes.extend(hidden);
                sizes.push(k);
                Arch::Mlp { sizes }
            }
            ModelSpec::SmallCnn => Arch::small_cnn(c, h, w, k),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub noise: f64,
    pub steps_per_epoch: usize,
    /// Instance seed; by default each run seed draws its own instance.
    pub instance_seed: Option<u64>,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self { dim: 10, d_min: 0.1, d_max: 10.0, noise: 1.0, steps_per_epoch: 100, instance_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub task: Task,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub loss: Loss,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    /// Epochs after which the step bound or learning rate decays. `None`
    /// selects `⌊E/2⌋` and `⌊3E/4⌋`; an empty list disables the schedule.
    #[serde(default)]
    pub milestones: Option<Vec<usize>>,
    /// Evaluate on the test split every this many epochs (and after the last).
    #[serde(default = "one")]
    pub eval_every: usize,
    /// Column of the tuned preset tables to start the optimizer block from.
    #[serde(default)]
    pub preset: Option<String>,
    /// Use only the first `n` training samples.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub quadratic: QuadraticSpec,
    pub optimizer: toml::Table,
}

fn one() -> usize {
    1
}

/// Optimizer block after preset merging, milestone resolution and validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum OptimizerSpec {
    Arturo(ArturoConfig),
    Baseline(BaselineConfig),
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Arturo(_) => "arturo",
            OptimizerSpec::Baseline(c) => c.kind.name(),
        }
    }

    /// Ablation label; baselines have none of their own.
    pub fn variant(&self) -> &'static str {
        match self {
            OptimizerSpec::Arturo(c) => c.mode.label(),
            OptimizerSpec::Baseline(_) => "baseline",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SgdBlock {
    learning_rate: f64,
    momentum: f64,
    #[serde(default)]
    weight_decay: f64,
    #[serde(default = "lr_decay")]
    lr_decay_factor: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamBlock {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    #[serde(default)]
    weight_decay: f64,
    #[serde(default = "adam_eps")]
    adam_eps: f64,
    #[serde(default = "lr_decay")]
    lr_decay_factor: f64,
}

fn lr_decay() -> f64 {
    0.1
}

fn adam_eps() -> f64 {
    1e-8
}

/// Ablation override selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Standard,
    FixedEta,
    AdamSurrogate,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "standard" => Ok(Variant::Standard),
            "fixed-eta" => Ok(Variant::FixedEta),
            "adam-surrogate" => Ok(Variant::AdamSurrogate),
            _ => Err(format!("unknown variant `{s}` (standard, fixed-eta, adam-surrogate)")),
        }
    }
}

/// Moment decay rates used when the adam-surrogate variant is forced on a
/// config that does not set them.
pub const ADAM_SURROGATE_DEFAULT: Mode = Mode::AdamMomentSurrogate { beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 };

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|source| BenchError::Toml { path: path.into(), source })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|source| BenchError::Toml { path: "<inline>".into(), source })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad(format!("duplicate seeds in {:?}", self.seeds));
        }
        if self.task == Task::Quadratic {
            let q = &self.quadratic;
            if q.dim == 0 || q.steps_per_epoch == 0 {
                return bad("quadratic dim and steps_per_epoch must be >= 1".into());
            }
        }
        Ok(())
    }

    /// Schedule epochs, with the default applied.
    pub fn resolved_milestones(&self) -> Vec<usize> {
        match &self.milestones {
            Some(m) => m.clone(),
            None => {
                let mut m: Vec<usize> = [self.epochs / 2, 3 * self.epochs / 4].into_iter().filter(|&e| e > 0).collect();
                m.dedup();
                m
            }
        }
    }

    /// Dataset root: the config value, then `$ARTURO_DATA_DIR`, then `data/`
    /// at the workspace root.
    pub fn resolved_data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        if let Some(d) = std::env::var_os(DATA_DIR_ENV) {
            return PathBuf::from(d);
        }
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
    }

    /// Builds the optimizer block: preset values first, then the explicit
    /// keys, then run-level milestones and the optional variant override.
    pub fn optimizer_spec(
        &self,
        presets: &PresetSet,
        variant: Option<Variant>,
        fixed_eta: Option<f64>,
    ) -> Result<OptimizerSpec> {
        let mut block = self.optimizer.clone();
        let name = match block.remove("name") {
            Some(toml::Value::String(s)) => s,
            _ => return Err(BenchError::Config("optimizer.name must be a string".into())),
        };
        if block.contains_key("schedule_milestones") {
            return Err(BenchError::Config("set milestones at the top level, not in [optimizer]".into()));
        }
        let mut merged = match &self.preset {
            Some(column) => presets
                .get(&name, column)
                .cloned()
                .ok_or_else(|| BenchError::Config(format!("no `{column}` preset for optimizer `{name}`")))?,
            None => toml::Table::new(),
        };
        merged.extend(block);
        let value = toml::Value::Table(merged);
        let parse_err = |e: toml::de::Error| BenchError::Config(format!("[optimizer] {name}: {e}"));
        let milestones = self.resolved_milestones();

        let spec = match name.as_str() {
            "arturo" => {
                let mut cfg: ArturoConfig = value.try_into().map_err(parse_err)?;
                cfg.schedule_milestones = milestones;
                match variant {
                    None => {}
                    Some(Variant::Standard) => cfg.mode = Mode::Standard,
                    Some(Variant::FixedEta) => {
                        let eta = match (fixed_eta, cfg.mode) {
                            (Some(eta), _) => eta,
                            (None, Mode::FixedEta { eta }) => eta,
                            (None, _) => {
                                return Err(BenchError::Config(
                                    "the fixed-eta variant needs a multiplier (--eta or mode.eta)".into(),
                                ))
                            }
                        };
                        cfg.mode = Mode::FixedEta { eta };
                    }
                    Some(Variant::AdamSurrogate) if !matches!(cfg.mode, Mode::AdamMomentSurrogate { .. }) => {
                        cfg.mode = ADAM_SURROGATE_DEFAULT;
                    }
                    Some(Variant::AdamSurrogate) => {}
                }
                cfg.validate()?;
                OptimizerSpec::Arturo(cfg)
            }
            "sgd" => {
                let b: SgdBlock = value.try_into().map_err(parse_err)?;
                baseline(
                    BaselineKind::SgdMomentum { momentum: b.momentum },
                    b.learning_rate,
                    b.weight_decay,
                    adam_eps(),
                    b.lr_decay_factor,
                    milestones,
                    variant,
                )?
            }
            "adam" | "adamw" => {
                let b: AdamBlock = value.try_into().map_err(parse_err)?;
                let kind = if name == "adam" {
                    BaselineKind::Adam { beta1: b.beta1, beta2: b.beta2 }
                } else {
                    BaselineKind::AdamW { beta1: b.beta1, beta2: b.beta2 }
                };
                baseline(kind, b.learning_rate, b.weight_decay, b.adam_eps, b.lr_decay_factor, milestones, variant)?
            }
            other => return Err(BenchError::Config(format!("unknown optimizer `{other}` (arturo, sgd, adam, adamw)"))),
        };
        Ok(spec)
    }
}

fn baseline(
    kind: BaselineKind,
    learning_rate: f64,
    weight_decay: f64,
    adam_eps: f64,
    lr_decay_factor: f64,
    schedule_milestones: Vec<usize>,
    variant: Option<Variant>,
) -> Result<OptimizerSpec> {
    if variant.is_some_and(|v| v != Variant::Standard) {
        return Err(BenchError::Config(format!("variants apply to arturo only, not {}", kind.name())));
    }
    let cfg = BaselineConfig { kind, learning_rate, adam_eps, weight_decay, schedule_milestones, lr_decay_factor };
    cfg.validate()?;
    Ok(OptimizerSpec::Baseline(cfg))
}
