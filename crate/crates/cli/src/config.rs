//! Experiment configuration: a JSON file, dotted-path overrides, defaults.
//!
//! Every field is optional; omitted fields take the defaults below. Unknown
//! fields are rejected.

use std::collections::HashSet;
use std::path::PathBuf;

use asaukit::activation::{AsauParams, BaselineKind};
use asaukit::approx::Grid;
use asaukit::nn::{ActivationSpec, AsauMask, Granularity};
use asaukit::training::{Loss, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Classification,
    Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    TwoMoons {
        #[serde(default = "default_moons_n")]
        n: usize,
        #[serde(default = "default_noise")]
        noise_sd: f64,
    },
    Blobs {
        #[serde(default = "default_moons_n")]
        n: usize,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    Shapes {
        #[serde(default = "default_shapes_n")]
        n: usize,
        #[serde(default = "default_side")]
        height: usize,
        #[serde(default = "default_side")]
        width: usize,
    },
    /// IDX image and label files.
    Idx { images: PathBuf, labels: PathBuf },
}

fn default_moons_n() -> usize {
    1000
}
fn default_noise() -> f64 {
    0.1
}
fn default_k() -> usize {
    3
}
fn default_spread() -> f64 {
    1.0
}
fn default_shapes_n() -> usize {
    200
}
fn default_side() -> usize {
    32
}

impl DatasetConfig {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => DatasetConfig::TwoMoons {
                n: default_moons_n(),
                noise_sd: default_noise(),
            },
            TaskKind::Segmentation => DatasetConfig::Shapes {
                n: default_shapes_n(),
                height: default_side(),
                width: default_side(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width of the classification MLP.
    pub hidden: usize,
    /// Base channel count of the segmentation encoder-decoder.
    pub channels: usize,
    pub seg_loss: Loss,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            channels: 8,
            seg_loss: Loss::BceDice,
        }
    }
}

/// One roster row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RosterEntry {
    Relu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    LeakyRelu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_leak")]
        slope: f64,
    },
    Prelu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_prelu")]
        init: f64,
    },
    Mish {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Asau {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        params: AsauParams,
        /// Which of `a`, `b`, `alpha`, `beta` are trained.
        #[serde(default = "default_trainable")]
        train: Vec<String>,
        #[serde(default)]
        granularity: Granularity,
    },
}

fn default_leak() -> f64 {
    0.01
}
fn default_prelu() -> f64 {
    0.25
}
fn default_trainable() -> Vec<String> {
    vec!["alpha".into(), "beta".into()]
}

impl RosterEntry {
    pub fn to_spec(&self) -> Result<(String, ActivationSpec), CliError> {
        let (name, spec) = match self {
            RosterEntry::Relu { name } => (name, ActivationSpec::relu()),
            RosterEntry::LeakyRelu { name, slope } => (
                name,
                ActivationSpec::Baseline {
                    kind: BaselineKind::LeakyRelu { slope: *slope },
                    trainable_slope: false,
                },
            ),
            RosterEntry::Prelu { name, init } => (name, ActivationSpec::prelu(*init)),
            RosterEntry::Mish { name } => (name, ActivationSpec::mish()),
            RosterEntry::Asau {
                name,
                params,
                train,
                granularity,
            } => {
                let mut mask = AsauMask::NONE;
                for t in train {
                    match t.as_str() {
                        "a" => mask.a = true,
                        "b" => mask.b = true,
                        "alpha" => mask.alpha = true,
                        "beta" => mask.beta = true,
                        other => return Err(CliError::Usage(format!("unknown ASAU parameter {other:?}"))),
                    }
                }
                (
                    name,
                    ActivationSpec::Asau {
                        params: *params,
                        trainable: mask,
                        granularity: *granularity,
                    },
                )
            }
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let label = name.clone().unwrap_or_else(|| spec.label().to_string());
        Ok((label, spec))
    }
}

/// One family of curves sharing `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub name: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub grid: Grid,
    pub families: Vec<Family>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        let fam = |name: &str, a, b| Family {
            name: name.into(),
            a,
            b,
        };
        Self {
            grid: Grid::default(),
            families: vec![fam("max", 1.0, 2.0), fam("leaky", 0.01, 1.0), fam("relu", 0.0, 1.0)],
            alphas: vec![0.5, 1.0, 2.0],
            betas: vec![1.0, 5.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Grid,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub betas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            a: 0.0,
            b: 1.0,
            alpha: 1.0,
            betas: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub samples: usize,
    /// Network check tolerance on the relative error.
    pub network_tol: f64,
    pub network_step: f64,
    /// Fault injection: flips the sign of the alpha partial before checking.
    pub negate_d_alpha: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            network_tol: 1e-4,
            network_step: 1e-5,
            negate_d_alpha: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub task: TaskKind,
    pub roster: Vec<RosterEntry>,
    /// Defaults to two moons for classification, shapes for segmentation.
    pub dataset: Option<DatasetConfig>,
    pub model: ModelConfig,
    /// Z-score classification features with training-split statistics.
    pub standardize: bool,
    /// The training seed is always derived from the run seed.
    pub train: Option<TrainConfig>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Classification,
            roster: vec![
                RosterEntry::Relu { name: None },
                RosterEntry::Asau {
                    name: None,
                    params: AsauParams::default(),
                    train: default_trainable(),
                    granularity: Granularity::PerLayer,
                },
            ],
            dataset: None,
            model: ModelConfig::default(),
            standardize: true,
            train: None,
        }
    }
}

impl CompareConfig {
    pub fn train_for_task(&self) -> TrainConfig {
        self.train.unwrap_or(match self.task {
            // Two-moons runs can sit on a loss plateau for well over 50
            // epochs before escaping, so the whole budget is used and the
            // best validation epoch is restored afterwards.
            TaskKind::Classification => TrainConfig {
                patience: 200,
                ..TrainConfig::default()
            },
            TaskKind::Segmentation => TrainConfig {
                max_epochs: 60,
                batch_size: 16,
                lr: 1e-2,
                ..TrainConfig::default()
            },
        })
    }

    pub fn dataset_for_task(&self) -> DatasetConfig {
        self.dataset
            .clone()
            .unwrap_or_else(|| DatasetConfig::default_for(self.task))
    }

    /// Labels and specs, checking the roster is usable for a comparison.
    pub fn roster_specs(&self) -> Result<Vec<(String, ActivationSpec)>, CliError> {
        if self.roster.len() < 2 {
            return Err(CliError::Usage(format!(
                "a comparison needs at least two activations, got {}",
                self.roster.len()
            )));
        }
        let specs = self
            .roster
            .iter()
            .map(RosterEntry::to_spec)
            .collect::<Result<Vec<_>, _>>()?;
        let mut seen = HashSet::new();
        for (label, _) in &specs {
            if !seen.insert(label.as_str()) {
                return Err(CliError::Usage(format!(
                    "roster label {label:?} appears twice; give one entry a `name`"
                )));
            }
            if label.is_empty() || label.contains([',', '/', '\\', '\n']) || label.starts_with('.') {
                return Err(CliError::Usage(format!(
                    "roster label {label:?} is not usable as a file name"
                )));
            }
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub curves: CurvesConfig,
    pub sweep: SweepConfig,
    pub gradcheck: GradcheckConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("asaukit-out"),
            curves: CurvesConfig::default(),
            sweep: SweepConfig::default(),
            gradcheck: GradcheckConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Parses `key=value`, reading the value as JSON and falling back to a plain
/// string.
pub fn parse_override(raw: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {raw:?} is not key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key {key:?}")));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((path, value))
}

/// Sets `path` inside `root`, creating intermediate objects. Array elements
/// are addressed by decimal index.
pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut cur = root;
    for (depth, key) in path.iter().enumerate() {
        let last = depth + 1 == path.len();
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(key.clone(), value);
                    return Ok(());
                }
                map.entry(key.clone()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{key:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(i)
                    .ok_or_else(|| CliError::Usage(format!("index {i} is out of range for an array of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "cannot descend into {:?}: not an object",
                    path[..depth].join(".")
                )))
            }
        };
    }
    Err(CliError::Usage("empty override key".into()))
}

/// Builds the effective configuration from the file text (if any), the
/// overrides, then the seed and output flags.
pub fn resolve(
    file_text: Option<&str>,
    overrides: &[String],
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<ExperimentConfig, CliError> {
    let mut root: Value = match file_text {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid JSON: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    if !root.is_object() {
        return Err(CliError::Usage("config must be a JSON object".into()));
    }
    for raw in overrides {
        let (path, value) = parse_override(raw)?;
        apply_override(&mut root, &path, value)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut root, &["seed".into()], Value::from(seed))?;
    }
    if let Some(out) = out_dir {
        let s = out
            .to_str()
            .ok_or_else(|| CliError::Usage("output directory must be valid UTF-8".into()))?;
        apply_override(&mut root, &["out_dir".into()], Value::from(s))?;
    }
    serde_json::from_value(root).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = resolve(None, &[], None, None).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let echoed = serde_json::to_string(&cfg).unwrap();
        assert_eq!(resolve(Some(&echoed), &[], None, None).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = resolve(
            Some(r#"{"curves": {"betas": [1, 2]}}"#),
            &[
                "curves.betas=[10000]".into(),
                "compare.task=segmentation".into(),
                "curves.grid.step=0.01".into(),
            ],
            Some(7),
            Some("x".into()),
        )
        .unwrap();
        assert_eq!(cfg.curves.betas, vec![10000.0]);
        assert_eq!(cfg.compare.task, TaskKind::Segmentation);
        assert_eq!(cfg.curves.grid.step, 0.01);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn array_elements_can_be_overridden() {
        let mut root: Value = serde_json::json!({"compare": {"roster": [{"kind": "relu"}, {"kind": "mish"}]}});
        let (p, v) = parse_override(r#"compare.roster.1={"kind":"asau"}"#).unwrap();
        apply_override(&mut root, &p, v).unwrap();
        assert_eq!(root["compare"]["roster"][1]["kind"], "asau");
        let (p, v) = parse_override("compare.roster.5.kind=relu").unwrap();
        assert!(apply_override(&mut root, &p, v).is_err());
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for bad in [
            resolve(Some("[1]"), &[], None, None),
            resolve(Some("{"), &[], None, None),
            resolve(Some(r#"{"bogus": 1}"#), &[], None, None),
            resolve(None, &["seed".into()], None, None),
            resolve(None, &["seed=1".into(), "seed.x=1".into()], None, None),
            resolve(None, &["gradcheck.samples=-1".into()], None, None),
        ] {
            assert!(matches!(bad, Err(CliError::Usage(_))), "{bad:?}");
        }
    }

    #[test]
    fn roster_rules() {
        let mut c = CompareConfig::default();
        assert_eq!(
            c.roster_specs()
                .unwrap()
                .iter()
                .map(|r| r.0.as_str())
                .collect::<Vec<_>>(),
            ["ReLU", "ASAU"]
        );
        c.roster.push(RosterEntry::Relu { name: None });
        assert!(c.roster_specs().is_err());
        c.roster.pop();
        c.roster.truncate(1);
        assert!(c.roster_specs().is_err());
        c.roster.clear();
        assert!(c.roster_specs().is_err());
    }
}
