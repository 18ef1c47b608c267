//! Experiment configuration.
//!
//! On disk a configuration is one flat JSON object whose keys name settings
//! by dotted path, e.g. `"drift.lr": 3e-4` or
//! `"orchestration.network.links": 2`. Keys not present in the defaults are
//! rejected. The resolved configuration is written back in the same form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::adaptation::{DriftConfig, DriftMode, GanConfig};
use crate::codec::TrainConfig;
use crate::error::{Error, Result};
use crate::lightweight::{ClassifierTrainConfig, SessionConfig};
use crate::orchestration::{HierarchyConfig, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainCodec,
    Drift,
    Sampling,
    Orchestrate,
    Compress,
    Report,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::TrainCodec => "train-codec",
            ExperimentKind::Drift => "drift",
            ExperimentKind::Sampling => "sampling",
            ExperimentKind::Orchestrate => "orchestrate",
            ExperimentKind::Compress => "compress",
            ExperimentKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSettings {
    /// Images used from each split; 0 means the whole file.
    pub train_images: usize,
    pub test_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSettings {
    pub rho: f64,
    pub train_snr_db: f64,
    pub train: TrainConfig,
    /// Held-out images for validation PSNR.
    pub val_images: usize,
}

impl Default for CodecSettings {
    fn default() -> Self {
        Self {
            rho: 0.25,
            train_snr_db: 21.0,
            train: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            val_images: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSettings {
    pub modes: Vec<DriftMode>,
    /// `(epoch, snr_db)` steps of the SNR schedule.
    pub schedule: Vec<(usize, f64)>,
    pub run: DriftConfig,
    /// Images whose symbols feed the channel GAN.
    pub gan_observation_images: usize,
    pub gan: GanConfig,
}

impl Default for DriftSettings {
    fn default() -> Self {
        Self {
            modes: vec![DriftMode::None, DriftMode::FinetuneReal, DriftMode::FinetuneGan],
            schedule: crate::channel::SnrSchedule::drift().entries().to_vec(),
            run: DriftConfig::default(),
            gan_observation_images: 2000,
            gan: GanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSettings {
    pub source_sizes: Vec<usize>,
    pub patch_sizes: Vec<usize>,
    pub session: SessionConfig,
    /// Patch codec symbols per pixel.
    pub codec_ratio: f64,
    pub codec_train: TrainConfig,
    pub codec_train_images: usize,
    pub classifier: ClassifierTrainConfig,
    pub eval_images: usize,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self {
            source_sizes: vec![28, 56],
            patch_sizes: vec![4, 8],
            session: SessionConfig::default(),
            codec_ratio: 0.5,
            codec_train: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            codec_train_images: 2000,
            classifier: ClassifierTrainConfig {
                epochs: 5,
                ..ClassifierTrainConfig::default()
            },
            eval_images: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressSettings {
    pub prune_ratio: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub bits: Vec<u32>,
    pub eval_snr_db: f64,
}

impl Default for CompressSettings {
    fn default() -> Self {
        Self {
            prune_ratio: 0.5,
            finetune_epochs: 5,
            finetune_lr: 3e-4,
            bits: vec![8, 4],
            eval_snr_db: 21.0,
        }
    }
}

/// How the orchestrator's quality surface is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSettings {
    /// Load a previously measured surface (JSON) instead of measuring one.
    pub path: Option<PathBuf>,
    pub codec_train_snr_db: f64,
    pub codec_train: TrainConfig,
    pub classifier: ClassifierTrainConfig,
    pub snr_grid_db: Vec<f64>,
    pub eval_images: usize,
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        Self {
            path: None,
            codec_train_snr_db: 10.0,
            codec_train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            classifier: ClassifierTrainConfig {
                epochs: 5,
                full_fraction: 1.0,
                ..ClassifierTrainConfig::default()
            },
            snr_grid_db: (-2..=5).map(|k| 5.0 * k as f64).collect(),
            eval_images: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrchestrationSettings {
    pub schemes: Vec<Scheme>,
    pub hierarchy: HierarchyConfig,
    pub surface: SurfaceSettings,
}

impl Default for OrchestrationSettings {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            hierarchy: HierarchyConfig::default(),
            surface: SurfaceSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSettings {
    /// CSV files or directories to scan; empty means the output directory.
    pub inputs: Vec<PathBuf>,
    /// Moving-average window for per-slot traces.
    pub smoothing: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            smoothing: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub data: DataSettings,
    pub codec: CodecSettings,
    pub drift: DriftSettings,
    pub sampling: SamplingSettings,
    pub compress: CompressSettings,
    pub orchestration: OrchestrationSettings,
    pub report: ReportSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub settings: Settings,
}

const TOP_LEVEL: [&str; 3] = ["experiment", "seed", "out"];

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: 0,
            out: PathBuf::from("out"),
            settings: Settings::default(),
        }
    }

    /// Parses a flat dotted-key document. Missing keys keep their defaults;
    /// unknown keys and mistyped values are configuration errors.
    pub fn from_flat_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not JSON: {e}")))?;
        let Value::Object(entries) = doc else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        let experiment: ExperimentKind = match entries.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("experiment: {e}")))?,
            None => return Err(Error::Config("missing key \"experiment\"".into())),
        };
        let mut config = Self::new(experiment);
        if let Some(v) = entries.get("seed") {
            config.seed = serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("seed: {e}")))?;
        }
        if let Some(v) = entries.get("out") {
            config.out = serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("out: {e}")))?;
        }
        let mut tree = serde_json::to_value(&config.settings)?;
        for (key, value) in entries.iter().filter(|(k, _)| !TOP_LEVEL.contains(&k.as_str())) {
            let slot = leaf_mut(&mut tree, key).ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
            *slot = value.clone();
        }
        config.settings = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_flat_json(&text)
    }

    /// Every setting as `dotted.key → value`, sorted by key.
    pub fn to_flat(&self) -> Result<Map<String, Value>> {
        let mut flat = Map::new();
        flat.insert("experiment".into(), serde_json::to_value(self.experiment)?);
        flat.insert("seed".into(), self.seed.into());
        flat.insert("out".into(), serde_json::to_value(&self.out)?);
        flatten_into("", &serde_json::to_value(&self.settings)?, &mut flat);
        Ok(flat)
    }

    pub fn to_flat_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Value::Object(self.to_flat()?))? + "\n")
    }

    /// Short hex digest of the resolved configuration.
    pub fn digest(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a(self.to_flat_json()?.as_bytes())))
    }
}

fn leaf_mut<'a>(tree: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut node = tree;
    for part in key.split('.') {
        node = node.as_object_mut()?.get_mut(part)?;
    }
    (!node.is_object()).then_some(node)
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_owned(), leaf.clone());
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
