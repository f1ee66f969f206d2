use std::path::{Path, PathBuf};

use obslab_core::Obfuscation;
use obslab_nn::{Preset, SgdConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default per-class training count for directory datasets (8/2 split of
/// ten images per subject).
pub const DEFAULT_TRAIN_PER_CLASS: usize = 8;

fn default_train_per_class() -> usize {
    DEFAULT_TRAIN_PER_CLASS
}

/// Where the images come from. MNIST and CIFAR-10 carry their own
/// train/test split; directory datasets are split per class after
/// obfuscation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Directory holding the four standard IDX files.
    Mnist { root: PathBuf },
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    Cifar10 { root: PathBuf },
    /// PGM files listed in a `path<TAB>label` manifest
    /// (default `<root>/manifest.tsv`).
    Dir {
        root: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        manifest: Option<PathBuf>,
        #[serde(default = "default_train_per_class")]
        train_per_class: usize,
    },
}

impl DatasetSource {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSource::Mnist { .. } => "mnist",
            DatasetSource::Cifar10 { .. } => "cifar10",
            DatasetSource::Dir { .. } => "dir",
        }
    }
}

/// One training run. Optional fields fall back to per-preset defaults;
/// [`ExperimentConfig::resolved`] fills them in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub obfuscation: Obfuscation,
    /// Relative per-image blur sigma jitter (0.1 → ±10%); 0 disables it.
    #[serde(default)]
    pub blur_jitter: f64,
    pub preset: Preset,
    /// Overrides the preset's class count (face presets only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    pub epochs: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdConfig>,
    /// Halve the learning rate every 25 epochs.
    #[serde(default)]
    pub cifar_schedule: bool,
    /// Keep only the first N training items after splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Store measured seconds in epoch records. Off by default so that
    /// reruns produce byte-identical reports; timing.json always has them.
    #[serde(default)]
    pub record_wall_clock: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, preset: Preset, epochs: u32) -> Self {
        ExperimentConfig {
            dataset,
            obfuscation: Obfuscation::None,
            blur_jitter: 0.0,
            preset,
            classes: None,
            epochs,
            batch_size: None,
            seed: 0,
            sgd: None,
            cifar_schedule: false,
            train_limit: None,
            test_limit: None,
            out_dir: None,
            record_wall_clock: false,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or_else(|| self.preset.default_batch())
    }

    pub fn sgd(&self) -> SgdConfig {
        self.sgd.unwrap_or(match self.preset {
            Preset::Cifar10 => SgdConfig::cifar(),
            _ => SgdConfig::default(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes.unwrap_or_else(|| self.preset.default_classes())
    }

    /// Copy with every defaulted field made explicit.
    pub fn resolved(&self) -> Self {
        ExperimentConfig {
            batch_size: Some(self.batch_size()),
            sgd: Some(self.sgd()),
            classes: Some(self.classes()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be ≥ 1".into());
        }
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return bad("train/test limits must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.blur_jitter) {
            return bad(format!("blur jitter {} outside [0, 1)", self.blur_jitter));
        }
        if self.blur_jitter > 0.0 && !matches!(self.obfuscation, Obfuscation::Blur { .. }) {
            return bad("blur jitter requires a blur obfuscation".into());
        }
        if let DatasetSource::Dir { train_per_class: 0, .. } = self.dataset {
            return bad("train_per_class must be ≥ 1".into());
        }
        self.obfuscation.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sgd().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
