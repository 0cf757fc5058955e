//! Run configuration: a single TOML file driving every pipeline stage.
//!
//! Unknown keys are rejected rather than ignored, so a typo fails the run
//! instead of silently falling back to a default. Every field has a
//! default, and the effective configuration (after flag overrides) can be
//! dumped back to TOML and reloaded to reproduce a run exactly.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use biofuse_core::data::ModalityKind;
use biofuse_core::eval::EnrollMode;
use biofuse_core::fusion::FusionMode;
use biofuse_core::nn::adam::OptimizerConfig;
use biofuse_core::nn::loss::TripletLossConfig;
use biofuse_core::train::TrainConfig;
use biofuse_core::window::{WindowOverrides, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::synthgen::SynthConfig;

/// Everything a run needs, as stored in the TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset root directory; required by every command that reads data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Output directory for models, scores, and reports.
    pub out: PathBuf,
    /// Root seed; every random draw in the pipeline derives from it.
    pub seed: u64,
    /// Worker threads for training and evaluation.
    pub threads: usize,
    /// Subjects held out for validation (early stopping, fusion weights).
    pub n_validation: usize,
    /// Subjects held out for the test score tables.
    pub n_test: usize,
    pub fusion_mode: FusionMode,
    pub enroll_windows: EnrollMode,
    /// Z-normalize per-modality scores before fusing.
    pub score_norm: bool,
    pub train: TrainSection,
    pub optimizer: OptimizerSection,
    pub loss: LossSection,
    /// Window geometry overrides keyed by modality slug.
    pub windows: BTreeMap<String, WindowSection>,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            out: PathBuf::from("out"),
            seed: 0,
            threads: 1,
            n_validation: 4,
            n_test: 6,
            fusion_mode: FusionMode::Weighted,
            enroll_windows: EnrollMode::All,
            score_norm: false,
            train: TrainSection::default(),
            optimizer: OptimizerSection::default(),
            loss: LossSection::default(),
            windows: BTreeMap::new(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub hidden_units: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub triplets_per_epoch: usize,
    pub semi_hard: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            hidden_units: d.hidden_units,
            max_epochs: d.max_epochs,
            patience: d.patience,
            triplets_per_epoch: d.triplets_per_epoch,
            semi_hard: d.semi_hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        OptimizerSection {
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub margin: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { margin: TripletLossConfig::default().margin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub m: usize,
    #[serde(default)]
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub session_duration_s: f64,
    pub sensor_rate_hz: u32,
    pub separability: f64,
    /// Modality slugs generated as pure noise.
    pub noise_modalities: Vec<String>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_subjects: d.n_subjects,
            session_duration_s: d.session_duration_s,
            sensor_rate_hz: d.sensor_rate_hz,
            separability: d.separability,
            noise_modalities: Vec::new(),
        }
    }
}

fn modality_from_slug(slug: &str) -> Result<ModalityKind> {
    ModalityKind::from_slug(slug).ok_or_else(|| {
        anyhow!(
            "unknown modality {:?}; expected one of {}",
            slug,
            ModalityKind::ALL.map(|m| m.slug()).join(", ")
        )
    })
}

impl RunConfig {
    /// Parses a TOML config file, rejecting unknown keys.
    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::invalid(format!("cannot read config file {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| crate::invalid(format!("invalid config file {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Serializes the effective configuration; the result reloads to an
    /// identical [`RunConfig`].
    pub fn effective_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Checks every field, including the parts delegated to core types.
    pub fn validate(&self) -> Result<()> {
        let check = || -> Result<()> {
            if self.threads == 0 {
                bail!("threads must be at least 1");
            }
            self.window_overrides()?;
            self.train_config()?.validate()?;
            self.synth_config()?.validate()?;
            Ok(())
        };
        check().map_err(|e| crate::invalid(format!("invalid configuration: {e:#}")))
    }

    /// The dataset root, or an error naming the missing setting.
    pub fn dataset_root(&self) -> Result<&std::path::Path> {
        self.dataset.as_deref().ok_or_else(|| {
            crate::invalid("no dataset root configured; set `dataset` or pass --dataset".to_string())
        })
    }

    /// The dataset root, required to already exist on disk.
    pub fn existing_dataset_root(&self) -> Result<&std::path::Path> {
        let root = self.dataset_root()?;
        if !root.is_dir() {
            return Err(crate::invalid(format!(
                "dataset root {} is not a directory",
                root.display()
            )));
        }
        Ok(root)
    }

    pub fn window_overrides(&self) -> Result<WindowOverrides> {
        let mut overrides = WindowOverrides::new();
        for (slug, section) in &self.windows {
            let modality = modality_from_slug(slug)?;
            let spec = WindowSpec::new(section.m, section.overlap)
                .with_context(|| format!("bad window override for {slug}"))?;
            overrides.set(modality, spec);
        }
        Ok(overrides)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            hidden_units: self.train.hidden_units,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            triplets_per_epoch: self.train.triplets_per_epoch,
            seed: self.seed,
            optimizer: OptimizerConfig {
                learning_rate: self.optimizer.learning_rate,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                epsilon: self.optimizer.epsilon,
                batch_size: self.optimizer.batch_size,
            },
            loss: TripletLossConfig { margin: self.loss.margin },
            semi_hard: self.train.semi_hard,
            enroll_mode: self.enroll_windows,
            windows: self.window_overrides()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let noise_modalities = self
            .synth
            .noise_modalities
            .iter()
            .map(|slug| modality_from_slug(slug))
            .collect::<Result<Vec<_>>>()?;
        let cfg = SynthConfig {
            n_subjects: self.synth.n_subjects,
            sessions_per_subject: 5,
            session_duration_s: self.synth.session_duration_s,
            sensor_rate_hz: self.synth.sensor_rate_hz,
            separability: self.synth.separability,
            seed: self.seed,
            noise_modalities,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
