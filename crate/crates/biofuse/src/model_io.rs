//! Versioned JSON storage for trained encoder models.
//!
//! A model file records the modality it was trained for, the encoder
//! architecture, the flat parameter vector, and the batch-norm running
//! statistics. Loading rebuilds the model through the core shape and
//! finiteness checks, so a corrupted or mismatched file fails loudly
//! instead of producing garbage scores.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use biofuse_core::data::ModalityKind;
use biofuse_core::nn::encoder::{EncoderConfig, EncoderModel};
use serde::{Deserialize, Serialize};

const FORMAT: &str = "biofuse-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    modality: String,
    config: EncoderConfig,
    params: Vec<f64>,
    bn_running_mean: Vec<Vec<f64>>,
    bn_running_var: Vec<Vec<f64>>,
    bn_momentum: f64,
    bn_eps: f64,
}

/// Canonical location of one modality's model inside a models directory.
pub fn model_path(dir: &Path, modality: ModalityKind) -> PathBuf {
    dir.join(format!("model_{}.json", modality.slug()))
}

/// Serializes a trained model to `path`, creating parent directories.
pub fn save_model(path: &Path, modality: ModalityKind, model: &EncoderModel) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = ModelFile {
        format: FORMAT.to_string(),
        version: VERSION,
        modality: modality.slug().to_string(),
        config: *model.config(),
        params: model.params().to_vec(),
        bn_running_mean: model.bn_running_mean().to_vec(),
        bn_running_var: model.bn_running_var().to_vec(),
        bn_momentum: model.bn_momentum(),
        bn_eps: model.bn_eps(),
    };
    let json = serde_json::to_string(&file)?;
    fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Reads a model file back, validating the format tag, version, modality,
/// and every shape the core model constructor checks.
pub fn load_model(path: &Path) -> Result<(ModalityKind, EncoderModel)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse model file {}", path.display()))?;
    if file.format != FORMAT {
        bail!("{}: not a model file (format {:?})", path.display(), file.format);
    }
    if file.version != VERSION {
        bail!(
            "{}: unsupported model version {} (this build reads {})",
            path.display(),
            file.version,
            VERSION
        );
    }
    let modality = ModalityKind::from_slug(&file.modality)
        .with_context(|| format!("{}: unknown modality {:?}", path.display(), file.modality))?;
    if file.config.input_dim != modality.feature_columns() {
        bail!(
            "{}: input dimension {} does not match the {} feature layout ({})",
            path.display(),
            file.config.input_dim,
            modality.slug(),
            modality.feature_columns()
        );
    }
    let model = EncoderModel::from_parts(
        file.config,
        file.params,
        file.bn_running_mean,
        file.bn_running_var,
        file.bn_momentum,
        file.bn_eps,
    )
    .with_context(|| format!("{}: invalid model contents", path.display()))?;
    Ok((modality, model))
}
