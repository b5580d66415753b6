use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoenc::{Activation, NetworkParams};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::ndmath::Matrix;
use crate::robust::{ClassicalStats, RobustLatentStats};

use super::fit::{EpochLoss, ScoreReference, TrainedModel};
use super::TrainConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Input columns the model was trained on and the min-max record fitted on
/// the training data, so scoring can reproduce the preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub columns: Vec<String>,
    pub normalization: Normalization,
}

/// On-disk model. Floats are written in shortest round-trip form, so a
/// save/load cycle reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Matrix>,
    pub biases_enc: Vec<Vec<f64>>,
    pub biases_dec: Vec<Vec<f64>>,
    pub robust_stats: RobustLatentStats,
    pub train_config: TrainConfig,
    pub loss_history: Vec<EpochLoss>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical_stats: Option<ClassicalStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_reference: Option<ScoreReference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec>,
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel, features: Option<FeatureSpec>) -> Self {
        let p = &model.params;
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_dims: p.layer_dims.clone(),
            activation: p.activation,
            weights: p.weights.clone(),
            biases_enc: p.biases_enc.clone(),
            biases_dec: p.biases_dec.clone(),
            robust_stats: model.robust_stats.clone(),
            train_config: model.config.clone(),
            loss_history: model.loss_history.clone(),
            classical_stats: model.classical_stats.clone(),
            score_reference: model.score_reference.clone(),
            features,
        }
    }

    /// Validate shapes and split into the model and its feature spec.
    pub fn into_model(self) -> Result<(TrainedModel, Option<FeatureSpec>)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let params = NetworkParams::from_parts(
            self.layer_dims,
            self.weights,
            self.biases_enc,
            self.biases_dec,
            self.activation,
        )
        .map_err(|e| Error::data(format!("checkpoint parameters are inconsistent: {e}")))?;
        let k = params.latent_dim();
        let s = &self.robust_stats;
        if s.dim() != k || s.mads.len() != k || s.corr.shape() != (k, k) || s.corr_inv.shape() != (k, k) {
            return Err(Error::data(format!("robust_stats do not match latent width {k}")));
        }
        if let Some(c) = &self.classical_stats {
            if c.dim() != k || c.cov.shape() != (k, k) || c.cov_inv.shape() != (k, k) {
                return Err(Error::data(format!("classical_stats do not match latent width {k}")));
            }
        }
        if let Some(f) = &self.features {
            if f.columns.len() != params.input_dim() || f.normalization.len() != params.input_dim() {
                return Err(Error::data("feature spec does not match the model input width"));
            }
        }
        let model = TrainedModel {
            params,
            robust_stats: self.robust_stats,
            classical_stats: self.classical_stats,
            config: self.train_config,
            loss_history: self.loss_history,
            score_reference: self.score_reference,
        };
        Ok((model, self.features))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::fit;

    fn model() -> TrainedModel {
        let rows: Vec<[f64; 3]> = (0..24)
            .map(|i| {
                let t = i as f64 / 23.0;
                [t, (3.0 * t).sin() * 0.5 + 0.5, 1.0 / 3.0 * t * t]
            })
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        fit(&data, &TrainConfig { epochs: 2, batch_size: 8, latent_dim: 2, ..TrainConfig::default() }).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let m = model();
        let ckpt = Checkpoint::from_model(&m, None);
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_json().unwrap(), text);
        let (restored, features) = back.into_model().unwrap();
        assert_eq!(restored, m);
        assert!(features.is_none());
    }

    #[test]
    fn required_fields_are_present() {
        let text = Checkpoint::from_model(&model(), None).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "format_version",
            "layer_dims",
            "activation",
            "weights",
            "biases_enc",
            "biases_dec",
            "robust_stats",
            "train_config",
            "loss_history",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in ["medians", "mads", "corr", "corr_inv"] {
            assert!(v["robust_stats"].get(key).is_some(), "missing robust_stats.{key}");
        }
        assert!(v["weights"][0][0].is_array());
    }

    #[test]
    fn bad_shapes_and_versions_are_rejected() {
        let mut c = Checkpoint::from_model(&model(), None);
        c.format_version = 99;
        assert!(matches!(c.into_model(), Err(Error::Data(_))));
        let mut c = Checkpoint::from_model(&model(), None);
        c.robust_stats.medians.push(0.0);
        assert!(matches!(c.into_model(), Err(Error::Data(_))));
        let mut c = Checkpoint::from_model(&model(), None);
        c.biases_dec[0].pop();
        assert!(matches!(c.into_model(), Err(Error::Data(_))));
    }
}
