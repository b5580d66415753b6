//! Joint-objective training: loss assembly, ADAM, the fitting loop, the
//! bandwidth/weight grid search, and the JSON checkpoint.

mod adam;
mod checkpoint;
mod fit;
mod grid;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FeatureSpec, CHECKPOINT_FORMAT_VERSION};
pub use fit::{fit, EpochLoss, ScoreReference, TrainedModel};
pub use grid::{grid_search, GridResult, GridRow, ValidationMetric, DEFAULT_SIGMA_GRID};
pub use loss::{auto_weights, joint_loss, LossBreakdown, LossEval, LossWeights, StatsSource};

use serde::{Deserialize, Serialize};

use crate::autoenc::Activation;
use crate::error::{Error, Result};
use crate::itl::MiMode;
use crate::ndmath::DEFAULT_RIDGE;
use crate::robust::{RobustOptions, MAD_FLOOR};

/// Everything that determines a training run. Missing JSON fields take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Input-space kernel bandwidth.
    pub sigma: f64,
    /// Latent-space bandwidth; `None` shares `sigma`.
    pub latent_sigma: Option<f64>,
    pub weights: LossWeights,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub ridge_epsilon: f64,
    pub mi_mode: MiMode,
    pub latent_dim: usize,
    /// Encoder hidden widths; `None` uses a single `d/2` layer when it is
    /// wider than the latent code.
    pub hidden_dims: Option<Vec<usize>>,
    pub activation: Activation,
    pub normalize_diagonal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            latent_sigma: None,
            weights: LossWeights::default(),
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
            ridge_epsilon: DEFAULT_RIDGE,
            mi_mode: MiMode::Ratio,
            latent_dim: 8,
            hidden_dims: None,
            activation: Activation::Tanh,
            normalize_diagonal: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if let Some(s) = self.latent_sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::param(format!("latent_sigma must be positive, got {s}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::param("batch_size must be at least 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate must be positive"));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return Err(Error::param("adam betas must lie in [0, 1)"));
        }
        if self.latent_dim == 0 {
            return Err(Error::param("latent_dim must be positive"));
        }
        self.weights.validate()
    }

    pub fn latent_sigma(&self) -> f64 {
        self.latent_sigma.unwrap_or(self.sigma)
    }

    pub fn robust_options(&self) -> RobustOptions {
        RobustOptions {
            ridge_epsilon: self.ridge_epsilon,
            mad_floor: MAD_FLOOR,
            normalize_diagonal: self.normalize_diagonal,
        }
    }

    /// Encoder widths from the input width down to the latent code.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let k = self.latent_dim.min(input_dim);
        let mut dims = vec![input_dim];
        match &self.hidden_dims {
            Some(hidden) => dims.extend(hidden),
            None if input_dim / 2 > k => dims.push(input_dim / 2),
            None => {}
        }
        dims.push(k);
        dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture() {
        let c = TrainConfig::default();
        assert_eq!(c.layer_dims(29), vec![29, 14, 8]);
        assert_eq!(c.layer_dims(20), vec![20, 10, 8]);
        assert_eq!(c.layer_dims(10), vec![10, 8]);
        assert_eq!(c.layer_dims(4), vec![4, 4]);
        let c = TrainConfig { hidden_dims: Some(vec![6, 4]), latent_dim: 2, ..TrainConfig::default() };
        assert_eq!(c.layer_dims(10), vec![10, 6, 4, 2]);
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: TrainConfig = serde_json::from_str(r#"{"sigma": 0.2, "epochs": 5}"#).unwrap();
        assert_eq!(c.sigma, 0.2);
        assert_eq!(c.epochs, 5);
        assert_eq!(c.batch_size, 256);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"sigmaa": 1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
    }
}
