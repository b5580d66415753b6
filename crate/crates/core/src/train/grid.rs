use log::info;
use serde::{Deserialize, Serialize};

use crate::detect::{auc, fold_scores, reference_median, score, ScoringMode};
use crate::error::{Error, Result};
use crate::ndmath::Matrix;
use crate::robust::{mad, median};

use super::fit::fit;
use super::loss::LossWeights;
use super::TrainConfig;

pub const DEFAULT_SIGMA_GRID: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    /// AUC of folded robust-MD scores on labeled validation data.
    Auc,
    /// `-|median(val) - median(train)| / MAD(train)` on robust-MD scores of
    /// unlabeled validation data; 0 is best.
    MdSeparation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub metric: ValidationMetric,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: TrainConfig,
    pub best_row: GridRow,
    pub table: Vec<GridRow>,
}

fn beats(a: &GridRow, b: &GridRow) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.sigma != b.sigma {
        return a.sigma < b.sigma;
    }
    a.alpha > b.alpha
}

/// Train one model per (sigma, weights) pair with `base`'s budget and keep
/// the best by validation score. Ties prefer smaller sigma, then larger alpha.
pub fn grid_search(
    train: &Matrix,
    validation: &Matrix,
    validation_labels: Option<&[u8]>,
    sigma_grid: &[f64],
    weight_grid: &[LossWeights],
    base: &TrainConfig,
) -> Result<GridResult> {
    if sigma_grid.is_empty() || weight_grid.is_empty() {
        return Err(Error::param("grid search needs at least one sigma and one weight setting"));
    }
    if let Some(l) = validation_labels {
        if l.len() != validation.rows() {
            return Err(Error::param("validation labels do not match validation rows"));
        }
    }
    let mut table = Vec::with_capacity(sigma_grid.len() * weight_grid.len());
    let mut best: Option<(GridRow, TrainConfig)> = None;
    for &sigma in sigma_grid {
        for weights in weight_grid {
            let config = TrainConfig { sigma, weights: *weights, ..base.clone() };
            let model = fit(train, &config)?;
            let val_scores = score(&model, validation, ScoringMode::RobustMd)?;
            let (metric, value) = match validation_labels {
                Some(labels) => {
                    let centre = reference_median(&model, ScoringMode::RobustMd)?;
                    (ValidationMetric::Auc, auc(&fold_scores(&val_scores, centre), labels)?)
                }
                None => {
                    let train_scores = score(&model, train, ScoringMode::RobustMd)?;
                    let shift = (median(&val_scores)? - median(&train_scores)?).abs();
                    (ValidationMetric::MdSeparation, -shift / mad(&train_scores)?.max(f64::MIN_POSITIVE))
                }
            };
            let row = GridRow {
                sigma,
                alpha: weights.alpha,
                beta: weights.beta,
                gamma: weights.gamma,
                metric,
                score: value,
            };
            info!("grid sigma={sigma} alpha={} beta={}: {value:.6}", weights.alpha, weights.beta);
            if best.as_ref().is_none_or(|(b, _)| beats(&row, b)) {
                best = Some((row, config));
            }
            table.push(row);
        }
    }
    let (best_row, best) = best.expect("non-empty grid");
    Ok(GridResult { best, best_row, table })
}
