use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoenc::{forward, init_params, NetworkParams};
use crate::detect::{row_mse, ScoreBand};
use crate::error::{Error, Result};
use crate::ndmath::Matrix;
use crate::robust::{classical_md, classical_stats, median, robust_correlation, robust_md, ClassicalStats, RobustLatentStats};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{joint_loss, LossBreakdown, StatsSource};
use super::TrainConfig;

/// Mean loss components over the batches of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub batches: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Training-set score summaries used to fold two-sided scores for ranking
/// and as the band when no labels are available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReference {
    pub robust_md_median: f64,
    pub classical_md_median: f64,
    pub euclidean_recon_median: f64,
    /// 1st and 99th percentile of the training robust-MD scores.
    pub default_band: ScoreBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetworkParams,
    pub robust_stats: RobustLatentStats,
    /// Absent only in checkpoints written without the baseline statistics.
    pub classical_stats: Option<ClassicalStats>,
    pub config: TrainConfig,
    pub loss_history: Vec<EpochLoss>,
    pub score_reference: Option<ScoreReference>,
}

/// Shuffle stream kept apart from the weight-initialization stream.
const SHUFFLE_STREAM: u64 = 1;

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Encode the full training set once and snapshot every statistic scoring needs.
pub(crate) fn freeze(
    params: &NetworkParams,
    data: &Matrix,
    config: &TrainConfig,
) -> Result<(RobustLatentStats, ClassicalStats, ScoreReference)> {
    let trace = forward(params, data)?;
    let latent = trace.latent();
    let robust = robust_correlation(latent, &config.robust_options())?;
    let classical = classical_stats(latent, config.ridge_epsilon)?;
    let mut rmd = robust_md(latent, &robust)?;
    let cmd = classical_md(latent, &classical)?;
    let recon = row_mse(data, trace.reconstruction())?;
    let reference = ScoreReference {
        robust_md_median: median(&rmd)?,
        classical_md_median: median(&cmd)?,
        euclidean_recon_median: median(&recon)?,
        default_band: {
            rmd.sort_by(f64::total_cmp);
            let (low, high) = (quantile_sorted(&rmd, 0.01), quantile_sorted(&rmd, 0.99));
            if low < high {
                ScoreBand::new(low, high)?
            } else {
                ScoreBand::new(low - 0.5, high + 0.5)?
            }
        },
    };
    Ok((robust, classical, reference))
}

fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let min_tail = (batch_size / 2).max(2);
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        if end - start == batch_size || end - start >= min_tail {
            out.push(start..end);
        }
        start = end;
    }
    out
}

/// Train on normal data with shuffled mini-batches, then freeze the latent
/// statistics from one encoding of the full training set.
pub fn fit(train: &Matrix, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let n = train.rows();
    if n < config.batch_size {
        return Err(Error::data(format!(
            "training set has {n} rows, fewer than batch_size {}",
            config.batch_size
        )));
    }
    let dims = config.layer_dims(train.cols());
    let mut params = init_params(&dims, config.activation, config.seed)?;
    let mut state = AdamState::new(&params);
    let adam = AdamConfig::from(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let ranges = batch_ranges(n, config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);
    info!("training {dims:?} on {n} rows for {} epochs", config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        for (b, range) in ranges.iter().enumerate() {
            let wrap = |e: Error| Error::Training { epoch, batch: b, source: Box::new(e) };
            let batch = train.select_rows(&order[range.clone()]);
            let eval = joint_loss(&params, &batch, config, StatsSource::PerBatch).map_err(wrap)?;
            adam_step(&mut params, &eval.grads, &mut state, &adam).map_err(wrap)?;
            let l = eval.breakdown;
            sums[0] += l.md_term;
            sums[1] += l.recon_term;
            sums[2] += l.mi_term;
        }
        let k = ranges.len() as f64;
        let loss = LossBreakdown::compose(sums[0] / k, sums[1] / k, sums[2] / k, &config.weights);
        debug!(
            "epoch {epoch}: total {:.6} md {:.6} recon {:.6} mi {:.6}",
            loss.total, loss.md_term, loss.recon_term, loss.mi_term
        );
        history.push(EpochLoss { epoch, batches: ranges.len(), loss });
    }

    let (robust_stats, classical_stats, score_reference) = freeze(&params, train, config)?;
    Ok(TrainedModel {
        params,
        robust_stats,
        classical_stats: Some(classical_stats),
        config: config.clone(),
        loss_history: history,
        score_reference: Some(score_reference),
    })
}
