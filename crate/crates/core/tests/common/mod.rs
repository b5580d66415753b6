#![allow(dead_code)]

use drmdit::autoenc::{encode, init_params, Activation, NetworkParams};
use drmdit::robust::robust_correlation;
use drmdit::train::{joint_loss, LossWeights, StatsSource, TrainConfig};
use drmdit::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Which part of the objective a gradient check isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    RobustMd,
    Reconstruction,
    MutualInformation,
    Total,
}

impl Component {
    pub const ALL: [Component; 4] =
        [Component::RobustMd, Component::Reconstruction, Component::MutualInformation, Component::Total];

    pub fn weights(self) -> LossWeights {
        match self {
            Component::RobustMd => LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 },
            Component::Reconstruction => LossWeights { alpha: 0.0, beta: 1.0, gamma: 0.0 },
            Component::MutualInformation => LossWeights { alpha: 0.0, beta: 0.0, gamma: 1.0 },
            Component::Total => LossWeights::default(),
        }
    }
}

/// A random network with at most 50 parameters, a batch, and a config.
pub struct GradCase {
    pub params: NetworkParams,
    pub batch: Matrix,
    pub config: TrainConfig,
}

pub fn random_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let input = rng.random_range(3..=5);
        let latent = rng.random_range(2..=3);
        let mut dims = vec![input];
        if rng.random_bool(0.5) && input > 3 {
            dims.push(3);
        }
        dims.push(latent);
        let activation = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Sigmoid };
        let mut params = init_params(&dims, activation, rng.random()).unwrap();
        if params.param_count() > 50 {
            continue;
        }
        // non-zero biases so every tensor is exercised away from the origin
        for b in params.biases_enc.iter_mut().chain(params.biases_dec.iter_mut()) {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
        let n = rng.random_range(6..=10);
        let data = (0..n * input).map(|_| rng.random_range(0.0..1.0)).collect();
        let batch = Matrix::new(n, input, data).unwrap();
        let config = TrainConfig {
            sigma: rng.random_range(0.4..1.0),
            latent_sigma: Some(rng.random_range(0.3..0.8)),
            ..TrainConfig::default()
        };
        return GradCase { params, batch, config };
    }
}

fn loss_at(case: &GradCase, params: &NetworkParams, config: &TrainConfig, stats: StatsSource<'_>) -> f64 {
    joint_loss(params, &case.batch, config, stats).unwrap().breakdown.total
}

/// Largest `|a - n| / max(|a| + |n|, 1e-6)` over all parameters, comparing the
/// analytic gradient with central differences. Robust statistics are frozen
/// at the unperturbed latent codes.
pub fn max_relative_error(case: &GradCase, component: Component) -> f64 {
    let config = TrainConfig { weights: component.weights(), ..case.config.clone() };
    let latent = encode(&case.params, &case.batch).unwrap();
    let stats = robust_correlation(&latent, &config.robust_options()).unwrap();
    let frozen = StatsSource::Frozen(&stats);
    let analytic = joint_loss(&case.params, &case.batch, &config, frozen).unwrap().grads.flatten();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = case.params.clone();
    let tensor_count = probe.tensors().len();
    for t in 0..tensor_count {
        let len = probe.tensors()[t].1.len();
        for i in 0..len {
            let orig = probe.tensors()[t].1[i];
            probe.tensors_mut()[t][i] = orig + FD_STEP;
            let up = loss_at(case, &probe, &config, frozen);
            probe.tensors_mut()[t][i] = orig - FD_STEP;
            let down = loss_at(case, &probe, &config, frozen);
            probe.tensors_mut()[t][i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    assert_eq!(numeric.len(), analytic.len());
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Standard-normal matrix from a fixed seed.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}
