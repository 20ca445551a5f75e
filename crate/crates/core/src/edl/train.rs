use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::BranchNetwork;
use crate::error::{invalid, Error, Result};
use crate::evidence::EvidenceFunction;

/// Stream offset separating the shuffle RNG from the initialization RNG.
const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4531;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub avu_weight: f64,
    pub hidden_dim: usize,
    pub evidence_fn: EvidenceFunction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            epochs: 50,
            batch_size: 32,
            avu_weight: 0.1,
            hidden_dim: 128,
            evidence_fn: EvidenceFunction::Softplus,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim must be at least 1"));
        }
        if !(self.avu_weight >= 0.0 && self.avu_weight.is_finite()) {
            return Err(invalid("avu_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Borrowed training matrix: one row per sample, plus class labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub features: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub class_count: usize,
}

impl<'a> TrainingView<'a> {
    pub fn new(features: ArrayView2<'a, f64>, labels: &'a [usize], class_count: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(invalid("training set is empty"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
                context: "labels vs. feature rows",
            });
        }
        if class_count < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features contain non-finite values"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(invalid(format!("label {bad} out of range for {class_count} classes")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: BranchNetwork,
    /// Mean per-sample loss of each epoch, measured on the mini-batches as they were visited.
    pub epoch_losses: Vec<f64>,
}

pub fn train_branch(data: TrainingView<'_>, config: &TrainConfig) -> Result<BranchNetwork> {
    Ok(train_branch_with_history(data, config)?.network)
}

/// Mini-batch SGD on the mean of `edl + avu_weight * avu` over each batch.
pub fn train_branch_with_history(data: TrainingView<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = data.features.nrows();
    let mut network = BranchNetwork::initialize(
        data.features.ncols(),
        config.hidden_dim,
        data.class_count,
        config.seed,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut batch_labels = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Array2<f64> = data.features.select(Axis(0), idx);
            batch_labels.clear();
            batch_labels.extend(idx.iter().map(|&i| data.labels[i]));
            let (loss, grads) = network.batch_loss_gradient(
                inputs.view(),
                &batch_labels,
                config.avu_weight,
                config.evidence_fn,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += loss * idx.len() as f64;
            network.apply_gradients(&grads, config.learning_rate);
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok(TrainOutcome {
        network,
        epoch_losses,
    })
}
