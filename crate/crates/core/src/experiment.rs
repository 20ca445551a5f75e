//! Train-calibrate-evaluate runs over a synthetic protocol, including the
//! ablation modes and the MaxLogit comparator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::edl::{train_branch_with_history, TrainConfig, TrainingView};
use crate::error::Result;
use crate::features::{raw_feature_matrix, Branch, Standardizer};
use crate::openset::{
    calibrate_maxlogit, calibration_scores, evaluate_maxlogit, evaluate_with,
    thresholds_from_scores, BranchModel, CalibrationGrouping, DualBranchModel, MetricsReport,
    ScoreMode, ThresholdSet,
};
use crate::synth::{splitmix64, SynthDataset};

/// Per-branch training seeds derived from one run seed.
pub fn branch_seeds(seed: u64) -> (u64, u64) {
    (splitmix64(seed ^ 0x5350_4154), splitmix64(seed ^ 0x4652_4551))
}

pub fn branch_config(base: &TrainConfig, branch: Branch) -> TrainConfig {
    let (s, f) = branch_seeds(base.seed);
    TrainConfig {
        seed: match branch {
            Branch::Spatial => s,
            Branch::Frequency => f,
        },
        ..base.clone()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedBranch {
    pub model: BranchModel,
    pub epoch_losses: Vec<f64>,
}

/// Fits the standardizer and then the network of one branch on the train split.
pub fn train_single(dataset: &SynthDataset, base: &TrainConfig, branch: Branch) -> Result<TrainedBranch> {
    let mut features = raw_feature_matrix(&dataset.train, branch);
    let standardizer = Standardizer::fit(&features)?;
    standardizer.apply_rows(&mut features);
    let labels: Vec<usize> = dataset.train.iter().map(|s| s.class_label as usize).collect();
    let view = TrainingView::new(features.view(), &labels, dataset.class_count())?;
    let outcome = train_branch_with_history(view, &branch_config(base, branch))?;
    Ok(TrainedBranch {
        model: BranchModel::new(branch, standardizer, outcome.network)?,
        epoch_losses: outcome.epoch_losses,
    })
}

/// Trains both branches independently on the train split.
pub fn train_dual(dataset: &SynthDataset, base: &TrainConfig) -> Result<DualBranchModel> {
    let spatial = train_single(dataset, base, Branch::Spatial)?;
    let frequency = train_single(dataset, base, Branch::Frequency)?;
    DualBranchModel::new(spatial.model, frequency.model, base.evidence_fn)
}

/// Calibration scores for one mode, kept so several known fractions can reuse them.
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    pub mode: ScoreMode,
    pub class_count: usize,
    pub scores: Vec<(usize, usize, f64)>,
}

impl CalibrationCache {
    pub fn new(model: &DualBranchModel, dataset: &SynthDataset, mode: ScoreMode) -> Result<Self> {
        Ok(Self {
            mode,
            class_count: model.class_count(),
            scores: calibration_scores(model, &dataset.train, mode)?,
        })
    }

    pub fn thresholds(&self, known_fraction: f64, grouping: CalibrationGrouping) -> Result<ThresholdSet> {
        thresholds_from_scores(&self.scores, self.class_count, known_fraction, self.mode, grouping)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub known_fraction: f64,
    /// Keyed by [`ScoreMode::name`].
    pub modes: BTreeMap<String, MetricsReport>,
    pub maxlogit_spatial: MetricsReport,
}

impl AblationReport {
    pub fn mode(&self, mode: ScoreMode) -> &MetricsReport {
        &self.modes[mode.name()]
    }
}

/// Calibrates and evaluates every ablation mode plus the spatial MaxLogit baseline.
pub fn run_ablation(
    model: &DualBranchModel,
    dataset: &SynthDataset,
    known_fraction: f64,
) -> Result<AblationReport> {
    let mut modes = BTreeMap::new();
    for mode in ScoreMode::ALL {
        let thresholds = CalibrationCache::new(model, dataset, mode)?
            .thresholds(known_fraction, CalibrationGrouping::TrueLabel)?;
        modes.insert(
            mode.name().to_string(),
            evaluate_with(model, &dataset.test, &thresholds, mode)?,
        );
    }
    let logit_thresholds = calibrate_maxlogit(&model.spatial, &dataset.train, known_fraction)?;
    let maxlogit_spatial = evaluate_maxlogit(&model.spatial, &dataset.test, &logit_thresholds)?;
    Ok(AblationReport {
        known_fraction,
        modes,
        maxlogit_spatial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub known_fraction: f64,
    pub report: MetricsReport,
}

pub const SWEEP_FRACTIONS: [f64; 5] = [0.85, 0.90, 0.95, 0.97, 0.99];

/// Evaluates `mode` at each known fraction, scoring the train split only once.
pub fn threshold_sweep(
    model: &DualBranchModel,
    dataset: &SynthDataset,
    mode: ScoreMode,
    fractions: &[f64],
) -> Result<Vec<SweepPoint>> {
    let cache = CalibrationCache::new(model, dataset, mode)?;
    fractions
        .iter()
        .map(|&f| {
            let t = cache.thresholds(f, CalibrationGrouping::TrueLabel)?;
            Ok(SweepPoint {
                known_fraction: f,
                report: evaluate_with(model, &dataset.test, &t, mode)?,
            })
        })
        .collect()
}
