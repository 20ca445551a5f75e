//! Open-set inference over a dual-branch model: per-class threshold
//! calibration, the fused evidential decision rule, metrics, the MaxLogit
//! comparator and simplex export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::edl::BranchNetwork;
use crate::error::{invalid, Error, Result};
use crate::evidence::{
    dirichlet_from_evidence, improved_uncertainty, opinion_from_evidence,
    predicted_class, predictive_probabilities, standard_uncertainty, DirichletParams,
    EvidenceFunction, Logits,
};
use crate::fusion::{dempster_combine, dirichlet_from_fused};
use crate::features::{Branch, Standardizer};
use crate::spectrum::ImageTensor;
use crate::synth::Sample;

pub const DEFAULT_KNOWN_FRACTION: f64 = 0.95;

/// Fewer calibration samples than this in any class is an error.
pub const MIN_CALIBRATION_SAMPLES: usize = 20;

/// A trained network together with the input pipeline it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchModel {
    pub branch: Branch,
    pub standardizer: Standardizer,
    pub network: BranchNetwork,
}

impl BranchModel {
    pub fn new(branch: Branch, standardizer: Standardizer, network: BranchNetwork) -> Result<Self> {
        if standardizer.dim() != network.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: network.input_dim(),
                actual: standardizer.dim(),
                context: "standardizer vs. network input",
            });
        }
        Ok(Self {
            branch,
            standardizer,
            network,
        })
    }

    pub fn input(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.standardizer.apply(&self.branch.raw_input(image))
    }

    pub fn logits(&self, image: &ImageTensor) -> Result<Logits> {
        self.network.forward(&self.input(image)?)
    }

    pub fn class_count(&self) -> usize {
        self.network.class_count()
    }
}

/// Spatial and frequency branches sharing one class set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBranchModel {
    pub spatial: BranchModel,
    pub frequency: BranchModel,
    pub evidence_fn: EvidenceFunction,
}

impl DualBranchModel {
    pub fn new(
        spatial: BranchModel,
        frequency: BranchModel,
        evidence_fn: EvidenceFunction,
    ) -> Result<Self> {
        if spatial.class_count() != frequency.class_count() {
            return Err(Error::DimensionMismatch {
                expected: spatial.class_count(),
                actual: frequency.class_count(),
                context: "branch class counts",
            });
        }
        if spatial.branch != Branch::Spatial || frequency.branch != Branch::Frequency {
            return Err(invalid("branch models passed in the wrong order"));
        }
        Ok(Self {
            spatial,
            frequency,
            evidence_fn,
        })
    }

    pub fn class_count(&self) -> usize {
        self.spatial.class_count()
    }

    pub fn spatial_logits(&self, image: &ImageTensor) -> Result<Logits> {
        self.spatial.logits(image)
    }

    pub fn frequency_logits(&self, image: &ImageTensor) -> Result<Logits> {
        self.frequency.logits(image)
    }
}

/// Which evidence and which uncertainty drive the novelty decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Spatial branch alone, improved uncertainty.
    SpatialOnly,
    /// Frequency branch alone, improved uncertainty.
    FrequencyOnly,
    /// Fused evidence, standard uncertainty `K / S`.
    FusedStandardU,
    /// Fused evidence, improved uncertainty `1 / max(alpha)`.
    Full,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 4] = [
        ScoreMode::SpatialOnly,
        ScoreMode::FrequencyOnly,
        ScoreMode::FusedStandardU,
        ScoreMode::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SpatialOnly => "spatial-only",
            Self::FrequencyOnly => "frequency-only",
            Self::FusedStandardU => "fused-standard-u",
            Self::Full => "full",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown ablation mode {s:?}")))
    }
}

/// Closed-set outcome before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub closed_set_label: usize,
    pub uncertainty: f64,
    pub probabilities: Vec<f64>,
    pub params: DirichletParams,
}

fn scored(params: DirichletParams, uncertainty: f64) -> Scored {
    Scored {
        closed_set_label: predicted_class(&params),
        uncertainty,
        probabilities: predictive_probabilities(&params),
        params,
    }
}

/// Fused Dirichlet of both branches.
pub fn fused_dirichlet(model: &DualBranchModel, image: &ImageTensor) -> Result<DirichletParams> {
    let h = model.evidence_fn;
    let spatial = h.evidence(&model.spatial_logits(image)?);
    let frequency = h.evidence(&model.frequency_logits(image)?);
    let fused = dempster_combine(
        &opinion_from_evidence(&spatial),
        &opinion_from_evidence(&frequency),
    )?;
    dirichlet_from_fused(&fused)
}

pub fn score(model: &DualBranchModel, image: &ImageTensor, mode: ScoreMode) -> Result<Scored> {
    let h = model.evidence_fn;
    Ok(match mode {
        ScoreMode::SpatialOnly => {
            let d = dirichlet_from_evidence(&h.evidence(&model.spatial_logits(image)?));
            let u = improved_uncertainty(&d);
            scored(d, u)
        }
        ScoreMode::FrequencyOnly => {
            let d = dirichlet_from_evidence(&h.evidence(&model.frequency_logits(image)?));
            let u = improved_uncertainty(&d);
            scored(d, u)
        }
        ScoreMode::FusedStandardU => {
            let d = fused_dirichlet(model, image)?;
            let u = standard_uncertainty(&d);
            scored(d, u)
        }
        ScoreMode::Full => {
            let d = fused_dirichlet(model, image)?;
            let u = improved_uncertainty(&d);
            scored(d, u)
        }
    })
}

/// Per-class uncertainty thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub tau: Vec<f64>,
    pub known_fraction: f64,
    pub mode: ScoreMode,
    pub grouping: CalibrationGrouping,
}

impl ThresholdSet {
    pub fn new(tau: Vec<f64>, known_fraction: f64, mode: ScoreMode) -> Result<Self> {
        if !(known_fraction > 0.0 && known_fraction < 1.0) {
            return Err(invalid(format!("known_fraction {known_fraction} outside (0, 1)")));
        }
        if let Some(t) = tau.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(invalid(format!("threshold {t} outside (0, 1]")));
        }
        Ok(Self {
            tau,
            known_fraction,
            mode,
            grouping: CalibrationGrouping::TrueLabel,
        })
    }

    pub fn class_count(&self) -> usize {
        self.tau.len()
    }
}

/// How calibration samples are grouped into classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationGrouping {
    #[default]
    TrueLabel,
    PredictedLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `0..K` for a known class, `K` for novel.
    pub label: usize,
    pub closed_set_label: usize,
    pub uncertainty: f64,
    pub threshold: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn is_novel(&self) -> bool {
        self.label == self.probabilities.len()
    }
}

/// Novel only when the uncertainty strictly exceeds the predicted class's threshold.
pub fn decide(scored: &Scored, thresholds: &ThresholdSet) -> Result<Prediction> {
    let k = scored.probabilities.len();
    if thresholds.class_count() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: thresholds.class_count(),
            context: "threshold count vs. classes",
        });
    }
    let tau = thresholds.tau[scored.closed_set_label];
    Ok(Prediction {
        label: if scored.uncertainty > tau { k } else { scored.closed_set_label },
        closed_set_label: scored.closed_set_label,
        uncertainty: scored.uncertainty,
        threshold: tau,
        probabilities: scored.probabilities.clone(),
    })
}

/// Fused evidential inference with the improved uncertainty.
pub fn infer(
    model: &DualBranchModel,
    image: &ImageTensor,
    thresholds: &ThresholdSet,
) -> Result<Prediction> {
    infer_with(model, image, thresholds, ScoreMode::Full)
}

pub fn infer_with(
    model: &DualBranchModel,
    image: &ImageTensor,
    thresholds: &ThresholdSet,
    mode: ScoreMode,
) -> Result<Prediction> {
    decide(&score(model, image, mode)?, thresholds)
}

/// Linear interpolation between the closest order statistics
/// (`h = (n - 1) q`, `x[floor h] + frac(h) (x[ceil h] - x[floor h])`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    Ok(interpolate(&sorted_checked(values, q)?, q))
}

fn sorted_checked(values: &[f64], q: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid("quantile of an empty set"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn interpolate(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fewest samples out of `n` that make up at least `fraction` of them.
fn covering_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Interpolated `fraction` quantile, raised where needed to the order statistic
/// that keeps at least `fraction` of the values at or below it.
pub fn coverage_threshold(values: &[f64], fraction: f64) -> Result<f64> {
    let sorted = sorted_checked(values, fraction)?;
    let floor = sorted[covering_count(sorted.len(), fraction) - 1];
    Ok(interpolate(&sorted, fraction).max(floor))
}

/// Mirror of [`coverage_threshold`] for scores where larger means more confident:
/// at least `fraction` of the values sit at or above the result.
pub fn lower_coverage_threshold(values: &[f64], fraction: f64) -> Result<f64> {
    let sorted = sorted_checked(values, fraction)?;
    let cap = sorted[sorted.len() - covering_count(sorted.len(), fraction)];
    Ok(interpolate(&sorted, 1.0 - fraction).min(cap))
}

fn group_scores(
    scores: &[(usize, usize, f64)],
    class_count: usize,
    grouping: CalibrationGrouping,
) -> Result<Vec<Vec<f64>>> {
    let mut groups = vec![Vec::new(); class_count];
    for &(truth, predicted, s) in scores {
        let class = match grouping {
            CalibrationGrouping::TrueLabel => truth,
            CalibrationGrouping::PredictedLabel => predicted,
        };
        if class >= class_count {
            return Err(invalid(format!("calibration label {class} out of range")));
        }
        groups[class].push(s);
    }
    for (class, g) in groups.iter().enumerate() {
        if g.len() < MIN_CALIBRATION_SAMPLES {
            return Err(Error::Calibration {
                class,
                count: g.len(),
                min: MIN_CALIBRATION_SAMPLES,
            });
        }
    }
    Ok(groups)
}

/// Per-class thresholds from already-computed `(true class, predicted class, uncertainty)` triples.
pub fn thresholds_from_scores(
    scores: &[(usize, usize, f64)],
    class_count: usize,
    known_fraction: f64,
    mode: ScoreMode,
    grouping: CalibrationGrouping,
) -> Result<ThresholdSet> {
    if !(known_fraction > 0.0 && known_fraction < 1.0) {
        return Err(invalid(format!("known_fraction {known_fraction} outside (0, 1)")));
    }
    let groups = group_scores(scores, class_count, grouping)?;
    let tau = groups
        .iter()
        .map(|g| coverage_threshold(g, known_fraction))
        .collect::<Result<Vec<_>>>()?;
    let mut set = ThresholdSet::new(tau, known_fraction, mode)?;
    set.grouping = grouping;
    Ok(set)
}

/// Scores every training sample once; reusable across known fractions.
pub fn calibration_scores(
    model: &DualBranchModel,
    train: &[Sample],
    mode: ScoreMode,
) -> Result<Vec<(usize, usize, f64)>> {
    train
        .iter()
        .map(|s| {
            let sc = score(model, &s.image, mode)?;
            Ok((s.class_label as usize, sc.closed_set_label, sc.uncertainty))
        })
        .collect()
}

pub fn calibrate_thresholds(
    model: &DualBranchModel,
    train: &[Sample],
    known_fraction: f64,
    mode: ScoreMode,
) -> Result<ThresholdSet> {
    let scores = calibration_scores(model, train, mode)?;
    thresholds_from_scores(
        &scores,
        model.class_count(),
        known_fraction,
        mode,
        CalibrationGrouping::TrueLabel,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Share of all test samples whose final label is right (novel counts as a class).
    pub accuracy: f64,
    /// Recall of the novel class; `None` when the test set has no novel samples.
    pub detection_rate: Option<f64>,
    /// Final-label accuracy restricted to samples of seen classes.
    pub seen_accuracy: Option<f64>,
    /// Argmax accuracy (no novelty rejection) over samples of seen classes.
    pub closed_set_accuracy: Option<f64>,
    /// Rows are ground truth, columns predictions; index `K` is novel.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_recall: Vec<Option<f64>>,
}

impl MetricsReport {
    /// Builds the report from `(ground truth, prediction, closed-set prediction)` triples.
    /// Ground-truth labels `>= K` all map to the novel class `K`.
    pub fn from_outcomes(outcomes: &[(usize, usize, usize)], class_count: usize) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(invalid("no test samples to evaluate"));
        }
        let n = class_count + 1;
        let mut confusion = vec![vec![0u64; n]; n];
        let (mut seen_total, mut seen_right, mut closed_right) = (0u64, 0u64, 0u64);
        for &(truth, predicted, closed) in outcomes {
            let truth = truth.min(class_count);
            if predicted > class_count {
                return Err(invalid(format!("prediction {predicted} out of range")));
            }
            confusion[truth][predicted] += 1;
            if truth < class_count {
                seen_total += 1;
                seen_right += u64::from(predicted == truth);
                closed_right += u64::from(closed == truth);
            }
        }
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..n).map(|i| confusion[i][i]).sum();
        let per_class_recall: Vec<Option<f64>> = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| ratio(row[i], row.iter().sum()))
            .collect();
        Ok(Self {
            accuracy: trace as f64 / total as f64,
            detection_rate: per_class_recall[class_count],
            seen_accuracy: ratio(seen_right, seen_total),
            closed_set_accuracy: ratio(closed_right, seen_total),
            confusion,
            per_class_recall,
        })
    }

    pub fn class_count(&self) -> usize {
        self.confusion.len() - 1
    }
}

/// Predictions of `mode` on every sample, paired with ground truth.
pub fn predict_all(
    model: &DualBranchModel,
    samples: &[Sample],
    thresholds: &ThresholdSet,
    mode: ScoreMode,
) -> Result<Vec<(usize, usize, usize)>> {
    samples
        .iter()
        .map(|s| {
            let p = infer_with(model, &s.image, thresholds, mode)?;
            Ok((s.class_label as usize, p.label, p.closed_set_label))
        })
        .collect()
}

pub fn evaluate(
    model: &DualBranchModel,
    test: &[Sample],
    thresholds: &ThresholdSet,
) -> Result<MetricsReport> {
    evaluate_with(model, test, thresholds, thresholds.mode)
}

pub fn evaluate_with(
    model: &DualBranchModel,
    test: &[Sample],
    thresholds: &ThresholdSet,
    mode: ScoreMode,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(invalid("test split is empty"));
    }
    MetricsReport::from_outcomes(&predict_all(model, test, thresholds, mode)?, model.class_count())
}

/// Per-class max-logit thresholds; a sample is novel when its max logit falls below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitThresholds {
    pub tau: Vec<f64>,
    pub known_fraction: f64,
}

/// `tau_k` is the `(1 - known_fraction)` quantile of class-k max logits, capped so
/// that at least `known_fraction` of them sit at or above it.
pub fn calibrate_maxlogit(
    model: &BranchModel,
    train: &[Sample],
    known_fraction: f64,
) -> Result<LogitThresholds> {
    let logits = train
        .iter()
        .map(|s| {
            let l = model.logits(&s.image)?;
            Ok((s.class_label as usize, l.max()))
        })
        .collect::<Result<Vec<_>>>()?;
    maxlogit_thresholds_from_scores(&logits, model.class_count(), known_fraction)
}

pub fn maxlogit_thresholds_from_scores(
    scores: &[(usize, f64)],
    class_count: usize,
    known_fraction: f64,
) -> Result<LogitThresholds> {
    if !(known_fraction > 0.0 && known_fraction < 1.0) {
        return Err(invalid(format!("known_fraction {known_fraction} outside (0, 1)")));
    }
    let triples: Vec<_> = scores.iter().map(|&(c, s)| (c, c, s)).collect();
    let groups = group_scores(&triples, class_count, CalibrationGrouping::TrueLabel)?;
    let tau = groups
        .iter()
        .map(|g| lower_coverage_threshold(g, known_fraction))
        .collect::<Result<Vec<_>>>()?;
    Ok(LogitThresholds {
        tau,
        known_fraction,
    })
}

/// MaxLogit decision on precomputed logits.
pub fn maxlogit_decide(logits: &Logits, thresholds: &LogitThresholds) -> Result<Prediction> {
    let k = logits.class_count();
    if thresholds.tau.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: thresholds.tau.len(),
            context: "logit thresholds vs. classes",
        });
    }
    let top = logits.argmax();
    let confidence = logits.max();
    let tau = thresholds.tau[top];
    // softmax, for reporting only
    let shifted: Vec<f64> = logits.values().iter().map(|z| (z - confidence).exp()).collect();
    let z: f64 = shifted.iter().sum();
    Ok(Prediction {
        label: if confidence < tau { k } else { top },
        closed_set_label: top,
        uncertainty: -confidence,
        threshold: tau,
        probabilities: shifted.iter().map(|v| v / z).collect(),
    })
}

pub fn maxlogit_baseline(
    model: &BranchModel,
    image: &ImageTensor,
    thresholds: &LogitThresholds,
) -> Result<Prediction> {
    maxlogit_decide(&model.logits(image)?, thresholds)
}

pub fn evaluate_maxlogit(
    model: &BranchModel,
    test: &[Sample],
    thresholds: &LogitThresholds,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(invalid("test split is empty"));
    }
    let outcomes = test
        .iter()
        .map(|s| {
            let p = maxlogit_baseline(model, &s.image, thresholds)?;
            Ok((s.class_label as usize, p.label, p.closed_set_label))
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_outcomes(&outcomes, model.class_count())
}

/// One point on the 2-simplex with its uncertainty and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRow {
    pub barycentric: [f64; 3],
    pub uncertainty: f64,
    pub label: u32,
}

impl SimplexRow {
    pub fn from_dirichlet(params: &DirichletParams, label: u32) -> Result<Self> {
        if params.class_count() != 3 {
            return Err(Error::UnsupportedDimension(format!(
                "simplex export needs exactly 3 classes, got {}",
                params.class_count()
            )));
        }
        let p = predictive_probabilities(params);
        Ok(Self {
            barycentric: [p[0], p[1], p[2]],
            uncertainty: improved_uncertainty(params),
            label,
        })
    }
}

pub fn export_simplex(model: &DualBranchModel, samples: &[Sample]) -> Result<Vec<SimplexRow>> {
    if model.class_count() != 3 {
        return Err(Error::UnsupportedDimension(format!(
            "simplex export needs exactly 3 classes, got {}",
            model.class_count()
        )));
    }
    samples
        .iter()
        .map(|s| SimplexRow::from_dirichlet(&fused_dirichlet(model, &s.image)?, s.class_label))
        .collect()
}

pub const SIMPLEX_HEADER: &str = "# simplex-v1\np0,p1,p2,u_hat,label";

/// Comma-separated table, one row per sample, preceded by [`SIMPLEX_HEADER`].
pub fn simplex_to_csv(rows: &[SimplexRow]) -> String {
    let mut out = String::from(SIMPLEX_HEADER);
    out.push('\n');
    for r in rows {
        let [a, b, c] = r.barycentric;
        let _ = writeln!(out, "{a:.12},{b:.12},{c:.12},{:.12},{}", r.uncertainty, r.label);
    }
    out
}
