use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualev_core::openset::ScoreMode;
use dualev_core::synth::Split;

#[derive(Debug, Parser)]
#[command(
    name = "dualev",
    version,
    about = "Dual-branch evidential open-set classification experiments",
    after_help = "Exit codes: 0 success, 1 internal, 2 validation, 3 dependency, \
                  4 numerical failure, 5 artifact format/version, 6 i/o."
)]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Use artifacts even when their configuration hashes disagree.
    #[arg(long, global = true)]
    pub allow_mismatch: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/test splits.
    GenData,
    /// Train both branches on the train split and write a checkpoint.
    Train,
    /// Calibrate per-class thresholds on the train split.
    Calibrate(ScorerArgs),
    /// Evaluate on the test split and write a metrics report.
    Evaluate(ScorerArgs),
    /// Classify one image and print the decision.
    Infer(InferArgs),
    /// Write fused predictive probabilities as barycentric coordinates (3 classes only).
    ExportSimplex(SimplexArgs),
    /// Evaluate over the known fractions 0.85, 0.90, 0.95, 0.97 and 0.99.
    SweepThreshold(ScorerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    SpatialOnly,
    FrequencyOnly,
    FusedStandardU,
    Full,
}

impl From<Ablation> for ScoreMode {
    fn from(a: Ablation) -> Self {
        match a {
            Ablation::SpatialOnly => ScoreMode::SpatialOnly,
            Ablation::FrequencyOnly => ScoreMode::FrequencyOnly,
            Ablation::FusedStandardU => ScoreMode::FusedStandardU,
            Ablation::Full => ScoreMode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Maxlogit,
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct ScorerArgs {
    /// Score with a reduced variant of the model.
    #[arg(long)]
    pub ablate: Option<Ablation>,

    /// Score with a baseline instead of evidential uncertainty.
    #[arg(long, conflicts_with = "ablate")]
    pub baseline: Option<Baseline>,
}

/// How a sample is scored for novelty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    Uncertainty(ScoreMode),
    MaxLogit,
}

impl Scorer {
    /// Suffix for artifact file names; `None` for the full model.
    pub fn variant(self) -> Option<&'static str> {
        match self {
            Self::Uncertainty(ScoreMode::Full) => None,
            Self::Uncertainty(m) => Some(m.name()),
            Self::MaxLogit => Some("maxlogit"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Uncertainty(m) => m.name(),
            Self::MaxLogit => "maxlogit",
        }
    }

    pub fn flags(self) -> String {
        match self {
            Self::Uncertainty(ScoreMode::Full) => String::new(),
            Self::Uncertainty(m) => format!(" --ablate {}", m.name()),
            Self::MaxLogit => " --baseline maxlogit".into(),
        }
    }
}

impl From<ScorerArgs> for Scorer {
    fn from(a: ScorerArgs) -> Self {
        match (a.baseline, a.ablate) {
            (Some(Baseline::Maxlogit), _) => Scorer::MaxLogit,
            (None, Some(m)) => Scorer::Uncertainty(m.into()),
            (None, None) => Scorer::Uncertainty(ScoreMode::Full),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub split: Split,
    pub index: usize,
}

impl FromStr for SampleRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (split, index) = s
            .split_once(':')
            .ok_or_else(|| format!("expected SPLIT:INDEX, got {s:?}"))?;
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(format!("unknown split {other:?} (use train or test)")),
        };
        let index = index.parse().map_err(|e| format!("bad index {index:?}: {e}"))?;
        Ok(Self { split, index })
    }
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["image", "sample"])))]
pub struct InferArgs {
    #[command(flatten)]
    pub scorer: ScorerArgs,

    /// Grayscale PNG whose size matches the training images.
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,

    /// A sample of the generated dataset, as SPLIT:INDEX (e.g. test:17).
    #[arg(long, value_name = "SPLIT:INDEX")]
    pub sample: Option<SampleRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SimplexArgs {
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}
