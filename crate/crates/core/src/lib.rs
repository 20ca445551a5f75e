//! Dual-branch evidential open-set classification.
//!
//! Two small networks look at an image in the spatial and in the frequency
//! domain. Each turns its logits into Dirichlet evidence; the two opinions
//! are merged with Dempster's rule, and the fused Dirichlet drives both the
//! closed-set prediction and an uncertainty score. A per-class threshold on
//! that score, calibrated on training data, flags samples of categories the
//! model has never seen.

pub mod artifact;
pub mod edl;
pub mod error;
pub mod evidence;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod openset;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
pub use evidence::{
    dirichlet_from_evidence, improved_uncertainty, opinion_from_evidence, predicted_class,
    predictive_probabilities, softplus_evidence, standard_uncertainty, DirichletParams, Evidence,
    EvidenceFunction, Logits, Opinion,
};
pub use fusion::{dempster_combine, dirichlet_from_fused, FusedOpinion};
pub use openset::{DualBranchModel, MetricsReport, Prediction, ScoreMode, ThresholdSet};
pub use spectrum::{fft2d, fftshift, frequency_map, FrequencyMap, ImageTensor};
pub use synth::{build_protocol, Category, ProtocolConfig, Sample, SynthDataset};
