//! Evidential training: the EDL objective, an AvU calibration term, a small
//! feed-forward branch network and the SGD loop that fits it.

mod loss;
mod network;
mod train;

pub use loss::{
    avu_regularizer, avu_regularizer_derivative, edl_loss, edl_loss_evidence_gradient,
    total_loss_and_evidence_gradient, OneHotLabel, AVU_EPSILON,
};
pub use network::{BranchNetwork, Gradients};
pub use train::{train_branch, train_branch_with_history, TrainConfig, TrainOutcome, TrainingView};
