//! Loss formulations, the fixed loss weighting, Adam and the training loop.
//!
//! The three modes differ only in which weighted terms enter the objective:
//! `nn` fits the data, `dtnn` also matches the time derivative to the vector
//! field at the labelled states, `pinn` additionally penalises the residual
//! of the swing equations at collocation points evaluated on the network's
//! own prediction.

mod adam;
mod train;
mod weights;

pub use crate::mlp::{loss_terms, LossTerms};
pub use adam::Adam;
pub use train::{
    read_epochs_csv, train, train_with_weights, weights_for, EpochRecord, StopReason, TrainOutcome, TrainReport,
    TrainSettings, TrainingData, DEFAULT_N_F,
};
pub use weights::{total_loss, LossMode, LossWeightTable};
