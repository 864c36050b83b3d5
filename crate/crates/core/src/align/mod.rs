//! The data alignment network and the least-squares baseline.

mod adam;
mod checkpoint;
mod config;
mod lst;
mod model;
mod pairs;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{decode_model, encode_model, load_model, save_model};
pub use config::{Activation, DanConfig};
pub use lst::{lst_fit, lst_transform, LstTransform, RIDGE};
pub use model::{dan_backward, dan_loss, stack_trials, DanModel, DanParams, ForwardCache, Mode};
pub use pairs::{make_training_pairs, TrainPair};
pub use train::{
    align_transform, evaluate_loss, fit_alignment, pretrain_then_finetune, split_pairs,
    train_phase, AlignmentModels, DanFit, DanVariant, EpochLoss, PhaseResult, Split,
};
