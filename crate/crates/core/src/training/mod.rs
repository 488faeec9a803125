//! Student and autoencoder training against a frozen teacher.

mod augment;
mod config;
mod losses;
mod trainer;

pub use augment::{apply_augmentation, augment, prepare_penalty_image, Augmentation};
pub use config::TrainConfig;
pub use losses::{
    hard_feature_loss, mse_pair, penalty_loss, step_losses, HardLoss, LossReport, StepGrads,
    StepOutputs,
};
pub use trainer::{
    fit_map_normalization, quantile_pair, split_holdout, train, train_step, LossHistory,
    TrainOutput, TrainState,
};
