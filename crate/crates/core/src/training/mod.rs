//! Correlation loss, augmentation and the training loop.

pub mod adam;
pub mod augment;
pub mod loss;
pub mod trainer;

pub use adam::Adam;
pub use augment::{augment_sequence, Augmentation};
pub use loss::{correlation_loss, sliced_correlation_loss, LossValue, SliceOptions, SlicedLoss};
pub use trainer::{
    normalization_samples, sequence_distances, sequence_gradient, train, train_with_progress, validate, LogRow, TrainConfig, TrainLog, TrainOutcome,
    TrainSequence,
};
