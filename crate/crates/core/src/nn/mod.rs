//! Minimal reverse-mode tensor core and the learned distance model.

pub mod gradcheck;
pub mod head;
pub mod metric;
pub mod model;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use metric::{prepare_inputs, LearnedMetric};
pub use model::{Backbone, ConvLayer, FeatureStats, MetricModel, ModelConfig, ModelGrads};
pub use ops::Precision;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
