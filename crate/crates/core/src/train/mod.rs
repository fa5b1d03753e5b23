//! Datasets, the training loop, evaluation, prediction and run directories.

mod dataset;
mod fit;
mod metrics;
mod predict;
pub mod run;

pub use dataset::{cache_path, Dataset, Sample, Split};
pub use fit::{evaluate, train, train_with, BestModel, EvalRecord, TrainConfig, TrainOutcome};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use predict::{
    colored_mesh, export_colored_mesh, predict, probability_color, ColorSource, Prediction, NEGATIVE_COLOR,
    POSITIVE_COLOR,
};
