//! Dense feed-forward networks: architecture, weights, data, evaluation and training.

mod dataset;
mod network;
mod spec;
mod train;
mod weights;

pub use dataset::{argmax, Dataset, Split};
pub use network::{forward, jacobian, loss_and_accuracy, Evaluation, JacobianBatch};
pub use spec::{Activation, LayerLayout, NetworkSpec, OutputActivation, SpecId, FLATTENING_ORDER};
pub use train::{sgd_train, EpochMetrics, SgdConfig, TrainOutcome};
pub use weights::WeightVector;

pub(crate) use network::{evaluate_raw, jacobian_raw};
pub(crate) use train::apply_mask;
pub(crate) use weights::{axpy, dot, norm};
