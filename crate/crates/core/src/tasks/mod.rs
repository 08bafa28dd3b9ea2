//! Applications of the walker: sparsification onto a hyperplane of sparse
//! networks, its prune-train baseline, chained configuration transitions,
//! and the walk between two networks trained on different tasks.

mod baseline;
mod forgetting;
mod sparsity;
mod transition;

pub use baseline::{prune_train_baseline, BaselineOutcome, PruneTrainConfig};
pub use forgetting::{
    evaluate_dual_task, forgetting_direction, forgetting_walk, DualTaskRow, DualTaskTable,
    ManifoldTask, TaskData, TwoTaskSetup,
};
pub use sparsity::{
    make_sparsity_plane, project_onto_plane, sparsity_direction, SelectionRule, SparsityPlane,
};
pub use transition::{restoration_values, transition_sequence, TransitionOutcome};
