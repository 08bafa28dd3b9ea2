//! Datasets, persistence and run configuration.

mod config;
mod files;
mod idx;
mod report;
mod synth;

pub use config::{
    sha256_hex, BaselineSection, DataSource, MergeSection, NetworkSection, RuleName, RunConfig,
    SparsifySection, TaskKind, TrainSection, SCHEMA_VERSION,
};
pub use files::{
    decode_checkpoint, decode_path, encode_checkpoint, encode_path, load_checkpoint, load_path,
    path_file_size, save_checkpoint, save_path, write_atomic, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
    PATH_MAGIC, PATH_VERSION,
};
pub use idx::{
    downsample, encode_idx_images, encode_idx_labels, load_idx, parse_idx, IdxOptions,
    IMAGES_MAGIC, LABELS_MAGIC, NUM_CLASSES,
};
pub use report::{dual_task_csv, epochs_csv, path_csv, write_csv, write_summary};
pub use synth::{synth_dataset, synth_split, SynthKind};
