//! Declarative run configuration, stored as TOML.
//!
//! ```toml
//! schema_version = 1
//! task = "sparsify"            # train | sparsify | merge | evaluate
//! seed = 7
//! output_dir = "runs/moons-50"
//! checkpoint = "runs/moons/network.gwck"
//!
//! [data]
//! kind = "two-moons"
//! n_train = 800
//! n_test = 200
//! noise = 0.1
//!
//! [sparsify]
//! level = 0.5
//! rule = "by-unit"
//!
//! [walk]
//! beta = 10.0
//! radius = 0.1
//! ```
//!
//! Unknown keys are rejected. A `[provenance]` table maps each referenced
//! input file to its SHA-256; when present, the files must still match.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::files::read_file;
use super::idx::{load_idx, IdxOptions};
use super::synth::{synth_split, SynthKind};
use crate::error::{Error, Result};
use crate::nn::{Activation, Dataset, NetworkSpec, OutputActivation, Split};
use crate::search::WalkConfig;
use crate::tasks::{ManifoldTask, SelectionRule};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Train,
    Sparsify,
    Merge,
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    TwoMoons {
        n_train: usize,
        n_test: usize,
        noise: f64,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Blobs {
        classes: usize,
        n_train: usize,
        n_test: usize,
        noise: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_side")]
        downsample_to: usize,
        #[serde(default = "yes")]
        normalize: bool,
        /// Keep only the first examples of each split.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
}

fn default_side() -> usize {
    8
}

fn yes() -> bool {
    true
}

impl DataSource {
    /// `(train, test)`.
    pub fn load(&self, run_seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::TwoMoons {
                n_train,
                n_test,
                noise,
                seed,
            } => synth_split(
                SynthKind::TwoMoons,
                *n_train,
                *n_test,
                *noise,
                seed.unwrap_or(run_seed),
            ),
            DataSource::Blobs {
                classes,
                n_train,
                n_test,
                noise,
                seed,
            } => synth_split(
                SynthKind::Blobs { classes: *classes },
                *n_train,
                *n_test,
                *noise,
                seed.unwrap_or(run_seed),
            ),
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                downsample_to,
                normalize,
                train_limit,
                test_limit,
            } => {
                let opts = IdxOptions {
                    downsample_to: *downsample_to,
                    normalize: *normalize,
                };
                let limit = |d: Dataset, l: &Option<usize>| match l {
                    Some(l) if *l < d.len() => d.head(*l),
                    _ => Ok(d),
                };
                let train = limit(
                    load_idx(train_images, train_labels, opts, Split::Train)?,
                    train_limit,
                )?;
                let test = limit(
                    load_idx(test_images, test_labels, opts, Split::Test)?,
                    test_limit,
                )?;
                Ok((train, test))
            }
        }
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                vec![train_images, train_labels, test_images, test_labels]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub layers: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub output: OutputActivation,
}

impl NetworkSection {
    pub fn spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(
            self.layers.clone(),
            vec![self.activation; self.layers.len().saturating_sub(2)],
            self.output,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Magnitude,
    ByUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub units_per_cycle: usize,
    pub epochs_per_cycle: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsifySection {
    pub level: f64,
    pub rule: RuleName,
    #[serde(default = "yes")]
    pub exempt_biases: bool,
    /// Run one walk per beta and keep the least-energy path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
}

impl SparsifySection {
    pub fn selection_rule(&self) -> SelectionRule {
        match self.rule {
            RuleName::Magnitude => SelectionRule::Magnitude {
                exempt_biases: self.exempt_biases,
            },
            RuleName::ByUnit => SelectionRule::ByUnit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSection {
    #[serde(default)]
    pub manifold: ManifoldTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Start network (sparsify), task-1 network (merge) or network to evaluate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Task-2 network (merge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint2: Option<PathBuf>,
    /// Stored path to re-evaluate (evaluate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    /// Task-2 data (merge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data2: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify: Option<SparsifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge: Option<MergeSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunConfig {
    pub fn new(task: TaskKind, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            seed: None,
            output_dir: output_dir.into(),
            checkpoint: None,
            checkpoint2: None,
            path_file: None,
            network: None,
            data: None,
            data2: None,
            train: None,
            walk: None,
            sparsify: None,
            merge: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed given; unseeded runs are not allowed".into()))
    }

    /// Input files keyed by their role.
    pub fn referenced_files(&self) -> Vec<(String, PathBuf)> {
        let mut out = Vec::new();
        for (key, p) in [
            ("checkpoint", &self.checkpoint),
            ("checkpoint2", &self.checkpoint2),
            ("path_file", &self.path_file),
        ] {
            if let Some(p) = p {
                out.push((key.to_string(), p.clone()));
            }
        }
        for (key, d) in [("data", &self.data), ("data2", &self.data2)] {
            if let Some(d) = d {
                for (i, p) in d.files().into_iter().enumerate() {
                    out.push((format!("{key}.{i}"), p.to_path_buf()));
                }
            }
        }
        out
    }

    fn require<T>(&self, v: &Option<T>, key: &str) -> Result<()> {
        if v.is_none() {
            return Err(Error::Config(format!(
                "task {:?} requires `{key}`",
                self.task
            )));
        }
        Ok(())
    }

    /// Checks the schema version, seed, per-task required keys, that every
    /// referenced file exists, and recorded provenance hashes.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.seed()?;
        match self.task {
            TaskKind::Train => {
                self.require(&self.network, "network")?;
                self.require(&self.data, "data")?;
                self.require(&self.train, "train")?;
            }
            TaskKind::Sparsify => {
                self.require(&self.checkpoint, "checkpoint")?;
                self.require(&self.data, "data")?;
                self.require(&self.sparsify, "sparsify")?;
            }
            TaskKind::Merge => {
                self.require(&self.checkpoint, "checkpoint")?;
                self.require(&self.checkpoint2, "checkpoint2")?;
                self.require(&self.data, "data")?;
                self.require(&self.data2, "data2")?;
            }
            TaskKind::Evaluate => {
                self.require(&self.path_file, "path_file")?;
            }
        }
        for (_, p) in self.referenced_files() {
            if !p.is_file() {
                return Err(Error::MissingFile(p));
            }
        }
        for (key, expected) in &self.provenance {
            let Some((_, p)) = self.referenced_files().into_iter().find(|(k, _)| k == key) else {
                return Err(Error::Config(format!(
                    "provenance entry `{key}` names no input"
                )));
            };
            let found = sha256_hex(&read_file(&p)?);
            if &found != expected {
                return Err(Error::Config(format!(
                    "{} changed since the run: sha256 {found}, recorded {expected}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Records the SHA-256 of every referenced file.
    pub fn with_provenance(mut self) -> Result<Self> {
        self.provenance.clear();
        for (key, p) in self.referenced_files() {
            self.provenance.insert(key, sha256_hex(&read_file(&p)?));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "schema_version = 1\ntask = \"train\"\nseed = 1\noutput_dir = \"x\"\nlearning_rate = 0.1\n";
        assert!(matches!(
            RunConfig::from_toml_str(text),
            Err(Error::Config(_))
        ));
        let nested = "schema_version = 1\ntask = \"train\"\nseed = 1\noutput_dir = \"x\"\n[walk]\nbetta = 1.0\n";
        assert!(RunConfig::from_toml_str(nested).is_err());
        let data = "schema_version = 1\ntask = \"train\"\nseed = 1\noutput_dir = \"x\"\n[data]\nkind = \"two-moons\"\nn_train = 1\nn_test = 1\nnoise = 0.0\nnoize = 1\n";
        assert!(RunConfig::from_toml_str(data).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::new(TaskKind::Train, "out");
        c.seed = Some(3);
        c.network = Some(NetworkSection {
            layers: vec![2, 16, 2],
            activation: Activation::Tanh,
            output: OutputActivation::Identity,
        });
        c.data = Some(DataSource::TwoMoons {
            n_train: 10,
            n_test: 5,
            noise: 0.1,
            seed: None,
        });
        c.train = Some(TrainSection {
            lr: 0.1,
            epochs: 3,
            batch_size: 8,
        });
        c.walk = Some(WalkConfig::default());
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        let mut c = RunConfig::new(TaskKind::Evaluate, "out");
        c.path_file = Some("p".into());
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("seed")));
    }
}
