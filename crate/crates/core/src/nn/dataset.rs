use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Inputs in R^k with vector targets in R^m, stored row-major.
///
/// Classification targets are one-hot, so the squared-error loss and the
/// functional distance live in the same output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    target_dim: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        input_dim: usize,
        target_dim: usize,
        split: Split,
    ) -> Result<Self> {
        if input_dim == 0 || target_dim == 0 {
            return Err(Error::InvalidArgument(
                "dataset dimensions must be positive".into(),
            ));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no examples".into()));
        }
        if !inputs.len().is_multiple_of(input_dim) {
            return Err(Error::dims(
                "dataset inputs",
                input_dim,
                inputs.len() % input_dim,
            ));
        }
        let len = inputs.len() / input_dim;
        if targets.len() != len * target_dim {
            return Err(Error::dims(
                "dataset targets",
                len * target_dim,
                targets.len(),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            input_dim,
            target_dim,
            split,
        })
    }

    /// Build from integer class labels, one-hot encoded to `classes` outputs.
    pub fn from_labels(
        inputs: Vec<f64>,
        labels: &[usize],
        input_dim: usize,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        let mut targets = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::InvalidArgument(format!(
                    "label {l} out of range for {classes} classes"
                )));
            }
            targets[i * classes + l] = 1.0;
        }
        Self::new(inputs, targets, input_dim, classes, split)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        argmax(self.target(i))
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut targets = Vec::with_capacity(indices.len() * self.target_dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "example index {i} out of range ({} examples)",
                    self.len()
                )));
            }
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
        }
        Self::new(inputs, targets, self.input_dim, self.target_dim, self.split)
    }

    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Count of examples per argmax class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.target_dim];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
