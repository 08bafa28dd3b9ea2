use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthKind {
    /// Two interleaved half circles in 2-D.
    TwoMoons,
    /// Gaussian blobs centred on a circle of radius 2 in 2-D.
    Blobs { classes: usize },
}

/// Generates `n` labelled 2-D points. Classes are assigned round-robin before
/// shuffling, so class sizes differ by at most one.
pub fn synth_dataset(kind: SynthKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2 points, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let classes = match kind {
        SynthKind::TwoMoons => 2,
        SynthKind::Blobs { classes } if classes >= 2 => classes,
        SynthKind::Blobs { classes } => {
            return Err(Error::InvalidArgument(format!(
                "blobs need >= 2 classes, got {classes}"
            )))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<([f64; 2], usize)> = (0..n)
        .map(|i| {
            let label = i % classes;
            let centre = match kind {
                SynthKind::TwoMoons => {
                    let t = rng.random_range(0.0..=PI);
                    if label == 0 {
                        [t.cos(), t.sin()]
                    } else {
                        [1.0 - t.cos(), 0.5 - t.sin()]
                    }
                }
                SynthKind::Blobs { .. } => {
                    let a = 2.0 * PI * label as f64 / classes as f64;
                    [2.0 * a.cos(), 2.0 * a.sin()]
                }
            };
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            ([centre[0] + noise * dx, centre[1] + noise * dy], label)
        })
        .collect();
    points.shuffle(&mut rng);
    let inputs = points.iter().flat_map(|(p, _)| *p).collect();
    let labels: Vec<usize> = points.iter().map(|(_, l)| *l).collect();
    Dataset::from_labels(inputs, &labels, 2, classes, Split::Train)
}

/// `n_train + n_test` points from one draw, split in order.
pub fn synth_split(
    kind: SynthKind,
    n_train: usize,
    n_test: usize,
    noise: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let all = synth_dataset(kind, n_train + n_test, noise, seed)?;
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    Ok((
        all.subset(&train)?.with_split(Split::Train),
        all.subset(&test)?.with_split(Split::Test),
    ))
}
