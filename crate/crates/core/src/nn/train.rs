use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::network::{accumulate_gradient, evaluate_raw, Engine};
use super::spec::NetworkSpec;
use super::weights::WeightVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// `false` marks a coordinate that must stay exactly zero.
    pub mask: Option<Vec<bool>>,
}

impl SgdConfig {
    pub fn new(lr: f64, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            lr,
            epochs,
            batch_size,
            seed,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightVector,
    pub epochs: Vec<EpochMetrics>,
    /// Per-example gradient evaluations consumed.
    pub gradient_evals: u64,
}

/// Minibatch SGD on the mean squared error. Masked coordinates are held at
/// exactly zero after every update.
pub fn sgd_train(
    spec: &NetworkSpec,
    w0: &WeightVector,
    data: &Dataset,
    config: &SgdConfig,
) -> Result<TrainOutcome> {
    w0.check_spec(spec)?;
    if !(config.lr >= 0.0 && config.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {} must be >= 0",
            config.lr
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs and batch_size must be >= 1".into(),
        ));
    }
    let n = spec.num_params();
    if let Some(mask) = &config.mask {
        if mask.len() != n {
            return Err(Error::dims("training mask", n, mask.len()));
        }
    }

    let mut w = w0.to_vec();
    if let Some(mask) = &config.mask {
        apply_mask(&mut w, mask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n];
    let mut history = Vec::with_capacity(config.epochs);
    let mut evals = 0u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let engine = Engine::new(spec, &w);
            let mut cache = engine.cache();
            let batch_loss = accumulate_gradient(&engine, &mut cache, data, batch, &mut grad)
                .map_err(|_| Error::TrainingDiverged {
                    epoch,
                    loss: f64::NAN,
                })?;
            evals += batch.len() as u64;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= config.lr * gi;
            }
            if let Some(mask) = &config.mask {
                apply_mask(&mut w, mask);
            }
        }
        let eval = evaluate_raw(spec, &w, data).map_err(|_| Error::TrainingDiverged {
            epoch,
            loss: f64::NAN,
        })?;
        if !eval.loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: eval.loss,
            });
        }
        history.push(EpochMetrics {
            epoch,
            loss: eval.loss,
            accuracy: eval.accuracy,
        });
    }

    Ok(TrainOutcome {
        weights: w0.with_values(w)?,
        epochs: history,
        gradient_evals: evals,
    })
}

pub(crate) fn apply_mask(w: &mut [f64], mask: &[bool]) {
    for (wi, &keep) in w.iter_mut().zip(mask) {
        if !keep {
            *wi = 0.0;
        }
    }
}
