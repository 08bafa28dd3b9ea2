use serde::{Deserialize, Serialize};

use super::sparsity::SparsityPlane;
use crate::error::{Error, Result};
use crate::geometry::{segment_record, BatchPolicy, CheckpointRecord, Path};
use crate::nn::{
    apply_mask, evaluate_raw, sgd_train, Dataset, NetworkSpec, SgdConfig, WeightVector,
};
use crate::search::DirectionField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneTrainConfig {
    /// Plane groups (units for by-unit planes, coordinates otherwise) zeroed per cycle.
    pub units_per_cycle: usize,
    pub epochs_per_cycle: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    /// One checkpoint per cycle after the start.
    pub path: Path,
    pub cycles: usize,
    /// SGD epochs over the training set, summed over cycles.
    pub epochs: usize,
    /// Per-example gradient evaluations, summed over cycles.
    pub gradient_evals: u64,
}

/// Iterative prune and fine-tune: zero the next `units_per_cycle` groups of
/// the plane, then train with the accumulated mask, until the plane is reached.
///
/// Path segments are measured with `metric_batch` on `train`; checkpoints are
/// evaluated on `eval_data` when given.
pub fn prune_train_baseline(
    spec: &NetworkSpec,
    w: &WeightVector,
    plane: &SparsityPlane,
    train: &Dataset,
    eval_data: Option<&Dataset>,
    config: &PruneTrainConfig,
    metric_batch: &BatchPolicy,
) -> Result<BaselineOutcome> {
    w.check_spec(spec)?;
    if plane.spec_id() != spec.id() {
        return Err(Error::SpecMismatch(
            "plane was built for another network".into(),
        ));
    }
    if config.units_per_cycle == 0 {
        return Err(Error::InvalidArgument(
            "units_per_cycle must be >= 1".into(),
        ));
    }
    let mut keep = vec![true; spec.num_params()];
    let mut current = w.to_vec();
    let mut points = vec![current.clone()];
    let mut epochs = 0;
    let mut gradient_evals = 0u64;

    for (cycle, chunk) in plane.groups().chunks(config.units_per_cycle).enumerate() {
        for &i in chunk.iter().flatten() {
            keep[i] = false;
        }
        apply_mask(&mut current, &keep);
        if config.epochs_per_cycle > 0 {
            let sgd = SgdConfig::new(
                config.lr,
                config.epochs_per_cycle,
                config.batch_size,
                config.seed.wrapping_add(cycle as u64),
            )
            .with_mask(keep.clone());
            let out = sgd_train(spec, &w.with_values(current)?, train, &sgd).map_err(|e| {
                Error::Cycle {
                    cycle,
                    source: Box::new(e),
                }
            })?;
            epochs += config.epochs_per_cycle;
            gradient_evals += out.gradient_evals;
            current = out.weights.into_vec();
        }
        points.push(current.clone());
    }

    let mut segments = Vec::with_capacity(points.len() - 1);
    for (j, pair) in points.windows(2).enumerate() {
        segments.push(segment_record(
            spec,
            &pair[0],
            &pair[1],
            train,
            &metric_batch.indices(j, train.len()),
        )?);
    }
    let mut records = Vec::with_capacity(points.len());
    for p in &points {
        records.push(CheckpointRecord {
            distance_to_goal: plane.field().distance(p),
            eval: eval_data.map(|d| evaluate_raw(spec, p, d)).transpose()?,
        });
    }
    let cycles = points.len() - 1;
    let checkpoints = points
        .into_iter()
        .map(|p| w.with_values(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineOutcome {
        path: Path::new(spec.clone(), checkpoints, segments, records)?,
        cycles,
        epochs,
        gradient_evals,
    })
}
