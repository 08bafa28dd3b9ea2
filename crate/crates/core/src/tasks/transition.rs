use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::sparsity::SparsityPlane;
use crate::error::{Error, Result};
use crate::nn::{Dataset, NetworkSpec, WeightVector};
use crate::search::{walk, PinnedCoordinates, WalkConfig, WalkOutcome};

#[derive(Debug, Clone)]
pub struct TransitionOutcome {
    /// One walk per completed or attempted leg, in order.
    pub legs: Vec<WalkOutcome>,
    /// The goal of each attempted leg.
    pub goals: Vec<PinnedCoordinates>,
    /// `false` when a leg ran out of steps; later legs were not attempted.
    pub completed: bool,
}

/// Fresh values for `coords`: `0.1 * rms * N(0, 1)`, where `rms` is the
/// root-mean-square of the nonzero weights of the coordinate's layer.
pub fn restoration_values(
    spec: &NetworkSpec,
    w: &[f64],
    coords: &[usize],
    seed: u64,
) -> Vec<(usize, f64)> {
    let layers = spec.layers();
    let rms: Vec<f64> = layers
        .iter()
        .map(|l| {
            let nz: Vec<f64> = w[l.weight_range()]
                .iter()
                .copied()
                .filter(|&x| x != 0.0)
                .collect();
            if nz.is_empty() {
                (2.0 / (l.fan_in + l.fan_out) as f64).sqrt()
            } else {
                (nz.iter().map(|x| x * x).sum::<f64>() / nz.len() as f64).sqrt()
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = coords.to_vec();
    sorted.sort_unstable();
    sorted
        .into_iter()
        .map(|i| {
            let l = layers
                .iter()
                .position(|l| l.weight_range().contains(&i) || l.bias_range().contains(&i))
                .expect("coordinate inside the network");
            let z: f64 = rng.sample(StandardNormal);
            (i, 0.1 * rms[l] * z)
        })
        .collect()
}

/// Chains walks through `planes`, each leg starting where the last ended.
/// Coordinates zeroed by the previous plane but kept by the next one are
/// restored toward fresh values from [`restoration_values`].
pub fn transition_sequence(
    spec: &NetworkSpec,
    w: &WeightVector,
    planes: &[SparsityPlane],
    config: &WalkConfig,
    metric_data: &Dataset,
    eval_data: Option<&Dataset>,
    seed: u64,
) -> Result<TransitionOutcome> {
    w.check_spec(spec)?;
    if planes.is_empty() {
        return Err(Error::InvalidArgument(
            "transition sequence needs at least one plane".into(),
        ));
    }
    if let Some(p) = planes.iter().find(|p| p.spec_id() != spec.id()) {
        return Err(Error::SpecMismatch(format!(
            "plane bound to {}",
            p.spec_id()
        )));
    }
    let mut cfg = config.clone();
    if eval_data.is_some() {
        cfg.eval_every = 1;
    }
    let mut current = w.clone();
    let mut previous: Option<&SparsityPlane> = None;
    let mut legs = Vec::with_capacity(planes.len());
    let mut goals = Vec::with_capacity(planes.len());
    for (k, plane) in planes.iter().enumerate() {
        let mut pinned: Vec<(usize, f64)> = plane.field().pinned().to_vec();
        if let Some(prev) = previous {
            let restored: Vec<usize> = (0..plane.mask().len())
                .filter(|&i| plane.mask()[i] && !prev.mask()[i])
                .collect();
            pinned.extend(restoration_values(
                spec,
                &current,
                &restored,
                seed.wrapping_add(k as u64),
            ));
        }
        let goal = PinnedCoordinates::new(spec.num_params(), pinned)?;
        let leg = walk(spec, &current, &goal, &cfg, metric_data, eval_data)?;
        let converged = leg.converged;
        current = leg.path.last().clone();
        legs.push(leg);
        goals.push(goal);
        if !converged {
            return Ok(TransitionOutcome {
                legs,
                goals,
                completed: false,
            });
        }
        previous = Some(plane);
    }
    Ok(TransitionOutcome {
        legs,
        goals,
        completed: true,
    })
}
