use serde::{Deserialize, Serialize};

use super::field::{DirectionField, Heading};
use super::tangent::{solve_tangent_step, SolverOptions, TangentStepProblem, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::geometry::{
    metric_raw, segment_record, BatchPolicy, CheckpointRecord, Path, SegmentRecord,
};
use crate::nn::{evaluate_raw, norm, Dataset, NetworkSpec, WeightVector};

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_BETA_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// A constant `beta`, or one value per step with the last value repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSchedule {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl BetaSchedule {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            BetaSchedule::Constant(b) => *b,
            BetaSchedule::PerStep(list) => list[step.min(list.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            BetaSchedule::Constant(b) => std::slice::from_ref(b),
            BetaSchedule::PerStep(list) => list,
        };
        if values.is_empty() {
            return Err(Error::InvalidArgument("beta schedule is empty".into()));
        }
        if let Some(b) = values.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {b}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub beta: BetaSchedule,
    pub radius: f64,
    pub max_steps: usize,
    /// Distance-to-goal stop threshold; `None` means `1e-3 * |w_start|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub batch: BatchPolicy,
    /// Evaluate every `eval_every`-th checkpoint (and always the endpoints);
    /// 0 evaluates the endpoints only.
    pub eval_every: usize,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            beta: BetaSchedule::Constant(DEFAULT_BETA),
            radius: DEFAULT_RADIUS,
            max_steps: 1000,
            epsilon: None,
            batch: BatchPolicy::default(),
            eval_every: 1,
            solver: SolverOptions::default(),
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius must be > 0, got {}",
                self.radius
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "epsilon must be > 0, got {eps}"
                )));
            }
        }
        if self.batch.size() == 0 {
            return Err(Error::InvalidArgument(
                "metric batch size must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// One copy of `self` per constant `beta`.
    pub fn beta_grid(&self, betas: &[f64]) -> Vec<WalkConfig> {
        betas
            .iter()
            .map(|&b| WalkConfig {
                beta: BetaSchedule::Constant(b),
                ..self.clone()
            })
            .collect()
    }

    pub fn resolved_epsilon(&self, w_start: &[f64]) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let e = 1e-3 * norm(w_start);
            if e > 0.0 {
                e
            } else {
                1e-3
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub beta: f64,
    pub radius: f64,
    pub lambda: f64,
    pub step_norm: f64,
    /// `v^T theta`.
    pub progress: f64,
    pub kkt_residual: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct WalkOutcome {
    pub path: Path,
    pub converged: bool,
    /// Tangent steps taken, excluding the finishing projection.
    pub steps: usize,
    /// Per-example Jacobian rows computed to build step metrics. One row costs
    /// one backward pass, the same as one per-example gradient in SGD.
    pub work: u64,
    pub epsilon: f64,
    pub step_info: Vec<StepInfo>,
}

/// Walks from `w_start` toward the goal of `field`, one trust-region tangent
/// step per iteration. Metrics are built on `metric_data`; checkpoints are
/// evaluated on `eval_data` when given.
pub fn walk(
    spec: &NetworkSpec,
    w_start: &WeightVector,
    field: &dyn DirectionField,
    config: &WalkConfig,
    metric_data: &Dataset,
    eval_data: Option<&Dataset>,
) -> Result<WalkOutcome> {
    w_start.check_spec(spec)?;
    config.validate()?;
    let n = spec.num_params();
    if field.dim() != n {
        return Err(Error::dims("direction field", n, field.dim()));
    }
    if metric_data.input_dim() != spec.input_dim() {
        return Err(Error::dims(
            "metric data input",
            spec.input_dim(),
            metric_data.input_dim(),
        ));
    }
    let epsilon = config.resolved_epsilon(w_start);
    let m = spec.output_dim() as u64;

    let mut w = w_start.to_vec();
    let mut points = vec![w.clone()];
    let mut segments: Vec<SegmentRecord> = Vec::new();
    let mut step_info = Vec::new();
    let mut work = 0u64;
    let mut converged = false;

    loop {
        let k = segments.len();
        let (direction, distance) = match field.heading(&w) {
            Heading::Arrived => {
                converged = true;
                break;
            }
            Heading::Toward {
                direction,
                distance,
            } => (direction, distance),
        };
        if distance <= epsilon {
            let finished = field.finish(&w);
            let idx = config.batch.indices(k, metric_data.len());
            segments.push(segment_record(spec, &w, &finished, metric_data, &idx)?);
            w = finished;
            points.push(w.clone());
            converged = true;
            break;
        }
        if step_info.len() == config.max_steps {
            break;
        }

        let wrap = |e: Error| Error::WalkStep {
            step: k,
            source: Box::new(e),
        };
        let idx = config.batch.indices(k, metric_data.len());
        let g = metric_raw(spec, &w, metric_data, &idx).map_err(wrap)?;
        work += idx.len() as u64 * m;
        let beta = config.beta.at(k);
        // Never aim past the goal: the last steps shrink to the remaining distance.
        let radius = config.radius.min(distance);
        let problem = TangentStepProblem {
            metric: &g,
            goal: &direction,
            beta,
            radius,
        };
        let step = solve_tangent_step(&problem, &config.solver).map_err(wrap)?;
        let next: Vec<f64> = w.iter().zip(&step.theta).map(|(a, t)| a + t).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(wrap(Error::NonFinite("walk step")));
        }
        segments.push(segment_record(spec, &w, &next, metric_data, &idx).map_err(wrap)?);
        step_info.push(StepInfo {
            beta,
            radius,
            lambda: step.lambda,
            step_norm: norm(&step.theta),
            progress: step.theta.iter().zip(&direction).map(|(t, v)| t * v).sum(),
            kkt_residual: step.kkt_residual,
            cg_iterations: step.cg_iterations,
        });
        w = next;
        points.push(w.clone());
    }

    let last = points.len() - 1;
    let mut records = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let due = i == 0 || i == last || (config.eval_every > 0 && i % config.eval_every == 0);
        let eval = match eval_data {
            Some(d) if due => Some(evaluate_raw(spec, p, d)?),
            _ => None,
        };
        records.push(CheckpointRecord {
            distance_to_goal: field.distance(p),
            eval,
        });
    }
    let checkpoints = points
        .into_iter()
        .map(|p| w_start.with_values(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(WalkOutcome {
        path: Path::new(spec.clone(), checkpoints, segments, records)?,
        converged,
        steps: step_info.len(),
        work,
        epsilon,
        step_info,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub index: usize,
    pub converged: bool,
    pub energy: f64,
    pub length: f64,
    pub steps: usize,
    pub work: u64,
}

#[derive(Debug, Clone)]
pub struct BestOfWalks {
    pub best: WalkOutcome,
    pub best_index: usize,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Work summed over every variant.
    pub total_work: u64,
}

/// Runs every variant from the same start toward the same goal and keeps the
/// converged path with the least energy (then length, then variant index).
pub fn best_of_walks(
    spec: &NetworkSpec,
    w_start: &WeightVector,
    field: &dyn DirectionField,
    variants: &[WalkConfig],
    metric_data: &Dataset,
    eval_data: Option<&Dataset>,
) -> Result<BestOfWalks> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument(
            "best_of_walks needs at least one variant".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(variants.len());
    let mut diagnostics = Vec::new();
    for (i, cfg) in variants.iter().enumerate() {
        match walk(spec, w_start, field, cfg, metric_data, eval_data) {
            Ok(o) => {
                if !o.converged {
                    diagnostics.push(format!(
                        "variant {i}: not converged after {} steps (distance {:e})",
                        o.steps,
                        o.path
                            .records()
                            .last()
                            .map_or(f64::NAN, |r| r.distance_to_goal)
                    ));
                }
                outcomes.push(Some(o));
            }
            Err(e) => {
                diagnostics.push(format!("variant {i}: {e}"));
                outcomes.push(None);
            }
        }
    }
    let leaderboard: Vec<LeaderboardEntry> = outcomes
        .iter()
        .enumerate()
        .map(|(index, o)| match o {
            Some(o) => LeaderboardEntry {
                index,
                converged: o.converged,
                energy: o.path.cumulative_energy(),
                length: o.path.cumulative_length(),
                steps: o.steps,
                work: o.work,
            },
            None => LeaderboardEntry {
                index,
                converged: false,
                energy: f64::NAN,
                length: f64::NAN,
                steps: 0,
                work: 0,
            },
        })
        .collect();
    let total_work = leaderboard.iter().map(|e| e.work).sum();
    let best_index = leaderboard
        .iter()
        .filter(|e| e.converged)
        .min_by(|a, b| {
            a.energy
                .total_cmp(&b.energy)
                .then(a.length.total_cmp(&b.length))
                .then(a.index.cmp(&b.index))
        })
        .map(|e| e.index)
        .ok_or(Error::NoConvergedPath { diagnostics })?;
    let best = outcomes
        .swap_remove(best_index)
        .expect("converged variant has an outcome");
    Ok(BestOfWalks {
        best,
        best_index,
        leaderboard,
        total_work,
    })
}
