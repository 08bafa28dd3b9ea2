use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{evaluate_raw, Dataset, NetworkSpec, WeightVector};
use crate::search::{walk, DirectionField, Heading, PinnedCoordinates, WalkConfig, WalkOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldTask {
    #[default]
    Task1,
    Task2,
}

#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Two networks of one architecture, each trained on its own task.
#[derive(Debug, Clone)]
pub struct TwoTaskSetup {
    spec: NetworkSpec,
    w_t1: WeightVector,
    w_t2: WeightVector,
    task1: TaskData,
    task2: TaskData,
    manifold: ManifoldTask,
    field: PinnedCoordinates,
}

impl TwoTaskSetup {
    pub fn new(
        spec: NetworkSpec,
        w_t1: WeightVector,
        w_t2: WeightVector,
        task1: TaskData,
        task2: TaskData,
        manifold: ManifoldTask,
    ) -> Result<Self> {
        w_t1.check_spec(&spec)?;
        w_t2.check_spec(&spec)?;
        for d in [&task1.train, &task1.test, &task2.train, &task2.test] {
            if d.input_dim() != spec.input_dim() {
                return Err(Error::dims("task input", spec.input_dim(), d.input_dim()));
            }
            if d.target_dim() != spec.output_dim() {
                return Err(Error::dims(
                    "task target",
                    spec.output_dim(),
                    d.target_dim(),
                ));
            }
        }
        let field = PinnedCoordinates::target(&w_t2)?;
        Ok(Self {
            spec,
            w_t1,
            w_t2,
            task1,
            task2,
            manifold,
            field,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn w_t1(&self) -> &WeightVector {
        &self.w_t1
    }

    pub fn w_t2(&self) -> &WeightVector {
        &self.w_t2
    }

    pub fn task1(&self) -> &TaskData {
        &self.task1
    }

    pub fn task2(&self) -> &TaskData {
        &self.task2
    }

    pub fn manifold(&self) -> ManifoldTask {
        self.manifold
    }

    /// Training data of the task whose functional manifold builds the metric.
    pub fn metric_data(&self) -> &Dataset {
        match self.manifold {
            ManifoldTask::Task1 => &self.task1.train,
            ManifoldTask::Task2 => &self.task2.train,
        }
    }

    /// The field pointing at `w_t2`.
    pub fn field(&self) -> &PinnedCoordinates {
        &self.field
    }
}

/// `(w_t2 - w) / |w_t2 - w|` and the distance, or `Arrived` at `w_t2`.
pub fn forgetting_direction(setup: &TwoTaskSetup, w: &WeightVector) -> Result<Heading> {
    w.check_spec(&setup.spec)?;
    Ok(setup.field.heading(w))
}

/// Walks from `w_t1` to `w_t2` on the selected task's manifold.
pub fn forgetting_walk(setup: &TwoTaskSetup, config: &WalkConfig) -> Result<WalkOutcome> {
    walk(
        &setup.spec,
        &setup.w_t1,
        &setup.field,
        config,
        setup.metric_data(),
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualTaskRow {
    pub index: usize,
    pub loss1: f64,
    pub acc1: f64,
    pub loss2: f64,
    pub acc2: f64,
    pub distance_to_t2: f64,
}

impl DualTaskRow {
    pub fn min_accuracy(&self) -> f64 {
        self.acc1.min(self.acc2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualTaskTable {
    pub rows: Vec<DualTaskRow>,
    /// Row maximizing `min(acc1, acc2)`, lowest index on ties.
    pub recommended: usize,
}

impl DualTaskTable {
    pub fn best(&self) -> &DualTaskRow {
        &self.rows[self.recommended]
    }
}

/// Evaluates every checkpoint on both test sets.
pub fn evaluate_dual_task(
    setup: &TwoTaskSetup,
    checkpoints: &[WeightVector],
) -> Result<DualTaskTable> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (index, w) in checkpoints.iter().enumerate() {
        w.check_spec(&setup.spec)?;
        let e1 = evaluate_raw(&setup.spec, w, &setup.task1.test)?;
        let e2 = evaluate_raw(&setup.spec, w, &setup.task2.test)?;
        rows.push(DualTaskRow {
            index,
            loss1: e1.loss,
            acc1: e1.accuracy,
            loss2: e2.loss,
            acc2: e2.accuracy,
            distance_to_t2: setup.field.distance(w),
        });
    }
    let mut recommended = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.min_accuracy() > rows[recommended].min_accuracy() {
            recommended = i;
        }
    }
    Ok(DualTaskTable { rows, recommended })
}
