use serde::{Deserialize, Serialize};

use super::metric::{inner, metric_raw, BatchPolicy};
use crate::error::{Error, Result};
use crate::nn::{Dataset, Evaluation, NetworkSpec, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    /// `<delta, delta>` under the midpoint metric.
    pub energy: f64,
    /// `sqrt(max(energy, 0))`.
    pub length: f64,
}

impl SegmentRecord {
    pub fn from_energy(energy: f64) -> Self {
        Self {
            energy,
            length: energy.max(0.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointRecord {
    pub distance_to_goal: f64,
    /// `None` when the checkpoint was skipped by the evaluation cadence.
    pub eval: Option<Evaluation>,
}

/// A discretized curve in weight space with its metric bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    spec: NetworkSpec,
    checkpoints: Vec<WeightVector>,
    segments: Vec<SegmentRecord>,
    records: Vec<CheckpointRecord>,
}

impl Path {
    pub fn new(
        spec: NetworkSpec,
        checkpoints: Vec<WeightVector>,
        segments: Vec<SegmentRecord>,
        records: Vec<CheckpointRecord>,
    ) -> Result<Self> {
        if checkpoints.is_empty() {
            return Err(Error::InvalidArgument(
                "a path needs at least one checkpoint".into(),
            ));
        }
        for c in &checkpoints {
            c.check_spec(&spec)?;
        }
        if segments.len() + 1 != checkpoints.len() {
            return Err(Error::dims(
                "path segments",
                checkpoints.len() - 1,
                segments.len(),
            ));
        }
        if records.len() != checkpoints.len() {
            return Err(Error::dims(
                "path records",
                checkpoints.len(),
                records.len(),
            ));
        }
        Ok(Self {
            spec,
            checkpoints,
            segments,
            records,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn checkpoints(&self) -> &[WeightVector] {
        &self.checkpoints
    }

    pub fn first(&self) -> &WeightVector {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &WeightVector {
        self.checkpoints.last().expect("non-empty path")
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn records(&self) -> &[CheckpointRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [CheckpointRecord] {
        &mut self.records
    }

    /// Sum of segment energies, accumulated in segment order.
    pub fn cumulative_energy(&self) -> f64 {
        self.segments.iter().fold(0.0, |acc, s| acc + s.energy)
    }

    pub fn cumulative_length(&self) -> f64 {
        self.segments.iter().fold(0.0, |acc, s| acc + s.length)
    }

    /// Running `(energy, length)` at each checkpoint, starting from `(0, 0)`.
    pub fn running_totals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        let (mut e, mut l) = (0.0, 0.0);
        out.push((e, l));
        for s in &self.segments {
            e += s.energy;
            l += s.length;
            out.push((e, l));
        }
        out
    }

    /// `t = index / (len - 1)`, or 0 for a single checkpoint.
    pub fn t(&self, index: usize) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            index as f64 / (self.len() - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    pub energy: f64,
    pub length: f64,
    pub segments: Vec<SegmentRecord>,
}

/// Midpoint-rule energy and length of a polygonal path. Segment `j` uses the
/// metric at `(w_j + w_{j+1}) / 2` built on `policy`'s batch for step `j`.
pub fn path_energy_and_length(
    spec: &NetworkSpec,
    checkpoints: &[WeightVector],
    data: &Dataset,
    policy: &BatchPolicy,
) -> Result<PathMeasure> {
    if checkpoints.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "path measure needs at least 2 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    for c in checkpoints {
        c.check_spec(spec)?;
    }
    let mut segments = Vec::with_capacity(checkpoints.len() - 1);
    for (j, pair) in checkpoints.windows(2).enumerate() {
        segments.push(segment_record(
            spec,
            &pair[0],
            &pair[1],
            data,
            &policy.indices(j, data.len()),
        )?);
    }
    let energy = segments.iter().fold(0.0, |acc, s| acc + s.energy);
    let length = segments.iter().fold(0.0, |acc, s| acc + s.length);
    Ok(PathMeasure {
        energy,
        length,
        segments,
    })
}

pub(crate) fn segment_record(
    spec: &NetworkSpec,
    from: &[f64],
    to: &[f64],
    data: &Dataset,
    indices: &[usize],
) -> Result<SegmentRecord> {
    let delta: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(SegmentRecord::from_energy(0.0));
    }
    let mid: Vec<f64> = from.iter().zip(to).map(|(a, b)| 0.5 * (a + b)).collect();
    let g = metric_raw(spec, &mid, data, indices)?;
    Ok(SegmentRecord::from_energy(inner(&g, &delta, &delta)))
}

/// `count` evenly spaced checkpoints on the segment from `a` to `b`.
pub fn straight_line(
    a: &WeightVector,
    b: &WeightVector,
    count: usize,
) -> Result<Vec<WeightVector>> {
    if count < 2 {
        return Err(Error::InvalidArgument(
            "straight line needs at least 2 checkpoints".into(),
        ));
    }
    if a.len() != b.len() {
        return Err(Error::dims("straight line endpoint", a.len(), b.len()));
    }
    (0..count)
        .map(|k| {
            let t = k as f64 / (count - 1) as f64;
            let v = if k == count - 1 {
                b.to_vec()
            } else {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| x + t * (y - x))
                    .collect()
            };
            a.with_values(v)
        })
        .collect()
}
