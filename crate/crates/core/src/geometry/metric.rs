use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{axpy, dot, jacobian_raw, Dataset, JacobianBatch, NetworkSpec, WeightVector};

/// Largest `n` for which [`MetricOperator::dense`] materializes by default.
pub const DEFAULT_DENSE_CAP: usize = 200;

/// A symmetric positive semidefinite linear map on R^n.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;

    /// `out = A u`.
    fn apply(&self, u: &[f64], out: &mut [f64]);

    /// Any upper bound on the largest eigenvalue.
    fn eigenvalue_bound(&self) -> f64;
}

/// The pullback metric `g_w = (1/B) sum_i J_i^T J_i` at one point, applied
/// through stored per-example Jacobians without forming the `n x n` matrix.
#[derive(Debug, Clone)]
pub struct MetricOperator {
    jac: JacobianBatch,
    batch_size: usize,
}

impl MetricOperator {
    pub fn from_jacobians(jac: JacobianBatch) -> Self {
        let batch_size = jac.num_examples();
        Self { jac, batch_size }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_params(&self) -> usize {
        self.jac.num_params()
    }

    pub fn jacobians(&self) -> &JacobianBatch {
        &self.jac
    }

    /// Stacked `J u`, one entry per (example, output).
    pub fn push_forward(&self, u: &[f64]) -> Vec<f64> {
        self.jac
            .stacked()
            .chunks_exact(self.num_params())
            .map(|row| dot(row, u))
            .collect()
    }

    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_params()];
        self.apply(u, &mut out);
        out
    }

    /// `trace(g) = |J|_F^2 / B`.
    pub fn trace(&self) -> f64 {
        dot(self.jac.stacked(), self.jac.stacked()) / self.batch_size as f64
    }

    /// Dense `g`, allowed for `n <= DEFAULT_DENSE_CAP`.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn dense_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.num_params();
        if n > cap {
            return Err(Error::SizeCap {
                what: "dense metric",
                n,
                cap,
            });
        }
        let mut g = DMatrix::zeros(n, n);
        for row in self.jac.stacked().chunks_exact(n) {
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..n {
                    g[(a, b)] += ra * row[b];
                }
            }
        }
        let scale = 1.0 / self.batch_size as f64;
        for a in 0..n {
            for b in a..n {
                let v = g[(a, b)] * scale;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        Ok(g)
    }
}

impl SymmetricOperator for MetricOperator {
    fn dim(&self) -> usize {
        self.num_params()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.num_params();
        let scale = 1.0 / self.batch_size as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for row in self.jac.stacked().chunks_exact(n) {
            let t = dot(row, u);
            axpy(t * scale, row, out);
        }
    }

    fn eigenvalue_bound(&self) -> f64 {
        self.trace()
    }
}

/// A dense symmetric PSD matrix as an operator.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    bound: f64,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument(
                "dense operator must be square".into(),
            ));
        }
        let bound = matrix
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self { matrix, bound })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                s += self.matrix[(i, j)] * u[j];
            }
            *o = s;
        }
    }

    fn eigenvalue_bound(&self) -> f64 {
        self.bound
    }
}

/// The metric at `w` averaged over every example of `batch`.
pub fn metric_at(spec: &NetworkSpec, w: &WeightVector, batch: &Dataset) -> Result<MetricOperator> {
    w.check_spec(spec)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    metric_raw(spec, w, batch, &idx)
}

pub(crate) fn metric_raw(
    spec: &NetworkSpec,
    w: &[f64],
    data: &Dataset,
    indices: &[usize],
) -> Result<MetricOperator> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric base point"));
    }
    if data.input_dim() != spec.input_dim() {
        return Err(Error::dims(
            "metric batch input",
            spec.input_dim(),
            data.input_dim(),
        ));
    }
    let inputs: Vec<&[f64]> = indices.iter().map(|&i| data.input(i)).collect();
    Ok(MetricOperator::from_jacobians(jacobian_raw(
        spec, w, &inputs,
    )?))
}

/// `<u, v>_w = u^T g_w v`, evaluated as `(J u) . (J v) / B`.
pub fn inner(g: &MetricOperator, u: &[f64], v: &[f64]) -> f64 {
    let ju = g.push_forward(u);
    let jv = if std::ptr::eq(u, v) {
        ju.clone()
    } else {
        g.push_forward(v)
    };
    dot(&ju, &jv) / g.batch_size() as f64
}

/// Which examples build the metric at walk step / path segment `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BatchPolicy {
    /// One seeded draw, reused at every step.
    Fixed { size: usize, seed: u64 },
    /// A fresh seeded draw per step.
    Resample { size: usize, seed: u64 },
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy::Fixed { size: 64, seed: 0 }
    }
}

impl BatchPolicy {
    pub fn size(&self) -> usize {
        match *self {
            BatchPolicy::Fixed { size, .. } | BatchPolicy::Resample { size, .. } => size,
        }
    }

    /// Sorted example indices for step `k` out of `len` examples.
    pub fn indices(&self, k: usize, len: usize) -> Vec<usize> {
        let (size, seed, stream) = match *self {
            BatchPolicy::Fixed { size, seed } => (size, seed, 0),
            BatchPolicy::Resample { size, seed } => (size, seed, k as u64 + 1),
        };
        if size >= len {
            return (0..len).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut idx = rand::seq::index::sample(&mut rng, len, size).into_vec();
        idx.sort_unstable();
        idx
    }
}
