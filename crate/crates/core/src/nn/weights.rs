use std::ops::Deref;

use rand::{Rng, SeedableRng};

use super::spec::{NetworkSpec, SpecId};
use crate::error::{Error, Result};

/// A point in weight space: the flattened parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    spec_id: SpecId,
}

impl WeightVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_params() {
            return Err(Error::dims(
                "weight vector",
                spec.num_params(),
                values.len(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector"));
        }
        Ok(Self {
            values,
            spec_id: spec.id(),
        })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_params()],
            spec_id: spec.id(),
        }
    }

    /// [`WeightVector::glorot`] drawn from a ChaCha8 stream seeded with `seed`.
    pub fn glorot_seeded(spec: &NetworkSpec, seed: u64) -> Self {
        Self::glorot(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut values = vec![0.0; spec.num_params()];
        for layer in spec.layers() {
            let a = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for v in &mut values[layer.weight_range()] {
                *v = rng.random_range(-a..a);
            }
        }
        Self {
            values,
            spec_id: spec.id(),
        }
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn check_spec(&self, spec: &NetworkSpec) -> Result<()> {
        if self.spec_id != spec.id() || self.values.len() != spec.num_params() {
            return Err(Error::SpecMismatch(format!(
                "weights bound to {} but spec {} is {}",
                self.spec_id,
                spec,
                spec.id()
            )));
        }
        Ok(())
    }

    /// Replace the values, keeping the spec binding. Rejects non-finite entries.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dims(
                "weight vector",
                self.values.len(),
                values.len(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector"));
        }
        Ok(Self {
            values,
            spec_id: self.spec_id,
        })
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators; summation order is fixed.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
