//! Forward evaluation and reverse-mode output Jacobians for dense MLPs.

use super::dataset::{argmax, Dataset};
use super::spec::{LayerLayout, NetworkSpec, OutputActivation};
use super::weights::{axpy, dot, WeightVector};
use crate::error::{Error, Result};

/// Per-example output Jacobians `J_i = df(x_i, w)/dw`, each `m x n`, stored
/// stacked row-major as a `(B*m) x n` matrix.
#[derive(Debug, Clone)]
pub struct JacobianBatch {
    rows: Vec<f64>,
    outputs: usize,
    params: usize,
    examples: usize,
}

impl JacobianBatch {
    pub fn num_examples(&self) -> usize {
        self.examples
    }

    pub fn output_dim(&self) -> usize {
        self.outputs
    }

    pub fn num_params(&self) -> usize {
        self.params
    }

    /// The `m x n` Jacobian of example `i`, row-major.
    pub fn example(&self, i: usize) -> &[f64] {
        let size = self.outputs * self.params;
        &self.rows[i * size..(i + 1) * size]
    }

    /// All rows stacked, `(B*m) x n` row-major.
    pub fn stacked(&self) -> &[f64] {
        &self.rows
    }

    pub fn entry(&self, example: usize, output: usize, param: usize) -> f64 {
        self.rows[(example * self.outputs + output) * self.params + param]
    }

    /// `J_i u`.
    pub fn jvp(&self, i: usize, u: &[f64]) -> Vec<f64> {
        self.example(i)
            .chunks_exact(self.params)
            .map(|row| dot(row, u))
            .collect()
    }

    /// `J_i^T r`.
    pub fn vjp(&self, i: usize, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.params];
        for (row, &ri) in self.example(i).chunks_exact(self.params).zip(r) {
            axpy(ri, row, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Mean over examples of the squared output error `|f(x) - y|^2`.
    pub loss: f64,
    /// Fraction of examples whose output argmax matches the target argmax.
    pub accuracy: f64,
}

/// Borrowed view of a network: architecture plus raw parameter slice.
pub(crate) struct Engine<'a> {
    layers: Vec<LayerLayout>,
    w: &'a [f64],
    n: usize,
    m: usize,
}

pub(crate) struct Cache {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Activation derivatives for each hidden layer.
    derivs: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next_delta: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(spec: &NetworkSpec, w: &'a [f64]) -> Self {
        debug_assert_eq!(w.len(), spec.num_params());
        Self {
            layers: spec.layers(),
            w,
            n: spec.num_params(),
            m: spec.output_dim(),
        }
    }

    pub(crate) fn cache(&self) -> Cache {
        let mut acts = vec![vec![0.0; self.layers[0].fan_in]];
        let mut derivs = Vec::new();
        for layer in &self.layers {
            acts.push(vec![0.0; layer.fan_out]);
            if layer.activation.is_some() {
                derivs.push(vec![0.0; layer.fan_out]);
            }
        }
        Cache {
            acts,
            derivs,
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }

    /// Runs the network on `x`; the raw output is `cache.output()`.
    /// Returns `false` if any activation is non-finite.
    pub(crate) fn forward(&self, x: &[f64], cache: &mut Cache) -> bool {
        cache.acts[0].copy_from_slice(x);
        let mut finite = true;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for (j, o) in out.iter_mut().enumerate() {
                let row =
                    &self.w[layer.weight_index(j, 0)..layer.weight_index(j, 0) + layer.fan_in];
                *o = dot(row, input) + self.w[layer.bias_index(j)];
            }
            if let Some(act) = layer.activation {
                let d = &mut cache.derivs[l];
                for (o, dj) in out.iter_mut().zip(d.iter_mut()) {
                    let z = *o;
                    *o = act.apply(z);
                    *dj = act.derivative(z, *o);
                }
            }
            finite &= out.iter().all(|v| v.is_finite());
        }
        finite
    }

    /// Reverse pass for `s` output seeds (`seeds` is `s x m`), adding
    /// `seed_r^T df/dw` into row `r` of `out` (`s x n`).
    pub(crate) fn backward(&self, seeds: &[f64], s: usize, cache: &mut Cache, out: &mut [f64]) {
        debug_assert_eq!(seeds.len(), s * self.m);
        debug_assert_eq!(out.len(), s * self.n);
        let Cache {
            acts,
            derivs,
            delta,
            next_delta,
        } = cache;
        delta.clear();
        delta.extend_from_slice(seeds);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[l];
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            for r in 0..s {
                let grad = &mut out[r * self.n..(r + 1) * self.n];
                for j in 0..fo {
                    let d = delta[r * fo + j];
                    let start = layer.weight_index(j, 0);
                    axpy(d, input, &mut grad[start..start + fi]);
                    grad[layer.bias_index(j)] += d;
                }
            }
            if l == 0 {
                break;
            }
            next_delta.clear();
            next_delta.resize(s * fi, 0.0);
            for r in 0..s {
                let nd = &mut next_delta[r * fi..(r + 1) * fi];
                for j in 0..fo {
                    let d = delta[r * fo + j];
                    let start = layer.weight_index(j, 0);
                    axpy(d, &self.w[start..start + fi], nd);
                }
                for (v, dv) in nd.iter_mut().zip(&derivs[l - 1]) {
                    *v *= dv;
                }
            }
            std::mem::swap(delta, next_delta);
        }
    }
}

impl Cache {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

fn check_input(spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.input_dim() {
        return Err(Error::dims("network input", spec.input_dim(), x.len()));
    }
    Ok(())
}

fn check_dataset(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.input_dim() != spec.input_dim() {
        return Err(Error::dims(
            "dataset input",
            spec.input_dim(),
            data.input_dim(),
        ));
    }
    if data.target_dim() != spec.output_dim() {
        return Err(Error::dims(
            "dataset target",
            spec.output_dim(),
            data.target_dim(),
        ));
    }
    Ok(())
}

/// `f(x, w)`, the raw network output.
pub fn forward(spec: &NetworkSpec, w: &WeightVector, x: &[f64]) -> Result<Vec<f64>> {
    w.check_spec(spec)?;
    check_input(spec, x)?;
    let engine = Engine::new(spec, w);
    let mut cache = engine.cache();
    if !engine.forward(x, &mut cache) {
        return Err(Error::NumericOverflow { example: 0 });
    }
    Ok(cache.output().to_vec())
}

/// Output Jacobians for every input in `inputs`.
pub fn jacobian(spec: &NetworkSpec, w: &WeightVector, inputs: &[&[f64]]) -> Result<JacobianBatch> {
    w.check_spec(spec)?;
    jacobian_raw(spec, w, inputs)
}

pub(crate) fn jacobian_raw(
    spec: &NetworkSpec,
    w: &[f64],
    inputs: &[&[f64]],
) -> Result<JacobianBatch> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("jacobian batch is empty".into()));
    }
    let (m, n) = (spec.output_dim(), spec.num_params());
    let engine = Engine::new(spec, w);
    let mut cache = engine.cache();
    let mut seeds = vec![0.0; m * m];
    for r in 0..m {
        seeds[r * m + r] = 1.0;
    }
    let mut rows = vec![0.0; inputs.len() * m * n];
    for (i, x) in inputs.iter().enumerate() {
        check_input(spec, x)?;
        if !engine.forward(x, &mut cache) {
            return Err(Error::NumericOverflow { example: i });
        }
        let block = &mut rows[i * m * n..(i + 1) * m * n];
        engine.backward(&seeds, m, &mut cache, block);
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { example: i });
        }
    }
    Ok(JacobianBatch {
        rows,
        outputs: m,
        params: n,
        examples: inputs.len(),
    })
}

/// Squared-error loss and argmax accuracy over a whole dataset.
pub fn loss_and_accuracy(
    spec: &NetworkSpec,
    w: &WeightVector,
    data: &Dataset,
) -> Result<Evaluation> {
    w.check_spec(spec)?;
    evaluate_raw(spec, w, data)
}

pub(crate) fn evaluate_raw(spec: &NetworkSpec, w: &[f64], data: &Dataset) -> Result<Evaluation> {
    check_dataset(spec, data)?;
    let engine = Engine::new(spec, w);
    let mut cache = engine.cache();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut probs = vec![0.0; spec.output_dim()];
    for i in 0..data.len() {
        if !engine.forward(data.input(i), &mut cache) {
            return Err(Error::NumericOverflow { example: i });
        }
        let out = match spec.output_activation() {
            OutputActivation::Identity => cache.output(),
            OutputActivation::SoftmaxForEval => {
                softmax_into(cache.output(), &mut probs);
                &probs
            }
        };
        let target = data.target(i);
        loss += out
            .iter()
            .zip(target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
        if argmax(out) == argmax(target) {
            correct += 1;
        }
    }
    let count = data.len() as f64;
    Ok(Evaluation {
        loss: loss / count,
        accuracy: correct as f64 / count,
    })
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Adds the gradient of the mean squared loss over `indices` into `grad`.
/// Returns the summed (not averaged) loss over those examples.
pub(crate) fn accumulate_gradient(
    engine: &Engine<'_>,
    cache: &mut Cache,
    data: &Dataset,
    indices: &[usize],
    grad: &mut [f64],
) -> Result<f64> {
    let m = data.target_dim();
    let scale = 2.0 / indices.len() as f64;
    let mut seed = vec![0.0; m];
    let mut total = 0.0;
    for &i in indices {
        if !engine.forward(data.input(i), cache) {
            return Err(Error::NumericOverflow { example: i });
        }
        for ((s, o), t) in seed.iter_mut().zip(cache.output()).zip(data.target(i)) {
            let e = o - t;
            total += e * e;
            *s = scale * e;
        }
        engine.backward(&seed, 1, cache, grad);
    }
    Ok(total)
}
