//! Finite-difference Christoffel symbols and the exact geodesic integrator.
//!
//! Both are dense `O(n^3)` constructions and only exist to verify the
//! approximate walker on tiny networks, so they refuse `n > CHRISTOFFEL_CAP`.

use nalgebra::DMatrix;

use super::metric::metric_raw;
use super::path::{segment_record, CheckpointRecord, Path};
use crate::error::{Error, Result};
use crate::nn::{Dataset, NetworkSpec, WeightVector};

pub const CHRISTOFFEL_CAP: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(g(w+h) - g(w-h)) / 2h`.
    Central,
    /// One-sided `(-3 g(w) + 4 g(w+h) - g(w+2h)) / 2h`, also second order.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelOptions {
    pub step: f64,
    pub stencil: Stencil,
    /// Tikhonov damping is `lambda_scale * trace(g) / n`.
    pub lambda_scale: f64,
}

impl Default for ChristoffelOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            stencil: Stencil::Central,
            lambda_scale: 1e-8,
        }
    }
}

/// `Gamma[eta][mu][nu]`, dense.
#[derive(Debug, Clone)]
pub struct ChristoffelTensor {
    n: usize,
    data: Vec<f64>,
    step: f64,
    lambda: f64,
}

impl ChristoffelTensor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The damping added to `g` before inversion.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn get(&self, eta: usize, mu: usize, nu: usize) -> f64 {
        self.data[(eta * self.n + mu) * self.n + nu]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Gamma^eta_{mu nu} v^mu v^nu` for every `eta`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|eta| {
                let block = &self.data[eta * n * n..(eta + 1) * n * n];
                let mut s = 0.0;
                for mu in 0..n {
                    let row = &block[mu * n..(mu + 1) * n];
                    let inner: f64 = row.iter().zip(v).map(|(g, x)| g * x).sum();
                    s += v[mu] * inner;
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > CHRISTOFFEL_CAP {
        return Err(Error::SizeCap {
            what: "Christoffel symbols",
            n,
            cap: CHRISTOFFEL_CAP,
        });
    }
    Ok(())
}

fn dense_metric(
    spec: &NetworkSpec,
    w: &[f64],
    batch: &Dataset,
    idx: &[usize],
) -> Result<DMatrix<f64>> {
    metric_raw(spec, w, batch, idx)?.dense_with_cap(CHRISTOFFEL_CAP)
}

/// Christoffel symbols of the batch metric at `w`, with metric partials from
/// finite differences of the dense metric.
pub fn christoffel_at(
    spec: &NetworkSpec,
    w: &WeightVector,
    batch: &Dataset,
    options: ChristoffelOptions,
) -> Result<ChristoffelTensor> {
    w.check_spec(spec)?;
    christoffel_raw(spec, w, batch, options)
}

pub(crate) fn christoffel_raw(
    spec: &NetworkSpec,
    w: &[f64],
    batch: &Dataset,
    options: ChristoffelOptions,
) -> Result<ChristoffelTensor> {
    let n = spec.num_params();
    check_cap(n)?;
    if !(options.step > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let h = options.step;
    let g0 = dense_metric(spec, w, batch, &idx)?;

    // dg[r] = d g / d w^r
    let mut dg: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut shifted = w.to_vec();
    for r in 0..n {
        shifted[r] = w[r] + h;
        let plus = dense_metric(spec, &shifted, batch, &idx)?;
        let d = match options.stencil {
            Stencil::Central => {
                shifted[r] = w[r] - h;
                let minus = dense_metric(spec, &shifted, batch, &idx)?;
                (plus - minus) / (2.0 * h)
            }
            Stencil::Forward => {
                shifted[r] = w[r] + 2.0 * h;
                let plus2 = dense_metric(spec, &shifted, batch, &idx)?;
                (plus * 4.0 - &g0 * 3.0 - plus2) / (2.0 * h)
            }
        };
        shifted[r] = w[r];
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric finite difference"));
        }
        dg.push(d);
    }

    let trace = g0.trace();
    let lambda = options.lambda_scale * trace / n as f64;
    let damped = &g0 + DMatrix::identity(n, n) * lambda;
    let ginv = damped
        .cholesky()
        .ok_or(Error::NonFinite("regularized metric inverse"))?
        .inverse();

    // first[r][mu][nu] = d_nu g_{r mu} + d_mu g_{r nu} - d_r g_{mu nu}
    let mut first = vec![0.0; n * n * n];
    for r in 0..n {
        for mu in 0..n {
            for nu in 0..n {
                first[(r * n + mu) * n + nu] = dg[nu][(r, mu)] + dg[mu][(r, nu)] - dg[r][(mu, nu)];
            }
        }
    }
    let mut data = vec![0.0; n * n * n];
    for eta in 0..n {
        let out = &mut data[eta * n * n..(eta + 1) * n * n];
        for r in 0..n {
            let c = 0.5 * ginv[(eta, r)];
            if c == 0.0 {
                continue;
            }
            let block = &first[r * n * n..(r + 1) * n * n];
            for (o, f) in out.iter_mut().zip(block) {
                *o += c * f;
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Christoffel symbols"));
    }
    Ok(ChristoffelTensor {
        n,
        data,
        step: h,
        lambda,
    })
}

#[derive(Debug, Clone)]
pub struct GeodesicOptions {
    pub steps: usize,
    pub dt: f64,
    pub christoffel: ChristoffelOptions,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            dt: 1e-2,
            christoffel: ChristoffelOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Geodesic {
    pub path: Path,
    pub velocities: Vec<Vec<f64>>,
    /// `<v_k, v_k>` under the metric at checkpoint `k`.
    pub speeds: Vec<f64>,
}

impl Geodesic {
    /// Largest relative deviation of the squared speed from its initial value.
    pub fn speed_drift(&self) -> f64 {
        let s0 = self.speeds[0];
        self.speeds
            .iter()
            .map(|s| (s - s0).abs() / s0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Integrates `w'' = -Gamma(w)[w', w']` with classic RK4, recomputing the
/// Christoffel symbols at every stage point.
pub fn integrate_geodesic(
    spec: &NetworkSpec,
    w0: &WeightVector,
    velocity: &[f64],
    batch: &Dataset,
    options: &GeodesicOptions,
) -> Result<Geodesic> {
    w0.check_spec(spec)?;
    let n = spec.num_params();
    check_cap(n)?;
    if velocity.len() != n {
        return Err(Error::dims("initial velocity", n, velocity.len()));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let accel = |w: &[f64], v: &[f64]| -> Result<Vec<f64>> {
        let gamma = christoffel_raw(spec, w, batch, options.christoffel)?;
        Ok(gamma.contract(v).into_iter().map(|a| -a).collect())
    };
    let speed = |w: &[f64], v: &[f64]| -> Result<f64> {
        let g = metric_raw(spec, w, batch, &idx)?;
        Ok(super::metric::inner(&g, v, v))
    };

    let dt = options.dt;
    let mut w = w0.to_vec();
    let mut v = velocity.to_vec();
    let mut points = vec![w.clone()];
    let mut velocities = vec![v.clone()];
    let mut speeds = vec![speed(&w, &v)?];

    let axpy2 = |base: &[f64], s: f64, d: &[f64]| -> Vec<f64> {
        base.iter().zip(d).map(|(b, x)| b + s * x).collect()
    };
    for step in 0..options.steps {
        let diverged = |e: Error| match e {
            Error::NonFinite(_) | Error::NumericOverflow { .. } => {
                Error::IntegrationDiverged { step }
            }
            other => other,
        };
        let k1w = v.clone();
        let k1v = accel(&w, &v).map_err(diverged)?;
        let w2 = axpy2(&w, 0.5 * dt, &k1w);
        let v2 = axpy2(&v, 0.5 * dt, &k1v);
        let k2v = accel(&w2, &v2).map_err(diverged)?;
        let w3 = axpy2(&w, 0.5 * dt, &v2);
        let v3 = axpy2(&v, 0.5 * dt, &k2v);
        let k3v = accel(&w3, &v3).map_err(diverged)?;
        let w4 = axpy2(&w, dt, &v3);
        let v4 = axpy2(&v, dt, &k3v);
        let k4v = accel(&w4, &v4).map_err(diverged)?;
        for i in 0..n {
            w[i] += dt / 6.0 * (k1w[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if w.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::IntegrationDiverged { step });
        }
        speeds.push(speed(&w, &v).map_err(diverged)?);
        points.push(w.clone());
        velocities.push(v.clone());
    }

    let mut segments = Vec::with_capacity(points.len() - 1);
    for pair in points.windows(2) {
        segments.push(segment_record(spec, &pair[0], &pair[1], batch, &idx)?);
    }
    let checkpoints = points
        .into_iter()
        .map(|p| w0.with_values(p))
        .collect::<Result<Vec<_>>>()?;
    let records = vec![
        CheckpointRecord {
            distance_to_goal: f64::NAN,
            eval: None,
        };
        checkpoints.len()
    ];
    Ok(Geodesic {
        path: Path::new(spec.clone(), checkpoints, segments, records)?,
        velocities,
        speeds,
    })
}
