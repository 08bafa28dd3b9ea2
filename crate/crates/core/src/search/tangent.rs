//! The per-step trust-region subproblem
//!
//! ```text
//! minimize   theta^T g theta - beta * theta^T v
//! subject to |theta| <= radius
//! ```
//!
//! solved matrix-free. Its KKT conditions are
//! `2 (g + lambda I) theta = beta v`, `lambda >= 0`,
//! `lambda (|theta| - radius) = 0`. An interior solution (`lambda = 0`) is
//! tried first with truncated CG; otherwise `lambda` is found by safeguarded
//! Newton iteration on `1/|theta(lambda)| - 1/radius`, each evaluation being
//! a shifted CG solve.

use crate::error::{Error, Result};
use crate::geometry::SymmetricOperator;
use crate::nn::{axpy, dot, norm};

pub const DEFAULT_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target for every CG solve.
    pub cg_tolerance: f64,
    /// CG iteration cap; `None` means `max(2n, 500)`.
    pub max_cg_iterations: Option<usize>,
    pub max_newton_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cg_tolerance: 1e-12,
            max_cg_iterations: None,
            max_newton_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TangentStepProblem<'a, G: SymmetricOperator + ?Sized> {
    pub metric: &'a G,
    /// Unit-norm goal direction.
    pub goal: &'a [f64],
    pub beta: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentStep {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub on_boundary: bool,
    /// `|2 (g + lambda I) theta - beta v| / (beta |v|)`.
    pub kkt_residual: f64,
    pub cg_iterations: usize,
}

impl<G: SymmetricOperator + ?Sized> TangentStepProblem<'_, G> {
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let mut gt = vec![0.0; theta.len()];
        self.metric.apply(theta, &mut gt);
        dot(theta, &gt) - self.beta * dot(theta, self.goal)
    }

    fn validate(&self) -> Result<()> {
        let n = self.metric.dim();
        if self.goal.len() != n {
            return Err(Error::dims("goal vector", n, self.goal.len()));
        }
        let gn = norm(self.goal);
        if (gn - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "goal vector must be unit norm, |v| = {gn}"
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius must be > 0, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

struct Cg<'a, G: SymmetricOperator + ?Sized> {
    op: &'a G,
    tol: f64,
    max_iter: usize,
    iterations: usize,
}

impl<G: SymmetricOperator + ?Sized> Cg<'_, G> {
    /// Solves `(A + shift I) x = b` starting from `x`.
    fn solve(&mut self, shift: f64, b: &[f64], x: &mut [f64]) -> Result<()> {
        let n = b.len();
        let bnorm = norm(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let mut ap = vec![0.0; n];
        let shifted = |v: &[f64], out: &mut [f64]| {
            self.op.apply(v, out);
            axpy(shift, v, out);
        };
        let mut r = vec![0.0; n];
        shifted(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let target = (self.tol * bnorm).powi(2);
        let mut iter = 0;
        while rr > target {
            if iter >= self.max_iter {
                // Accept a slightly looser solve; refuse anything worse.
                let rel = rr.sqrt() / bnorm;
                if rel <= 1e-9 {
                    break;
                }
                return Err(Error::SolverFailure {
                    iterations: iter,
                    residual: rel,
                });
            }
            shifted(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SolverFailure {
                    iterations: iter,
                    residual: rr.sqrt() / bnorm,
                });
            }
            let alpha = rr / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            iter += 1;
            self.iterations += 1;
        }
        Ok(())
    }
}

enum Interior {
    Solution(Vec<f64>),
    Boundary,
}

/// Truncated CG on `g theta = b` from zero. Iterate norms grow monotonically,
/// so crossing the radius (or meeting a null direction) proves the solution
/// lies on the boundary.
fn interior_attempt<G: SymmetricOperator + ?Sized>(
    cg: &mut Cg<'_, G>,
    b: &[f64],
    radius: f64,
) -> Interior {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = (cg.tol * bnorm).powi(2);
    let curvature_floor = 1e-14 * cg.op.eigenvalue_bound().max(f64::MIN_POSITIVE);
    for _ in 0..cg.max_iter {
        cg.op.apply(&p, &mut ap);
        cg.iterations += 1;
        let pap = dot(&p, &ap);
        if pap <= curvature_floor * dot(&p, &p) {
            return Interior::Boundary;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        if norm(&x) >= radius {
            return Interior::Boundary;
        }
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new <= target {
            return Interior::Solution(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Interior::Boundary
}

fn kkt_residual<G: SymmetricOperator + ?Sized>(
    problem: &TangentStepProblem<'_, G>,
    theta: &[f64],
    lambda: f64,
) -> f64 {
    let mut gt = vec![0.0; theta.len()];
    problem.metric.apply(theta, &mut gt);
    let mut res = 0.0;
    for i in 0..theta.len() {
        let e = 2.0 * (gt[i] + lambda * theta[i]) - problem.beta * problem.goal[i];
        res += e * e;
    }
    res.sqrt() / (problem.beta * norm(problem.goal))
}

pub fn solve_tangent_step<G: SymmetricOperator + ?Sized>(
    problem: &TangentStepProblem<'_, G>,
    options: &SolverOptions,
) -> Result<TangentStep> {
    problem.validate()?;
    let n = problem.metric.dim();
    if problem.beta == 0.0 {
        return Ok(TangentStep {
            theta: vec![0.0; n],
            lambda: 0.0,
            on_boundary: false,
            kkt_residual: 0.0,
            cg_iterations: 0,
        });
    }
    let radius = problem.radius;
    let b: Vec<f64> = problem
        .goal
        .iter()
        .map(|v| 0.5 * problem.beta * v)
        .collect();
    let bnorm = norm(&b);
    let mut cg = Cg {
        op: problem.metric,
        tol: options.cg_tolerance,
        max_iter: options.max_cg_iterations.unwrap_or((2 * n).max(500)),
        iterations: 0,
    };

    if let Interior::Solution(theta) = interior_attempt(&mut cg, &b, radius) {
        let kkt = kkt_residual(problem, &theta, 0.0);
        return Ok(TangentStep {
            theta,
            lambda: 0.0,
            on_boundary: false,
            kkt_residual: kkt,
            cg_iterations: cg.iterations,
        });
    }

    // |theta(lambda)| <= |b| / lambda, and >= |b| / (lambda + lambda_max).
    let mut hi = bnorm / radius;
    let mut lo = (hi - problem.metric.eigenvalue_bound()).max(0.0);
    let mut lambda = if lo > 0.0 { lo } else { 0.5 * hi };
    let mut theta = vec![0.0; n];
    let mut aux = vec![0.0; n];
    let tiny = 1e-15 * hi;

    for _ in 0..options.max_newton_iterations {
        cg.solve(lambda, &b, &mut theta)?;
        let tn = norm(&theta);
        if (tn - radius).abs() <= 1e-13 * radius {
            break;
        }
        if tn > radius {
            lo = lo.max(lambda);
        } else {
            hi = hi.min(lambda);
            if hi <= tiny {
                // The boundary constraint is inactive up to round-off.
                break;
            }
        }
        // phi(lambda) = 1/|theta| - 1/radius, phi' = theta^T (g + lambda I)^{-1} theta / |theta|^3
        aux.copy_from_slice(&theta);
        cg.solve(lambda, &theta, &mut aux)?;
        let phi = 1.0 / tn - 1.0 / radius;
        let dphi = dot(&theta, &aux) / (tn * tn * tn);
        let mut next = lambda - phi / dphi;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 {
                (lo * hi).sqrt()
            } else {
                1e-3 * hi
            };
        }
        if (hi - lo) <= 1e-15 * hi {
            lambda = next;
            cg.solve(lambda, &b, &mut theta)?;
            break;
        }
        lambda = next;
    }

    let tn = norm(&theta);
    if (tn - radius).abs() > 1e-8 * radius && tn > radius {
        return Err(Error::SolverFailure {
            iterations: cg.iterations,
            residual: (tn - radius).abs() / radius,
        });
    }
    if tn > radius {
        // Remove the last round-off so the constraint holds exactly.
        let s = radius / tn;
        theta.iter_mut().for_each(|t| *t *= s);
    }
    let kkt = kkt_residual(problem, &theta, lambda);
    Ok(TangentStep {
        theta,
        lambda,
        on_boundary: true,
        kkt_residual: kkt,
        cg_iterations: cg.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DenseOperator;
    use nalgebra::DMatrix;

    fn unit(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn zero_beta_gives_zero_step() {
        let g = DenseOperator::new(DMatrix::identity(4, 4)).unwrap();
        let v = unit(4, 1);
        let p = TangentStepProblem {
            metric: &g,
            goal: &v,
            beta: 0.0,
            radius: 0.1,
        };
        let step = solve_tangent_step(&p, &SolverOptions::default()).unwrap();
        assert!(step.theta.iter().all(|&t| t == 0.0));
        assert_eq!(step.lambda, 0.0);
    }

    #[test]
    fn scaled_identity_closed_form() {
        let c = 4.0;
        let g = DenseOperator::new(DMatrix::identity(5, 5) * c).unwrap();
        let v: Vec<f64> = [1.0, 2.0, -2.0, 0.0, 4.0].iter().map(|x| x / 5.0).collect();
        // Interior: beta / (2c) = 0.05 <= 0.1.
        let p = TangentStepProblem {
            metric: &g,
            goal: &v,
            beta: 0.4,
            radius: 0.1,
        };
        let s = solve_tangent_step(&p, &SolverOptions::default()).unwrap();
        for (t, vi) in s.theta.iter().zip(&v) {
            assert!((t - 0.05 * vi).abs() <= 1e-10);
        }
        assert_eq!(s.lambda, 0.0);
        // Boundary: beta / (2c) = 1.25 > 0.1 -> theta = 0.1 v.
        let p = TangentStepProblem {
            metric: &g,
            goal: &v,
            beta: 10.0,
            radius: 0.1,
        };
        let s = solve_tangent_step(&p, &SolverOptions::default()).unwrap();
        for (t, vi) in s.theta.iter().zip(&v) {
            assert!((t - 0.1 * vi).abs() <= 1e-10);
        }
        assert!((s.lambda - (10.0 / (2.0 * 0.1) - c)).abs() <= 1e-8);
    }

    #[test]
    fn null_goal_direction_takes_full_radius() {
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = 3.0;
        let g = DenseOperator::new(m).unwrap();
        let v = unit(3, 2);
        let p = TangentStepProblem {
            metric: &g,
            goal: &v,
            beta: 1e-3,
            radius: 0.1,
        };
        let s = solve_tangent_step(&p, &SolverOptions::default()).unwrap();
        assert!((s.theta[2] - 0.1).abs() <= 1e-10);
        assert!(s.on_boundary);
    }

    #[test]
    fn rejects_non_unit_goal() {
        let g = DenseOperator::new(DMatrix::identity(2, 2)).unwrap();
        let v = vec![1.0, 1.0];
        let p = TangentStepProblem {
            metric: &g,
            goal: &v,
            beta: 1.0,
            radius: 0.1,
        };
        assert!(solve_tangent_step(&p, &SolverOptions::default()).is_err());
    }
}
