use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{DataSeries, FitError};
use crate::scalar::{lit, to_f64, Real};

/// One model parameter with its starting value and box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec<T> {
    pub name: String,
    pub init: T,
    pub lower: T,
    pub upper: T,
    pub fixed: bool,
    /// Typical magnitude; the finite-difference step is
    /// `1e-6 * max(|p|, scale)`.
    pub scale: T,
}

impl<T: Real> ParamSpec<T> {
    pub fn free(name: impl Into<String>, init: T) -> Self {
        let inf = lit::<T>(f64::INFINITY);
        Self { name: name.into(), init, lower: -inf, upper: inf, fixed: false, scale: T::one() }
    }

    pub fn fixed_at(name: impl Into<String>, value: T) -> Self {
        Self { fixed: true, ..Self::free(name, value) }
    }

    pub fn bounded(mut self, lower: T, upper: T) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = scale;
        self
    }

    pub fn fixed(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitControls {
    pub max_iterations: usize,
    /// Relative cost change that counts as converged.
    pub ftol: f64,
    /// Relative step norm that counts as converged.
    pub xtol: f64,
    pub initial_damping: f64,
    /// Finite-difference step relative to `max(|p|, scale)`.
    pub fd_step: f64,
}

impl Default for FitControls {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-10, xtol: 1e-12, initial_damping: 1e-3, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub names: Vec<String>,
    pub params: Vec<T>,
    pub fixed: Vec<bool>,
    /// Covariance over all parameters; rows and columns of fixed ones are zero.
    pub covariance: DMatrix<T>,
    /// `sqrt(sum r_i^2)` of the weighted residuals.
    pub residual_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Cost `0.5 sum r_i^2` after each accepted step, starting with the initial cost.
    pub cost_history: Vec<T>,
    pub points: usize,
}

impl<T: Real> FitResult<T> {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.index(name).map(|i| self.params[i])
    }

    /// Posterior standard deviation of `name`.
    pub fn sigma(&self, name: &str) -> Option<T> {
        self.index(name).map(|i| self.covariance[(i, i)].max(T::zero()).sqrt())
    }

    pub fn free_parameters(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    /// Residual variance `sum r_i^2 / (m - n_free)`.
    pub fn reduced_chi_squared(&self) -> T {
        let dof = self.points.saturating_sub(self.free_parameters()).max(1);
        self.residual_norm * self.residual_norm / lit(dof as f64)
    }
}

struct Problem<'a, T: Real, F> {
    model: &'a F,
    data: &'a DataSeries<T>,
    free: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    scale: Vec<T>,
    fd_step: T,
}

impl<T: Real, F: Fn(T, &[T]) -> T + Sync> Problem<'_, T, F> {
    fn residuals(&self, p: &[T]) -> DVector<T> {
        let d = self.data;
        let r: Vec<T> = (0..d.len())
            .into_par_iter()
            .map(|i| {
                let w = d.y_sigma.as_ref().map(|s| s[i]).unwrap_or_else(T::one);
                (d.y[i] - (self.model)(d.x[i], p)) / w
            })
            .collect();
        DVector::from_vec(r)
    }

    /// Central differences, one-sided next to a bound. Columns for the free
    /// parameters only.
    fn jacobian(&self, p: &[T]) -> DMatrix<T> {
        let cols: Vec<DVector<T>> = self
            .free
            .par_iter()
            .map(|&k| {
                let h = self.fd_step * p[k].abs().max(self.scale[k]);
                let (mut hi, mut lo) = (p.to_vec(), p.to_vec());
                let up = (p[k] + h).min(self.upper[k]);
                let down = (p[k] - h).max(self.lower[k]);
                hi[k] = up;
                lo[k] = down;
                // residuals are y - f, so the model derivative is the negated difference
                (self.residuals(&lo) - self.residuals(&hi)) / (up - down)
            })
            .collect();
        DMatrix::from_columns(&cols)
    }
}

fn cost<T: Real>(r: &DVector<T>) -> T {
    r.iter().fold(T::zero(), |acc, x| acc + *x * *x) * lit(0.5)
}

/// Covariance `s^2 (J^T J)^{-1}` with `s^2 = 2 cost / (m - n)`; falls back to a
/// pseudo-inverse when `J^T J` is not positive definite.
fn covariance<T: Real>(j: &DMatrix<T>, cost: T, m: usize) -> DMatrix<T> {
    let n = j.ncols();
    let dof = m.saturating_sub(n).max(1);
    let s2 = cost * lit(2.0) / lit(dof as f64);
    let h = j.transpose() * j;
    let inv = match h.clone().cholesky() {
        Some(c) => c.inverse(),
        None => h.clone().pseudo_inverse(T::default_epsilon() * h.amax()).unwrap_or_else(|_| DMatrix::zeros(n, n)),
    };
    let cov = inv * s2;
    (&cov + cov.transpose()) * lit::<T>(0.5)
}

/// Bounded nonlinear least squares `min 0.5 sum ((y_i - f(x_i, p)) / sigma_i)^2`.
///
/// Levenberg-Marquardt with Marquardt diagonal scaling: damping shrinks
/// after an accepted step and grows after a rejected one. Trial points are
/// projected onto the bounds; parameters sitting on a bound whose step points
/// outward are frozen for that iteration. The returned parameters are always
/// feasible and the accepted costs are non-increasing.
pub fn least_squares<T: Real, F>(
    model: F,
    data: &DataSeries<T>,
    params: &[ParamSpec<T>],
    controls: &FitControls,
) -> Result<FitResult<T>, FitError<T>>
where
    F: Fn(T, &[T]) -> T + Sync,
{
    for p in params {
        if !(p.lower <= p.init && p.init <= p.upper) {
            return Err(FitError::InvalidInit(format!("{} = {} outside [{}, {}]", p.name, to_f64(p.init), to_f64(p.lower), to_f64(p.upper))));
        }
        if !(p.scale > T::zero()) {
            return Err(FitError::InvalidInit(format!("{} needs a positive scale", p.name)));
        }
    }
    let problem = Problem {
        model: &model,
        data,
        free: (0..params.len()).filter(|&k| !params[k].fixed).collect(),
        lower: params.iter().map(|p| p.lower).collect(),
        upper: params.iter().map(|p| p.upper).collect(),
        scale: params.iter().map(|p| p.scale).collect(),
        fd_step: lit(controls.fd_step),
    };
    let n_free = problem.free.len();
    let m = data.len();
    if m < n_free {
        return Err(FitError::InvalidData(format!("{m} points cannot determine {n_free} parameters")));
    }

    let mut p: Vec<T> = params.iter().map(|s| s.init).collect();
    let mut r = problem.residuals(&p);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(FitError::InvalidInit("model is not finite at the initial parameters".into()));
    }
    let mut history = vec![c];
    let mut lambda: T = lit(controls.initial_damping);
    let (ftol, xtol): (T, T) = (lit(controls.ftol), lit(controls.xtol));
    let mut converged = n_free == 0 || c == T::zero();
    let mut iterations = 0;

    let finish = |p: Vec<T>, c: T, iterations: usize, converged: bool, history: Vec<T>| {
        let mut cov = DMatrix::zeros(params.len(), params.len());
        if n_free > 0 {
            let free_cov = covariance(&problem.jacobian(&p), c, m);
            for (a, &i) in problem.free.iter().enumerate() {
                for (b, &j) in problem.free.iter().enumerate() {
                    cov[(i, j)] = free_cov[(a, b)];
                }
            }
        }
        FitResult {
            names: params.iter().map(|s| s.name.clone()).collect(),
            params: p,
            fixed: params.iter().map(|s| s.fixed).collect(),
            covariance: cov,
            residual_norm: (c * lit(2.0)).sqrt(),
            iterations,
            converged,
            cost_history: history,
            points: m,
        }
    };

    while !converged && iterations < controls.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&p);
        // a flat direction is only an error away from the bounds
        let at_bound = |k: usize| p[k] <= problem.lower[k] || p[k] >= problem.upper[k];
        if let Some(a) = (0..n_free).find(|&a| !at_bound(problem.free[a]) && j.column(a).iter().all(|v| *v == T::zero())) {
            let name = params[problem.free[a]].name.clone();
            return Err(FitError::SingularJacobian { parameter: name, best: Box::new(finish(p, c, iterations, false, history)) });
        }
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;

        let mut accepted = false;
        while !accepted {
            let Some(step) = damped_step(&jtj, &g, lambda, &p, &problem) else {
                lambda *= lit(10.0);
                if lambda > lit(1e16) {
                    converged = true;
                    break;
                }
                continue;
            };
            let trial: Vec<T> = p
                .iter()
                .enumerate()
                .map(|(k, &v)| (v + step[k]).max(problem.lower[k]).min(problem.upper[k]))
                .collect();
            let r_trial = problem.residuals(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < c {
                let dx = trial.iter().zip(&p).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b)).sqrt();
                let px = p.iter().fold(T::zero(), |acc, a| acc + *a * *a).sqrt();
                let rel = (c - c_trial) / c;
                p = trial;
                r = r_trial;
                c = c_trial;
                history.push(c);
                lambda = (lambda / lit(3.0)).max(lit(1e-15));
                accepted = true;
                if rel < ftol || dx <= xtol * (px + xtol) || c == T::zero() {
                    converged = true;
                }
            } else {
                lambda *= lit(4.0);
                if lambda > lit(1e16) {
                    // no descent direction left at working precision
                    converged = true;
                    break;
                }
            }
        }
    }
    let result = finish(p, c, iterations, converged, history);
    if converged {
        Ok(result)
    } else {
        Err(FitError::MaxIterations { best: Box::new(result) })
    }
}

/// Solves `(J^T J + lambda diag(J^T J)) dp = J^T r` over the free parameters,
/// freezing parameters pinned at a bound with an outward step. Returns the
/// step over all parameters.
fn damped_step<T: Real, F>(
    jtj: &DMatrix<T>,
    g: &DVector<T>,
    lambda: T,
    p: &[T],
    problem: &Problem<'_, T, F>,
) -> Option<Vec<T>> {
    let n = problem.free.len();
    let mut active = vec![true; n];
    for _ in 0..2 {
        let idx: Vec<usize> = (0..n).filter(|&a| active[a]).collect();
        if idx.is_empty() {
            return None;
        }
        let mut a = DMatrix::from_fn(idx.len(), idx.len(), |i, j| jtj[(idx[i], idx[j])]);
        let floor = a.diagonal().amax() * T::default_epsilon();
        for i in 0..idx.len() {
            let d = a[(i, i)];
            a[(i, i)] += lambda * d.max(floor);
        }
        let b = DVector::from_fn(idx.len(), |i, _| g[idx[i]]);
        let dp = match a.clone().cholesky() {
            Some(c) => c.solve(&b),
            None => a.lu().solve(&b)?,
        };
        let mut changed = false;
        let mut full = vec![T::zero(); p.len()];
        for (i, &a_idx) in idx.iter().enumerate() {
            let k = problem.free[a_idx];
            let outward = (p[k] <= problem.lower[k] && dp[i] < T::zero()) || (p[k] >= problem.upper[k] && dp[i] > T::zero());
            if outward {
                active[a_idx] = false;
                changed = true;
            }
            full[k] = dp[i];
        }
        if !changed {
            return Some(full);
        }
    }
    None
}
