use nalgebra::DMatrix;

use super::gaussian::CovarianceState;
use super::{f64_of, DiffusionMatrix, DriftMatrix, DynamicsError};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveControls {
    pub rtol: f64,
    /// Absolute tolerance relative to the largest initial entry.
    pub atol: f64,
    pub max_steps: usize,
    /// First trial step, s. Defaults to `0.01 / |A|_max`.
    pub initial_step: Option<f64>,
}

impl Default for EvolveControls {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_steps: 1_000_000, initial_step: None }
    }
}

// Dormand-Prince 5(4) tableau; the right-hand side is autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `dV/dt = A V + V A^T + D` from `v0` over `t` seconds with an
/// adaptive Dormand-Prince 5(4) scheme. `t = 0` returns `v0` unchanged.
pub fn evolve_covariance<T: Real>(
    v0: &CovarianceState<T>,
    drift: &DriftMatrix<T>,
    diffusion: &DiffusionMatrix<T>,
    t: T,
    controls: &EvolveControls,
) -> Result<CovarianceState<T>, DynamicsError> {
    let (a, d) = (drift.matrix(), diffusion.matrix());
    let n = v0.matrix().nrows();
    if a.shape() != (n, n) || d.shape() != (n, n) {
        return Err(DynamicsError::Dimension(format!(
            "state {n}x{n}, drift {:?}, diffusion {:?}",
            a.shape(),
            d.shape()
        )));
    }
    if !(t >= T::zero()) {
        return Err(DynamicsError::Dimension(format!("evolution time must be >= 0, got {}", f64_of(t))));
    }
    if t == T::zero() {
        return Ok(v0.clone());
    }
    let at = a.transpose();
    let rhs = |v: &DMatrix<T>| a * v + v * &at + d;

    let rtol: T = lit(controls.rtol);
    let atol: T = lit::<T>(controls.atol) * v0.matrix().amax().max(T::one());
    let rate = if a.amax() > T::zero() { a.amax() } else { T::one() };
    let mut h = controls.initial_step.map(lit).unwrap_or_else(|| lit::<T>(0.01) / rate).min(t);
    let h_floor = t * lit::<T>(64.0) * T::default_epsilon();

    let mut v = v0.matrix().clone();
    let mut k: Vec<DMatrix<T>> = vec![rhs(&v)];
    let mut now = T::zero();
    let mut steps = 0usize;
    while now < t {
        if steps >= controls.max_steps || h < h_floor || !h.is_finite() {
            return Err(DynamicsError::StepSize { t_reached: f64_of(now), steps, last_step: f64_of(h) });
        }
        steps += 1;
        let h_step = h.min(t - now);
        k.truncate(1);
        for row in &A[1..7] {
            let mut y = v.clone();
            for (kj, &c) in k.iter().zip(row) {
                if c != 0.0 {
                    y += kj * (h_step * lit(c));
                }
            }
            k.push(rhs(&y));
        }
        let mut y5 = v.clone();
        let mut err = DMatrix::zeros(n, n);
        for s in 0..7 {
            if B5[s] != 0.0 {
                y5 += &k[s] * (h_step * lit(B5[s]));
            }
            err += &k[s] * (h_step * lit::<T>(B5[s] - B4[s]));
        }
        let mut ratio = T::zero();
        for idx in 0..err.len() {
            let sc = atol + rtol * v[idx].abs().max(y5[idx].abs());
            ratio = ratio.max(err[idx].abs() / sc);
        }
        if !ratio.is_finite() {
            h = h_step * lit(0.2);
            continue;
        }
        if ratio <= T::one() {
            now = if h_step == t - now { t } else { now + h_step };
            v = y5;
            // FSAL: the last stage is the derivative at the accepted point
            let last = k.pop().unwrap();
            k[0] = last;
        }
        let factor = if ratio == T::zero() {
            lit(5.0)
        } else {
            (lit::<T>(0.9) * ratio.powf(lit(-0.2))).clamp(lit(0.2), lit(5.0))
        };
        h = h_step * factor;
    }
    let v = (&v + v.transpose()) * lit::<T>(0.5);
    CovarianceState::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_drift_diffusion, lyapunov_steady_state};
    use crate::model::{CavityMode, MechanicalMode, SystemConfig, ThermalEnvironment, ToneCoupling, ToneRole};
    use approx::assert_relative_eq;

    #[test]
    fn zero_time_is_identity() {
        let v0 = CovarianceState::<f64>::vacuum(1);
        let a = DriftMatrix(DMatrix::from_diagonal_element(2, 2, -1.0));
        let d = DiffusionMatrix(DMatrix::zeros(2, 2));
        let v = evolve_covariance(&v0, &a, &d, 0.0, &EvolveControls::default()).unwrap();
        assert_eq!(v, v0);
    }

    #[test]
    fn damped_thermal_relaxation_matches_closed_form() {
        // dV/dt = -g (V - V_inf) with V_inf = d / g
        let (g, vinf, v_start) = (3.0, 5.5, 0.5);
        let v0 = CovarianceState::<f64>::vacuum(1);
        let a = DriftMatrix(DMatrix::from_diagonal_element(2, 2, -g / 2.0));
        let d = DiffusionMatrix(DMatrix::from_diagonal_element(2, 2, g * vinf));
        for &t in &[0.1, 1.0, 4.0] {
            let v = evolve_covariance(&v0, &a, &d, t, &EvolveControls::default()).unwrap();
            let exact = vinf + (v_start - vinf) * (-g * t).exp();
            assert_relative_eq!(v.matrix()[(0, 0)], exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn long_evolution_reaches_lyapunov_state() {
        let cavity = CavityMode::new(5e9, 200e3, 30e3);
        let m = MechanicalMode::new("m", 764e3, 50.0, 7.2);
        let c = SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.001))
            .with_tone(ToneCoupling::red_with_coupling(&cavity, &m, 0.0, 20e3, ToneRole::Pump))
            .with_mode(m);
        let (a, d) = build_drift_diffusion(&c).unwrap();
        let target = lyapunov_steady_state(&a, &d).unwrap();
        let v0 = CovarianceState::vacuum(2);
        let v = evolve_covariance(&v0, &a, &d, 0.5, &EvolveControls::default()).unwrap();
        let diff = (v.matrix() - target.matrix()).amax();
        assert!(diff < 1e-6 * target.matrix().amax(), "{diff}");
    }

    #[test]
    fn step_budget_is_reported() {
        let v0 = CovarianceState::<f64>::vacuum(1);
        let a = DriftMatrix(DMatrix::from_diagonal_element(2, 2, -1e6));
        let d = DiffusionMatrix(DMatrix::from_diagonal_element(2, 2, 1e6));
        let controls = EvolveControls { max_steps: 3, ..Default::default() };
        let err = evolve_covariance(&v0, &a, &d, 1.0, &controls).unwrap_err();
        assert!(matches!(err, DynamicsError::StepSize { steps: 3, .. }));
    }
}
