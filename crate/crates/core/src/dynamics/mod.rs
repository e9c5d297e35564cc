//! Gaussian steady states of the linearized dynamics.
//!
//! Conventions, used throughout:
//!
//! * quadrature ordering `(x_c, p_c, x_1, p_1, x_2, p_2, ...)`, cavity first;
//! * `x = (b + b^dag)/sqrt(2)`, `p = (b - b^dag)/(i sqrt(2))`, so the vacuum
//!   has variance 1/2;
//! * symplectic form `Omega = (+) [[0, 1], [-1, 0]]`;
//! * drift and diffusion entries are angular rates (rad/s).
//!
//! The covariance obeys `dV/dt = A V + V A^T + D`. A red tone contributes a
//! beam-splitter coupling `G (a^dag b + a b^dag)`, a blue tone a two-mode
//! squeezing coupling `G (a^dag b^dag + a b)`; counter-rotating terms are
//! dropped. All tones must be static in a single rotating frame.

mod evolve;
mod gaussian;
mod lyapunov;

pub use evolve::{evolve_covariance, EvolveControls};
pub use gaussian::{
    check_uncertainty, log_negativity, mode_occupation, partial_transpose_min_eigenvalue, symplectic_eigenvalues,
    symplectic_form, two_mode_squeezed_vacuum, CovarianceState,
};
pub use lyapunov::{lyapunov_residual, lyapunov_steady_state};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{ModelError, Sideband, SystemConfig};
use crate::scalar::{angular, lit, to_f64, Complex, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no static rotating frame exists for the tone set: {0}")]
    Frame(String),
    #[error("drift is unstable (spectral abscissa {abscissa} rad/s)")]
    Instability { abscissa: f64 },
    #[error("Lyapunov residual {residual:.3e} exceeds bound {bound:.3e}")]
    IllConditioned { residual: f64, bound: f64 },
    #[error("invalid Gaussian state: {0}")]
    InvalidState(String),
    #[error("step size collapsed at t = {t_reached} s after {steps} steps (last step {last_step:.3e} s)")]
    StepSize { t_reached: f64, steps: usize, last_step: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Real drift matrix over quadratures, rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix<T: Real>(pub DMatrix<T>);

/// Real symmetric diffusion matrix over quadratures, rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix<T: Real>(pub DMatrix<T>);

impl<T: Real> DriftMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }
}

impl<T: Real> DiffusionMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// Rotating-frame offsets (Hz) that make every tone static.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingFrame<T> {
    /// `nu_c - f_cavity`.
    pub cavity_detuning: T,
    /// `nu_m - f_mode` per mechanical mode.
    pub mode_detunings: Vec<T>,
}

/// Finds frame offsets such that every tone term is time independent.
///
/// With the cavity frame at `nu_c + phi`, a red tone pins its mode's frame
/// detuning to `-delta - phi` and a blue tone to `delta + phi`. A mode
/// addressed by one red and one blue tone fixes `phi`.
pub fn rotating_frame<T: Real>(cfg: &SystemConfig<T>) -> Result<RotatingFrame<T>, DynamicsError> {
    let tones = cfg.resolve_tones()?;
    // constraint: detuning_m = c + s * phi
    let mut per_mode: Vec<Vec<(T, T, usize)>> = vec![Vec::new(); cfg.modes.len()];
    for t in &tones {
        let (c, s) = match t.sideband {
            Sideband::Red => (-t.detuning, -T::one()),
            Sideband::Blue => (t.detuning, T::one()),
        };
        per_mode[t.mode_index].push((c, s, t.index));
    }
    let close = |a: T, b: T| (a - b).abs() <= lit::<T>(1e-9) * T::one().max(a.abs()).max(b.abs());

    let mut phi: Option<(T, usize, usize)> = None;
    for constraints in &per_mode {
        for (k, &(c1, s1, i1)) in constraints.iter().enumerate() {
            for &(c2, s2, i2) in &constraints[..k] {
                if s1 == s2 {
                    if !close(c1, c2) {
                        return Err(DynamicsError::Frame(format!(
                            "tones {i2} and {i1} address the same mode with different detunings"
                        )));
                    }
                } else {
                    let pinned = (c2 - c1) / (s1 - s2);
                    match phi {
                        Some((p, a, b)) if !close(p, pinned) => {
                            return Err(DynamicsError::Frame(format!(
                                "tone pairs ({a}, {b}) and ({i2}, {i1}) require different cavity frames"
                            )))
                        }
                        Some(_) => {}
                        None => phi = Some((pinned, i2, i1)),
                    }
                }
            }
        }
    }
    let phi = phi.map(|p| p.0).unwrap_or_else(T::zero);
    let mode_detunings = per_mode
        .iter()
        .map(|cs| cs.first().map(|&(c, s, _)| c + s * phi).unwrap_or_else(T::zero))
        .collect();
    Ok(RotatingFrame { cavity_detuning: -phi, mode_detunings })
}

/// Writes the complex-amplitude equations `dv/dt = M v + N v*` into quadrature
/// form.
fn quadrature_drift<T: Real>(m: &DMatrix<Complex<T>>, n: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let k = m.nrows();
    let mut a = DMatrix::zeros(2 * k, 2 * k);
    for j in 0..k {
        for l in 0..k {
            let (mm, nn) = (m[(j, l)], n[(j, l)]);
            a[(2 * j, 2 * l)] = mm.re + nn.re;
            a[(2 * j, 2 * l + 1)] = -mm.im + nn.im;
            a[(2 * j + 1, 2 * l)] = mm.im + nn.im;
            a[(2 * j + 1, 2 * l + 1)] = mm.re - nn.re;
        }
    }
    a
}

/// Drift and diffusion of the cavity plus every mechanical mode.
pub fn build_drift_diffusion<T: Real>(
    cfg: &SystemConfig<T>,
) -> Result<(DriftMatrix<T>, DiffusionMatrix<T>), DynamicsError> {
    let frame = rotating_frame(cfg)?;
    let tones = cfg.resolve_tones()?;
    let occupations = cfg.bath_occupations()?;
    let k = cfg.modes.len() + 1;
    let zero = Complex::from(T::zero());
    let mut m = DMatrix::from_element(k, k, zero);
    let mut n = DMatrix::from_element(k, k, zero);
    let half = lit::<T>(0.5);

    let kappa = angular(cfg.cavity.kappa_total);
    m[(0, 0)] = Complex::new(-kappa * half, -angular(frame.cavity_detuning));
    for (i, mode) in cfg.modes.iter().enumerate() {
        m[(i + 1, i + 1)] = Complex::new(-angular(mode.gamma_m) * half, -angular(frame.mode_detunings[i]));
    }
    for t in &tones {
        let g = Complex::new(T::zero(), -angular(t.coupling));
        let j = t.mode_index + 1;
        let target = match t.sideband {
            Sideband::Red => &mut m,
            Sideband::Blue => &mut n,
        };
        target[(0, j)] += g;
        target[(j, 0)] += g;
    }
    let drift = quadrature_drift(&m, &n);

    let mut d = DMatrix::zeros(2 * k, 2 * k);
    d[(0, 0)] = kappa * half;
    d[(1, 1)] = kappa * half;
    for (i, mode) in cfg.modes.iter().enumerate() {
        let v = angular(mode.gamma_m) * (occupations[i] + half);
        d[(2 * i + 2, 2 * i + 2)] = v;
        d[(2 * i + 3, 2 * i + 3)] = v;
    }
    Ok((DriftMatrix(drift), DiffusionMatrix(d)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport<T> {
    pub stable: bool,
    /// Largest real part among the drift eigenvalues, rad/s.
    pub spectral_abscissa: T,
}

/// Stable iff every drift eigenvalue has real part below `-1e-9` rad/s.
pub fn stability_check<T: Real>(drift: &DriftMatrix<T>) -> StabilityReport<T> {
    let a = drift.matrix();
    if a.nrows() == 0 {
        return StabilityReport { stable: true, spectral_abscissa: -T::max_value().unwrap_or_else(T::one) };
    }
    let eig = a.complex_eigenvalues();
    let abscissa = eig.iter().fold(-T::max_value().unwrap_or_else(T::one), |acc, z| acc.max(z.re));
    StabilityReport { stable: abscissa < lit(-1e-9) && abscissa.is_finite(), spectral_abscissa: abscissa }
}

/// Steady state of `cfg`: drift and diffusion, stability, Lyapunov solve.
pub fn steady_state<T: Real>(cfg: &SystemConfig<T>) -> Result<CovarianceState<T>, DynamicsError> {
    let (a, d) = build_drift_diffusion(cfg)?;
    lyapunov_steady_state(&a, &d)
}

pub(crate) fn f64_of<T: Real>(x: T) -> f64 {
    to_f64(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityMode, MechanicalMode, ThermalEnvironment, ToneCoupling, ToneRole};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn cfg() -> SystemConfig<f64> {
        SystemConfig::new(CavityMode::new(5.343e9, 200e3, 30e3), ThermalEnvironment::at_temperature(0.02))
            .with_mode(MechanicalMode::new("m1", 764e3, 1.0, 7.2))
            .with_mode(MechanicalMode::new("m2", 2460e3, 0.5, 1.04))
    }

    #[test]
    fn no_tones_gives_block_diagonal_drift() {
        let (a, _) = build_drift_diffusion(&cfg()).unwrap();
        let a = a.matrix();
        assert_eq!(a.nrows(), 6);
        for i in 0..6 {
            for j in 0..6 {
                if i / 2 != j / 2 {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        let block = a.view((2, 2), (2, 2)).into_owned();
        let eig = block.complex_eigenvalues();
        for z in eig.iter() {
            assert_relative_eq!(z.re, -TAU * 0.5, max_relative = 1e-12);
            assert!(z.im.abs() < 1e-9);
        }
    }

    #[test]
    fn resonant_red_tone_gives_beam_splitter_drift() {
        let c = cfg();
        let (kappa, gamma, g) = (200e3, 1.0, 80e3);
        let c = c.clone().with_tone(ToneCoupling::red_with_coupling(&c.cavity, &c.modes[0], 0.0, g, ToneRole::Pump));
        let (a, _) = build_drift_diffusion(&c).unwrap();
        let eig = a.matrix().view((0, 0), (4, 4)).into_owned().complex_eigenvalues();
        // eigenvalues of [[-kappa/2, -iG], [-iG, -Gamma/2]] in angular units
        let mean = -TAU * (kappa / 2.0 + gamma / 2.0) / 2.0;
        let split = TAU * (g * g - ((kappa - gamma) / 4.0).powi(2)).sqrt();
        for z in eig.iter() {
            assert_relative_eq!(z.re, mean, max_relative = 1e-9);
            assert_relative_eq!(z.im.abs(), split, max_relative = 1e-9);
        }
    }

    #[test]
    fn diffusion_entries_follow_occupation() {
        let mut c = cfg();
        c.environment = c.environment.clone().with_occupation("m1", 550.0);
        let (_, d) = build_drift_diffusion(&c).unwrap();
        let d = d.matrix();
        assert_relative_eq!(d[(2, 2)], TAU * 550.5, max_relative = 1e-12);
        assert_relative_eq!(d[(3, 3)], TAU * 550.5, max_relative = 1e-12);
        assert_relative_eq!(d[(0, 0)], TAU * 100e3, max_relative = 1e-12);
        assert_eq!(d, &d.transpose());
    }

    #[test]
    fn incompatible_tones_have_no_frame() {
        let c = cfg();
        let m1 = c.modes[0].clone();
        let c = c
            .clone()
            .with_tone(ToneCoupling::red_with_coupling(&c.cavity, &m1, 0.0, 100.0, ToneRole::Pump))
            .with_tone(ToneCoupling::red_with_coupling(&c.cavity, &m1, 1.2e6, 100.0, ToneRole::Drive));
        assert!(matches!(build_drift_diffusion(&c), Err(DynamicsError::Frame(_))));
    }

    #[test]
    fn red_and_blue_on_one_mode_pin_the_frame() {
        let c = cfg();
        let m1 = c.modes[0].clone();
        let c = c
            .clone()
            .with_tone(ToneCoupling::red_with_coupling(&c.cavity, &m1, 300.0, 100.0, ToneRole::Pump))
            .with_tone(ToneCoupling::blue_with_coupling(&c.cavity, &m1, -100.0, 50.0, ToneRole::Drive));
        let frame = rotating_frame(&c).unwrap();
        // -300 - phi = -100 + phi
        assert_relative_eq!(frame.cavity_detuning, 100.0, max_relative = 1e-12);
        assert_relative_eq!(frame.mode_detunings[0], -200.0, max_relative = 1e-12);
    }

    #[test]
    fn stability_threshold_for_blue_tone() {
        // parametric instability at 4 G^2 = kappa Gamma (resonant blue tone)
        let base = SystemConfig::new(CavityMode::new(5e9, 1e3, 500.0), ThermalEnvironment::at_temperature(0.02))
            .with_mode(MechanicalMode::new("m", 1e6, 10.0, 1.0));
        let threshold = (1e3f64 * 10.0).sqrt() / 2.0;
        let abscissa = |g: f64| {
            let c = base.clone().with_tone(ToneCoupling::blue_with_coupling(
                &base.cavity,
                &base.modes[0],
                0.0,
                g,
                ToneRole::Pump,
            ));
            stability_check(&build_drift_diffusion(&c).unwrap().0)
        };
        assert!(abscissa(0.0).stable);
        assert!(abscissa(0.99 * threshold).stable);
        assert!(!abscissa(1.01 * threshold).stable);
    }

    #[test]
    fn passive_systems_are_stable() {
        let (a, _) = build_drift_diffusion(&cfg()).unwrap();
        let r = stability_check(&a);
        assert!(r.stable);
        assert_relative_eq!(r.spectral_abscissa, -TAU * 0.25, max_relative = 1e-9);
    }
}
