//! Time-domain reference for the probe response.
//!
//! Integrates the linearized mean-field equations with every tone kept as an
//! explicitly time-dependent coupling, so tone sets that share a mechanical
//! mode (and therefore admit no static rotating frame) are handled as well.
//! Frames: cavity at `nu_c`, each mechanical mode at its own `nu_m`.
//!
//! ```text
//! da/dt  = -kappa/2 a + sqrt(kappa_ext) e^{-i Delta t}
//!          - i sum_red  G e^{i delta t} b - i sum_blue G e^{i delta t} b*
//! db/dt  = -Gamma/2 b - i sum_red G e^{-i delta t} a - i sum_blue G e^{i delta t} a*
//! ```
//!
//! The reflection is the output `1 - sqrt(kappa_ext) a` demodulated at the
//! probe frequency after the transient has decayed.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::{f64_of, FanoBackground, ResponseError, SpectrumTrace, SpectrumValues};
use crate::dynamics::{build_drift_diffusion, stability_check, DynamicsError};
use crate::model::{Sideband, SystemConfig};
use crate::scalar::{angular, cis, cplx, lit, norm_sqr, Complex, Real};

#[derive(Debug, Clone, Copy)]
pub struct LtpControls<T> {
    /// RK4 steps per period of the fastest rate in the problem.
    pub steps_per_period: usize,
    /// Transient length in units of the slowest decay time.
    pub settle_time_constants: T,
    /// Explicit transient duration, s.
    pub transient: Option<T>,
    /// Explicit first demodulation window, s.
    pub window: Option<T>,
    /// Accepted change of the demodulated amplitude when the window doubles.
    pub tolerance: T,
    pub max_doublings: usize,
    pub max_steps: usize,
}

impl<T: Real> Default for LtpControls<T> {
    fn default() -> Self {
        Self {
            steps_per_period: 128,
            settle_time_constants: lit(14.0),
            transient: None,
            window: None,
            tolerance: lit(1e-4),
            max_doublings: 6,
            max_steps: 200_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtpDiagnostics {
    pub transient_s: f64,
    pub window_s: f64,
    pub dt_s: f64,
    pub steps: usize,
    pub doublings: usize,
    pub last_change: f64,
    pub reason: String,
}

impl fmt::Display for LtpDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (transient {:.3e} s, window {:.3e} s, dt {:.3e} s, {} steps, {} doublings, last change {:.3e})",
            self.reason, self.transient_s, self.window_s, self.dt_s, self.steps, self.doublings, self.last_change
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Coupling<T> {
    mode: usize,
    g: T,
    detuning: T,
    blue: bool,
}

struct Equations<T> {
    half_kappa: T,
    sqrt_kext: T,
    half_gamma: Vec<T>,
    couplings: Vec<Coupling<T>>,
    probe: T,
}

impl<T: Real> Equations<T> {
    fn rhs(&self, t: T, y: &[Complex<T>], out: &mut [Complex<T>]) {
        let i = cplx(T::zero(), T::one());
        let a = y[0];
        out[0] = a * -self.half_kappa + cis(-self.probe * t) * self.sqrt_kext;
        for (k, hg) in self.half_gamma.iter().enumerate() {
            out[k + 1] = y[k + 1] * -*hg;
        }
        for c in &self.couplings {
            let ph = cis(c.detuning * t);
            let b = y[c.mode + 1];
            if c.blue {
                out[0] -= i * ph * b.conj() * c.g;
                out[c.mode + 1] -= i * ph * a.conj() * c.g;
            } else {
                out[0] -= i * ph * b * c.g;
                out[c.mode + 1] -= i * ph.conj() * a * c.g;
            }
        }
    }
}

struct Integrator<T> {
    eq: Equations<T>,
    y: Vec<Complex<T>>,
    k: [Vec<Complex<T>>; 4],
    tmp: Vec<Complex<T>>,
    dt: T,
    step: usize,
}

impl<T: Real> Integrator<T> {
    fn time(&self) -> T {
        self.dt * lit::<T>(self.step as f64)
    }

    fn advance(&mut self) {
        let (dt, t) = (self.dt, self.time());
        let half = dt * lit(0.5);
        let n = self.y.len();
        self.eq.rhs(t, &self.y, &mut self.k[0]);
        for s in 1..4 {
            let (h, tt) = if s < 3 { (half, t + half) } else { (dt, t + dt) };
            for j in 0..n {
                self.tmp[j] = self.y[j] + self.k[s - 1][j] * h;
            }
            self.eq.rhs(tt, &self.tmp, &mut self.k[s]);
        }
        let sixth = dt / lit(6.0);
        for j in 0..n {
            let incr = self.k[0][j] + (self.k[1][j] + self.k[2][j]) * lit::<T>(2.0) + self.k[3][j];
            self.y[j] += incr * sixth;
        }
        self.step += 1;
    }

    /// Demodulated output sample at the current time.
    fn demod(&self) -> Complex<T> {
        Complex::from(T::one()) - self.y[0] * self.eq.sqrt_kext * cis(self.eq.probe * self.time())
    }

    fn blown_up(&self) -> bool {
        self.y.iter().any(|z| {
            let m = norm_sqr(*z);
            !m.is_finite() || m > lit(1e30)
        })
    }
}

/// Reference reflection amplitude at probe offset `delta` (Hz) from direct
/// integration of the time-periodic linearized equations.
pub fn ltp_reference_response<T: Real>(
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
    delta: T,
    controls: &LtpControls<T>,
) -> Result<Complex<T>, ResponseError> {
    bg.validate()?;
    let tones = cfg.resolve_tones()?;

    let half_kappa = angular(cfg.cavity.kappa_total) * lit(0.5);
    let half_gamma: Vec<T> = cfg.modes.iter().map(|m| angular(m.gamma_m) * lit(0.5)).collect();
    let couplings: Vec<Coupling<T>> = tones
        .iter()
        .map(|t| Coupling {
            mode: t.mode_index,
            g: angular(t.coupling),
            detuning: angular(t.detuning),
            blue: t.sideband == Sideband::Blue,
        })
        .collect();

    // slowest decay of the homogeneous system
    let decay = match build_drift_diffusion(cfg) {
        Ok((drift, _)) => {
            let report = stability_check(&drift);
            if !report.stable {
                return Err(ResponseError::Instability { abscissa: f64_of(report.spectral_abscissa) });
            }
            -report.spectral_abscissa
        }
        Err(DynamicsError::Frame(_)) => {
            let coupled = half_gamma
                .iter()
                .enumerate()
                .filter(|(k, _)| couplings.iter().any(|c| c.mode == *k))
                .map(|(_, g)| *g);
            coupled.fold(half_kappa, |acc, g| acc.min(g))
        }
        Err(e) => return Err(e.into()),
    };

    let probe = angular(delta);
    let coupling_norm = couplings.iter().fold(T::zero(), |acc, c| acc + c.g * c.g).sqrt();
    let fastest = couplings
        .iter()
        .fold(probe.abs().max(half_kappa).max(coupling_norm), |acc, c| acc.max(c.detuning.abs()));
    let fastest = half_gamma.iter().fold(fastest, |acc, g| acc.max(*g));
    let dt = T::two_pi() / (fastest * lit::<T>(controls.steps_per_period as f64));
    let transient = controls.transient.unwrap_or(controls.settle_time_constants / decay);
    let window = controls.window.unwrap_or(transient);

    let steps_of = |duration: T| -> usize {
        (duration / dt).ceil().to_usize().unwrap_or(usize::MAX).max(1)
    };
    let transient_steps = steps_of(transient);
    let window_steps = steps_of(window);
    let mut diag = LtpDiagnostics {
        transient_s: f64_of(transient),
        window_s: f64_of(window),
        dt_s: f64_of(dt),
        steps: 0,
        doublings: 0,
        last_change: f64::NAN,
        reason: String::new(),
    };
    if transient_steps.saturating_add(2 * window_steps) > controls.max_steps {
        diag.reason = format!("integration needs more than {} steps", controls.max_steps);
        return Err(ResponseError::Nonconvergence(diag));
    }

    let n = cfg.modes.len() + 1;
    let zero = Complex::from(T::zero());
    let mut rk = Integrator {
        eq: Equations { half_kappa, sqrt_kext: angular(cfg.cavity.kappa_ext).sqrt(), half_gamma, couplings, probe },
        y: vec![zero; n],
        k: [vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]],
        tmp: vec![zero; n],
        dt,
        step: 0,
    };

    for _ in 0..transient_steps {
        rk.advance();
    }
    if rk.blown_up() {
        return Err(ResponseError::Instability { abscissa: f64::NAN });
    }

    // trapezoidal running integral of the demodulated output
    let mut integral = zero;
    let mut prev = rk.demod();
    let mut integrate = |rk: &mut Integrator<T>, steps: usize| {
        for _ in 0..steps {
            rk.advance();
            let cur = rk.demod();
            integral += (prev + cur) * (dt * lit(0.5));
            prev = cur;
        }
        integral
    };

    let mut span = window_steps;
    let mut estimate = integrate(&mut rk, span) / (dt * lit::<T>(span as f64));
    for doubling in 1..=controls.max_doublings {
        if rk.step + span > controls.max_steps {
            diag.reason = format!("step budget of {} exhausted", controls.max_steps);
            break;
        }
        let total = integrate(&mut rk, span);
        span *= 2;
        let next = total / (dt * lit::<T>(span as f64));
        if rk.blown_up() {
            return Err(ResponseError::Instability { abscissa: f64::NAN });
        }
        let change = norm_sqr(next - estimate).sqrt();
        diag.last_change = f64_of(change);
        diag.doublings = doubling;
        diag.steps = rk.step;
        estimate = next;
        if change < controls.tolerance {
            return Ok(bg.apply(estimate));
        }
    }
    diag.steps = rk.step;
    if diag.reason.is_empty() {
        diag.reason = "demodulated amplitude did not settle".into();
    }
    Err(ResponseError::Nonconvergence(diag))
}

/// Reference solver evaluated over a probe axis (Hz).
pub fn ltp_reference_spectrum<T: Real>(
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
    axis: Vec<T>,
    controls: &LtpControls<T>,
) -> Result<SpectrumTrace<T>, ResponseError> {
    let values = axis
        .par_iter()
        .map(|&d| ltp_reference_response(cfg, bg, d, controls))
        .collect::<Result<Vec<_>, _>>()?;
    SpectrumTrace::new(axis, SpectrumValues::Complex(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityMode, MechanicalMode, ThermalEnvironment, ToneCoupling, ToneRole};
    use crate::response::{linspace, s11_bare_cavity, s11_multi_tone, s11_single_tone};

    fn base() -> (CavityMode<f64>, MechanicalMode<f64>, MechanicalMode<f64>) {
        (
            CavityMode::new(50.0, 1.0, 0.4),
            MechanicalMode::new("m1", 7.0, 0.2, 0.1),
            MechanicalMode::new("m2", 11.0, 0.15, 0.1),
        )
    }

    #[test]
    fn bare_cavity_matches_closed_form() {
        let (c, m1, _) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0)).with_mode(m1);
        for d in [-1.5, -0.3, 0.0, 0.7] {
            let a = ltp_reference_response(&cfg, &FanoBackground::none(), d, &LtpControls::default()).unwrap();
            let b = s11_bare_cavity(d, &c, &FanoBackground::none());
            assert!((a - b).norm() < 1e-5, "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn single_red_tone_matches_self_energy_model() {
        let (c, m1, _) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0))
            .with_tone(ToneCoupling::red_with_coupling(&c, &m1, 0.0, 0.3, ToneRole::Pump))
            .with_mode(m1.clone());
        let bg = FanoBackground::new(0.95, 0.05, 0.3);
        for d in linspace(-1.0, 1.0, 9) {
            let a = ltp_reference_response(&cfg, &bg, d, &LtpControls::default()).unwrap();
            let b = s11_single_tone(d, &c, &m1, 0.3, 0.0, &bg);
            assert!((a - b).norm() < 1e-3, "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn distinct_modes_match_multi_tone() {
        let (c, m1, m2) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0))
            .with_tone(ToneCoupling::red_with_coupling(&c, &m1, 0.4, 0.25, ToneRole::Pump))
            .with_tone(ToneCoupling::red_with_coupling(&c, &m2, -0.5, 0.3, ToneRole::Drive))
            .with_mode(m1)
            .with_mode(m2);
        for d in linspace(-1.5, 1.5, 7) {
            let a = ltp_reference_response(&cfg, &FanoBackground::none(), d, &LtpControls::default()).unwrap();
            let b = s11_multi_tone(d, &cfg, &FanoBackground::none()).unwrap();
            assert!((a - b).norm() < 1e-3, "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn blue_tone_matches_multi_tone() {
        let (c, m1, _) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0))
            .with_tone(ToneCoupling::blue_with_coupling(&c, &m1, 0.2, 0.1, ToneRole::Pump))
            .with_mode(m1);
        for d in linspace(-1.0, 1.0, 5) {
            let a = ltp_reference_response(&cfg, &FanoBackground::none(), d, &LtpControls::default()).unwrap();
            let b = s11_multi_tone(d, &cfg, &FanoBackground::none()).unwrap();
            assert!((a - b).norm() < 1e-3, "{d}: {a} vs {b}");
        }
    }

    #[test]
    fn shared_mode_configuration_integrates() {
        let (c, m1, _) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0))
            .with_tone(ToneCoupling::red_with_coupling(&c, &m1, 0.0, 0.2, ToneRole::Pump))
            .with_tone(ToneCoupling::red_with_coupling(&c, &m1, 3.0, 0.5, ToneRole::Drive))
            .with_mode(m1.clone());
        let s = ltp_reference_response(&cfg, &FanoBackground::none(), 0.1, &LtpControls::default()).unwrap();
        assert!(s.norm() <= 1.0 + 1e-6);
        // the far-detuned drive only adds damping and a spring shift, so the
        // pump window survives
        let no_drive = s11_single_tone(0.1, &c, &m1, 0.2, 0.0, &FanoBackground::none());
        assert!((s - no_drive).norm() < 0.2);
    }

    #[test]
    fn unstable_blue_tone_is_reported() {
        let (c, m1, _) = base();
        // 4 G^2 = 0.36 > kappa gamma = 0.2
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0))
            .with_tone(ToneCoupling::blue_with_coupling(&c, &m1, 0.0, 0.3, ToneRole::Pump))
            .with_mode(m1);
        let err = ltp_reference_response(&cfg, &FanoBackground::none(), 0.0, &LtpControls::default()).unwrap_err();
        assert!(matches!(err, ResponseError::Instability { .. }));
    }

    #[test]
    fn step_budget_is_reported_with_diagnostics() {
        let (c, m1, _) = base();
        let cfg = SystemConfig::new(c, ThermalEnvironment::at_temperature(1.0)).with_mode(m1);
        let controls = LtpControls { max_steps: 10, ..LtpControls::default() };
        match ltp_reference_response(&cfg, &FanoBackground::none(), 0.0, &controls) {
            Err(ResponseError::Nonconvergence(d)) => assert!(d.reason.contains("steps")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
