//! Frequency-domain forward models of the probe reflection and the thermal
//! sideband.
//!
//! Probe offsets `delta` are `nu_probe - nu_c` in Hz. A mechanical mode
//! addressed by a tone shows up in the probe response at the tone's
//! two-photon offset: the probe offset at which the probe-tone beat note
//! equals `nu_m` (that is, `-detuning`).
//!
//! Every complex amplitude is `a1 e^{i theta1} + a0 * S_cavity`, where
//! `S_cavity = 1 - kappa_ext / (-i Delta + kappa/2 + Sigma(Delta))` and
//! `Sigma` sums one self-energy per tone-mode coupling.

mod hierarchical;
mod ltp;
mod psd;

pub use hierarchical::{
    anticrossing_map, hierarchical_anticrossing_s11, optical_damping, spring_shift, AnticrossingMap,
    AnticrossingSetup, HybridMode,
};
pub use ltp::{ltp_reference_response, ltp_reference_spectrum, LtpControls, LtpDiagnostics};
pub use psd::{thermal_sideband_psd, thermal_sideband_spectrum, ThermalSideband};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::model::{CavityMode, MechanicalMode, ModelError, Sideband, SystemConfig};
use crate::scalar::{angular, cis, cplx, lit, norm_sqr, to_f64, Complex, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tones {first} and {second} both target mode `{mode}`; use the hierarchical or reference solver")]
    SharedMode { mode: String, first: usize, second: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linearized dynamics are unstable (spectral abscissa {abscissa} rad/s)")]
    Instability { abscissa: f64 },
    #[error("reference integration did not converge: {0}")]
    Nonconvergence(LtpDiagnostics),
    #[error("invalid spectrum: {0}")]
    InvalidTrace(String),
}

impl From<DynamicsError> for ResponseError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Model(m) => ResponseError::Model(m),
            DynamicsError::Instability { abscissa } => ResponseError::Instability { abscissa },
            other => ResponseError::Precondition(other.to_string()),
        }
    }
}

/// Stray reflection path interfering with the cavity response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoBackground<T> {
    /// Main-path amplitude.
    pub a0: T,
    /// Stray amplitude.
    pub a1: T,
    /// Stray phase, rad, in `[-pi, pi)`.
    pub theta1: T,
}

impl<T: Real> FanoBackground<T> {
    pub fn new(a0: T, a1: T, theta1: T) -> Self {
        Self { a0, a1, theta1 }
    }

    /// `a0 = 1`, no stray path.
    pub fn none() -> Self {
        Self { a0: T::one(), a1: T::zero(), theta1: T::zero() }
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        let pi = T::pi();
        if !(self.a0 > T::zero() && self.a1 >= T::zero() && self.theta1 >= -pi && self.theta1 < pi) {
            return Err(ResponseError::Precondition(
                "background needs a0 > 0, a1 >= 0 and theta1 in [-pi, pi)".into(),
            ));
        }
        Ok(())
    }

    /// Wraps the bare cavity reflection with the stray path.
    pub fn apply(&self, cavity_reflection: Complex<T>) -> Complex<T> {
        cis(self.theta1) * self.a1 + cavity_reflection * self.a0
    }
}

impl<T: Real> Default for FanoBackground<T> {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum SpectrumValues<T> {
    /// Complex reflection amplitude.
    Complex(Vec<Complex<T>>),
    /// `|S11|^2`.
    Reflectance(Vec<T>),
    /// Symmetrized power spectral density, quanta/Hz.
    Psd(Vec<T>),
}

impl<T> SpectrumValues<T> {
    pub fn len(&self) -> usize {
        match self {
            Self::Complex(v) => v.len(),
            Self::Reflectance(v) | Self::Psd(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sampled probe axis (Hz) with one value per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumTrace<T> {
    axis: Vec<T>,
    values: SpectrumValues<T>,
}

impl<T: Real> SpectrumTrace<T> {
    pub fn new(axis: Vec<T>, values: SpectrumValues<T>) -> Result<Self, ResponseError> {
        if axis.len() != values.len() {
            return Err(ResponseError::InvalidTrace(format!(
                "axis has {} samples but values have {}",
                axis.len(),
                values.len()
            )));
        }
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ResponseError::InvalidTrace("axis must be strictly increasing".into()));
        }
        Ok(Self { axis, values })
    }

    pub fn axis(&self) -> &[T] {
        &self.axis
    }

    pub fn values(&self) -> &SpectrumValues<T> {
        &self.values
    }

    /// Real-valued view: `|S11|^2` for complex traces, the stored values
    /// otherwise.
    pub fn magnitudes(&self) -> Vec<T> {
        match &self.values {
            SpectrumValues::Complex(v) => v.iter().map(|z| norm_sqr(*z)).collect(),
            SpectrumValues::Reflectance(v) | SpectrumValues::Psd(v) => v.clone(),
        }
    }
}

/// Evenly spaced axis including both end points.
pub fn linspace<T: Real>(start: T, stop: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / lit::<T>((points - 1) as f64);
            (0..points).map(|i| start + step * lit::<T>(i as f64)).collect()
        }
    }
}

/// One tone-mode coupling as seen from the probe, in angular units.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Branch<T> {
    /// `G^2`, (rad/s)^2.
    pub coupling_sq: T,
    /// Two-photon offset, rad/s.
    pub offset: T,
    /// Mechanical energy decay rate, rad/s.
    pub gamma: T,
    /// +1 for beam-splitter (red), -1 for two-mode squeezing (blue).
    pub sign: T,
}

impl<T: Real> Branch<T> {
    fn self_energy(&self, delta: T) -> Complex<T> {
        let denom = cplx(self.gamma * lit(0.5), -(delta - self.offset));
        Complex::from(self.sign * self.coupling_sq) / denom
    }
}

/// Cavity reflection (without background) for a probe at angular offset
/// `delta` given a total self-energy.
pub(crate) fn cavity_reflection<T: Real>(
    delta: T,
    kappa: T,
    kappa_ext: T,
    self_energy: Complex<T>,
) -> Complex<T> {
    let denom = cplx(kappa * lit(0.5), -delta) + self_energy;
    Complex::from(T::one()) - Complex::from(kappa_ext) / denom
}

/// Reflection amplitude with a single tone coupling `coupling` (Hz) to `mech`,
/// whose transparency window sits at probe offset `two_photon_offset` (Hz).
///
/// `|s11_single_tone(..)|^2` is the reflectance model used for fitting:
/// `a1 e^{i theta1} + a0 [1 - xi kappa / (-i Delta + kappa/2 + G^2 / (-i (Delta - o) + Gamma_m / 2))]`.
pub fn s11_single_tone<T: Real>(
    delta: T,
    cavity: &CavityMode<T>,
    mech: &MechanicalMode<T>,
    coupling: T,
    two_photon_offset: T,
    bg: &FanoBackground<T>,
) -> Complex<T> {
    let g = angular(coupling);
    let branch = Branch {
        coupling_sq: g * g,
        offset: angular(two_photon_offset),
        gamma: angular(mech.gamma_m),
        sign: T::one(),
    };
    let d = angular(delta);
    let sigma = branch.self_energy(d);
    bg.apply(cavity_reflection(d, angular(cavity.kappa_total), angular(cavity.kappa_ext), sigma))
}

/// Bare-cavity reflection (no tones).
pub fn s11_bare_cavity<T: Real>(delta: T, cavity: &CavityMode<T>, bg: &FanoBackground<T>) -> Complex<T> {
    let d = angular(delta);
    bg.apply(cavity_reflection(
        d,
        angular(cavity.kappa_total),
        angular(cavity.kappa_ext),
        Complex::from(T::zero()),
    ))
}

/// Self-energy model for tone sets in which every mechanical mode is
/// addressed by at most one tone.
#[derive(Debug, Clone)]
pub struct MultiToneModel<T> {
    kappa: T,
    kappa_ext: T,
    branches: Vec<Branch<T>>,
    bg: FanoBackground<T>,
}

impl<T: Real> MultiToneModel<T> {
    pub fn new(cfg: &SystemConfig<T>, bg: &FanoBackground<T>) -> Result<Self, ResponseError> {
        bg.validate()?;
        let tones = cfg.resolve_tones()?;
        for (i, a) in tones.iter().enumerate() {
            if let Some(b) = tones[..i].iter().find(|b| b.mode_index == a.mode_index) {
                return Err(ResponseError::SharedMode {
                    mode: cfg.modes[a.mode_index].id.clone(),
                    first: b.index,
                    second: a.index,
                });
            }
        }
        let branches = tones
            .iter()
            .map(|t| {
                let g = angular(t.coupling);
                Branch {
                    coupling_sq: g * g,
                    offset: angular(t.two_photon_offset),
                    gamma: angular(cfg.modes[t.mode_index].gamma_m),
                    sign: match t.sideband {
                        Sideband::Red => T::one(),
                        Sideband::Blue => -T::one(),
                    },
                }
            })
            .collect();
        Ok(Self {
            kappa: angular(cfg.cavity.kappa_total),
            kappa_ext: angular(cfg.cavity.kappa_ext),
            branches,
            bg: *bg,
        })
    }

    pub fn s11(&self, delta: T) -> Complex<T> {
        let d = angular(delta);
        let sigma = self
            .branches
            .iter()
            .fold(Complex::from(T::zero()), |acc, b| acc + b.self_energy(d));
        self.bg.apply(cavity_reflection(d, self.kappa, self.kappa_ext, sigma))
    }
}

/// Reflection amplitude with every tone contributing its own self-energy.
/// Fails with [`ResponseError::SharedMode`] when two tones address one mode.
pub fn s11_multi_tone<T: Real>(
    delta: T,
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
) -> Result<Complex<T>, ResponseError> {
    Ok(MultiToneModel::new(cfg, bg)?.s11(delta))
}

/// Complex reflection trace of the multi-tone model over `axis` (Hz).
pub fn reflection_spectrum<T: Real>(
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
    axis: Vec<T>,
) -> Result<SpectrumTrace<T>, ResponseError> {
    let model = MultiToneModel::new(cfg, bg)?;
    let values: Vec<Complex<T>> = axis.par_iter().map(|&d| model.s11(d)).collect();
    SpectrumTrace::new(axis, SpectrumValues::Complex(values))
}

/// `1 - |S11|^2` at the center of a single-tone transparency window for
/// `a1 = 0`: `1 - a0^2 (1 - 2 xi / (1 + C))^2` with `C = 4 G^2 / (kappa Gamma_m)`.
pub fn emit_window_depth<T: Real>(xi: T, cooperativity: T, a0: T) -> T {
    let amp = T::one() - lit::<T>(2.0) * xi / (T::one() + cooperativity);
    T::one() - a0 * a0 * amp * amp
}

pub(crate) fn f64_of<T: Real>(x: T) -> f64 {
    to_f64(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ThermalEnvironment, ToneCoupling, ToneRole};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cavity(xi: f64) -> CavityMode<f64> {
        CavityMode::new(5.343e9, 200e3, xi * 200e3)
    }

    fn mech() -> MechanicalMode<f64> {
        MechanicalMode::new("m1", 764e3, 1.0, 7.2)
    }

    #[test]
    fn critically_coupled_dip_is_complete() {
        let s = s11_single_tone(0.0, &cavity(0.5), &mech(), 0.0, 0.0, &FanoBackground::none());
        assert!(s.norm_sqr() < 1e-30);
    }

    #[test]
    fn undercoupled_dip_depth() {
        let s = s11_single_tone(0.0, &cavity(0.15), &mech(), 0.0, 0.0, &FanoBackground::none());
        assert_relative_eq!(s.re, 0.7, max_relative = 1e-14);
        assert!(s.im.abs() < 1e-15);
        assert_relative_eq!(s.norm_sqr(), 0.49, max_relative = 1e-14);
    }

    #[test]
    fn window_center_matches_cooperativity_formula() {
        let (xi, gamma, kappa) = (0.15, 1.0, 200e3);
        for g in [10.0, 100.0, 343.0, 2e3, 2e4] {
            let s = s11_single_tone(0.0, &cavity(xi), &mech(), g, 0.0, &FanoBackground::none());
            let c = 4.0 * g * g / (kappa * gamma);
            let numeric = 1.0 - s.norm_sqr();
            assert!((numeric - emit_window_depth(xi, c, 1.0)).abs() < 1e-9);
        }
        // strong cooperativity restores full reflection
        let s = s11_single_tone(0.0, &cavity(xi), &mech(), 5e4, 0.0, &FanoBackground::none());
        assert!((s.norm_sqr() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn fano_background_adds_stray_path() {
        let bg = FanoBackground::new(1.0, 0.2, 1.0);
        let bare = s11_single_tone(1e4, &cavity(0.15), &mech(), 0.0, 0.0, &FanoBackground::none());
        let with = s11_single_tone(1e4, &cavity(0.15), &mech(), 0.0, 0.0, &bg);
        let stray = with - bare;
        assert_relative_eq!(stray.re, 0.2 * 1f64.cos(), max_relative = 1e-12);
        assert_relative_eq!(stray.im, 0.2 * 1f64.sin(), max_relative = 1e-12);
        assert!(FanoBackground::new(1.0, 0.1, std::f64::consts::PI).validate().is_err());
    }

    fn two_mode_cfg(tones: &[(usize, f64, f64)]) -> SystemConfig<f64> {
        let cav = cavity(0.15);
        let m1 = mech();
        let m2 = MechanicalMode::new("m2", 2460e3, 0.8, 1.04);
        let modes = [m1.clone(), m2.clone()];
        let mut cfg = SystemConfig::new(cav, ThermalEnvironment::at_temperature(0.02))
            .with_mode(m1)
            .with_mode(m2);
        for &(m, det, g) in tones {
            cfg = cfg.with_tone(ToneCoupling::red_with_coupling(&cav, &modes[m], det, g, ToneRole::Pump));
        }
        cfg
    }

    #[test]
    fn one_tone_reduces_to_single_tone_model() {
        let cfg = two_mode_cfg(&[(0, 300.0, 2e3)]);
        let bg = FanoBackground::new(0.9, 0.1, -0.4);
        for d in linspace(-4e5, 4e5, 101) {
            let a = s11_multi_tone(d, &cfg, &bg).unwrap();
            let b = s11_single_tone(d, &cfg.cavity, &cfg.modes[0], 2e3, -300.0, &bg);
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn zero_tones_is_bare_cavity() {
        let cfg = two_mode_cfg(&[]);
        for d in linspace(-4e5, 4e5, 41) {
            let a = s11_multi_tone(d, &cfg, &FanoBackground::none()).unwrap();
            let b = s11_bare_cavity(d, &cfg.cavity, &FanoBackground::none());
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn shared_mode_is_rejected() {
        let cfg = two_mode_cfg(&[(0, 0.0, 1e3), (0, 1.2e6, 1e4)]);
        let err = s11_multi_tone(0.0, &cfg, &FanoBackground::none()).unwrap_err();
        assert!(matches!(err, ResponseError::SharedMode { first: 0, second: 1, .. }));
    }

    #[test]
    fn two_tones_open_two_windows() {
        // windows at -2 kHz and +3 kHz, each ~ Gamma + 4G^2/kappa = 201 Hz wide
        let cfg = two_mode_cfg(&[(0, 2e3, 3e3), (1, -3e3, 3e3)]);
        let axis = linspace(-8e3, 8e3, 16001);
        let trace = reflection_spectrum(&cfg, &FanoBackground::none(), axis.clone()).unwrap();
        let r = trace.magnitudes();
        let peaks: Vec<f64> = (1..r.len() - 1)
            .filter(|&i| r[i] > r[i - 1] && r[i] > r[i + 1])
            .map(|i| axis[i])
            .collect();
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        assert!((peaks[0] + 2e3).abs() <= 2.0);
        assert!((peaks[1] - 3e3).abs() <= 2.0);
    }

    #[test]
    fn trace_rejects_bad_axes() {
        assert!(SpectrumTrace::new(vec![0.0, 1.0], SpectrumValues::Psd(vec![1.0])).is_err());
        assert!(SpectrumTrace::new(vec![1.0, 1.0], SpectrumValues::Psd(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn single_precision_model_tracks_double() {
        let c32 = CavityMode::new(5.343e9_f32, 200e3, 30e3);
        let m32 = MechanicalMode::new("m1", 764e3_f32, 1.0, 7.2);
        let a = s11_single_tone(1e4_f32, &c32, &m32, 2e3, 0.0, &FanoBackground::none());
        let b = s11_single_tone(1e4, &cavity(0.15), &mech(), 2e3, 0.0, &FanoBackground::none());
        assert!((a.re as f64 - b.re).abs() < 1e-5 && (a.im as f64 - b.im).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn passive_without_blue_tones(
            d in -1e6f64..1e6, xi in 0.01f64..1.0,
            g1 in 0.0f64..5e5, g2 in 0.0f64..5e5,
            det1 in -5e5f64..5e5, det2 in -5e5f64..5e5,
        ) {
            let mut cfg = two_mode_cfg(&[(0, det1, g1), (1, det2, g2)]);
            cfg.cavity.kappa_ext = xi * cfg.cavity.kappa_total;
            let s = s11_multi_tone(d, &cfg, &FanoBackground::none()).unwrap();
            prop_assert!(s.norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn symmetric_for_zero_offsets(d in 0.0f64..1e6, g1 in 0.0f64..5e5, g2 in 0.0f64..5e5) {
            let cfg = two_mode_cfg(&[(0, 0.0, g1), (1, 0.0, g2)]);
            let bg = FanoBackground::none();
            let a = s11_multi_tone(d, &cfg, &bg).unwrap().norm_sqr();
            let b = s11_multi_tone(-d, &cfg, &bg).unwrap().norm_sqr();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
