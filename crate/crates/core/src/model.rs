//! Physical configuration of a cavity coupled to several mechanical modes.
//!
//! Every stored rate is an ordinary frequency `nu = omega / 2pi` in Hz.
//! Angular factors appear only inside the operations that need them.
//!
//! The enhanced coupling of a tone is `G = g_single * sqrt(n)` where `n` is
//! the intracavity photon number produced by that tone. When a tone is given
//! by its input power, `n` follows from single-port input-output theory
//! (see [`intracavity_photon_number`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{angular, lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration failed validation: {0}")]
    InvalidConfig(ValidationReport),
    #[error("unknown mechanical mode `{0}`")]
    UnknownMode(String),
}

/// Planck and Boltzmann constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T> {
    pub planck: T,
    pub boltzmann: T,
}

impl<T: Real> PhysicalConstants<T> {
    /// Exact SI (CODATA 2018) values.
    pub fn codata() -> Self {
        Self {
            planck: lit(6.626_070_15e-34),
            boltzmann: lit(1.380_649e-23),
        }
    }

    /// `hbar = h / 2 pi`.
    pub fn planck_reduced(&self) -> T {
        self.planck / T::two_pi()
    }

    /// Photon (or phonon) energy `h nu` in joules.
    pub fn quantum_energy(&self, nu: T) -> T {
        self.planck * nu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode<T> {
    /// Resonance frequency, Hz.
    pub nu_c: T,
    /// Total linewidth, Hz.
    pub kappa_total: T,
    /// External (port) coupling rate, Hz.
    pub kappa_ext: T,
}

impl<T: Real> CavityMode<T> {
    pub fn new(nu_c: T, kappa_total: T, kappa_ext: T) -> Self {
        Self { nu_c, kappa_total, kappa_ext }
    }

    /// `xi = kappa_ext / kappa_total`.
    pub fn coupling_ratio(&self) -> T {
        self.kappa_ext / self.kappa_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode<T> {
    pub id: String,
    /// Eigenfrequency, Hz.
    pub nu_m: T,
    /// Intrinsic energy decay rate, Hz.
    pub gamma_m: T,
    /// Single-photon coupling, Hz.
    pub g_single: T,
}

impl<T: Real> MechanicalMode<T> {
    pub fn new(id: impl Into<String>, nu_m: T, gamma_m: T, g_single: T) -> Self {
        Self { id: id.into(), nu_m, gamma_m, g_single }
    }
}

/// Which expression converts a bath temperature into an occupation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccupationModel {
    /// Bose-Einstein occupation `1 / (exp(h nu / k T) - 1)`.
    #[default]
    Exact,
    /// High-temperature form `k T / h nu`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnvironment<T> {
    /// Bath temperature, K.
    pub temperature: T,
    /// Per-mode occupations that replace the temperature-derived value.
    #[serde(default = "BTreeMap::new")]
    pub n_th_override: BTreeMap<String, T>,
    #[serde(default)]
    pub occupation: OccupationModel,
}

impl<T: Real> ThermalEnvironment<T> {
    pub fn at_temperature(temperature: T) -> Self {
        Self { temperature, n_th_override: BTreeMap::new(), occupation: OccupationModel::Exact }
    }

    pub fn with_occupation(mut self, mode_id: impl Into<String>, n_th: T) -> Self {
        self.n_th_override.insert(mode_id.into(), n_th);
        self
    }

    /// Bath occupation seen by `mode`.
    pub fn occupation_of(&self, mode: &MechanicalMode<T>) -> Result<T, ModelError> {
        match self.n_th_override.get(&mode.id) {
            Some(&n) => Ok(n),
            None => thermal_occupation(mode.nu_m, self.temperature, self.occupation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToneRole {
    /// Tone whose coupling is probed spectroscopically.
    Pump,
    /// Auxiliary tone (cooling, inter-mode coupling, entangling).
    Drive,
}

/// How strongly a tone populates the cavity. Exactly one description is
/// carried per tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneDrive<T> {
    /// Power arriving at the cavity port, W.
    Power(T),
    /// Intracavity photon number.
    PhotonNumber(T),
}

/// Sideband a tone addresses, classified by the sign of `nu_c - nu_drive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// Below the cavity: beam-splitter coupling.
    Red,
    /// Above the cavity: two-mode-squeezing coupling.
    Blue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneCoupling<T> {
    /// Tone frequency, Hz.
    pub nu_drive: T,
    pub drive: ToneDrive<T>,
    pub target_mode: String,
    pub role: ToneRole,
}

impl<T: Real> ToneCoupling<T> {
    pub fn new(nu_drive: T, drive: ToneDrive<T>, target_mode: impl Into<String>, role: ToneRole) -> Self {
        Self { nu_drive, drive, target_mode: target_mode.into(), role }
    }

    /// Red-sideband tone placed `detuning` Hz below the red sideband of
    /// `mode` and carrying the photon number that yields coupling
    /// `coupling` Hz.
    pub fn red_with_coupling(
        cavity: &CavityMode<T>,
        mode: &MechanicalMode<T>,
        detuning: T,
        coupling: T,
        role: ToneRole,
    ) -> Self {
        let n = photon_number_for_coupling(mode.g_single, coupling);
        Self::new(cavity.nu_c - mode.nu_m - detuning, ToneDrive::PhotonNumber(n), &mode.id, role)
    }

    /// Blue-sideband counterpart of [`ToneCoupling::red_with_coupling`];
    /// `detuning = nu_c + nu_m - nu_drive`.
    pub fn blue_with_coupling(
        cavity: &CavityMode<T>,
        mode: &MechanicalMode<T>,
        detuning: T,
        coupling: T,
        role: ToneRole,
    ) -> Self {
        let n = photon_number_for_coupling(mode.g_single, coupling);
        Self::new(cavity.nu_c + mode.nu_m - detuning, ToneDrive::PhotonNumber(n), &mode.id, role)
    }

    pub fn sideband(&self, cavity: &CavityMode<T>) -> Sideband {
        if self.nu_drive > cavity.nu_c {
            Sideband::Blue
        } else {
            Sideband::Red
        }
    }

    /// Detuning from the addressed sideband, Hz. Red: `nu_c - nu_m - nu_drive`;
    /// blue: `nu_c + nu_m - nu_drive`.
    pub fn detuning(&self, cavity: &CavityMode<T>, mode: &MechanicalMode<T>) -> T {
        match self.sideband(cavity) {
            Sideband::Red => cavity.nu_c - mode.nu_m - self.nu_drive,
            Sideband::Blue => cavity.nu_c + mode.nu_m - self.nu_drive,
        }
    }

    pub fn photon_number(&self, cavity: &CavityMode<T>) -> T {
        match self.drive {
            ToneDrive::PhotonNumber(n) => n,
            ToneDrive::Power(p) => {
                intracavity_photon_number(p, self.nu_drive, self.nu_drive - cavity.nu_c, cavity)
            }
        }
    }
}

fn photon_number_for_coupling<T: Real>(g_single: T, coupling: T) -> T {
    if g_single > T::zero() {
        let r = coupling / g_single;
        r * r
    } else {
        T::zero()
    }
}

/// A tone with every derived quantity evaluated against its configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedTone<T> {
    /// Position in `SystemConfig::tones`.
    pub index: usize,
    /// Position of the target in `SystemConfig::modes`.
    pub mode_index: usize,
    pub sideband: Sideband,
    pub role: ToneRole,
    /// Detuning from the addressed sideband, Hz.
    pub detuning: T,
    /// Probe offset `nu - nu_c` at which the mechanical resonance appears, Hz.
    pub two_photon_offset: T,
    pub photon_number: T,
    /// Enhanced coupling `G`, Hz.
    pub coupling: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig<T> {
    pub cavity: CavityMode<T>,
    pub modes: Vec<MechanicalMode<T>>,
    pub tones: Vec<ToneCoupling<T>>,
    pub environment: ThermalEnvironment<T>,
}

impl<T: Real> SystemConfig<T> {
    pub fn new(cavity: CavityMode<T>, environment: ThermalEnvironment<T>) -> Self {
        Self { cavity, modes: Vec::new(), tones: Vec::new(), environment }
    }

    pub fn with_mode(mut self, mode: MechanicalMode<T>) -> Self {
        self.modes.push(mode);
        self
    }

    pub fn with_tone(mut self, tone: ToneCoupling<T>) -> Self {
        self.tones.push(tone);
        self
    }

    pub fn mode_index(&self, id: &str) -> Result<usize, ModelError> {
        self.modes
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| ModelError::UnknownMode(id.to_string()))
    }

    pub fn mode(&self, id: &str) -> Result<&MechanicalMode<T>, ModelError> {
        self.mode_index(id).map(|i| &self.modes[i])
    }

    pub fn validate(&self) -> ValidationReport {
        validate_config(self)
    }

    /// Returns the validation report as an error when it carries violations.
    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(report))
        }
    }

    pub fn resolve_tone(&self, index: usize) -> Result<ResolvedTone<T>, ModelError> {
        let tone = self
            .tones
            .get(index)
            .ok_or_else(|| ModelError::InvalidArgument(format!("no tone at index {index}")))?;
        let mode_index = self.mode_index(&tone.target_mode)?;
        let mode = &self.modes[mode_index];
        let detuning = tone.detuning(&self.cavity, mode);
        let photon_number = tone.photon_number(&self.cavity);
        Ok(ResolvedTone {
            index,
            mode_index,
            sideband: tone.sideband(&self.cavity),
            role: tone.role,
            detuning,
            two_photon_offset: -detuning,
            photon_number,
            coupling: enhanced_coupling(mode.g_single, photon_number),
        })
    }

    /// Validates the configuration and resolves every tone.
    pub fn resolve_tones(&self) -> Result<Vec<ResolvedTone<T>>, ModelError> {
        self.ensure_valid()?;
        (0..self.tones.len()).map(|i| self.resolve_tone(i)).collect()
    }

    /// Bath occupation of every mechanical mode, in mode order.
    pub fn bath_occupations(&self) -> Result<Vec<T>, ModelError> {
        self.modes.iter().map(|m| self.environment.occupation_of(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `tones[1].target_mode`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle) || v.path.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK");
        }
        let parts: Vec<String> =
            self.violations.iter().map(|v| format!("{}: {}", v.path, v.message)).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks every structural and physical invariant of `cfg`.
pub fn validate_config<T: Real>(cfg: &SystemConfig<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let c = &cfg.cavity;
    let zero = T::zero();
    let finite = |x: T| x.is_finite();

    if !(finite(c.nu_c) && c.nu_c > zero) {
        report.push("cavity.nu_c", "nu_c must be positive and finite");
    }
    if !(finite(c.kappa_total) && c.kappa_total > zero) {
        report.push("cavity.kappa_total", "kappa_total must be positive and finite");
    }
    if !(finite(c.kappa_ext) && c.kappa_ext > zero) {
        report.push("cavity.kappa_ext", "kappa_ext must be positive and finite");
    }
    if c.kappa_ext > c.kappa_total {
        report.push("cavity.kappa_ext", "kappa_ext exceeds kappa_total");
    }

    for (i, m) in cfg.modes.iter().enumerate() {
        let p = |field: &str| format!("modes[{i}].{field}");
        if m.id.is_empty() {
            report.push(p("id"), "mode id must not be empty");
        }
        if cfg.modes[..i].iter().any(|other| other.id == m.id) {
            report.push(p("id"), format!("duplicate mode id `{}`", m.id));
        }
        if !(finite(m.nu_m) && m.nu_m > zero) {
            report.push(p("nu_m"), "nu_m must be positive and finite");
        }
        if !(finite(m.gamma_m) && m.gamma_m > zero) {
            report.push(p("gamma_m"), "gamma_m must be positive and finite");
        }
        if !(finite(m.g_single) && m.g_single >= zero) {
            report.push(p("g_single"), "g_single must be non-negative and finite");
        }
        if m.nu_m <= m.gamma_m {
            report.push(p("gamma_m"), "mode is not underdamped (nu_m must exceed gamma_m)");
        }
    }

    for (i, t) in cfg.tones.iter().enumerate() {
        let p = |field: &str| format!("tones[{i}].{field}");
        if !(finite(t.nu_drive) && t.nu_drive > zero) {
            report.push(p("nu_drive"), "nu_drive must be positive and finite");
        }
        match t.drive {
            ToneDrive::Power(w) if !(finite(w) && w >= zero) => {
                report.push(p("power"), "power must be non-negative and finite")
            }
            ToneDrive::PhotonNumber(n) if !(finite(n) && n >= zero) => {
                report.push(p("photon_number"), "photon_number must be non-negative and finite")
            }
            _ => {}
        }
        match cfg.modes.iter().find(|m| m.id == t.target_mode) {
            None => report.push(
                p("target_mode"),
                format!("target mode `{}` does not exist", t.target_mode),
            ),
            Some(m) => {
                if !finite(t.detuning(c, m)) {
                    report.push(p("nu_drive"), "detuning is not finite");
                }
            }
        }
    }

    let env = &cfg.environment;
    if !(finite(env.temperature) && env.temperature > zero) {
        report.push("environment.temperature", "temperature must be positive and finite");
    }
    for (id, &n) in &env.n_th_override {
        if !(finite(n) && n >= zero) {
            report.push(format!("environment.n_th.{id}"), "n_th must be non-negative and finite");
        }
        if !cfg.modes.iter().any(|m| &m.id == id) {
            report.push(format!("environment.n_th.{id}"), format!("n_th given for unknown mode `{id}`"));
        }
    }
    report
}

/// Thermal occupation of a mode at frequency `nu_m` (Hz) in a bath at
/// temperature `temperature` (K).
pub fn thermal_occupation<T: Real>(
    nu_m: T,
    temperature: T,
    model: OccupationModel,
) -> Result<T, ModelError> {
    if !(nu_m > T::zero() && temperature > T::zero()) {
        return Err(ModelError::InvalidArgument(
            "thermal_occupation needs nu_m > 0 and T > 0".into(),
        ));
    }
    let k = PhysicalConstants::<T>::codata();
    let x = k.quantum_energy(nu_m) / (k.boltzmann * temperature);
    Ok(match model {
        OccupationModel::Linear => T::one() / x,
        OccupationModel::Exact if x > lit(700.0) => T::zero(),
        OccupationModel::Exact => T::one() / x.exp_m1(),
    })
}

/// Steady-state intracavity photon number produced by a tone of power
/// `power` (W, at the cavity port) and frequency `nu_tone`, detuned by
/// `detuning_from_cavity = nu_tone - nu_c` (Hz):
/// `n = kappa_ext (P / h nu) / (Delta^2 + (kappa/2)^2)` in angular units.
pub fn intracavity_photon_number<T: Real>(
    power: T,
    nu_tone: T,
    detuning_from_cavity: T,
    cavity: &CavityMode<T>,
) -> T {
    if power <= T::zero() {
        return T::zero();
    }
    let k = PhysicalConstants::<T>::codata();
    let flux = power / k.quantum_energy(nu_tone);
    let d = angular(detuning_from_cavity);
    let half = angular(cavity.kappa_total) * lit(0.5);
    angular(cavity.kappa_ext) * flux / (d * d + half * half)
}

/// `G = g_single * sqrt(n)`, Hz.
pub fn enhanced_coupling<T: Real>(g_single: T, photon_number: T) -> T {
    g_single * photon_number.max(T::zero()).sqrt()
}

/// `P[W] = 10^((dBm - 30) / 10)`.
pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    lit::<T>(10.0).powf((dbm - lit(30.0)) / lit(10.0))
}

pub fn watts_to_dbm<T: Real>(watts: T) -> T {
    lit::<T>(10.0) * watts.log10() + lit(30.0)
}
