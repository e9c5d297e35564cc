//! Closed-form figures of merit.
//!
//! All inputs are ordinary frequencies in Hz. Every dimensionless metric is a
//! ratio of rates, so it does not depend on the angular/ordinary convention.

use serde::Serialize;
use thiserror::Error;

use crate::model::PhysicalConstants;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("drive detuning {0} Hz is too close to zero for adiabatic elimination")]
    DivisionGuard(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `C = 4 G^2 / (gamma_m kappa)`.
///
/// The phonon-phonon cooperativity `4 eta^2 / (Gamma_1 Gamma_2)` is the same
/// expression with `(eta, Gamma_1, Gamma_2)` in place of `(G, gamma_m, kappa)`.
pub fn cooperativity<T: Real>(coupling: T, gamma_m: T, kappa: T) -> T {
    lit::<T>(4.0) * coupling * coupling / (gamma_m * kappa)
}

/// `C_quant = 4 G^2 / (n_th gamma_m kappa)`.
pub fn quantum_cooperativity<T: Real>(coupling: T, gamma_m: T, kappa: T, n_th: T) -> T {
    cooperativity(coupling, gamma_m, kappa) / n_th
}

/// Inverts [`quantum_cooperativity`] for the coupling `G` (Hz) that reaches
/// `c_quant` at the given bath occupation, mechanical linewidth and cavity
/// linewidth.
pub fn coupling_for_quantum_cooperativity<T: Real>(
    c_quant: T,
    gamma_m: T,
    kappa: T,
    n_th: T,
) -> Result<T, MetricsError> {
    if !(c_quant >= T::zero() && gamma_m > T::zero() && kappa > T::zero() && n_th > T::zero()) {
        return Err(MetricsError::InvalidArgument(
            "need c_quant >= 0 and positive gamma_m, kappa, n_th".into(),
        ));
    }
    Ok((c_quant * n_th * gamma_m * kappa / lit(4.0)).sqrt())
}

/// Cavity-mediated coupling `eta = G1 G2 / delta1` (Hz) between two
/// mechanical modes driven by far-detuned tones.
pub fn eta_effective<T: Real>(g1: T, g2: T, delta1: T) -> Result<T, MetricsError> {
    if delta1.abs() < lit(1e-6) {
        return Err(MetricsError::DivisionGuard(crate::scalar::to_f64(delta1)));
    }
    Ok(g1 * g2 / delta1)
}

/// `Gamma_quant = n_th gamma_m`, Hz.
pub fn quantum_diffusion_rate<T: Real>(n_th: T, gamma_m: T) -> T {
    n_th * gamma_m
}

/// Strong coupling in the thermal environment: `G > max(kappa, n_th gamma_m)`.
pub fn is_strongly_coupled<T: Real>(coupling: T, kappa: T, diffusion_rate: T) -> bool {
    coupling > kappa.max(diffusion_rate)
}

/// `T_ph = h nu_m / k_B`, K.
pub fn single_phonon_temperature<T: Real>(nu_m: T) -> T {
    let k = PhysicalConstants::<T>::codata();
    k.quantum_energy(nu_m) / k.boltzmann
}

/// Optional-field summary of the figures of merit for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport<T> {
    pub cooperativity: Option<T>,
    pub quantum_cooperativity: Option<T>,
    /// Hz.
    pub quantum_diffusion_rate: Option<T>,
    /// K.
    pub single_phonon_temperature: Option<T>,
    /// Hz.
    pub eta: Option<T>,
    pub strong_coupling: Option<bool>,
}

/// Inputs for [`MetricsReport::evaluate`]; absent inputs leave the dependent
/// metrics empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct OperatingPoint<T> {
    pub coupling: Option<T>,
    pub gamma_m: Option<T>,
    pub kappa: Option<T>,
    pub n_th: Option<T>,
    pub nu_m: Option<T>,
    /// `(G1, G2, delta1)` of a two-drive scheme.
    pub two_drive: Option<(T, T, T)>,
}

impl<T: Real> MetricsReport<T> {
    pub fn evaluate(op: &OperatingPoint<T>) -> Result<Self, MetricsError> {
        let mut r = Self {
            cooperativity: None,
            quantum_cooperativity: None,
            quantum_diffusion_rate: None,
            single_phonon_temperature: None,
            eta: None,
            strong_coupling: None,
        };
        if let (Some(g), Some(gm), Some(k)) = (op.coupling, op.gamma_m, op.kappa) {
            let c = cooperativity(g, gm, k);
            r.cooperativity = Some(c);
            if let Some(n) = op.n_th.filter(|n| *n > T::zero()) {
                r.quantum_cooperativity = Some(c / n);
            }
        }
        if let (Some(n), Some(gm)) = (op.n_th, op.gamma_m) {
            let rate = quantum_diffusion_rate(n, gm);
            r.quantum_diffusion_rate = Some(rate);
            if let (Some(g), Some(k)) = (op.coupling, op.kappa) {
                r.strong_coupling = Some(is_strongly_coupled(g, k, rate));
            }
        }
        r.single_phonon_temperature = op.nu_m.map(single_phonon_temperature);
        if let Some((g1, g2, d1)) = op.two_drive {
            r.eta = Some(eta_effective(g1, g2, d1)?.abs());
        }
        Ok(r)
    }
}

/// One row of the drive-power / detuning table of cavity-mediated couplings:
/// `(G1 kHz, G2 kHz, delta1 kHz, eta_cal Hz, eta_exp Hz)`.
pub const COUPLING_TABLE: [(f64, f64, f64, f64, f64); 6] = [
    (8.1, 0.74, 1200.0, 5.0, 5.0),
    (11.4, 1.05, 1200.0, 10.0, 9.8),
    (11.4, 2.80, 1200.0, 26.7, 27.4),
    (8.1, 1.05, 300.0, 28.4, 28.6),
    (11.4, 2.97, 1100.0, 30.8, 31.6),
    (12.1, 3.73, 1200.0, 37.7, 40.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingTableRow {
    pub row: usize,
    pub g1_hz: f64,
    pub g2_hz: f64,
    pub delta1_hz: f64,
    pub eta_calc_hz: f64,
    pub eta_table_hz: f64,
    pub eta_measured_hz: f64,
    pub relative_error: f64,
}

/// Recomputes `eta = G1 G2 / delta1` for every row of [`COUPLING_TABLE`].
pub fn coupling_table() -> Vec<CouplingTableRow> {
    COUPLING_TABLE
        .iter()
        .enumerate()
        .map(|(i, &(g1, g2, d1, cal, exp))| {
            let (g1, g2, d1) = (g1 * 1e3, g2 * 1e3, d1 * 1e3);
            let eta = g1 * g2 / d1;
            CouplingTableRow {
                row: i + 1,
                g1_hz: g1,
                g2_hz: g2,
                delta1_hz: d1,
                eta_calc_hz: eta,
                eta_table_hz: cal,
                eta_measured_hz: exp,
                relative_error: (eta - cal).abs() / cal,
            }
        })
        .collect()
}
