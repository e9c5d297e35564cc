//! Synthetic data: a model curve plus seeded Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use emech_core::estimation::{emit_model, lorentzian_peak, EmitParams, EmitSetup};
use emech_core::model::{thermal_occupation, OccupationModel};

use crate::error::CliError;
use crate::spec::FitModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitTruth {
    pub window_center_hz: f64,
    pub gamma_m_hz: f64,
    #[serde(default = "yes")]
    pub fano: bool,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub theta1: f64,
    pub kappa_hz: f64,
    pub xi: f64,
    pub nu_c_hz: f64,
    pub coupling_hz: f64,
}

fn yes() -> bool {
    true
}

impl EmitTruth {
    pub fn setup(&self) -> EmitSetup<f64> {
        EmitSetup { window_center: self.window_center_hz, gamma_m: self.gamma_m_hz, fano: self.fano }
    }

    pub fn params(&self) -> EmitParams<f64> {
        EmitParams {
            a1: self.a1,
            theta1: self.theta1,
            kappa: self.kappa_hz,
            xi: self.xi,
            nu_c: self.nu_c_hz,
            coupling: self.coupling_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzianTruth {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub area: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingdownTruth {
    pub gamma_m_hz: f64,
    pub amplitude0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqrtPowerTruth {
    /// Hz per sqrt(W).
    pub slope: f64,
}

/// `area = gain * max(n(T), floor)`: the mode follows the bath down to an
/// occupation floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaltempTruth {
    pub gain: f64,
    pub nu_m_hz: f64,
    #[serde(default)]
    pub floor_occupation: f64,
    #[serde(default)]
    pub occupation: OccupationModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truth {
    Emit(EmitTruth),
    Lorentzian(LorentzianTruth),
    Ringdown(RingdownTruth),
    SqrtPower(SqrtPowerTruth),
    Caltemp(CaltempTruth),
}

impl Truth {
    pub fn parse(model: FitModel, bytes: &[u8]) -> Result<Self, CliError> {
        fn de<T: serde::de::DeserializeOwned>(b: &[u8]) -> Result<T, CliError> {
            serde_json::from_slice(b).map_err(|e| CliError::Config(format!("truth: {e}")))
        }
        Ok(match model {
            FitModel::Emit => Self::Emit(de(bytes)?),
            FitModel::Lorentzian => Self::Lorentzian(de(bytes)?),
            FitModel::Ringdown => Self::Ringdown(de(bytes)?),
            FitModel::Sqrtpower => Self::SqrtPower(de(bytes)?),
            FitModel::Caltemp => Self::Caltemp(de(bytes)?),
        })
    }

    /// Header names for `x` and `y`.
    pub fn columns(&self) -> (&'static str, &'static str) {
        match self {
            Self::Emit(_) => ("probe_hz", "reflectance"),
            Self::Lorentzian(_) => ("frequency_hz", "psd_per_hz"),
            Self::Ringdown(_) => ("time_s", "amplitude"),
            Self::SqrtPower(_) => ("power_w", "coupling_hz"),
            Self::Caltemp(_) => ("temperature_k", "area"),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, CliError> {
        Ok(match self {
            Self::Emit(t) => emit_model(x, &t.setup(), &t.params()),
            Self::Lorentzian(t) => lorentzian_peak(x, t.center_hz, t.fwhm_hz, t.area, t.offset),
            Self::Ringdown(t) => t.amplitude0 * (-std::f64::consts::PI * t.gamma_m_hz * x).exp(),
            Self::SqrtPower(t) => t.slope * x.max(0.0).sqrt(),
            Self::Caltemp(t) => {
                let n = thermal_occupation(t.nu_m_hz, x, t.occupation).map_err(|e| CliError::Config(e.to_string()))?;
                t.gain * n.max(t.floor_occupation)
            }
        })
    }
}

/// `y_i = model(x_i) + sigma z_i` with `z_i` drawn in order from a
/// ChaCha8 stream seeded by `seed`. `sigma = 0` returns the model exactly.
pub fn synthesize(truth: &Truth, x: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>, CliError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CliError::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let clean = x.iter().map(|&v| truth.eval(v)).collect::<Result<Vec<_>, _>>()?;
    if sigma == 0.0 {
        return Ok(clean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(clean.into_iter().map(|y| y + normal.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ringdown() -> Truth {
        Truth::Ringdown(RingdownTruth { gamma_m_hz: 1.0, amplitude0: 2.0 })
    }

    #[test]
    fn zero_sigma_is_exact() {
        let x = [0.0, 0.5, 1.0];
        let y = synthesize(&ringdown(), &x, 0.0, 9).unwrap();
        assert_eq!(y[0], 2.0);
        assert_eq!(y[2], 2.0 * (-std::f64::consts::PI).exp());
    }

    #[test]
    fn noise_is_seeded() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let a = synthesize(&ringdown(), &x, 0.1, 5).unwrap();
        assert_eq!(a, synthesize(&ringdown(), &x, 0.1, 5).unwrap());
        assert_ne!(a, synthesize(&ringdown(), &x, 0.1, 6).unwrap());
        assert!(synthesize(&ringdown(), &x, -1.0, 5).is_err());
    }

    #[test]
    fn truth_files_reject_unknown_keys() {
        assert!(Truth::parse(FitModel::Ringdown, br#"{"gamma_m_hz": 1, "amplitude0": 2}"#).is_ok());
        assert!(Truth::parse(FitModel::Ringdown, br#"{"gamma_m_hz": 1, "amp": 2}"#).is_err());
    }
}
