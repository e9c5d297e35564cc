//! JSON system description.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "cavity": { "nu_c_hz": 5.343e9, "kappa_hz": 200e3, "kappa_ext_hz": 30e3 },
//!   "modes": [ { "id": "m1", "nu_m_hz": 764e3, "gamma_m_hz": 1.0, "g0_hz": 7.2 } ],
//!   "tones": [ { "target": "m1", "role": "pump", "detuning_hz": 0.0, "power_dbm": -30.0, "attenuation_db": 60.0 } ],
//!   "environment": { "temperature_k": 0.02, "n_th": { "m1": 550.0 } },
//!   "background": { "a0": 1.0, "a1": 0.0, "theta1": 0.0 }
//! }
//! ```
//!
//! A tone gives its frequency either absolutely (`nu_drive_hz`) or as
//! `detuning_hz` from the red (default) or blue sideband of its target, and
//! its strength as exactly one of `power_dbm`, `power_w`, `photon_number` or
//! `coupling_hz`. Powers are at the source; `attenuation_db` is subtracted
//! before they reach the cavity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use emech_core::model::{
    dbm_to_watts, CavityMode, MechanicalMode, OccupationModel, Sideband, SystemConfig, ThermalEnvironment,
    ToneCoupling, ToneDrive, ToneRole,
};
use emech_core::response::FanoBackground;
use emech_core::SystemConfigF64;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub cavity: CavitySection,
    pub modes: Vec<ModeSection>,
    #[serde(default)]
    pub tones: Vec<ToneSection>,
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub background: Option<BackgroundSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub nu_c_hz: f64,
    pub kappa_hz: f64,
    pub kappa_ext_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub id: String,
    pub nu_m_hz: f64,
    pub gamma_m_hz: f64,
    pub g0_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSection {
    pub target: String,
    pub role: ToneRole,
    #[serde(default)]
    pub nu_drive_hz: Option<f64>,
    #[serde(default)]
    pub detuning_hz: Option<f64>,
    #[serde(default)]
    pub sideband: Option<Sideband>,
    #[serde(default)]
    pub power_dbm: Option<f64>,
    #[serde(default)]
    pub power_w: Option<f64>,
    #[serde(default)]
    pub photon_number: Option<f64>,
    #[serde(default)]
    pub coupling_hz: Option<f64>,
    #[serde(default)]
    pub attenuation_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub temperature_k: f64,
    #[serde(default)]
    pub occupation: OccupationModel,
    #[serde(default)]
    pub n_th: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSection {
    #[serde(default = "one")]
    pub a0: f64,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub theta1: f64,
}

fn one() -> f64 {
    1.0
}

/// Parsed, converted and validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub system: SystemConfigF64,
    pub background: FanoBackground<f64>,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&bytes)
}

pub fn parse_config(bytes: &[u8]) -> Result<LoadedConfig, CliError> {
    let file: ConfigFile = serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("config: {e}")))?;
    let (system, background) = file.build()?;
    Ok(LoadedConfig { system, background, sha256: sha256_hex(bytes) })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ConfigFile {
    pub fn build(&self) -> Result<(SystemConfigF64, FanoBackground<f64>), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let c = &self.cavity;
        let cavity = CavityMode::new(c.nu_c_hz, c.kappa_hz, c.kappa_ext_hz);
        let mut env = ThermalEnvironment::at_temperature(self.environment.temperature_k);
        env.occupation = self.environment.occupation;
        env.n_th_override = self.environment.n_th.clone();
        let mut system = SystemConfig::new(cavity, env);
        for m in &self.modes {
            system = system.with_mode(MechanicalMode::new(&m.id, m.nu_m_hz, m.gamma_m_hz, m.g0_hz));
        }
        for (i, t) in self.tones.iter().enumerate() {
            let tone = t.build(&system).map_err(|msg| CliError::Config(format!("tones[{i}]: {msg}")))?;
            system = system.with_tone(tone);
        }
        system.ensure_valid().map_err(|e| CliError::Config(e.to_string()))?;
        let background = match self.background {
            Some(b) => FanoBackground::new(b.a0, b.a1, b.theta1),
            None => FanoBackground::none(),
        };
        background.validate().map_err(|e| CliError::Config(format!("background: {e}")))?;
        Ok((system, background))
    }
}

impl ToneSection {
    fn build(&self, system: &SystemConfigF64) -> Result<ToneCoupling<f64>, String> {
        let mode = system.mode(&self.target).map_err(|e| e.to_string())?;
        let cavity = &system.cavity;
        let nu_drive = match (self.nu_drive_hz, self.detuning_hz) {
            (Some(nu), None) => {
                if self.sideband.is_some() {
                    return Err("`sideband` is only meaningful with `detuning_hz`".into());
                }
                nu
            }
            (None, Some(d)) => match self.sideband.unwrap_or(Sideband::Red) {
                Sideband::Red => cavity.nu_c - mode.nu_m - d,
                Sideband::Blue => cavity.nu_c + mode.nu_m - d,
            },
            _ => return Err("give exactly one of `nu_drive_hz` and `detuning_hz`".into()),
        };
        let given = [self.power_dbm, self.power_w, self.photon_number, self.coupling_hz];
        if given.iter().filter(|v| v.is_some()).count() != 1 {
            return Err("give exactly one of `power_dbm`, `power_w`, `photon_number`, `coupling_hz`".into());
        }
        let attenuation = self.attenuation_db.unwrap_or(0.0);
        if self.attenuation_db.is_some() && self.power_dbm.is_none() && self.power_w.is_none() {
            return Err("`attenuation_db` only applies to `power_dbm` or `power_w`".into());
        }
        let drive = if let Some(dbm) = self.power_dbm {
            ToneDrive::Power(dbm_to_watts(dbm - attenuation))
        } else if let Some(w) = self.power_w {
            ToneDrive::Power(w * 10f64.powf(-attenuation / 10.0))
        } else if let Some(n) = self.photon_number {
            ToneDrive::PhotonNumber(n)
        } else {
            let g = self.coupling_hz.unwrap_or(0.0);
            if g != 0.0 && !(mode.g_single > 0.0) {
                return Err(format!("`coupling_hz` needs a positive g0_hz on mode `{}`", mode.id));
            }
            ToneDrive::PhotonNumber(if g == 0.0 { 0.0 } else { (g / mode.g_single).powi(2) })
        };
        Ok(ToneCoupling::new(nu_drive, drive, &self.target, self.role))
    }
}
