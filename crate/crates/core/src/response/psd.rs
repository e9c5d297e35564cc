use rayon::prelude::*;

use super::hierarchical::{optical_damping, spring_shift};
use super::{ResponseError, SpectrumTrace, SpectrumValues};
use crate::model::{Sideband, SystemConfig};
use crate::scalar::{lit, Real};

/// Lorentzian thermal sideband produced by a single red tone.
///
/// The spectrum is normalized so that its area equals the steady-state
/// phonon occupation: `psd(f) = n_bar * (w/2) / (pi ((f - c)^2 + (w/2)^2))`
/// in quanta/Hz, with `w = gamma_m + gamma_opt` and `n_bar` from the
/// cooling rate balance `n_th gamma_m / (gamma_m + gamma_opt)`. Area ratios
/// between operating points therefore equal occupation ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalSideband<T> {
    /// Offset from the tone, Hz.
    pub center: T,
    /// FWHM, Hz.
    pub linewidth: T,
    /// Steady-state occupation (area).
    pub occupation: T,
}

impl<T: Real> ThermalSideband<T> {
    pub fn from_config(cfg: &SystemConfig<T>) -> Result<Self, ResponseError> {
        let tones = cfg.resolve_tones()?;
        let [tone] = tones.as_slice() else {
            return Err(ResponseError::Precondition(format!(
                "thermal sideband needs exactly one tone, got {}",
                tones.len()
            )));
        };
        if tone.sideband != Sideband::Red {
            return Err(ResponseError::Precondition("thermal sideband needs a red-detuned tone".into()));
        }
        let mode = &cfg.modes[tone.mode_index];
        let kappa = cfg.cavity.kappa_total;
        let n_th = cfg.environment.occupation_of(mode)?;
        let gamma_opt = optical_damping(tone.coupling, tone.detuning, kappa);
        let linewidth = mode.gamma_m + gamma_opt;
        Ok(Self {
            center: mode.nu_m - spring_shift(tone.coupling, tone.detuning, kappa),
            linewidth,
            occupation: n_th * mode.gamma_m / linewidth,
        })
    }

    pub fn psd(&self, offset_from_tone: T) -> T {
        let hw = self.linewidth * lit(0.5);
        let x = offset_from_tone - self.center;
        self.occupation * hw / (T::pi() * (x * x + hw * hw))
    }
}

/// PSD (quanta/Hz) at `offset_from_tone` Hz above the single red tone in `cfg`.
pub fn thermal_sideband_psd<T: Real>(offset_from_tone: T, cfg: &SystemConfig<T>) -> Result<T, ResponseError> {
    Ok(ThermalSideband::from_config(cfg)?.psd(offset_from_tone))
}

pub fn thermal_sideband_spectrum<T: Real>(
    cfg: &SystemConfig<T>,
    axis: Vec<T>,
) -> Result<SpectrumTrace<T>, ResponseError> {
    let model = ThermalSideband::from_config(cfg)?;
    let values = axis.par_iter().map(|&f| model.psd(f)).collect();
    SpectrumTrace::new(axis, SpectrumValues::Psd(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CavityMode, MechanicalMode, ThermalEnvironment, ToneCoupling, ToneRole};
    use approx::assert_relative_eq;

    fn cfg(temperature: f64, coupling: f64) -> SystemConfig<f64> {
        let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
        let m = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
        SystemConfig::new(cavity, ThermalEnvironment::at_temperature(temperature))
            .with_tone(ToneCoupling::red_with_coupling(&cavity, &m, 0.0, coupling, ToneRole::Pump))
            .with_mode(m)
    }

    /// Trapezoid over +-`span` linewidths plus the analytic Lorentzian tails.
    fn area(model: &ThermalSideband<f64>, span: f64) -> f64 {
        let n = 400_001;
        let lo = model.center - span * model.linewidth;
        let h = 2.0 * span * model.linewidth / (n - 1) as f64;
        let mut s = 0.5 * (model.psd(lo) + model.psd(lo + h * (n - 1) as f64));
        for i in 1..n - 1 {
            s += model.psd(lo + h * i as f64);
        }
        let tails = model.occupation * (1.0 - 2.0 / std::f64::consts::PI * (2.0 * span).atan());
        s * h + tails
    }

    #[test]
    fn peak_sits_at_mechanical_frequency() {
        let m = ThermalSideband::from_config(&cfg(0.02, 100.0)).unwrap();
        assert_eq!(m.center, 764e3);
        let left = thermal_sideband_psd(764e3 - 0.1, &cfg(0.02, 100.0)).unwrap();
        let right = thermal_sideband_psd(764e3 + 0.1, &cfg(0.02, 100.0)).unwrap();
        let mid = thermal_sideband_psd(764e3, &cfg(0.02, 100.0)).unwrap();
        assert!(mid > left && mid > right);
    }

    #[test]
    fn area_ratio_is_occupation_ratio() {
        let a = ThermalSideband::from_config(&cfg(0.02, 200.0)).unwrap();
        let b = ThermalSideband::from_config(&cfg(0.08, 200.0)).unwrap();
        let (area_a, area_b) = (area(&a, 200.0), area(&b, 200.0));
        assert_relative_eq!(area_a, a.occupation, max_relative = 1e-6);
        assert_relative_eq!(area_b / area_a, b.occupation / a.occupation, max_relative = 1e-6);
    }

    #[test]
    fn weak_tone_leaves_intrinsic_linewidth() {
        let m = ThermalSideband::from_config(&cfg(0.02, 0.0)).unwrap();
        assert_eq!(m.linewidth, 1.0);
    }

    #[test]
    fn blue_tone_is_rejected() {
        let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
        let m = MechanicalMode::new("m1", 764e3, 1.0, 7.2);
        let c = SystemConfig::new(cavity, ThermalEnvironment::at_temperature(0.02))
            .with_tone(ToneCoupling::blue_with_coupling(&cavity, &m, 0.0, 10.0, ToneRole::Pump))
            .with_mode(m);
        assert!(matches!(thermal_sideband_psd(764e3, &c), Err(ResponseError::Precondition(_))));
    }
}
