use super::lsq::{least_squares, FitControls, FitResult, ParamSpec};
use super::{DataSeries, FitError};
use crate::scalar::{lit, Real};

/// `offset + (2A/pi) w / (4 (x - c)^2 + w^2)`; the peak term integrates to `A`.
pub fn lorentzian_peak<T: Real>(x: T, center: T, fwhm: T, area: T, offset: T) -> T {
    let d = x - center;
    offset + area * lit::<T>(2.0) / T::pi() * fwhm / (lit::<T>(4.0) * d * d + fwhm * fwhm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit<T: Real> {
    pub center: T,
    pub fwhm: T,
    pub area: T,
    pub offset: T,
    /// Names `center, fwhm, area, offset`.
    pub fit: FitResult<T>,
}

/// Fits a single Lorentzian peak on a constant background.
pub fn fit_lorentzian_psd<T: Real>(data: &DataSeries<T>, controls: &FitControls) -> Result<LorentzianFit<T>, FitError<T>> {
    let n = data.len();
    if n < 5 {
        return Err(FitError::InvalidData(format!("Lorentzian fit needs at least 5 points, got {n}")));
    }
    let (x, y) = (&data.x, &data.y);
    let imax = (1..n).fold(0, |m, i| if y[i] > y[m] { i } else { m });
    let offset = y.iter().copied().fold(y[0], |a, b| a.min(b));
    let half = (y[imax] + offset) * lit(0.5);
    let l = (0..imax).rev().find(|&i| y[i] < half).unwrap_or(0);
    let r = (imax + 1..n).find(|&i| y[i] < half).unwrap_or(n - 1);
    let spacing = (x[n - 1] - x[0]) / lit((n - 1) as f64);
    let fwhm = (x[r] - x[l]).max(spacing) * lit(0.5) + spacing * lit(0.5);
    let area = (y[imax] - offset) * T::pi() * fwhm * lit(0.5);
    let c0 = x[imax];

    let local = data.shifted(c0);
    let scale_y = (y[imax] - offset).abs().max(T::default_epsilon());
    let inf: T = lit(f64::INFINITY);
    let specs = [
        ParamSpec::free("center", T::zero()).with_scale(fwhm),
        ParamSpec::free("fwhm", fwhm).bounded(spacing * lit(1e-6), inf).with_scale(fwhm),
        ParamSpec::free("area", area).with_scale(area.abs().max(scale_y * fwhm)),
        ParamSpec::free("offset", offset).with_scale(scale_y),
    ];
    let shift = |mut r: FitResult<T>| {
        r.params[0] += c0;
        r
    };
    let r = least_squares(|x, p: &[T]| lorentzian_peak(x, p[0], p[1], p[2], p[3]), &local, &specs, controls)
        .map(shift)
        .map_err(|e| match e {
            FitError::MaxIterations { best } => FitError::MaxIterations { best: Box::new(shift(*best)) },
            FitError::SingularJacobian { parameter, best } => FitError::SingularJacobian { parameter, best: Box::new(shift(*best)) },
            other => other,
        })?;
    Ok(LorentzianFit { center: r.params[0], fwhm: r.params[1], area: r.params[2], offset: r.params[3], fit: r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingdownFit<T: Real> {
    /// Energy decay rate, Hz; the amplitude decays as `exp(-pi gamma_m t)`.
    pub gamma_m: T,
    pub amplitude0: T,
    /// Names `gamma_m, amplitude0`.
    pub fit: FitResult<T>,
}

/// Fits `A0 exp(-Gamma_m t / 2)` (angular `Gamma_m`) to an amplitude ring-down.
pub fn fit_ringdown<T: Real>(data: &DataSeries<T>, controls: &FitControls) -> Result<RingdownFit<T>, FitError<T>> {
    let n = data.len();
    if n < 3 {
        return Err(FitError::InvalidData(format!("ring-down fit needs at least 3 points, got {n}")));
    }
    if let Some(i) = data.y.iter().position(|v| !(*v > T::zero())) {
        return Err(FitError::InvalidData(format!("amplitude at index {i} is not positive")));
    }
    // log-linear regression for the start
    let (t, ly): (Vec<T>, Vec<T>) = data.x.iter().zip(&data.y).map(|(&t, &a)| (t, a.ln())).unzip();
    let nn: T = lit(n as f64);
    let (mt, ml) = (t.iter().fold(T::zero(), |a, b| a + *b) / nn, ly.iter().fold(T::zero(), |a, b| a + *b) / nn);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (ti, li) in t.iter().zip(&ly) {
        sxy += (*ti - mt) * (*li - ml);
        sxx += (*ti - mt) * (*ti - mt);
    }
    let slope = sxy / sxx;
    let gamma0 = -slope / T::pi();
    let a0 = (ml - slope * mt).exp();
    let span = data.x[n - 1] - data.x[0];
    let specs = [
        ParamSpec::free("gamma_m", gamma0).with_scale(T::one() / span),
        ParamSpec::free("amplitude0", a0).with_scale(a0),
    ];
    let r = least_squares(|t, p: &[T]| p[1] * (-T::pi() * p[0] * t).exp(), data, &specs, controls)?;
    Ok(RingdownFit { gamma_m: r.params[0], amplitude0: r.params[1], fit: r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqrtPowerFit<T: Real> {
    /// `G = slope sqrt(P)`, Hz per sqrt(W) (or sqrt of whatever unit `P` uses).
    pub slope: T,
    /// RMS residual divided by the RMS of the data.
    pub relative_rms: T,
    /// `relative_rms` above the mismatch threshold.
    pub poor_fit: bool,
    /// Names `slope`.
    pub fit: FitResult<T>,
}

/// Fits `G = s sqrt(P)`; flags the fit when the relative RMS residual
/// exceeds `mismatch_threshold`.
pub fn fit_sqrt_power<T: Real>(
    data: &DataSeries<T>,
    mismatch_threshold: T,
    controls: &FitControls,
) -> Result<SqrtPowerFit<T>, FitError<T>> {
    if data.is_empty() {
        return Err(FitError::InvalidData("no points".into()));
    }
    if let Some(i) = data.x.iter().position(|p| !(*p > T::zero())) {
        return Err(FitError::InvalidData(format!("power at index {i} is not positive")));
    }
    // closed-form start: least squares of y on sqrt(x)
    let (num, den) = data.x.iter().zip(&data.y).fold((T::zero(), T::zero()), |(a, b), (&p, &g)| (a + g * p.sqrt(), b + p));
    let s0 = num / den;
    let specs = [ParamSpec::free("slope", s0).with_scale(s0.abs().max(T::default_epsilon()))];
    let r = least_squares(|p, q: &[T]| q[0] * p.sqrt(), data, &specs, controls)?;
    let m: T = lit(data.len() as f64);
    let rms_y = (data.y.iter().fold(T::zero(), |a, b| a + *b * *b) / m).sqrt();
    let rms_r = r.residual_norm / m.sqrt();
    let relative_rms = if rms_y > T::zero() { rms_r / rms_y } else { rms_r };
    Ok(SqrtPowerFit { slope: r.params[0], relative_rms, poor_fit: relative_rms > mismatch_threshold, fit: r })
}

/// Single-photon coupling from the `G` versus power slope, given the
/// intracavity photon number produced per unit power.
pub fn g_single_from_slope<T: Real>(slope: T, photons_per_power: T) -> T {
    slope / photons_per_power.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enhanced_coupling, intracavity_photon_number, CavityMode};
    use crate::response::linspace;
    use approx::assert_relative_eq;

    fn peak_data(scale: f64) -> DataSeries<f64> {
        let x = linspace(764e3 - 30.0, 764e3 + 30.0, 601);
        let y = x.iter().map(|&f| scale * lorentzian_peak(f, 764e3, 3.0, 1.0, 0.02)).collect();
        DataSeries::new(x, y, None).unwrap()
    }

    #[test]
    fn lorentzian_round_trip() {
        let f = fit_lorentzian_psd(&peak_data(1.0), &FitControls::default()).unwrap();
        assert_relative_eq!(f.center, 764e3, max_relative = 1e-6);
        assert_relative_eq!(f.fwhm, 3.0, max_relative = 1e-6);
        assert_relative_eq!(f.area, 1.0, max_relative = 1e-6);
        assert_relative_eq!(f.offset, 0.02, max_relative = 1e-6);
    }

    #[test]
    fn lorentzian_area_scales_linearly() {
        let a = fit_lorentzian_psd(&peak_data(1.0), &FitControls::default()).unwrap();
        let b = fit_lorentzian_psd(&peak_data(7.5), &FitControls::default()).unwrap();
        assert_relative_eq!(b.area / a.area, 7.5, max_relative = 1e-8);
    }

    #[test]
    fn lorentzian_peak_integrates_to_area() {
        // analytic: integral over [c - L, c + L] = A (2/pi) atan(2L/w)
        let (c, w, a, l) = (0.0, 2.0, 3.0, 1e4);
        let n = 2_000_001;
        let h = 2.0 * l / (n - 1) as f64;
        let s: f64 = (0..n).map(|i| lorentzian_peak(-l + h * i as f64, c, w, a, 0.0)).sum::<f64>() * h;
        assert_relative_eq!(s, a * 2.0 / std::f64::consts::PI * (2.0 * l / w).atan(), max_relative = 1e-6);
    }

    #[test]
    fn ringdown_round_trip() {
        let t = linspace(0.0, 2.0, 400);
        let y = t.iter().map(|&s| 3.0 * (-std::f64::consts::PI * 1.0 * s).exp()).collect();
        let f = fit_ringdown(&DataSeries::new(t, y, None).unwrap(), &FitControls::default()).unwrap();
        assert_relative_eq!(f.gamma_m, 1.0, max_relative = 1e-6);
        assert_relative_eq!(f.amplitude0, 3.0, max_relative = 1e-6);
    }

    #[test]
    fn constant_ringdown_has_no_decay() {
        let t = linspace(0.0f64, 2.0, 50);
        let y = t.iter().enumerate().map(|(i, _)| 1.0 + if i % 2 == 0 { 1e-3 } else { -1e-3 }).collect();
        let f = fit_ringdown(&DataSeries::new(t, y, None).unwrap(), &FitControls::default()).unwrap();
        assert!(f.gamma_m.abs() < 3.0 * f.fit.sigma("gamma_m").unwrap());
    }

    #[test]
    fn sqrt_power_exact_and_mismatched() {
        let p = linspace(1e-12f64, 1e-9, 20);
        let g: Vec<f64> = p.iter().map(|x| 4e8 * x.sqrt()).collect();
        let f = fit_sqrt_power(&DataSeries::new(p.clone(), g, None).unwrap(), 0.02, &FitControls::default()).unwrap();
        assert_relative_eq!(f.slope, 4e8, max_relative = 1e-10);
        assert!(f.fit.residual_norm < 1e-6);
        assert!(!f.poor_fit);
        let lin: Vec<f64> = p.iter().map(|x| 1e13 * x).collect();
        let f = fit_sqrt_power(&DataSeries::new(p, lin, None).unwrap(), 0.02, &FitControls::default()).unwrap();
        assert!(f.poor_fit, "relative rms {}", f.relative_rms);
    }

    #[test]
    fn sqrt_power_chain_recovers_g_single() {
        let cavity = CavityMode::new(5.343e9, 200e3, 30e3);
        let (g0, nu_m) = (7.2, 764e3);
        let nu_tone = cavity.nu_c - nu_m;
        let powers = linspace(1e-13, 5e-12, 12);
        let gs: Vec<f64> = powers
            .iter()
            .map(|&p| enhanced_coupling(g0, intracavity_photon_number(p, nu_tone, -nu_m, &cavity)))
            .collect();
        let f = fit_sqrt_power(&DataSeries::new(powers, gs, None).unwrap(), 0.02, &FitControls::default()).unwrap();
        let per_watt = intracavity_photon_number(1.0, nu_tone, -nu_m, &cavity);
        assert_relative_eq!(g_single_from_slope(f.slope, per_watt), g0, max_relative = 1e-9);
    }
}
