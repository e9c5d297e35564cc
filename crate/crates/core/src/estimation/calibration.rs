use super::FitError;
use crate::model::{thermal_occupation, OccupationModel};
use crate::scalar::{lit, to_f64, Real};

/// Noise-spectrum area measured at one fridge temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperaturePoint<T> {
    /// K.
    pub temperature: T,
    pub area: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureCalibration<T> {
    /// Area per phonon.
    pub gain: T,
    /// Lowest fridge temperature in the data, K.
    pub base_temperature: T,
    /// Occupation inferred from the base-temperature area.
    pub base_occupation: T,
    /// Occupation the bath would have at the base temperature.
    pub base_bath_occupation: T,
    pub anchor_points: usize,
}

/// Fits `area = gain * n(T)` through the origin over the anchor points with
/// `T` in `anchor` and converts the base-temperature area into an occupation.
pub fn calibrate_temperature<T: Real>(
    points: &[TemperaturePoint<T>],
    anchor: (T, T),
    nu_m: T,
    model: OccupationModel,
) -> Result<TemperatureCalibration<T>, FitError<T>> {
    if points.len() < 3 {
        return Err(FitError::InvalidData(format!("calibration needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.temperature.is_finite() || !p.area.is_finite() || !(p.temperature > T::zero())) {
        return Err(FitError::InvalidData("temperatures must be positive and areas finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.temperature.partial_cmp(&b.temperature).unwrap_or(std::cmp::Ordering::Equal));
    let (lo, hi) = anchor;
    let (t_min, t_max) = (sorted[0].temperature, sorted[sorted.len() - 1].temperature);
    if !(lo >= t_min && hi <= t_max && lo < hi) {
        return Err(FitError::InvalidData(format!(
            "anchor range [{}, {}] K must lie within the data [{}, {}] K",
            to_f64(lo),
            to_f64(hi),
            to_f64(t_min),
            to_f64(t_max)
        )));
    }
    let anchors: Vec<_> = sorted.iter().filter(|p| p.temperature >= lo && p.temperature <= hi).collect();
    let span = match (anchors.first(), anchors.last()) {
        (Some(a), Some(b)) if anchors.len() >= 2 => b.temperature / a.temperature,
        _ => T::zero(),
    };
    if span < lit(2.0) {
        return Err(FitError::DegenerateFit(format!(
            "anchor points span a temperature ratio of {:.3}, need at least 2",
            to_f64(span)
        )));
    }
    let occ = |t: T| thermal_occupation(nu_m, t, model).map_err(|e| FitError::InvalidData(e.to_string()));
    let (mut num, mut den) = (T::zero(), T::zero());
    for p in &anchors {
        let n = occ(p.temperature)?;
        num += p.area * n;
        den += n * n;
    }
    let gain = num / den;
    if !(gain > T::zero()) {
        return Err(FitError::DegenerateFit("non-positive gain".into()));
    }
    let base = sorted[0];
    Ok(TemperatureCalibration {
        gain,
        base_temperature: base.temperature,
        base_occupation: base.area / gain,
        base_bath_occupation: occ(base.temperature)?,
        anchor_points: anchors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const NU_M: f64 = 764e3;

    fn data(gain: f64, floor: f64) -> Vec<TemperaturePoint<f64>> {
        [0.01, 0.05, 0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&t| {
                let n = thermal_occupation(NU_M, t, OccupationModel::Exact).unwrap();
                // the mode thermalizes no lower than `floor`
                TemperaturePoint { temperature: t, area: gain * n.max(floor) }
            })
            .collect()
    }

    #[test]
    fn linear_data_gives_exact_gain() {
        let cal = calibrate_temperature(&data(2.5e-3, 0.0), (0.1, 0.4), NU_M, OccupationModel::Exact).unwrap();
        assert_relative_eq!(cal.gain, 2.5e-3, max_relative = 1e-12);
        assert_relative_eq!(cal.base_occupation, cal.base_bath_occupation, max_relative = 1e-12);
    }

    #[test]
    fn saturated_base_point_exceeds_bath() {
        let cal = calibrate_temperature(&data(1.0, 550.0), (0.1, 0.4), NU_M, OccupationModel::Exact).unwrap();
        assert_relative_eq!(cal.base_occupation, 550.0, max_relative = 1e-9);
        assert!(cal.base_occupation > cal.base_bath_occupation);
    }

    #[test]
    fn point_order_does_not_matter() {
        let mut d = data(3.0, 0.0);
        let a = calibrate_temperature(&d, (0.1, 0.4), NU_M, OccupationModel::Exact).unwrap();
        d.reverse();
        d.swap(1, 4);
        let b = calibrate_temperature(&d, (0.1, 0.4), NU_M, OccupationModel::Exact).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn narrow_anchor_is_degenerate() {
        let err = calibrate_temperature(&data(1.0, 0.0), (0.2, 0.3), NU_M, OccupationModel::Exact).unwrap_err();
        assert!(matches!(err, FitError::DegenerateFit(_)));
        let err = calibrate_temperature(&data(1.0, 0.0), (0.1, 0.9), NU_M, OccupationModel::Exact).unwrap_err();
        assert!(matches!(err, FitError::InvalidData(_)));
    }
}
