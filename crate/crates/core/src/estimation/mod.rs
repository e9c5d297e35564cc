//! Nonlinear least squares and the spectral fit models built on it.

mod calibration;
mod emit;
mod lsq;
mod peaks;

pub use calibration::{calibrate_temperature, TemperatureCalibration, TemperaturePoint};
pub use emit::{emit_initial_guess, emit_model, fit_emit, EmitFit, EmitParams, EmitSetup};
pub use lsq::{least_squares, FitControls, FitResult, ParamSpec};
pub use peaks::{
    fit_lorentzian_psd, fit_ringdown, fit_sqrt_power, g_single_from_slope, lorentzian_peak, LorentzianFit, RingdownFit,
    SqrtPowerFit,
};

use thiserror::Error;

use crate::scalar::{to_f64, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError<T: Real> {
    #[error("Jacobian column for `{parameter}` vanished")]
    SingularJacobian { parameter: String, best: Box<FitResult<T>> },
    #[error("no convergence within {} iterations", best.iterations)]
    MaxIterations { best: Box<FitResult<T>> },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid initial parameters: {0}")]
    InvalidInit(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl<T: Real> FitError<T> {
    /// Best-so-far result carried by a failed iteration.
    pub fn best(&self) -> Option<&FitResult<T>> {
        match self {
            Self::SingularJacobian { best, .. } | Self::MaxIterations { best } => Some(best),
            _ => None,
        }
    }
}

/// Measured or synthetic samples `y(x)` with optional per-point uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub y_sigma: Option<Vec<T>>,
}

impl<T: Real> DataSeries<T> {
    pub fn new(x: Vec<T>, y: Vec<T>, y_sigma: Option<Vec<T>>) -> Result<Self, FitError<T>> {
        if x.len() != y.len() {
            return Err(FitError::InvalidData(format!("x has {} points, y has {}", x.len(), y.len())));
        }
        if let Some(s) = &y_sigma {
            if s.len() != x.len() {
                return Err(FitError::InvalidData(format!("y_sigma has {} points, x has {}", s.len(), x.len())));
            }
            if let Some(i) = s.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
                return Err(FitError::InvalidData(format!("y_sigma[{i}] = {} is not positive", to_f64(s[i]))));
            }
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(FitError::InvalidData(format!("non-finite sample at flat index {i}")));
        }
        if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidData(format!("x is not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { x, y, y_sigma })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Same samples with `x` shifted by `-origin`.
    pub(crate) fn shifted(&self, origin: T) -> Self {
        Self { x: self.x.iter().map(|&v| v - origin).collect(), y: self.y.clone(), y_sigma: self.y_sigma.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_series_invariants() {
        assert!(DataSeries::new(vec![0.0, 1.0], vec![1.0], None).is_err());
        assert!(DataSeries::new(vec![0.0, 0.0], vec![1.0, 2.0], None).is_err());
        assert!(DataSeries::new(vec![0.0, 1.0], vec![1.0, 2.0], Some(vec![1.0, 0.0])).is_err());
        assert!(DataSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN], None).is_err());
        assert_eq!(DataSeries::new(vec![0.0, 1.0], vec![1.0, 2.0], Some(vec![0.1, 0.1])).unwrap().len(), 2);
    }
}
