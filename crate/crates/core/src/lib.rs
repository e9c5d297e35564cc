//! Multimode cavity electromechanics: reflection spectra, Gaussian steady
//! states, spectral fitting and figures of merit.
//!
//! Every solver is generic over [`Real`] (`f32` or `f64`). Frequencies and
//! rates are stored in Hz; angular factors appear only inside computations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod estimation;
pub mod metrics;
pub mod model;
pub mod response;
pub mod scalar;

pub use scalar::{Complex, Real};

pub type SystemConfigF64 = model::SystemConfig<f64>;
pub type SystemConfigF32 = model::SystemConfig<f32>;
pub type CovarianceStateF64 = dynamics::CovarianceState<f64>;
pub type CovarianceStateF32 = dynamics::CovarianceState<f32>;
pub type SpectrumTraceF64 = response::SpectrumTrace<f64>;
pub type SpectrumTraceF32 = response::SpectrumTrace<f32>;
pub type DataSeriesF64 = estimation::DataSeries<f64>;
pub type DataSeriesF32 = estimation::DataSeries<f32>;
pub type FitResultF64 = estimation::FitResult<f64>;
pub type FitResultF32 = estimation::FitResult<f32>;
