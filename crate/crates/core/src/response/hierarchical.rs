//! Two-mode anticrossing probed through a resonant pump.
//!
//! Two far-detuned red drives couple mode 1 and mode 2 to the cavity. With
//! the cavity adiabatically eliminated each drive leaves behind a complex
//! self-energy `G_i G_j / (kappa/2 + i delta)`: its real part is optical
//! damping, its imaginary part the optical spring and, off the diagonal, the
//! cavity-mediated coupling whose `delta >> kappa` limit is
//! `eta = G1 G2 / delta1`. The resulting 2x2 hybrid susceptibility of mode 1
//! is then read out by the weak resonant pump through the ordinary
//! single-tone reflection formula.
//!
//! Because the off-diagonal term is rank-one together with the diagonal
//! damping, one hybrid (the combination orthogonal to `(G1, G2)`) decouples
//! from both drives and stays narrow.

use rayon::prelude::*;
use serde::Serialize;

use super::{cavity_reflection, f64_of, FanoBackground, ResponseError};
use crate::model::{Sideband, SystemConfig, ToneRole};
use crate::scalar::{angular, cplx, lit, norm_sqr, ordinary, Complex, Real};

/// Optical damping `G^2 kappa / ((kappa/2)^2 + delta^2)` of a red tone
/// detuned by `delta` from the red sideband. Hz in, Hz out.
pub fn optical_damping<T: Real>(coupling: T, detuning: T, kappa: T) -> T {
    let half = kappa * lit(0.5);
    coupling * coupling * kappa / (half * half + detuning * detuning)
}

/// Optical spring magnitude `G^2 delta / ((kappa/2)^2 + delta^2)`, Hz. A red
/// tone with `delta > 0` lowers the mechanical frequency by this amount.
pub fn spring_shift<T: Real>(coupling: T, detuning: T, kappa: T) -> T {
    let half = kappa * lit(0.5);
    coupling * coupling * detuning / (half * half + detuning * detuning)
}

/// Pump + two drives, everything in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticrossingSetup<T> {
    pub kappa: T,
    pub kappa_ext: T,
    pub pump_coupling: T,
    /// Two-photon offset of the pump on mode 1.
    pub pump_offset: T,
    pub gamma1: T,
    pub gamma2: T,
    pub g1: T,
    pub delta1: T,
    pub g2: T,
    pub delta2: T,
    pub background: FanoBackground<T>,
}

/// One eigenmode of the coupled mechanical pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridMode<T> {
    /// Probe offset of the feature, Hz.
    pub center: T,
    /// Energy linewidth (FWHM), Hz.
    pub linewidth: T,
    /// Squared mode-1 amplitude of the normalized eigenvector.
    pub mode1_weight: T,
}

impl<T: Real> AnticrossingSetup<T> {
    /// Extracts pump, drive 1 (on the pumped mode) and drive 2 (on the other
    /// mode) from `cfg` and checks the adiabatic-elimination precondition
    /// `delta_i > kappa`.
    pub fn from_config(cfg: &SystemConfig<T>, bg: &FanoBackground<T>) -> Result<Self, ResponseError> {
        bg.validate()?;
        let tones = cfg.resolve_tones()?;
        if tones.iter().any(|t| t.sideband != Sideband::Red) {
            return Err(ResponseError::Precondition("anticrossing model needs red tones only".into()));
        }
        let pumps: Vec<_> = tones.iter().filter(|t| t.role == ToneRole::Pump).collect();
        let drives: Vec<_> = tones.iter().filter(|t| t.role == ToneRole::Drive).collect();
        if pumps.len() != 1 || drives.len() != 2 {
            return Err(ResponseError::Precondition(format!(
                "anticrossing model needs one pump and two drives, got {} and {}",
                pumps.len(),
                drives.len()
            )));
        }
        let pump = pumps[0];
        let (d1, d2) = match (drives[0].mode_index == pump.mode_index, drives[1].mode_index == pump.mode_index) {
            (true, false) => (drives[0], drives[1]),
            (false, true) => (drives[1], drives[0]),
            _ => {
                return Err(ResponseError::Precondition(
                    "exactly one drive must address the pumped mode".into(),
                ))
            }
        };
        let setup = Self {
            kappa: cfg.cavity.kappa_total,
            kappa_ext: cfg.cavity.kappa_ext,
            pump_coupling: pump.coupling,
            pump_offset: pump.two_photon_offset,
            gamma1: cfg.modes[d1.mode_index].gamma_m,
            gamma2: cfg.modes[d2.mode_index].gamma_m,
            g1: d1.coupling,
            delta1: d1.detuning,
            g2: d2.coupling,
            delta2: d2.detuning,
            background: *bg,
        };
        setup.check_detunings()?;
        Ok(setup)
    }

    fn check_detunings(&self) -> Result<(), ResponseError> {
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(d > self.kappa) {
                return Err(ResponseError::Precondition(format!(
                    "{name} = {} Hz must exceed kappa = {} Hz",
                    f64_of(d),
                    f64_of(self.kappa)
                )));
            }
            if d < self.kappa * lit(5.0) {
                log::warn!(
                    "{name} = {} Hz is below 5 kappa; adiabatic elimination is approximate",
                    f64_of(d)
                );
            }
        }
        Ok(())
    }

    /// `eta = G1 G2 / delta1`, Hz.
    pub fn eta(&self) -> T {
        self.g1 * self.g2 / self.delta1
    }

    /// Detuning of drive `i` measured from the spring-shifted mode:
    /// `delta_i + spring_shift_i`.
    pub fn dressed_detunings(&self) -> (T, T) {
        (
            self.delta1 + spring_shift(self.g1, self.delta1, self.kappa),
            self.delta2 + spring_shift(self.g2, self.delta2, self.kappa),
        )
    }

    /// Drive offset `delta2 - delta1` referenced to the spring-shifted modes.
    pub fn dressed_drive_offset(&self) -> T {
        let (a, b) = self.dressed_detunings();
        b - a
    }

    /// Copy with drive 2 retuned so that the dressed drive offset equals
    /// `offset` (Hz).
    pub fn with_dressed_drive_offset(&self, offset: T) -> Result<Self, ResponseError> {
        let (dressed1, _) = self.dressed_detunings();
        let target = dressed1 + offset;
        let mut delta2 = self.delta1 + offset;
        for _ in 0..64 {
            let next = target - spring_shift(self.g2, delta2, self.kappa);
            let done = (next - delta2).abs() <= T::default_epsilon() * lit::<T>(8.0) * target.abs();
            delta2 = next;
            if done {
                break;
            }
        }
        let out = Self { delta2, ..*self };
        out.check_detunings()?;
        Ok(out)
    }

    /// 2x2 matrix `Q` (rad/s) such that the mechanical amplitudes obey
    /// `(-i Delta + Q) b = source`.
    fn coupling_matrix(&self) -> [[Complex<T>; 2]; 2] {
        let half = angular(self.kappa) * lit(0.5);
        let (g1, g2) = (angular(self.g1), angular(self.g2));
        let (d1, d2) = (angular(self.delta1), angular(self.delta2));
        let op = angular(self.pump_offset);
        let sigma11 = Complex::from(g1 * g1) / cplx(half, d1);
        let sigma22 = Complex::from(g2 * g2) / cplx(half, d2);
        let sigma12 = Complex::from(g1 * g2) / cplx(half, d1);
        let q11 = cplx(angular(self.gamma1) * lit(0.5), op) + sigma11;
        let q22 = cplx(angular(self.gamma2) * lit(0.5), op + d1 - d2) + sigma22;
        [[q11, sigma12], [sigma12, q22]]
    }

    /// Hybrid eigenmodes ordered by increasing center.
    pub fn hybrid_modes(&self) -> [HybridMode<T>; 2] {
        let q = self.coupling_matrix();
        let half_tr = (q[0][0] + q[1][1]) * lit::<T>(0.5);
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        let root = csqrt(half_tr * half_tr - det);
        let mut modes = [half_tr + root, half_tr - root].map(|lambda| {
            // eigenvector (q12, lambda - q11)
            let v1 = q[0][1];
            let v2 = lambda - q[0][0];
            let n1 = norm_sqr(v1);
            let n2 = norm_sqr(v2);
            let total = n1 + n2;
            HybridMode {
                center: ordinary(lambda.im),
                linewidth: ordinary(lambda.re * lit(2.0)),
                mode1_weight: if total > T::zero() { n1 / total } else { T::one() },
            }
        });
        if modes[0].center > modes[1].center {
            modes.swap(0, 1);
        }
        modes
    }

    /// Probe reflection at offset `delta` (Hz).
    pub fn s11(&self, delta: T) -> Complex<T> {
        let q = self.coupling_matrix();
        let d = angular(delta);
        let shift = cplx(T::zero(), -d);
        let m11 = q[0][0] + shift;
        let m22 = q[1][1] + shift;
        let det = m11 * m22 - q[0][1] * q[1][0];
        let chi11 = m22 / det;
        let gp = angular(self.pump_coupling);
        let sigma = chi11 * (gp * gp);
        self.background
            .apply(cavity_reflection(d, angular(self.kappa), angular(self.kappa_ext), sigma))
    }
}

fn csqrt<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = norm_sqr(z).sqrt();
    let re = ((r + z.re) * lit(0.5)).max(T::zero()).sqrt();
    let im = ((r - z.re) * lit(0.5)).max(T::zero()).sqrt();
    cplx(re, if z.im < T::zero() { -im } else { im })
}

/// Probe reflection of the pump + two-drive configuration in `cfg`.
pub fn hierarchical_anticrossing_s11<T: Real>(
    delta: T,
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
) -> Result<Complex<T>, ResponseError> {
    Ok(AnticrossingSetup::from_config(cfg, bg)?.s11(delta))
}

/// `|S11|^2` over (drive offset, probe offset), row-major with one row per
/// drive offset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnticrossingMap<T> {
    /// Dressed drive offset `delta2 - delta1`, Hz.
    pub drive_offset: Vec<T>,
    /// Probe offset `nu - nu_c`, Hz.
    pub probe: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> AnticrossingMap<T> {
    pub fn rows(&self) -> usize {
        self.drive_offset.len()
    }

    pub fn cols(&self) -> usize {
        self.probe.len()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    /// Probe offsets of the interior local maxima (transparency features)
    /// of one row, refined by a three-point parabola.
    pub fn features(&self, row: usize) -> Vec<T> {
        local_maxima(&self.probe, self.row(row))
    }
}

pub(crate) fn local_maxima<T: Real>(axis: &[T], y: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let (ym, y0, yp) = (y[i - 1], y[i], y[i + 1]);
            let curvature = ym - lit::<T>(2.0) * y0 + yp;
            let h = axis[i + 1] - axis[i];
            let shift = if curvature < T::zero() { (ym - yp) / (lit::<T>(2.0) * curvature) } else { T::zero() };
            out.push(axis[i] + shift * h);
        }
    }
    out
}

/// Evaluates the anticrossing model over a grid of dressed drive offsets
/// (rows) and probe offsets (columns).
pub fn anticrossing_map<T: Real>(
    cfg: &SystemConfig<T>,
    bg: &FanoBackground<T>,
    drive_offsets: &[T],
    probe: &[T],
) -> Result<AnticrossingMap<T>, ResponseError> {
    if drive_offsets.is_empty() || probe.is_empty() {
        return Err(ResponseError::Precondition("map grids must be non-empty".into()));
    }
    for axis in [drive_offsets, probe] {
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ResponseError::InvalidTrace("map axes must be strictly increasing".into()));
        }
    }
    let base = AnticrossingSetup::from_config(cfg, bg)?;
    let rows: Vec<Vec<T>> = drive_offsets
        .par_iter()
        .map(|&x| {
            let setup = base.with_dressed_drive_offset(x)?;
            Ok(probe.iter().map(|&d| norm_sqr(setup.s11(d))).collect())
        })
        .collect::<Result<_, ResponseError>>()?;
    Ok(AnticrossingMap {
        drive_offset: drive_offsets.to_vec(),
        probe: probe.to_vec(),
        values: rows.into_iter().flatten().collect(),
    })
}
