use nalgebra::{DMatrix, DVector};

use super::gaussian::CovarianceState;
use super::{f64_of, stability_check, DiffusionMatrix, DriftMatrix, DynamicsError};
use crate::scalar::Real;

/// `A V + V A^T + D`.
pub fn lyapunov_residual<T: Real>(a: &DMatrix<T>, v: &DMatrix<T>, d: &DMatrix<T>) -> DMatrix<T> {
    a * v + v * a.transpose() + d
}

/// Kronecker-sum operator `I (x) A + A (x) I` acting on column-major `vec(V)`.
fn kronecker_sum<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let mut k = DMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                // (A V)_{ij} = sum_l A_{il} V_{lj}
                k[(row, l + n * j)] += a[(i, l)];
                // (V A^T)_{ij} = sum_l V_{il} A_{jl}
                k[(row, i + n * l)] += a[(j, l)];
            }
        }
    }
    k
}

/// Solves `A V + V A^T + D = 0` for a Hurwitz drift.
///
/// Dense vectorized solve with LU, two rounds of iterative refinement and
/// explicit symmetrization. The relative Frobenius residual
/// `|A V + V A^T + D| / |D|` is checked against `T::LYAPUNOV_RTOL` and the
/// result is validated as a physical Gaussian state.
pub fn lyapunov_steady_state<T: Real>(
    drift: &DriftMatrix<T>,
    diffusion: &DiffusionMatrix<T>,
) -> Result<CovarianceState<T>, DynamicsError> {
    let (a, d) = (drift.matrix(), diffusion.matrix());
    let n = a.nrows();
    if a.ncols() != n || d.shape() != (n, n) {
        return Err(DynamicsError::Dimension(format!(
            "drift {:?} and diffusion {:?} must be square and equal",
            a.shape(),
            d.shape()
        )));
    }
    let report = stability_check(drift);
    if !report.stable {
        return Err(DynamicsError::Instability { abscissa: f64_of(report.spectral_abscissa) });
    }

    let k = kronecker_sum(a);
    let rhs = -DVector::from_column_slice(d.as_slice());
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(DynamicsError::IllConditioned { residual: f64::INFINITY, bound: 0.0 })?;
    for _ in 0..2 {
        let r = &rhs - &k * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    let v = DMatrix::from_column_slice(n, n, x.as_slice());
    let v = (&v + v.transpose()) * T::from_f64(0.5).unwrap();

    let scale = if d.norm() > T::zero() { d.norm() } else { T::one() };
    let residual = lyapunov_residual(a, &v, d).norm() / scale;
    if !(residual <= T::LYAPUNOV_RTOL) {
        return Err(DynamicsError::IllConditioned { residual: f64_of(residual), bound: f64_of(T::LYAPUNOV_RTOL) });
    }
    CovarianceState::new(v)
}
