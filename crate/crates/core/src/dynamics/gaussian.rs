use nalgebra::{DMatrix, Matrix2, Matrix4};

use super::{f64_of, DynamicsError};
use crate::scalar::{lit, Real};

/// Symplectic form for `modes` bosonic modes.
pub fn symplectic_form<T: Real>(modes: usize) -> DMatrix<T> {
    let mut w = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        w[(2 * k, 2 * k + 1)] = T::one();
        w[(2 * k + 1, 2 * k)] = -T::one();
    }
    w
}

/// Symplectic eigenvalues of a positive-definite covariance, ascending.
///
/// Computed as the singular values of `V^{1/2} Omega V^{1/2}`, which come in
/// equal pairs.
pub fn symplectic_eigenvalues<T: Real>(v: &DMatrix<T>) -> Result<Vec<T>, DynamicsError> {
    let n = v.nrows();
    if !n.is_multiple_of(2) || v.ncols() != n {
        return Err(DynamicsError::Dimension(format!("covariance must be 2n x 2n, got {:?}", v.shape())));
    }
    let eig = v.clone().symmetric_eigen();
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(|a, b| a.min(b)) {
        if !(min > T::zero()) {
            return Err(DynamicsError::InvalidState(format!("covariance is not positive definite (eigenvalue {})", f64_of(min))));
        }
    }
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt()));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let m = &root * symplectic_form::<T>(n / 2) * &root;
    let mut sq: Vec<T> = (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().map(|x| x.max(T::zero()).sqrt()).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sq.chunks(2).map(|p| (p[0] + p[1]) * lit(0.5)).collect())
}

/// Heisenberg bound `V + i Omega / 2 >= 0`, expressed as `nu_min >= 1/2 - slack`.
pub fn check_uncertainty<T: Real>(v: &DMatrix<T>) -> Result<(), DynamicsError> {
    let nus = symplectic_eigenvalues(v)?;
    let bound = lit::<T>(0.5) - T::UNCERTAINTY_SLACK;
    match nus.first() {
        Some(&nu) if nu < bound => Err(DynamicsError::InvalidState(format!(
            "smallest symplectic eigenvalue {} violates the uncertainty bound 1/2",
            f64_of(nu)
        ))),
        _ => Ok(()),
    }
}

/// A covariance matrix that satisfies the uncertainty relation.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState<T: Real> {
    v: DMatrix<T>,
}

impl<T: Real> CovarianceState<T> {
    pub fn new(v: DMatrix<T>) -> Result<Self, DynamicsError> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::InvalidState("covariance has non-finite entries".into()));
        }
        let scale = v.amax().max(T::one());
        if (&v - v.transpose()).amax() > T::UNCERTAINTY_SLACK * scale {
            return Err(DynamicsError::InvalidState("covariance is not symmetric".into()));
        }
        check_uncertainty(&v)?;
        Ok(Self { v })
    }

    /// Product of single-mode vacua.
    pub fn vacuum(modes: usize) -> Self {
        Self { v: DMatrix::from_diagonal_element(2 * modes, 2 * modes, lit(0.5)) }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.v
    }

    pub fn modes(&self) -> usize {
        self.v.nrows() / 2
    }

    pub fn occupation(&self, mode: usize) -> Result<T, DynamicsError> {
        mode_occupation(&self.v, mode)
    }

    pub fn log_negativity(&self, i: usize, j: usize) -> Result<T, DynamicsError> {
        log_negativity(&self.v, i, j)
    }
}

fn check_mode<T: Real>(v: &DMatrix<T>, mode: usize) -> Result<(), DynamicsError> {
    if 2 * mode + 1 >= v.nrows() {
        return Err(DynamicsError::Dimension(format!("mode {mode} outside a {}-mode state", v.nrows() / 2)));
    }
    Ok(())
}

/// Mean occupation `(V_xx + V_pp - 1) / 2` of quadrature pair `mode`
/// (0 is the cavity).
pub fn mode_occupation<T: Real>(v: &DMatrix<T>, mode: usize) -> Result<T, DynamicsError> {
    check_mode(v, mode)?;
    Ok((v[(2 * mode, 2 * mode)] + v[(2 * mode + 1, 2 * mode + 1)] - T::one()) * lit(0.5))
}

fn two_mode_block<T: Real>(v: &DMatrix<T>, i: usize, j: usize) -> Result<Matrix4<T>, DynamicsError> {
    check_mode(v, i)?;
    check_mode(v, j)?;
    if i == j {
        return Err(DynamicsError::Dimension("log negativity needs two distinct modes".into()));
    }
    let idx = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1];
    Ok(Matrix4::from_fn(|r, c| v[(idx[r], idx[c])]))
}

/// Logarithmic negativity `max(0, -ln(2 nu_min))` between modes `i` and `j`,
/// where `nu_min` is the smallest symplectic eigenvalue of the partially
/// transposed two-mode covariance.
pub fn log_negativity<T: Real>(v: &DMatrix<T>, i: usize, j: usize) -> Result<T, DynamicsError> {
    let w = two_mode_block(v, i, j)?;
    let det2 = |m: Matrix2<T>| m.determinant();
    let a = det2(w.fixed_view::<2, 2>(0, 0).into_owned());
    let b = det2(w.fixed_view::<2, 2>(2, 2).into_owned());
    let c = det2(w.fixed_view::<2, 2>(0, 2).into_owned());
    let delta = a + b - c - c;
    let disc = (delta * delta - lit::<T>(4.0) * w.determinant()).max(T::zero());
    let nu_sq = (delta - disc.sqrt()) * lit(0.5);
    if !(nu_sq > T::zero()) {
        return Err(DynamicsError::InvalidState("partially transposed state has a non-positive invariant".into()));
    }
    Ok((-(lit::<T>(2.0) * nu_sq.sqrt()).ln()).max(T::zero()))
}

/// Smallest symplectic eigenvalue of the two-mode block after flipping the
/// sign of `p_j`, computed from the full eigen-decomposition.
pub fn partial_transpose_min_eigenvalue<T: Real>(v: &DMatrix<T>, i: usize, j: usize) -> Result<T, DynamicsError> {
    let w = two_mode_block(v, i, j)?;
    let mut p = Matrix4::identity();
    p[(3, 3)] = -T::one();
    let flipped = p * w * p;
    let nus = symplectic_eigenvalues(&DMatrix::from_fn(4, 4, |r, c| flipped[(r, c)]))?;
    Ok(nus[0])
}

/// Covariance of a two-mode squeezed vacuum with squeezing parameter `r`.
pub fn two_mode_squeezed_vacuum<T: Real>(r: T) -> DMatrix<T> {
    let two_r = r + r;
    let (c, s) = (two_r.cosh() * lit(0.5), two_r.sinh() * lit(0.5));
    let mut v = DMatrix::zeros(4, 4);
    for k in 0..4 {
        v[(k, k)] = c;
    }
    v[(0, 2)] = s;
    v[(2, 0)] = s;
    v[(1, 3)] = -s;
    v[(3, 1)] = -s;
    v
}
