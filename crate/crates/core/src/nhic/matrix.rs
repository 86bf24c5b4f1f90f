//! Principal square roots of SPD matrices and their derivative.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LabError, Result};

const MIN_EIG: f64 = 1e-12;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn spd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(LabError::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(LabError::MatrixDomain(f64::NAN));
    }
    let e = SymmetricEigen::new(symmetrize(m));
    let lo = e.eigenvalues.min();
    if !(lo > MIN_EIG) {
        return Err(LabError::MatrixDomain(lo));
    }
    Ok(e)
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(symmetrize(m));
    (e.eigenvalues.min(), e.eigenvalues.max())
}

/// Principal square root `M^{1/2}`.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = spd_eigen(m)?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    let mut x = symmetrize(&(&e.eigenvectors * d * e.eigenvectors.transpose()));
    // Newton polish of X² = M; the eigensolver alone loses a few digits
    for _ in 0..2 {
        let r = symmetrize(&(m - &x * &x));
        x += sylvester_in(&e, &r);
    }
    Ok(symmetrize(&x))
}

/// `X` with `M^{1/2}X + XM^{1/2} = N` in the eigenbasis `e` of `M`.
fn sylvester_in(e: &SymmetricEigen<f64, nalgebra::Dyn>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let q = &e.eigenvectors;
    let roots = e.eigenvalues.map(f64::sqrt);
    let mut c = q.transpose() * n * q;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            c[(i, j)] /= roots[i] + roots[j];
        }
    }
    q * c * q.transpose()
}

/// Inverse square root `M^{-1/2}`.
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = spd_eigen(m)?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(symmetrize(&(&e.eigenvectors * d * e.eigenvectors.transpose())))
}

/// Derivative of `M ↦ M^{1/2}` in direction `N`: the solution `X` of
/// `M^{1/2}X + XM^{1/2} = N`, solved in the eigenbasis of `M`.
pub fn sqrt_frechet(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = spd_eigen(m)?;
    if n.shape() != m.shape() {
        return Err(LabError::Dimension("direction and base point differ in shape".into()));
    }
    Ok(sylvester_in(&e, n))
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}
