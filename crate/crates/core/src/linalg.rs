//! Small dense complex helpers shared by the oracle paths and the channel code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Pauli matrix σ^μ for μ ∈ {0, 1, 2, 3} (σ⁰ is the identity).
pub fn pauli(mu: usize) -> CMatrix {
    match mu {
        0 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        1 => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index {mu} out of range"),
    }
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::from_element(1, 1, ONE), |acc, f| acc.kronecker(f))
}

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// ‖A†A − I‖_max.
pub fn unitarity_residual(a: &CMatrix) -> f64 {
    let n = a.nrows();
    max_abs_diff(&(a.adjoint() * a), &CMatrix::identity(n, n))
}

/// Hilbert–Schmidt inner product tr(A†B).
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Returns `Some(c)` when `a = c·b` within `tol` (entrywise) with `|c| > tol`.
pub fn proportionality(a: &CMatrix, b: &CMatrix, tol: f64) -> Option<C64> {
    let bb = hs_inner(b, b);
    if bb.norm() == 0.0 {
        return None;
    }
    let c = hs_inner(b, a) / bb;
    if c.norm() <= tol {
        return None;
    }
    (max_abs_diff(a, &(b * c)) <= tol).then_some(c)
}

/// Eigenvalues (ascending) of a Hermitian matrix; the input is Hermitized first.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
