//! Fixed-size complex linear algebra on the four-level space.
//!
//! Basis order is |0⟩, |1⟩, |e⟩, |2⟩ throughout the crate.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
pub use num_complex::Complex64 as C64;

pub type Vec4 = Vector4<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec2 = Vector2<C64>;
pub type Mat2 = Matrix2<C64>;

/// Index of |0⟩.
pub const G0: usize = 0;
/// Index of |1⟩.
pub const G1: usize = 1;
/// Index of the excited level |e⟩.
pub const EXC: usize = 2;
/// Index of |2⟩.
pub const G2: usize = 3;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

pub fn basis(index: usize) -> Vec4 {
    let mut v = Vec4::zeros();
    v[index] = ONE;
    v
}

/// Embeds a qubit state a|0⟩ + b|1⟩ into the four-level space.
pub fn embed(qubit: &Vec2) -> Vec4 {
    Vec4::new(qubit[0], qubit[1], ZERO, ZERO)
}

pub fn outer(v: &Vec4) -> Mat4 {
    v * v.adjoint()
}

pub fn norm_sq(v: &Vec4) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

pub fn populations(v: &Vec4) -> [f64; 4] {
    let n = norm_sq(v);
    [
        v[0].norm_sqr() / n,
        v[1].norm_sqr() / n,
        v[2].norm_sqr() / n,
        v[3].norm_sqr() / n,
    ]
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(m: &Mat4) -> (Vector4<f64>, Mat4) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector4::from_fn(|i, _| eig.eigenvalues[order[i]]);
    let vectors = Mat4::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn spectral_norm(m: &Mat4) -> f64 {
    let gram = m.adjoint() * m;
    let (values, _) = hermitian_eigen(&gram);
    values[3].max(0.0).sqrt()
}

/// Relative size below which an eigenvalue is treated as rounding noise.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// Matrix square root of a positive semidefinite Hermitian matrix.
/// Eigenvalues below `EIGEN_FLOOR` times the largest are set to zero, since
/// the square root would otherwise lift rounding noise to ~1e-8.
pub fn psd_sqrt(m: &Mat4) -> Mat4 {
    let (values, vectors) = hermitian_eigen(m);
    let floor = EIGEN_FLOOR * values[3].max(0.0);
    let root = |v: f64| if v > floor { v.sqrt() } else { 0.0 };
    let diag = Mat4::from_diagonal(&Vec4::from_fn(|i, _| C64::new(root(values[i]), 0.0)));
    vectors * diag * vectors.adjoint()
}

/// Distance between two vectors after removing the best global phase:
/// `min_φ ‖a − e^{iφ} b‖`.
pub fn phase_aligned_distance<const N: usize>(
    a: &nalgebra::SVector<C64, N>,
    b: &nalgebra::SVector<C64, N>,
) -> f64 {
    let overlap = b.dotc(a).norm();
    (a.norm_squared() + b.norm_squared() - 2.0 * overlap)
        .max(0.0)
        .sqrt()
}

/// The branch of `wrapped` (mod 2π) nearest to `previous`.
pub fn unwrap_phase(previous: f64, wrapped: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    wrapped + two_pi * ((previous - wrapped) / two_pi).round()
}

/// Frobenius norm of `m − m†`.
pub fn hermiticity_defect(m: &Mat4) -> f64 {
    (m - m.adjoint()).norm()
}
