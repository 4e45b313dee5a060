//! Tripod Hamiltonians and their analytic adiabatic eigensystems.
//!
//! The non-Hermitian no-jump Hamiltonian adds `−iΓ₀|0⟩⟨0|` to the closed one.
//! In the interaction picture with respect to that term, the |0⟩–|e⟩ couplings
//! pick up `e^{±Γ₀(t−t_i)}` and the eigenvectors become a biorthonormal
//! left/right pair obtained from the closed ones by the same similarity.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::drive::DriveSample;
use crate::error::{Error, Result};
use crate::linalg::{cis, hermiticity_defect, Mat4, Vec4, C64, EXC, G0, G1, G2, ZERO};

/// Largest admissible `Γ₀(t − t_i)` in the interaction picture.
pub const PICTURE_EXPONENT_LIMIT: f64 = 50.0;

/// A 4×4 Hamiltonian in units of rad/τ (ħ = 1), basis |0⟩, |1⟩, |e⟩, |2⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian4(pub Mat4);

impl Hamiltonian4 {
    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_defect(&self.0) < tol
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }
}

/// Closed RWA Hamiltonian from raw amplitudes and phases.
#[inline]
pub fn closed_matrix(a: [f64; 3], phi01: f64, phi2: f64) -> Mat4 {
    let c0 = C64::new(0.5 * a[0], 0.0);
    let c1 = cis(phi01) * (0.5 * a[1]);
    let c2 = cis(-phi2) * (0.5 * a[2]);
    let mut h = Mat4::zeros();
    h[(G0, EXC)] = c0;
    h[(EXC, G0)] = c0;
    h[(G1, EXC)] = c1;
    h[(EXC, G1)] = c1.conj();
    h[(EXC, G2)] = c2;
    h[(G2, EXC)] = c2.conj();
    h
}

pub fn hamiltonian_closed(sample: &DriveSample) -> Hamiltonian4 {
    Hamiltonian4(closed_matrix(
        [sample.a0, sample.a1, sample.a2],
        sample.phi01,
        sample.phi2,
    ))
}

pub fn hamiltonian_nonhermitian(sample: &DriveSample, gamma0: f64) -> Hamiltonian4 {
    let mut h = hamiltonian_closed(sample).0;
    h[(G0, G0)] = C64::new(0.0, -gamma0);
    Hamiltonian4(h)
}

fn picture_factor(gamma0: f64, t: f64, t_i: f64) -> Result<f64> {
    let exponent = gamma0 * (t - t_i);
    if exponent > PICTURE_EXPONENT_LIMIT {
        return Err(Error::PictureOverflow {
            exponent,
            limit: PICTURE_EXPONENT_LIMIT,
        });
    }
    Ok(exponent.exp())
}

/// Interaction-picture Hamiltonian with raw amplitudes; `growth = e^{Γ₀(t−t_i)}`.
#[inline]
pub fn interaction_matrix(a: [f64; 3], phi01: f64, phi2: f64, growth: f64) -> Mat4 {
    let mut h = closed_matrix(a, phi01, phi2);
    h[(G0, EXC)] *= growth;
    h[(EXC, G0)] /= growth;
    h
}

pub fn hamiltonian_interaction(
    sample: &DriveSample,
    gamma0: f64,
    t: f64,
    t_i: f64,
) -> Result<Hamiltonian4> {
    let growth = picture_factor(gamma0, t, t_i)?;
    Ok(Hamiltonian4(interaction_matrix(
        [sample.a0, sample.a1, sample.a2],
        sample.phi01,
        sample.phi2,
        growth,
    )))
}

/// The four adiabatic eigenstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Eigenstate {
    /// Bright state with energy `+½√(ΣA²)`.
    Plus = 0,
    /// Bright state with energy `−½√(ΣA²)`.
    Minus = 1,
    Dark1 = 2,
    Dark2 = 3,
}

impl Eigenstate {
    pub const ALL: [Eigenstate; 4] = [
        Eigenstate::Plus,
        Eigenstate::Minus,
        Eigenstate::Dark1,
        Eigenstate::Dark2,
    ];
}

/// Instantaneous eigenvalues with right and left eigenvectors.
///
/// Left vectors are stored as covector components, so `⟨l|v⟩ = Σ_k l_k v_k`
/// with no further conjugation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticFrame {
    pub omega_plus: f64,
    pub omega_minus: f64,
    right: [Vec4; 4],
    left: [Vec4; 4],
}

impl AdiabaticFrame {
    /// Frame from the mixing angles of a sample, with `growth = e^{Γ₀(t−t_i)}`
    /// on the |0⟩ components (1 for the closed system). Works for held angles
    /// too, where the dark/bright split is by convention.
    pub fn from_sample(sample: &DriveSample, growth: f64) -> Self {
        let (sh, ch) = sample.theta_h.sin_cos();
        let (s01, c01) = sample.theta01.sin_cos();
        let e01 = cis(sample.phi01);
        let e2 = cis(sample.phi2);
        let w = 0.5 * sample.total_amplitude();
        let r = FRAC_1_SQRT_2;
        let grow = C64::new(growth, 0.0);

        let bright = |sign: f64| {
            Vec4::new(
                grow * (r * sh * s01),
                e01 * (r * sh * c01),
                C64::new(sign * r, 0.0),
                e2 * (r * ch),
            )
        };
        let dark1 = Vec4::new(grow * (-ch * s01), e01 * (-ch * c01), ZERO, e2 * sh);
        let dark2 = Vec4::new(grow * c01, e01 * (-s01), ZERO, ZERO);
        let right = [bright(1.0), bright(-1.0), dark1, dark2];

        let left = right.map(|v| {
            let mut l = v.map(|c| c.conj());
            l[G0] /= growth * growth;
            l
        });
        Self {
            omega_plus: w,
            omega_minus: -w,
            right,
            left,
        }
    }

    pub fn right(&self, which: Eigenstate) -> &Vec4 {
        &self.right[which as usize]
    }

    pub fn left(&self, which: Eigenstate) -> &Vec4 {
        &self.left[which as usize]
    }

    pub fn omega(&self, which: Eigenstate) -> f64 {
        match which {
            Eigenstate::Plus => self.omega_plus,
            Eigenstate::Minus => self.omega_minus,
            Eigenstate::Dark1 | Eigenstate::Dark2 => 0.0,
        }
    }

    /// `⟨which_l|v⟩`.
    #[inline]
    pub fn project(&self, which: Eigenstate, v: &Vec4) -> C64 {
        let l = &self.left[which as usize];
        l[0] * v[0] + l[1] * v[1] + l[2] * v[2] + l[3] * v[3]
    }

    /// Coefficients on `(+, −, D₁, D₂)`.
    pub fn coefficients(&self, v: &Vec4) -> [C64; 4] {
        Eigenstate::ALL.map(|e| self.project(e, v))
    }

    pub fn reconstruct(&self, coefficients: &[C64; 4]) -> Vec4 {
        self.right
            .iter()
            .zip(coefficients)
            .fold(Vec4::zeros(), |acc, (r, c)| acc + r * *c)
    }

    /// `⟨i_l|j_r⟩` for every pair.
    pub fn overlap_matrix(&self) -> Mat4 {
        Mat4::from_fn(|i, j| {
            let l = &self.left[i];
            let r = &self.right[j];
            (0..4).map(|k| l[k] * r[k]).sum()
        })
    }
}

fn require_drive(sample: &DriveSample) -> Result<()> {
    if sample.is_dark() {
        return Err(Error::DegenerateDrive { t: sample.t });
    }
    Ok(())
}

/// Analytic eigensystem of the closed Hamiltonian.
pub fn eigensystem_closed(sample: &DriveSample) -> Result<AdiabaticFrame> {
    require_drive(sample)?;
    Ok(AdiabaticFrame::from_sample(sample, 1.0))
}

/// Analytic biorthonormal eigensystem of the interaction-picture Hamiltonian.
pub fn eigensystem_open(
    sample: &DriveSample,
    gamma0: f64,
    t: f64,
    t_i: f64,
) -> Result<AdiabaticFrame> {
    require_drive(sample)?;
    let growth = picture_factor(gamma0, t, t_i)?;
    Ok(AdiabaticFrame::from_sample(sample, growth))
}

/// `e^{Γ₀(t−t_i)}` with the overflow guard.
pub fn growth_factor(gamma0: f64, t: f64, t_i: f64) -> Result<f64> {
    picture_factor(gamma0, t, t_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sample(a0: f64, a1: f64, a2: f64, phi01: f64, phi2: f64) -> DriveSample {
        let r = a0.hypot(a1);
        DriveSample {
            t: 0.0,
            a0,
            a1,
            a2,
            theta01: a0.atan2(a1),
            theta_h: r.atan2(a2),
            phi01,
            phi2,
            theta_h_rate: 0.0,
            phi2_rate: 0.0,
        }
    }

    fn arb_sample() -> impl Strategy<Value = DriveSample> {
        (
            0.0f64..50.0,
            0.0f64..50.0,
            0.0f64..50.0,
            -PI..PI,
            -10.0f64..10.0,
        )
            .prop_filter("non-degenerate", |(a, b, c, _, _)| a + b + c > 1e-3)
            .prop_map(|(a0, a1, a2, p1, p2)| sample(a0, a1, a2, p1, p2))
    }

    #[test]
    fn zero_drive_gives_zero_matrix() {
        let h = hamiltonian_closed(&sample(0.0, 0.0, 0.0, 1.0, 2.0));
        assert_eq!(h.0, Mat4::zeros());
    }

    #[test]
    fn channel_two_only() {
        let h = hamiltonian_closed(&sample(0.0, 0.0, 3.0, 0.7, 0.0)).0;
        for r in 0..4 {
            for c in 0..4 {
                let expected = if (r, c) == (EXC, G2) || (r, c) == (G2, EXC) {
                    1.5
                } else {
                    0.0
                };
                assert!((h[(r, c)] - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn generic_closed_is_hermitian_with_zero_diagonal() {
        let h = hamiltonian_closed(&sample(1.0, 2.0, 3.0, 0.4, 1.9));
        assert!(h.is_hermitian(1e-14));
        for k in 0..4 {
            assert_eq!(h.0[(k, k)], ZERO);
        }
    }

    #[test]
    fn nonhermitian_examples() {
        let s = sample(1.0, 2.0, 3.0, 0.4, 1.9);
        assert_eq!(hamiltonian_nonhermitian(&s, 0.0), hamiltonian_closed(&s));
        let d = hamiltonian_nonhermitian(&sample(0.0, 0.0, 0.0, 0.0, 0.0), 0.3).0;
        assert_eq!(d[(0, 0)], C64::new(0.0, -0.3));
        assert_eq!(d.iter().filter(|c| **c != ZERO).count(), 1);
        // anti-Hermitian part (H − H†)/2i has the single eigenvalue −Γ
        let h = hamiltonian_nonhermitian(&s, 0.3).0;
        let anti = (h - h.adjoint()) / (C64::new(0.0, 2.0));
        let (vals, _) = hermitian_eigen(&anti);
        assert!((vals[0] + 0.3).abs() < 1e-14);
        assert!(vals.iter().skip(1).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn interaction_examples() {
        let s = sample(1.0, 2.0, 3.0, 0.4, 1.9);
        assert_eq!(
            hamiltonian_interaction(&s, 0.0, 2.0, 0.0).unwrap(),
            hamiltonian_closed(&s)
        );
        let h = hamiltonian_interaction(&s, 0.2, 3.0, 0.5).unwrap();
        let ratio = h.0[(G0, EXC)] / h.0[(EXC, G0)];
        assert!((ratio - C64::new((2.0 * 0.2 * 2.5f64).exp(), 0.0)).norm() < 1e-12);
        assert_eq!(h.trace(), ZERO);
        assert!(matches!(
            hamiltonian_interaction(&s, 10.0, 6.0, 0.0),
            Err(Error::PictureOverflow { .. })
        ));
    }

    #[test]
    fn closed_dark_states_at_limits() {
        let phi01 = 0.8;
        let th01 = 0.3;
        let s = DriveSample {
            theta_h: 0.0,
            theta01: th01,
            ..sample(0.0, 0.0, 2.0, phi01, 1.1)
        };
        let f = eigensystem_closed(&s).unwrap();
        let expected = -Vec4::new(
            C64::new(th01.sin(), 0.0),
            cis(phi01) * th01.cos(),
            ZERO,
            ZERO,
        );
        assert!((f.right(Eigenstate::Dark1) - expected).norm() < 1e-15);

        let s = DriveSample {
            theta_h: FRAC_PI_2,
            ..s
        };
        let f = eigensystem_closed(&s).unwrap();
        let expected = Vec4::new(ZERO, ZERO, ZERO, cis(1.1));
        assert!((f.right(Eigenstate::Dark1) - expected).norm() < 1e-15);
    }

    #[test]
    fn degenerate_drive_is_an_error() {
        let s = sample(0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            eigensystem_closed(&s),
            Err(Error::DegenerateDrive { .. })
        ));
        assert!(matches!(
            eigensystem_open(&s, 0.1, 1.0, 0.0),
            Err(Error::DegenerateDrive { .. })
        ));
    }

    #[test]
    fn open_frame_at_start_equals_closed() {
        let s = sample(1.0, 2.0, 3.0, 0.4, 1.9);
        let open = eigensystem_open(&s, 0.7, 2.0, 2.0).unwrap();
        let closed = eigensystem_closed(&s).unwrap();
        assert_eq!(open, closed);
        for e in Eigenstate::ALL {
            let conj = closed.right(e).map(|c| c.conj());
            assert!((closed.left(e) - conj).norm() < 1e-15);
        }
    }

    #[test]
    fn numerical_diagonalization_agrees() {
        // oracle: Hermitian eigendecomposition of the closed matrix
        let s = sample(1.3, 2.1, 0.7, 0.4, -0.6);
        let h = hamiltonian_closed(&s).0;
        let (vals, vecs) = hermitian_eigen(&h);
        let f = eigensystem_closed(&s).unwrap();
        assert!((vals[0] - f.omega_minus).abs() < 1e-12);
        assert!(vals[1].abs() < 1e-12 && vals[2].abs() < 1e-12);
        assert!((vals[3] - f.omega_plus).abs() < 1e-12);
        let plus = vecs.column(3).into_owned();
        assert!((plus.dotc(f.right(Eigenstate::Plus)).norm() - 1.0).abs() < 1e-12);
        let minus = vecs.column(0).into_owned();
        assert!((minus.dotc(f.right(Eigenstate::Minus)).norm() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closed_dark_residuals(s in arb_sample()) {
            let h = hamiltonian_closed(&s).0;
            let f = eigensystem_closed(&s).unwrap();
            prop_assert!((h * f.right(Eigenstate::Dark1)).norm() < 1e-12 * (1.0 + h.norm()));
            prop_assert!((h * f.right(Eigenstate::Dark2)).norm() < 1e-12 * (1.0 + h.norm()));
            prop_assert!(hamiltonian_closed(&s).is_hermitian(1e-14));
        }

        #[test]
        fn open_biorthonormal_and_residuals(
            s in arb_sample(), gamma0 in 0.0f64..2.0, elapsed in 0.0f64..5.0
        ) {
            let f = eigensystem_open(&s, gamma0, elapsed, 0.0).unwrap();
            let h = hamiltonian_interaction(&s, gamma0, elapsed, 0.0).unwrap().0;
            let overlaps = f.overlap_matrix();
            for i in 0..4 {
                for j in 0..4 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((overlaps[(i, j)] - C64::new(target, 0.0)).norm() < 1e-12);
                }
            }
            // exact up to rounding
            prop_assert!(f.project(Eigenstate::Dark1, f.right(Eigenstate::Dark2)).norm() < 1e-15);
            for e in Eigenstate::ALL {
                let v = f.right(e);
                let residual = (h * v - v * C64::new(f.omega(e), 0.0)).norm();
                prop_assert!(residual < 1e-10 * h.norm().max(1.0));
            }
            let closed = eigensystem_closed(&s).unwrap();
            prop_assert_eq!(f.omega_plus, closed.omega_plus);
            prop_assert_eq!(f.omega_minus, closed.omega_minus);
        }
    }
}
