//! Fixed-step classical Runge–Kutta integration of the Schrödinger equation
//! (Hermitian or not) and of the dephasing master equation.

use crate::drive::PulseSchedule;
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    hermitian_eigen, hermiticity_defect, norm_sq, outer, spectral_norm, Mat4, Vec4, C64, G0,
};
use crate::model::{closed_matrix, growth_factor, interaction_matrix};

/// Largest admitted `dt·‖H‖`.
pub const MAX_PHASE_PER_STEP: f64 = 0.1;

/// Step used for the Hadamard parameter set: `dt·‖H‖ ≈ 0.098` at the peak.
pub const DEFAULT_DT: f64 = 1.0 / 25000.0;

/// Positivity floor below which the master-equation integration aborts.
pub const POSITIVITY_ABORT: f64 = -1e-6;

/// Right-hand side generator: `i dψ/dt = H(t) ψ` (ħ = 1).
pub trait Generator: Sync {
    fn hamiltonian(&self, t: f64) -> Mat4;

    /// Operator norm used by the step-size guard.
    fn scale(&self, t: f64) -> f64 {
        spectral_norm(&self.hamiltonian(t))
    }

    /// Checks that the generator is well defined up to `t_end`.
    fn validate(&self, _t_end: f64) -> Result<()> {
        Ok(())
    }
}

impl Generator for Mat4 {
    fn hamiltonian(&self, _t: f64) -> Mat4 {
        *self
    }
}

/// Closed-system Hamiltonian of a schedule.
#[derive(Debug, Clone, Copy)]
pub struct Closed<'a>(pub &'a PulseSchedule);

impl Generator for Closed<'_> {
    #[inline]
    fn hamiltonian(&self, t: f64) -> Mat4 {
        closed_matrix(self.0.amplitudes(t), self.0.phi01(), self.0.phi2(t))
    }
}

/// Schrödinger-picture no-jump Hamiltonian `H − iΓ₀|0⟩⟨0|`.
#[derive(Debug, Clone, Copy)]
pub struct NoJump<'a> {
    pub schedule: &'a PulseSchedule,
    pub gamma0: f64,
}

impl Generator for NoJump<'_> {
    #[inline]
    fn hamiltonian(&self, t: f64) -> Mat4 {
        let mut h = closed_matrix(
            self.schedule.amplitudes(t),
            self.schedule.phi01(),
            self.schedule.phi2(t),
        );
        h[(G0, G0)] = C64::new(0.0, -self.gamma0);
        h
    }
}

/// Interaction-picture no-jump Hamiltonian, anchored at the schedule's `t_i`.
#[derive(Debug, Clone, Copy)]
pub struct Interaction<'a> {
    pub schedule: &'a PulseSchedule,
    pub gamma0: f64,
}

impl Generator for Interaction<'_> {
    #[inline]
    fn hamiltonian(&self, t: f64) -> Mat4 {
        let growth = (self.gamma0 * (t - self.schedule.t_i())).exp();
        interaction_matrix(
            self.schedule.amplitudes(t),
            self.schedule.phi01(),
            self.schedule.phi2(t),
            growth,
        )
    }

    // Similar to the Schrödinger-picture operator; its norm governs stability.
    fn scale(&self, t: f64) -> f64 {
        NoJump {
            schedule: self.schedule,
            gamma0: self.gamma0,
        }
        .scale(t)
    }

    fn validate(&self, t_end: f64) -> Result<()> {
        growth_factor(self.gamma0, t_end, self.schedule.t_i()).map(|_| ())
    }
}

/// A four-component amplitude vector, possibly not normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    amplitudes: Vec4,
    normalized: bool,
}

impl StateVector {
    /// Normalizes `v`; fails on a zero vector.
    pub fn normalized(v: Vec4) -> Result<Self> {
        let n = norm_sq(&v).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid(
                "state",
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(Self {
            amplitudes: v / C64::new(n, 0.0),
            normalized: true,
        })
    }

    /// Wraps `v` as-is.
    pub fn raw(v: Vec4) -> Self {
        Self {
            amplitudes: v,
            normalized: false,
        }
    }

    pub fn amplitudes(&self) -> &Vec4 {
        &self.amplitudes
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes)
    }

    /// Populations of the normalized state.
    pub fn populations(&self) -> [f64; 4] {
        crate::linalg::populations(&self.amplitudes)
    }

    pub fn into_normalized(self) -> Result<Self> {
        Self::normalized(self.amplitudes)
    }
}

/// A 4×4 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: Mat4) -> Result<Self> {
        let defect = hermiticity_defect(&m);
        if defect > 1e-10 {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("not Hermitian (‖ρ − ρ†‖ = {defect:e})"),
            });
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("trace is {tr}"),
            });
        }
        let rho = Self(m);
        let min = rho.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("negative eigenvalue {min:e}"),
            });
        }
        Ok(rho)
    }

    pub fn pure(v: &Vec4) -> Result<Self> {
        let s = StateVector::normalized(*v)?;
        Ok(Self(outer(s.amplitudes())))
    }

    /// Wraps a matrix without validation.
    pub fn unchecked(m: Mat4) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.0[(k, k)].re)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.0).0[0]
    }
}

/// Integration window, step bound and observer cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// The observer sees every `cadence`-th step (and the last one).
    pub cadence: usize,
}

impl StepControl {
    pub fn new(dt: f64, t_start: f64, t_end: f64, cadence: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        if !(t_end >= t_start) {
            return Err(invalid(
                "t_end",
                format!("must be ≥ t_start, got [{t_start}, {t_end}]"),
            ));
        }
        if cadence == 0 {
            return Err(invalid("cadence", "must be ≥ 1"));
        }
        Ok(Self {
            dt,
            t_start,
            t_end,
            cadence,
        })
    }

    /// Whole-schedule window.
    pub fn over(schedule: &PulseSchedule, dt: f64, cadence: usize) -> Result<Self> {
        Self::new(dt, schedule.t_i(), schedule.t_f(), cadence)
    }

    pub fn with_window(self, t_start: f64, t_end: f64) -> Result<Self> {
        Self::new(self.dt, t_start, t_end, self.cadence)
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.t_start, self.t_end, self.dt)
    }
}

/// Uniform time grid `t_k = t_start + k·h`, `k = 0..=steps`, with `h ≤ dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t_start: f64,
    pub h: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Self {
        let span = t_end - t_start;
        if span <= 0.0 {
            return Self {
                t_start,
                h: dt,
                steps: 0,
            };
        }
        let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
        Self {
            t_start,
            h: span / steps as f64,
            steps,
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }
}

#[inline]
fn times_minus_i(h: &Mat4, v: &Vec4) -> Vec4 {
    let mut out = h * v;
    for c in out.iter_mut() {
        *c = C64::new(c.im, -c.re);
    }
    out
}

/// One classical RK4 step of `i dψ/dt = H(t)ψ` from `t` to `t + h`.
#[inline]
pub fn rk4_step(gen: &impl Generator, t: f64, h: f64, psi: &Vec4) -> Vec4 {
    let h_start = gen.hamiltonian(t);
    let h_mid = gen.hamiltonian(t + 0.5 * h);
    let h_end = gen.hamiltonian(t + h);
    rk4_step_with(&h_start, &h_mid, &h_end, h, psi)
}

#[inline]
fn rk4_step_with(h_start: &Mat4, h_mid: &Mat4, h_end: &Mat4, h: f64, psi: &Vec4) -> Vec4 {
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let k1 = times_minus_i(h_start, psi);
    let k2 = times_minus_i(h_mid, &(psi + k1 * half));
    let k3 = times_minus_i(h_mid, &(psi + k2 * half));
    let k4 = times_minus_i(h_end, &(psi + k3 * full));
    psi + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0)
}

fn check_step(gen: &impl Generator, t: f64, h: f64) -> Result<()> {
    let product = h * gen.scale(t);
    if product > MAX_PHASE_PER_STEP {
        return Err(Error::StepTooCoarse {
            t,
            product,
            limit: MAX_PHASE_PER_STEP,
        });
    }
    Ok(())
}

/// Integrates `i dψ/dt = H(t)ψ` without renormalizing. The observer receives
/// `(t, ψ)` at step 0, every `cadence`-th step and the final step; the step
/// bound `dt·‖H‖ ≤ 0.1` is checked at those samples.
pub fn evolve_state(
    psi: &StateVector,
    gen: &impl Generator,
    ctl: &StepControl,
    mut observer: impl FnMut(f64, &Vec4),
) -> Result<StateVector> {
    gen.validate(ctl.t_end)?;
    let grid = ctl.grid();
    let mut state = *psi.amplitudes();
    let mut h_start = gen.hamiltonian(grid.t_start);
    check_step(gen, grid.t_start, grid.h)?;
    observer(grid.t_start, &state);
    for k in 0..grid.steps {
        let t = grid.time(k);
        let t_next = grid.time(k + 1);
        let h_mid = gen.hamiltonian(t + 0.5 * grid.h);
        let h_end = gen.hamiltonian(t_next);
        state = rk4_step_with(&h_start, &h_mid, &h_end, grid.h, &state);
        h_start = h_end;
        if (k + 1) % ctl.cadence == 0 || k + 1 == grid.steps {
            check_step(gen, t_next, grid.h)?;
            observer(t_next, &state);
        }
    }
    Ok(StateVector::raw(state))
}

/// Like [`evolve_state`], collecting the observer samples.
pub fn evolve_state_trace(
    psi: &StateVector,
    gen: &impl Generator,
    ctl: &StepControl,
) -> Result<Vec<(f64, Vec4)>> {
    let mut out = Vec::new();
    evolve_state(psi, gen, ctl, |t, v| out.push((t, *v)))?;
    Ok(out)
}

#[inline]
fn lindblad_rhs(h: &Mat4, rho: &Mat4, gamma0: f64) -> Mat4 {
    let hr = h * rho;
    let comm = hr - hr.adjoint();
    // −i[H, ρ] with ρ Hermitian: Hρ − ρH = Hρ − (Hρ)†
    let mut out = comm.map(|c| C64::new(c.im, -c.re));
    for j in 1..4 {
        out[(0, j)] -= rho[(0, j)] * gamma0;
        out[(j, 0)] -= rho[(j, 0)] * gamma0;
    }
    out
}

/// Integrates the master equation with the single dephasing operator
/// `√(2Γ₀)|0⟩⟨0|`: coherences `ρ₀ⱼ`, `ρⱼ₀` (j ≠ 0) decay at rate Γ₀ on top of
/// the closed evolution.
pub fn evolve_density_with(
    rho: &DensityMatrix,
    gamma0: f64,
    gen: &impl Generator,
    ctl: &StepControl,
    mut observer: impl FnMut(f64, &DensityMatrix),
) -> Result<DensityMatrix> {
    if !(gamma0 >= 0.0) {
        return Err(invalid("gamma0", format!("must be ≥ 0, got {gamma0}")));
    }
    gen.validate(ctl.t_end)?;
    let grid = ctl.grid();
    let mut state = *rho.matrix();
    check_step(gen, grid.t_start, grid.h)?;
    observer(grid.t_start, rho);
    let mut h_start = gen.hamiltonian(grid.t_start);
    let half = C64::new(0.5 * grid.h, 0.0);
    let full = C64::new(grid.h, 0.0);
    let two = C64::new(2.0, 0.0);
    let sixth = C64::new(grid.h / 6.0, 0.0);
    for k in 0..grid.steps {
        let t = grid.time(k);
        let t_next = grid.time(k + 1);
        let h_mid = gen.hamiltonian(t + 0.5 * grid.h);
        let h_end = gen.hamiltonian(t_next);
        let k1 = lindblad_rhs(&h_start, &state, gamma0);
        let k2 = lindblad_rhs(&h_mid, &(state + k1 * half), gamma0);
        let k3 = lindblad_rhs(&h_mid, &(state + k2 * half), gamma0);
        let k4 = lindblad_rhs(&h_end, &(state + k3 * full), gamma0);
        state += (k1 + (k2 + k3) * two + k4) * sixth;
        h_start = h_end;
        if (k + 1) % ctl.cadence == 0 || k + 1 == grid.steps {
            check_step(gen, t_next, grid.h)?;
            let current = DensityMatrix(state);
            let min = current.min_eigenvalue();
            if min < POSITIVITY_ABORT {
                return Err(Error::PositivityViolation {
                    t: t_next,
                    min_eigenvalue: min,
                });
            }
            observer(t_next, &current);
        }
    }
    Ok(DensityMatrix(state))
}

/// Master-equation evolution under the schedule's closed Hamiltonian.
pub fn evolve_density(
    rho: &DensityMatrix,
    gamma0: f64,
    schedule: &PulseSchedule,
    ctl: &StepControl,
    observer: impl FnMut(f64, &DensityMatrix),
) -> Result<DensityMatrix> {
    evolve_density_with(rho, gamma0, &Closed(schedule), ctl, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::DoubleStirap;
    use crate::linalg::{basis, cis, ONE, ZERO};

    fn ctl(t_end: f64, dt: f64) -> StepControl {
        StepControl::new(dt, 0.0, t_end, 10).unwrap()
    }

    #[test]
    fn zero_hamiltonian_leaves_state() {
        let psi = StateVector::normalized(Vec4::new(ONE, cis(0.3), ZERO, ONE)).unwrap();
        let out = evolve_state(&psi, &Mat4::zeros(), &ctl(1.0, 0.01), |_, _| {}).unwrap();
        assert_eq!(out.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn pure_decay_matches_exponential() {
        // oracle: |⟨0|ψ(T)⟩|² = e^{−2ΓT} for H = −iΓ|0⟩⟨0|
        let gamma = 0.7;
        let mut h = Mat4::zeros();
        h[(0, 0)] = C64::new(0.0, -gamma);
        let psi = StateVector::normalized(basis(0)).unwrap();
        for t_end in [0.5, 1.0, 3.0] {
            let out = evolve_state(&psi, &h, &ctl(t_end, 0.01), |_, _| {}).unwrap();
            assert!((out.norm_sq() - (-2.0 * gamma * t_end).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_evolution_is_unitary() {
        let schedule = DoubleStirap::paper().build().unwrap();
        let psi = StateVector::normalized(Vec4::new(ONE, cis(0.4), ZERO, ZERO)).unwrap();
        let c = StepControl::new(DEFAULT_DT, 0.0, 2.0, 1000).unwrap();
        let out = evolve_state(&psi, &Closed(&schedule), &c, |_, _| {}).unwrap();
        assert!((out.norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let schedule = DoubleStirap::paper().build().unwrap();
        let psi = StateVector::normalized(basis(0)).unwrap();
        let c = StepControl::new(1e-3, 0.0, 2.0, 10).unwrap();
        let err = evolve_state(&psi, &Closed(&schedule), &c, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::StepTooCoarse { .. }));
    }

    #[test]
    fn observer_cadence_and_endpoint() {
        let mut times = Vec::new();
        let psi = StateVector::normalized(basis(1)).unwrap();
        let c = StepControl::new(0.1, 0.0, 1.05, 3).unwrap();
        evolve_state(&psi, &Mat4::zeros(), &c, |t, _| times.push(t)).unwrap();
        // 11 steps of 1.05/11, samples at 0, 3, 6, 9, 11
        assert_eq!(times.len(), 5);
        assert_eq!(times[0], 0.0);
        assert!((times[4] - 1.05).abs() < 1e-14);
    }

    #[test]
    fn coherence_decays_without_drive() {
        // oracle: ρ₀₁(T) = ρ₀₁(0) e^{−Γ₀T}, ρ₀₀ constant
        let gamma0 = 0.4;
        let v = Vec4::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO, ZERO);
        let rho = DensityMatrix::pure(&v).unwrap();
        let out =
            evolve_density_with(&rho, gamma0, &Mat4::zeros(), &ctl(2.0, 0.01), |_, _| {}).unwrap();
        let expected = rho.matrix()[(0, 1)] * (-gamma0 * 2.0f64).exp();
        assert!((out.matrix()[(0, 1)] - expected).norm() < 1e-10);
        assert!((out.matrix()[(1, 0)] - expected.conj()).norm() < 1e-10);
        assert!((out.matrix()[(0, 0)] - rho.matrix()[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn pure_lindblad_matches_state_evolution() {
        let schedule = DoubleStirap::paper().build().unwrap();
        let v = Vec4::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO, ZERO);
        let c = StepControl::new(DEFAULT_DT, 0.0, 2.5, 500).unwrap();
        let psi = evolve_state(
            &StateVector::normalized(v).unwrap(),
            &Closed(&schedule),
            &c,
            |_, _| {},
        )
        .unwrap();
        let rho = evolve_density(
            &DensityMatrix::pure(&v).unwrap(),
            0.0,
            &schedule,
            &c,
            |_, _| {},
        )
        .unwrap();
        assert!((rho.matrix() - outer(psi.amplitudes())).norm() < 1e-8);
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(Mat4::identity() * C64::new(0.25, 0.0)).is_ok());
        assert!(DensityMatrix::new(Mat4::identity()).is_err());
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(1.5, 0.0);
        m[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn state_vector_normalization() {
        assert!(StateVector::normalized(Vec4::zeros()).is_err());
        let s = StateVector::normalized(Vec4::new(
            C64::new(3.0, 0.0),
            C64::new(0.0, 4.0),
            ZERO,
            ZERO,
        ))
        .unwrap();
        assert!(s.is_normalized());
        assert!((s.norm_sq() - 1.0).abs() < 1e-15);
        assert!(!StateVector::raw(basis(2)).is_normalized());
    }

    /// Time-dependent, non-commuting test generator.
    struct Chirp;

    impl Generator for Chirp {
        fn hamiltonian(&self, t: f64) -> Mat4 {
            let (s, c) = (3.0 * t).sin_cos();
            let mut h = Mat4::zeros();
            h[(0, 1)] = C64::new(2.0 * s, c);
            h[(1, 0)] = h[(0, 1)].conj();
            h[(1, 2)] = C64::new(1.0 + t, 0.0);
            h[(2, 1)] = h[(1, 2)];
            h[(2, 3)] = C64::new(0.0, 0.5 * c);
            h[(3, 2)] = h[(2, 3)].conj();
            h[(0, 0)] = C64::new(0.3, -0.2);
            h
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let run = |dt: f64| {
            let ctl = StepControl::new(dt, 0.0, 2.0, usize::MAX).unwrap();
            *evolve_state(&StateVector::raw(basis(0)), &Chirp, &ctl, |_, _| {})
                .unwrap()
                .amplitudes()
        };
        let reference = run(1e-4);
        let e1 = (run(0.02) - reference).norm();
        let e2 = (run(0.01) - reference).norm();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }
}
