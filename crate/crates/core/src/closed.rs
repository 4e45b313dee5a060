//! Closed-system adiabatic analysis: the dark-state geometric phase, the
//! dark-subspace coefficients along a full integration, and the qubit gate.

use crate::drive::{DriveSample, PulseSchedule};
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    cis, embed, phase_aligned_distance, populations, unwrap_phase, Mat2, Vec2, Vec4, C64, EXC,
};
use crate::model::AdiabaticFrame;
use crate::propagate::{evolve_state, Closed, StateVector, StepControl, DEFAULT_DT};

/// Default bound on the population outside the dark subspace.
pub const ADIABATIC_THRESHOLD: f64 = 1e-3;

/// `∫_a^b f(sample(t)) dt` by composite Simpson on every interval between
/// consecutive pulse breakpoints, with at most `max_step` per panel.
///
/// Panel ends are evaluated a hair inside the interval so that one-sided
/// limits of held angles are used at switch-on and switch-off points.
pub fn drive_integral(
    schedule: &PulseSchedule,
    a: f64,
    b: f64,
    max_step: f64,
    f: impl Fn(&DriveSample) -> f64,
) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut cuts = vec![a];
    cuts.extend(
        schedule
            .breakpoints()
            .into_iter()
            .filter(|&t| t > a && t < b),
    );
    cuts.push(b);
    cuts.windows(2)
        .map(|w| simpson_panel(schedule, w[0], w[1], max_step, &f))
        .sum()
}

fn simpson_panel(
    schedule: &PulseSchedule,
    a: f64,
    b: f64,
    max_step: f64,
    f: &impl Fn(&DriveSample) -> f64,
) -> f64 {
    let span = b - a;
    let nudge = |t: f64| 1e-12 * t.abs().max(1.0);
    if span <= 4.0 * nudge(b) {
        return 0.0;
    }
    let n = 2 * ((span / (2.0 * max_step)).ceil().max(1.0) as usize);
    let h = span / n as f64;
    let at = |t: f64| f(&schedule.sample(t));
    let mut sum = at(a + nudge(a)) + at(b - nudge(b));
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * at(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// `γ_D1 = −∫ φ̇₂ sin²θ_H dt` over the whole schedule at the default step.
pub fn geometric_phase(schedule: &PulseSchedule) -> f64 {
    geometric_phase_with_step(schedule, DEFAULT_DT)
}

pub fn geometric_phase_with_step(schedule: &PulseSchedule, max_step: f64) -> f64 {
    geometric_phase_between(schedule, schedule.t_i(), schedule.t_f(), max_step)
}

/// Dark-state phase accumulated on `[a, b]`.
pub fn geometric_phase_between(schedule: &PulseSchedule, a: f64, b: f64, max_step: f64) -> f64 {
    -drive_integral(schedule, a, b, max_step, |s| {
        let sh = s.theta_h.sin();
        s.phi2_rate * sh * sh
    })
}

/// Amplitudes on the two dark states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkCoefficients {
    pub c_d1: C64,
    pub c_d2: C64,
}

impl DarkCoefficients {
    pub fn weight(&self) -> f64 {
        self.c_d1.norm_sqr() + self.c_d2.norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkSample {
    pub t: f64,
    pub coefficients: DarkCoefficients,
    /// Population on the two bright states.
    pub bright_population: f64,
    /// Unwrapped `arg C_D1(t)/C_D1(t_i)`, or `None` if `C_D1(t_i) = 0`.
    pub phase_d1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarkTrace {
    pub samples: Vec<DarkSample>,
    pub final_state: StateVector,
}

impl DarkTrace {
    pub fn initial(&self) -> &DarkSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &DarkSample {
        self.samples.last().expect("trace holds the initial sample")
    }

    pub fn max_bright_population(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.bright_population)
            .fold(0.0, f64::max)
    }
}

fn closed_frame(schedule: &PulseSchedule, t: f64) -> AdiabaticFrame {
    AdiabaticFrame::from_sample(&schedule.sample(t), 1.0)
}

fn leak_check(t: f64, leak: f64, threshold: f64) -> Result<()> {
    if leak > threshold {
        return Err(Error::AdiabaticityViolation { t, leak, threshold });
    }
    Ok(())
}

/// Integrates the full four-level equation from a dark-subspace state and
/// projects onto the instantaneous closed frame at every observer sample.
pub fn propagate_dark(
    psi_i: &StateVector,
    schedule: &PulseSchedule,
    ctl: &StepControl,
    threshold: f64,
) -> Result<DarkTrace> {
    let frame = closed_frame(schedule, ctl.t_start);
    let [p, m, d1, _] = frame.coefficients(psi_i.amplitudes());
    let bright = p.norm_sqr() + m.norm_sqr();
    if bright > 1e-10 * psi_i.norm_sq() {
        return Err(invalid(
            "psi_i",
            format!(
                "not in the dark subspace at t = {} (bright weight {bright:e})",
                ctl.t_start
            ),
        ));
    }
    let start_d1 = (d1.norm() > 1e-14).then_some(d1);
    let mut samples: Vec<DarkSample> = Vec::new();
    let mut failure = None;
    let final_state = evolve_state(psi_i, &Closed(schedule), ctl, |t, v| {
        if failure.is_some() {
            return;
        }
        let frame = closed_frame(schedule, t);
        let [p, m, d1, d2] = frame.coefficients(v);
        let bright = p.norm_sqr() + m.norm_sqr();
        if let Err(e) = leak_check(t, bright + populations(v)[EXC], threshold) {
            failure = Some(e);
            return;
        }
        let phase_d1 = start_d1.map(|c0| {
            let wrapped = (d1 / c0).arg();
            match samples.last().and_then(|s| s.phase_d1) {
                Some(prev) => unwrap_phase(prev, wrapped),
                None => wrapped,
            }
        });
        samples.push(DarkSample {
            t,
            coefficients: DarkCoefficients { c_d1: d1, c_d2: d2 },
            bright_population: bright,
            phase_d1,
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(DarkTrace {
        samples,
        final_state,
    })
}

/// A 2×2 operator on span{|0⟩, |1⟩}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateMatrix(pub Mat2);

impl GateMatrix {
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn apply(&self, psi: &Vec2) -> Vec2 {
        self.0 * psi
    }

    /// `‖U U† − I‖` (Frobenius).
    pub fn unitarity_defect(&self) -> f64 {
        (self.0 * self.0.adjoint() - Mat2::identity()).norm()
    }
}

/// The dark-subspace gate for mixing angle θ₀₁, phase φ₀₁ and geometric
/// phase γ_D1.
pub fn gate_matrix(theta01: f64, phi01: f64, gamma_d1: f64) -> GateMatrix {
    let (s, c) = theta01.sin_cos();
    let g = cis(gamma_d1);
    let one = C64::new(1.0, 0.0);
    let off = (g - one) * (c * s);
    GateMatrix(Mat2::new(
        one * (c * c) + g * (s * s),
        off * cis(-phi01),
        off * cis(phi01),
        one * (s * s) + g * (c * c),
    ))
}

/// The gate the schedule implements in the adiabatic limit.
pub fn schedule_gate(schedule: &PulseSchedule) -> GateMatrix {
    gate_matrix(
        schedule.theta01(),
        schedule.phi01(),
        geometric_phase(schedule),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSample {
    pub t: f64,
    /// `[P₀, P₁, P_e, P₂]`.
    pub populations: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedRun {
    pub samples: Vec<PopulationSample>,
    pub final_state: StateVector,
    pub max_excited: f64,
    /// Largest `P_e + bright population` seen.
    pub max_leak: f64,
    /// Phase-aligned distance between the final {|0⟩,|1⟩} amplitudes and `U ψ_i`.
    pub gate_error: f64,
}

impl ClosedRun {
    pub fn final_populations(&self) -> [f64; 4] {
        self.samples.last().expect("run has samples").populations
    }
}

/// Full four-level integration of a qubit state through the schedule.
pub fn run_closed(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    ctl: &StepControl,
    threshold: f64,
) -> Result<ClosedRun> {
    let norm = psi_i.norm();
    if !((norm - 1.0).abs() < 1e-10) {
        return Err(invalid(
            "psi_i",
            format!("must be normalized, norm is {norm}"),
        ));
    }
    let start = StateVector::normalized(embed(psi_i))?;
    let mut samples = Vec::new();
    let mut max_excited: f64 = 0.0;
    let mut max_leak: f64 = 0.0;
    let mut failure = None;
    let final_state = evolve_state(&start, &Closed(schedule), ctl, |t, v: &Vec4| {
        if failure.is_some() {
            return;
        }
        let pops = populations(v);
        let [p, m, _, _] = closed_frame(schedule, t).coefficients(v);
        let leak = p.norm_sqr() + m.norm_sqr() + pops[EXC];
        max_excited = max_excited.max(pops[EXC]);
        max_leak = max_leak.max(leak);
        if let Err(e) = leak_check(t, leak, threshold) {
            failure = Some(e);
            return;
        }
        samples.push(PopulationSample {
            t,
            populations: pops,
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let v = final_state.amplitudes();
    let restricted = Vec2::new(v[0], v[1]);
    let target = schedule_gate(schedule).apply(psi_i);
    Ok(ClosedRun {
        samples,
        final_state,
        max_excited,
        max_leak,
        gate_error: phase_aligned_distance(&restricted, &target),
    })
}

/// Default control for the paper schedule: default step, 25-step cadence.
pub fn default_control(schedule: &PulseSchedule) -> StepControl {
    StepControl::over(schedule, DEFAULT_DT, 25).expect("default step control is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{DoubleStirap, Pulse};
    use crate::linalg::{basis, ONE, ZERO};
    use crate::model::Eigenstate;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8, PI};

    fn paper() -> PulseSchedule {
        DoubleStirap::paper().build().unwrap()
    }

    #[test]
    fn phase_vanishes_without_phi2_rate() {
        let mut layout = DoubleStirap::paper();
        layout.phi2_rate = 0.0;
        assert_eq!(geometric_phase(&layout.build().unwrap()), 0.0);
    }

    #[test]
    fn phase_of_constant_window() {
        // channel 2 off: sin²θ_H = 1 from the first 0/1 pulse onward
        let on = |t| Pulse::new(5.0, t, 1.0).unwrap();
        let pulses = [
            on(1.0),
            on(1.0),
            Pulse::off(),
            Pulse::off(),
            Pulse::off(),
            Pulse::off(),
        ];
        let s = PulseSchedule::from_pulses(pulses, 0.0, 1.0, 0.0, 4.5).unwrap();
        assert!((geometric_phase(&s) + 3.5).abs() < 1e-10);
    }

    #[test]
    fn paper_phase_is_minus_pi() {
        assert!((geometric_phase(&paper()) + PI).abs() < 1e-9);
    }

    #[test]
    fn phase_is_additive() {
        let s = paper();
        let whole = geometric_phase(&s);
        for cut in [0.3, 1.234567, 2.0, 3.0, 4.5, 5.9] {
            let parts = geometric_phase_between(&s, s.t_i(), cut, DEFAULT_DT)
                + geometric_phase_between(&s, cut, s.t_f(), DEFAULT_DT);
            assert!(
                (parts - whole).abs() < 1e-12,
                "cut {cut}: {}",
                parts - whole
            );
        }
    }

    #[test]
    fn gate_identity_without_phase() {
        let u = gate_matrix(0.7, 1.3, 0.0);
        assert!((u.0 - Mat2::identity()).norm() < 1e-15);
    }

    #[test]
    fn hadamard_parameters() {
        let u = gate_matrix(FRAC_PI_8, PI, -PI);
        let h = Mat2::new(ONE, ONE, ONE, -ONE) * C64::new(FRAC_1_SQRT_2, 0.0);
        assert!((u.0 - h).norm() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gate_is_unitary(theta in 0.0..FRAC_PI_8 * 4.0, phi in -PI..PI, gamma in -2.0 * PI..2.0 * PI) {
            prop_assert!(gate_matrix(theta, phi, gamma).unitarity_defect() < 1e-12);
            prop_assert!((gate_matrix(theta, phi, 0.0).0 - Mat2::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn ground_state_dark_coefficients() {
        let s = paper();
        let frame = closed_frame(&s, s.t_i());
        let [_, _, d1, d2] = frame.coefficients(&basis(0));
        assert!((d1.norm() - FRAC_PI_8.sin()).abs() < 1e-14);
        assert!((d2.norm() - FRAC_PI_8.cos()).abs() < 1e-14);
    }

    #[test]
    fn dark_two_is_frozen() {
        let s = paper();
        let d2 = *closed_frame(&s, s.t_i()).right(Eigenstate::Dark2);
        let psi = StateVector::normalized(d2).unwrap();
        let trace = propagate_dark(&psi, &s, &default_control(&s), ADIABATIC_THRESHOLD).unwrap();
        let last = trace.last().coefficients;
        assert!((last.c_d2 - ONE).norm() < 1e-3);
        assert!(last.c_d1.norm() < 1e-3);
    }

    #[test]
    fn dark_one_picks_up_geometric_phase() {
        let s = paper();
        let d1 = *closed_frame(&s, s.t_i()).right(Eigenstate::Dark1);
        let psi = StateVector::normalized(d1).unwrap();
        let trace = propagate_dark(&psi, &s, &default_control(&s), ADIABATIC_THRESHOLD).unwrap();
        let phase = trace.last().phase_d1.unwrap();
        assert!((phase - geometric_phase(&s)).abs() < 1e-3, "{phase}");
        assert!(trace.max_bright_population() < 1e-3);
        for w in trace.samples.windows(2) {
            let (a, b) = (w[0].phase_d1.unwrap(), w[1].phase_d1.unwrap());
            assert!((a - b).abs() < 0.5);
        }
    }

    #[test]
    fn rejects_bright_initial_state() {
        let s = paper();
        let psi = StateVector::normalized(basis(EXC)).unwrap();
        assert!(propagate_dark(&psi, &s, &default_control(&s), ADIABATIC_THRESHOLD).is_err());
    }

    #[test]
    fn hadamard_run_from_ground() {
        let s = paper();
        let run = run_closed(
            &Vec2::new(ONE, ZERO),
            &s,
            &default_control(&s),
            ADIABATIC_THRESHOLD,
        )
        .unwrap();
        let [p0, p1, _, _] = run.final_populations();
        assert!(
            (p0 - 0.5).abs() < 1e-3 && (p1 - 0.5).abs() < 1e-3,
            "{p0} {p1}"
        );
        assert!(run.max_excited < 1e-3);
        assert!(run.gate_error < 1e-3);
    }

    #[test]
    fn hadamard_maps_plus_to_ground() {
        let s = paper();
        let plus = Vec2::new(ONE, ONE) * C64::new(FRAC_1_SQRT_2, 0.0);
        let run = run_closed(&plus, &s, &default_control(&s), ADIABATIC_THRESHOLD).unwrap();
        let v = run.final_state.amplitudes();
        let d = phase_aligned_distance(&Vec2::new(v[0], v[1]), &Vec2::new(ONE, ZERO));
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn fast_pulses_break_adiabaticity() {
        let mut layout = DoubleStirap::paper();
        layout.a_max0 = 6.0;
        layout.a_max1 = 6.0 / (2f64.sqrt() - 1.0);
        let s = layout.build().unwrap();
        let err = run_closed(
            &Vec2::new(ONE, ZERO),
            &s,
            &default_control(&s),
            ADIABATIC_THRESHOLD,
        )
        .unwrap_err();
        assert!(matches!(err, Error::AdiabaticityViolation { .. }));
    }
}
