//! Dephasing of |0⟩ as an open-system problem: non-Hermitian no-jump
//! evolution with complex geometric phases, the post-jump re-expansion, and
//! Monte Carlo wave-function trajectories.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::closed::drive_integral;
use crate::drive::PulseSchedule;
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    basis, cis, norm_sq, outer, populations, unwrap_phase, Mat2, Mat4, Vec2, Vec4, C64, G0,
};
use crate::model::{growth_factor, AdiabaticFrame, Eigenstate};
use crate::propagate::{
    evolve_state, rk4_step, DensityMatrix, Grid, Interaction, NoJump, StateVector, StepControl,
    DEFAULT_DT,
};

/// Jump probabilities per step above this are reported as too coarse.
pub const JUMP_PROBABILITY_WARN: f64 = 0.05;

/// Below this modulus a coefficient is treated as absent.
const COEFFICIENT_FLOOR: f64 = 1e-12;

/// Trajectories summed sequentially per parallel work item.
const CHUNK: usize = 1024;

/// `Δt·⟨ψ|C₀†C₀|ψ⟩ = 2Γ₀Δt|⟨0|ψ⟩|²` for the normalized state.
pub fn jump_probability(psi: &StateVector, gamma0: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let weight = psi.amplitudes()[G0].norm_sqr() / psi.norm_sq();
    let p = 2.0 * gamma0 * dt * weight;
    if p > JUMP_PROBABILITY_WARN {
        log::warn!(
            "jump probability {p:.3} per step exceeds {JUMP_PROBABILITY_WARN}; step too coarse"
        );
    }
    Ok(p)
}

/// `√(2Γ₀)|0⟩⟨0|ψ⟩`, unnormalized.
pub fn apply_jump(psi: &StateVector, gamma0: f64) -> Result<StateVector> {
    let c = psi.amplitudes()[G0];
    if c.norm() < 1e-14 {
        return Err(Error::ZeroJumpComponent { overlap: c.norm() });
    }
    Ok(StateVector::raw(basis(G0) * (c * (2.0 * gamma0).sqrt())))
}

/// The normalized post-jump state `|0⟩·e^{i arg⟨0|ψ⟩}`.
pub fn jump_target(psi: &Vec4) -> Result<Vec4> {
    let c = psi[G0];
    if c.norm() < 1e-14 {
        return Err(Error::ZeroJumpComponent { overlap: c.norm() });
    }
    Ok(basis(G0) * (c / c.norm()))
}

/// Phase and decay of a coefficient relative to its value at segment start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedPhase {
    /// Unwrapped `arg(c_now/c_start)`.
    pub phase: f64,
    pub modulus_ratio: f64,
    /// `−ln|c_now/c_start|/Γ₀`; `None` at Γ₀ = 0.
    pub exponent: Option<f64>,
}

/// Writes `c_now = e^{−Γ₀·exponent} e^{i·phase} c_start`. The phase is taken on
/// the branch nearest `previous` when given.
pub fn extract_phase(
    c_now: C64,
    c_start: C64,
    gamma0: f64,
    previous: Option<f64>,
) -> Result<ExtractedPhase> {
    if !(c_start.norm() > 0.0) {
        return Err(invalid("c_start", "reference coefficient is zero"));
    }
    let ratio = c_now / c_start;
    let wrapped = ratio.arg();
    let modulus_ratio = ratio.norm();
    Ok(ExtractedPhase {
        phase: previous.map_or(wrapped, |p| unwrap_phase(p, wrapped)),
        modulus_ratio,
        exponent: exponent_of(modulus_ratio, gamma0),
    })
}

fn exponent_of(modulus_ratio: f64, gamma0: f64) -> Option<f64> {
    (gamma0 > 0.0).then(|| -modulus_ratio.ln() / gamma0)
}

/// Accumulated phase and modulus ratio of one dark-state coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTrack {
    pub phase: f64,
    pub modulus_ratio: f64,
}

impl PhaseTrack {
    pub const ZERO: PhaseTrack = PhaseTrack {
        phase: 0.0,
        modulus_ratio: 1.0,
    };

    pub fn exponent(&self, gamma0: f64) -> Option<f64> {
        exponent_of(self.modulus_ratio, gamma0)
    }

    /// `e^{−Γ₀·exponent + i·phase}`.
    pub fn factor(&self) -> C64 {
        cis(self.phase) * self.modulus_ratio
    }
}

/// Geometric, decay and dynamic phases accumulated since `segment_start`.
///
/// Dark-state entries are `None` when that state carried no amplitude at the
/// start of the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLedger {
    pub segment_start: f64,
    pub t: f64,
    pub gamma0: f64,
    pub dark1: Option<PhaseTrack>,
    pub dark2: Option<PhaseTrack>,
    pub gamma_b: f64,
    pub delta: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
}

impl PhaseLedger {
    pub fn gamma1(&self) -> Option<f64> {
        self.dark1.map(|d| d.phase)
    }

    pub fn gamma2(&self) -> Option<f64> {
        self.dark2.map(|d| d.phase)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.dark1.and_then(|d| d.exponent(self.gamma0))
    }

    pub fn beta(&self) -> Option<f64> {
        self.dark2.and_then(|d| d.exponent(self.gamma0))
    }

    /// `e^{iγ_B} = e^{−Γ₀δ} e^{iγ_b}`.
    pub fn bright_factor(&self) -> C64 {
        cis(self.gamma_b) * (-self.gamma0 * self.delta).exp()
    }

    /// True when every accumulated quantity is at its segment-start value.
    pub fn is_reset(&self) -> bool {
        let zero = |d: Option<PhaseTrack>| d.is_none_or(|d| d == PhaseTrack::ZERO);
        zero(self.dark1)
            && zero(self.dark2)
            && self.gamma_b == 0.0
            && self.delta == 0.0
            && self.theta_plus == 0.0
            && self.theta_minus == 0.0
    }
}

/// Running integrals behind the bright-state phases.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct BrightIntegrals {
    sin2: f64,
    phi2_cos2: f64,
    amplitude: f64,
}

impl BrightIntegrals {
    fn over(schedule: &PulseSchedule, a: f64, b: f64) -> Self {
        // ∫ sin²θ_H, ∫ φ̇₂ cos²θ_H and ∫ W share one set of samples.
        let sin2 = drive_integral(schedule, a, b, DEFAULT_DT, |s| s.theta_h.sin().powi(2));
        let phi2_cos2 = drive_integral(schedule, a, b, DEFAULT_DT, |s| {
            s.phi2_rate * s.theta_h.cos().powi(2)
        });
        let amplitude = drive_integral(schedule, a, b, DEFAULT_DT, |s| s.total_amplitude());
        Self {
            sin2,
            phi2_cos2,
            amplitude,
        }
    }

    fn add(&mut self, other: &Self) {
        self.sin2 += other.sin2;
        self.phi2_cos2 += other.phi2_cos2;
        self.amplitude += other.amplitude;
    }
}

/// Follows one segment: dark coefficients by projection, bright phases by
/// quadrature of their adiabatic integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SegmentTracker {
    start: f64,
    t: f64,
    gamma0: f64,
    theta01: f64,
    c1_start: Option<C64>,
    c2_start: Option<C64>,
    dark1: Option<PhaseTrack>,
    dark2: Option<PhaseTrack>,
    bright: BrightIntegrals,
}

impl SegmentTracker {
    fn new(schedule: &PulseSchedule, start: f64, gamma0: f64, coefficients: &[C64; 4]) -> Self {
        let keep = |c: C64| (c.norm() > COEFFICIENT_FLOOR).then_some(c);
        let c1_start = keep(coefficients[2]);
        let c2_start = keep(coefficients[3]);
        Self {
            start,
            t: start,
            gamma0,
            theta01: schedule.theta01(),
            c1_start,
            c2_start,
            dark1: c1_start.map(|_| PhaseTrack::ZERO),
            dark2: c2_start.map(|_| PhaseTrack::ZERO),
            bright: BrightIntegrals::default(),
        }
    }

    fn observe(&mut self, schedule: &PulseSchedule, t: f64, coefficients: &[C64; 4]) {
        let follow = |track: Option<PhaseTrack>, start: Option<C64>, now: C64| {
            track.zip(start).map(|(prev, c0)| {
                let r = now / c0;
                PhaseTrack {
                    phase: unwrap_phase(prev.phase, r.arg()),
                    modulus_ratio: r.norm(),
                }
            })
        };
        self.dark1 = follow(self.dark1, self.c1_start, coefficients[2]);
        self.dark2 = follow(self.dark2, self.c2_start, coefficients[3]);
        if t > self.t {
            self.bright.add(&BrightIntegrals::over(schedule, self.t, t));
            self.t = t;
        }
    }

    fn ledger(&self) -> PhaseLedger {
        let s01 = self.theta01.sin();
        PhaseLedger {
            segment_start: self.start,
            t: self.t,
            gamma0: self.gamma0,
            dark1: self.dark1,
            dark2: self.dark2,
            gamma_b: -0.5 * self.bright.phi2_cos2,
            delta: 0.5 * s01 * s01 * self.bright.sin2,
            theta_plus: -0.5 * self.bright.amplitude,
            theta_minus: 0.5 * self.bright.amplitude,
        }
    }
}

/// Closed-frame coefficients `(+, −, D₁, D₂)` of a Schrödinger-picture state.
/// They coincide with the left projections of the interaction-picture state.
pub fn schrodinger_coefficients(schedule: &PulseSchedule, t: f64, psi: &Vec4) -> [C64; 4] {
    AdiabaticFrame::from_sample(&schedule.sample(t), 1.0).coefficients(psi)
}

fn interaction_frame(schedule: &PulseSchedule, gamma0: f64, t: f64) -> Result<AdiabaticFrame> {
    let growth = growth_factor(gamma0, t, schedule.t_i())?;
    Ok(AdiabaticFrame::from_sample(&schedule.sample(t), growth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoJumpRun {
    /// Schrödinger-picture state at the end, not renormalized.
    pub final_state: StateVector,
    pub ledger: PhaseLedger,
    /// Ledger at every observer sample.
    pub trace: Vec<PhaseLedger>,
    /// `(C_D1, C_D2)` at the start.
    pub initial_dark: [C64; 2],
    /// Largest bright weight relative to the total, over the observer samples.
    pub max_leak: f64,
    /// Worst `‖ψ_I − Σ C_k |k_r⟩‖` over the observer samples.
    pub max_reconstruction_error: f64,
}

impl NoJumpRun {
    pub fn final_norm_sq(&self) -> f64 {
        self.final_state.norm_sq()
    }

    pub fn final_populations(&self) -> [f64; 4] {
        self.final_state.populations()
    }
}

/// Integrates the interaction-picture no-jump equation from a dark-subspace
/// state, projecting on the left eigenvectors at every observer sample.
pub fn nojump_run(
    psi_i: &StateVector,
    schedule: &PulseSchedule,
    gamma0: f64,
    ctl: &StepControl,
    threshold: f64,
) -> Result<NoJumpRun> {
    if !(gamma0 >= 0.0) {
        return Err(invalid("gamma0", format!("must be ≥ 0, got {gamma0}")));
    }
    let t_i = schedule.t_i();
    if ctl.t_start < t_i {
        return Err(invalid("ctl", "integration cannot start before t_i"));
    }
    // Interaction-picture start state.
    let g_start = growth_factor(gamma0, ctl.t_start, t_i)?;
    let mut psi = *psi_i.amplitudes();
    psi[G0] *= g_start;
    let start = StateVector::raw(psi);
    let frame = interaction_frame(schedule, gamma0, ctl.t_start)?;
    let c = frame.coefficients(&psi);
    let total: f64 = c.iter().map(|c| c.norm_sqr()).sum();
    let bright = c[0].norm_sqr() + c[1].norm_sqr();
    if bright > 1e-10 * total {
        return Err(invalid(
            "psi_i",
            format!(
                "not in the dark subspace at t = {} (bright weight {bright:e})",
                ctl.t_start
            ),
        ));
    }
    let mut tracker = SegmentTracker::new(schedule, ctl.t_start, gamma0, &c);
    let mut trace = Vec::new();
    let mut max_leak: f64 = 0.0;
    let mut max_reconstruction_error: f64 = 0.0;
    let mut failure = None;
    let generator = Interaction { schedule, gamma0 };
    let end = evolve_state(&start, &generator, ctl, |t, v| {
        if failure.is_some() {
            return;
        }
        let frame = match interaction_frame(schedule, gamma0, t) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let c = frame.coefficients(v);
        let total: f64 = c.iter().map(|c| c.norm_sqr()).sum();
        let leak = (c[0].norm_sqr() + c[1].norm_sqr()) / total;
        max_leak = max_leak.max(leak);
        max_reconstruction_error = max_reconstruction_error.max((frame.reconstruct(&c) - v).norm());
        if leak > threshold {
            failure = Some(Error::AdiabaticityViolation { t, leak, threshold });
            return;
        }
        tracker.observe(schedule, t, &c);
        trace.push(tracker.ledger());
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut final_state = *end.amplitudes();
    final_state[G0] /= growth_factor(gamma0, ctl.t_end, t_i)?;
    Ok(NoJumpRun {
        final_state: StateVector::raw(final_state),
        ledger: tracker.ledger(),
        trace,
        initial_dark: [c[2], c[3]],
        max_leak,
        max_reconstruction_error,
    })
}

/// `(γ₁, γ₂, α, β)` at one observer time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub t: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

/// Complex geometric phases of the two dark states as functions of time.
///
/// Each dark state is followed from its own eigenstate at `t_i`, so the
/// other one is only populated through the weak Γ₀ coupling. The decay
/// exponent compares the modulus with a Γ₀ = 0 run on the same grid, which
/// removes the Γ₀-independent norm changes from nonadiabatic leakage and
/// truncation error before the division by Γ₀.
pub fn phase_traces(
    schedule: &PulseSchedule,
    gamma0: f64,
    ctl: &StepControl,
    threshold: f64,
) -> Result<Vec<PhaseSample>> {
    let frame = AdiabaticFrame::from_sample(&schedule.sample(ctl.t_start), 1.0);
    let follow = |which: Eigenstate, pick: fn(&PhaseLedger) -> Option<PhaseTrack>| {
        let psi = StateVector::normalized(*frame.right(which))?;
        let open = nojump_run(&psi, schedule, gamma0, ctl, threshold)?;
        let closed = if gamma0 > 0.0 {
            nojump_run(&psi, schedule, 0.0, ctl, threshold)?
        } else {
            open.clone()
        };
        let missing = || invalid("psi_i", "dark state lost its amplitude");
        open.trace
            .iter()
            .zip(&closed.trace)
            .map(|(o, c)| {
                let track = pick(o).ok_or_else(missing)?;
                let reference = pick(c).ok_or_else(missing)?;
                Ok((
                    o.t,
                    track.phase,
                    exponent_of(track.modulus_ratio / reference.modulus_ratio, gamma0),
                ))
            })
            .collect::<Result<Vec<_>>>()
    };
    let d1 = follow(Eigenstate::Dark1, |l| l.dark1)?;
    let d2 = follow(Eigenstate::Dark2, |l| l.dark2)?;
    Ok(d1
        .into_iter()
        .zip(d2)
        .map(|((t, gamma1, alpha), (_, gamma2, beta))| PhaseSample {
            t,
            gamma1,
            gamma2,
            alpha,
            beta,
        })
        .collect())
}

/// The no-jump map on span{|0⟩, |1⟩} for a complete sequence:
/// `L = f₂ c² + f₁ s²` etc. with `f₁ = e^{−Γ₀α+iγ₁}`, `f₂ = e^{−Γ₀β+iγ₂}`.
pub fn l_matrix(ledger: &PhaseLedger, theta01: f64, phi01: f64) -> Result<Mat2> {
    let missing = || invalid("ledger", "both dark-state tracks are needed for L");
    let f1 = ledger.dark1.ok_or_else(missing)?.factor();
    let f2 = ledger.dark2.ok_or_else(missing)?.factor();
    let (s, c) = theta01.sin_cos();
    let off = (f1 - f2) * (c * s);
    Ok(Mat2::new(
        f2 * (c * c) + f1 * (s * s),
        off * cis(-phi01),
        off * cis(phi01),
        f2 * (s * s) + f1 * (c * c),
    ))
}

/// Normalized `[P₀, P₁]` after a no-jump sequence from `psi_i`, using
/// `N = |C_D1(t_i)|²e^{−2Γ₀α} + |C_D2(t_i)|²e^{−2Γ₀β}`.
pub fn l_matrix_populations(
    ledger: &PhaseLedger,
    psi_i: &Vec2,
    theta01: f64,
    phi01: f64,
) -> Result<[f64; 2]> {
    let l = l_matrix(ledger, theta01, phi01)?;
    let out = l * psi_i;
    let (s, c) = theta01.sin_cos();
    let e = cis(-phi01);
    let c1 = -(psi_i[0] * s + psi_i[1] * e * c);
    let c2 = psi_i[0] * c - psi_i[1] * e * s;
    let r1 = ledger.dark1.map_or(0.0, |d| d.modulus_ratio);
    let r2 = ledger.dark2.map_or(0.0, |d| d.modulus_ratio);
    let n = c1.norm_sqr() * r1 * r1 + c2.norm_sqr() * r2 * r2;
    Ok([out[0].norm_sqr() / n, out[1].norm_sqr() / n])
}

/// Expansion of |0⟩ on the frame at a jump time: `(+, −, D₁, D₂)` coefficients
/// `sinθ_H sinθ₀₁/√2` (twice), `−cosθ_H sinθ₀₁`, `cosθ₀₁`.
pub fn post_jump_coefficients(theta01: f64, theta_h: f64) -> [f64; 4] {
    let (s01, c01) = theta01.sin_cos();
    let (sh, ch) = theta_h.sin_cos();
    let b = FRAC_1_SQRT_2 * sh * s01;
    [b, b, -ch * s01, c01]
}

/// Final `[P₀, P₁, P_e, P₂]` after a jump, from the segment ledger and the
/// mixing angle at the jump time.
pub fn post_jump_populations(ledger: &PhaseLedger, theta01: f64, theta_h_jump: f64) -> [f64; 4] {
    let (s01, c01) = theta01.sin_cos();
    let (sh, ch) = theta_h_jump.sin_cos();
    let f1 = ledger.dark1.map_or(C64::new(0.0, 0.0), |d| d.factor());
    let f2 = ledger.dark2.map_or(C64::new(0.0, 0.0), |d| d.factor());
    let bright = s01 * s01 * sh * sh * (-2.0 * ledger.gamma0 * ledger.delta).exp();
    let p0 = (f2 * (c01 * c01) + f1 * (s01 * s01 * ch)).norm_sqr();
    let p1 = s01 * s01 * c01 * c01 * (f1 * ch - f2).norm_sqr();
    let (sin_m, cos_m) = ledger.theta_minus.sin_cos();
    let pe = bright * sin_m * sin_m;
    let p2 = bright * cos_m * cos_m;
    let n = p0 + p1 + pe + p2;
    [p0 / n, p1 / n, pe / n, p2 / n]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostJumpRun {
    pub t_jump: f64,
    pub ledger: PhaseLedger,
    /// Populations from the ledger formulas.
    pub closed_form: [f64; 4],
    /// Populations of the directly integrated state.
    pub direct: [f64; 4],
    /// Schrödinger-picture final state for the normalized post-jump start |0⟩.
    pub final_state: StateVector,
}

impl PostJumpRun {
    pub fn max_deviation(&self) -> f64 {
        self.closed_form
            .iter()
            .zip(&self.direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Restarts from |0⟩ at `t_jump` and follows it to `t_f`, both by direct
/// interaction-picture integration and through the ledger formulas.
pub fn post_jump_run(
    t_jump: f64,
    schedule: &PulseSchedule,
    gamma0: f64,
    dt: f64,
    cadence: usize,
) -> Result<PostJumpRun> {
    let (t_i, t_f) = (schedule.t_i(), schedule.t_f());
    if !(t_jump > t_i && t_jump < t_f) {
        return Err(invalid(
            "t_jump",
            format!("must lie in ({t_i}, {t_f}), got {t_jump}"),
        ));
    }
    if !(gamma0 >= 0.0) {
        return Err(invalid("gamma0", format!("must be ≥ 0, got {gamma0}")));
    }
    let ctl = StepControl::new(dt, t_jump, t_f, cadence)?;
    let mut psi = basis(G0);
    psi[G0] *= growth_factor(gamma0, t_jump, t_i)?;
    let frame = interaction_frame(schedule, gamma0, t_jump)?;
    let mut tracker = SegmentTracker::new(schedule, t_jump, gamma0, &frame.coefficients(&psi));
    let mut failure = None;
    let generator = Interaction { schedule, gamma0 };
    let end = evolve_state(
        &StateVector::raw(psi),
        &generator,
        &ctl,
        |t, v| match interaction_frame(schedule, gamma0, t) {
            Ok(f) => tracker.observe(schedule, t, &f.coefficients(v)),
            Err(e) => failure = Some(e),
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut final_state = *end.amplitudes();
    final_state[G0] /= growth_factor(gamma0, t_f, t_i)?;
    let ledger = tracker.ledger();
    let theta_h = schedule.sample(t_jump).theta_h;
    Ok(PostJumpRun {
        t_jump,
        closed_form: post_jump_populations(&ledger, schedule.theta01(), theta_h),
        direct: populations(&final_state),
        ledger,
        final_state: StateVector::raw(final_state),
    })
}

/// Outcome of one stochastic trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub jump_times: Vec<f64>,
    /// State at `t_f` since the last renormalization (the last jump or `t_i`).
    pub final_state_nonnorm: StateVector,
    pub final_norm_sq: f64,
    /// One ledger per segment, in order.
    pub ledgers: Vec<PhaseLedger>,
    pub final_populations: [f64; 4],
}

impl TrajectoryRecord {
    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// The normalized final state.
    pub fn final_state(&self) -> Vec4 {
        self.final_state_nonnorm.amplitudes() / C64::new(self.final_norm_sq.sqrt(), 0.0)
    }
}

/// Integration grid and observer cadence shared by all trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryGrid {
    pub grid: Grid,
    pub cadence: usize,
}

impl TrajectoryGrid {
    pub fn new(schedule: &PulseSchedule, dt: f64, cadence: usize) -> Result<Self> {
        let ctl = StepControl::over(schedule, dt, cadence)?;
        Ok(Self {
            grid: ctl.grid(),
            cadence,
        })
    }
}

/// Random stream for trajectory `index`: the ChaCha8 key comes from the
/// master seed, the stream number is the trajectory index.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_threshold(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// The no-jump path of one initial state on the trajectory grid, kept so that
/// the first segment of every trajectory is a lookup.
#[derive(Debug, Clone)]
pub struct NoJumpPath {
    states: Vec<Vec4>,
    /// `min_{j ≤ k} ‖ψ_j‖²`, for first-crossing searches.
    running_min: Vec<f64>,
    /// Tracker state at every cadence index.
    snapshots: Vec<SegmentTracker>,
    final_record: TrajectoryRecord,
}

impl NoJumpPath {
    pub fn new(
        psi_i: &StateVector,
        schedule: &PulseSchedule,
        gamma0: f64,
        grid: &TrajectoryGrid,
    ) -> Result<Self> {
        let ctx = Context::new(schedule, gamma0, grid)?;
        let start = *psi_i.into_normalized()?.amplitudes();
        let mut states = Vec::with_capacity(grid.grid.steps + 1);
        let mut snapshots = Vec::with_capacity(grid.grid.steps / grid.cadence + 2);
        let mut tracker = ctx.tracker(0, &start);
        let mut psi = start;
        states.push(psi);
        snapshots.push(tracker);
        for k in 0..grid.grid.steps {
            psi = ctx.step(k, &psi);
            states.push(psi);
            if (k + 1) % grid.cadence == 0 {
                ctx.observe(&mut tracker, k + 1, &psi);
                snapshots.push(tracker);
            }
        }
        let mut running_min = Vec::with_capacity(states.len());
        let mut m = f64::INFINITY;
        for s in &states {
            m = m.min(norm_sq(s));
            running_min.push(m);
        }
        let last = grid.grid.steps;
        let final_record = ctx.finish(Vec::new(), Vec::new(), tracker, last, &psi);
        Ok(Self {
            states,
            running_min,
            snapshots,
            final_record,
        })
    }

    pub fn final_record(&self) -> &TrajectoryRecord {
        &self.final_record
    }

    pub fn state(&self, k: usize) -> &Vec4 {
        &self.states[k]
    }

    fn first_crossing(&self, u: f64) -> Option<usize> {
        let k = self.running_min.partition_point(|&m| m > u);
        (k < self.running_min.len()).then_some(k)
    }
}

/// Immutable per-run context shared by trajectory workers.
struct Context<'a> {
    schedule: &'a PulseSchedule,
    gamma0: f64,
    grid: TrajectoryGrid,
    generator: NoJump<'a>,
}

impl<'a> Context<'a> {
    fn new(schedule: &'a PulseSchedule, gamma0: f64, grid: &TrajectoryGrid) -> Result<Self> {
        if !(gamma0 >= 0.0) {
            return Err(invalid("gamma0", format!("must be ≥ 0, got {gamma0}")));
        }
        jump_probability(&StateVector::raw(basis(G0)), gamma0, grid.grid.h)?;
        Ok(Self {
            schedule,
            gamma0,
            grid: *grid,
            generator: NoJump { schedule, gamma0 },
        })
    }

    #[inline]
    fn step(&self, k: usize, psi: &Vec4) -> Vec4 {
        rk4_step(
            &self.generator,
            self.grid.grid.time(k),
            self.grid.grid.h,
            psi,
        )
    }

    fn tracker(&self, k: usize, psi: &Vec4) -> SegmentTracker {
        let t = self.grid.grid.time(k);
        let c = schrodinger_coefficients(self.schedule, t, psi);
        SegmentTracker::new(self.schedule, t, self.gamma0, &c)
    }

    fn observe(&self, tracker: &mut SegmentTracker, k: usize, psi: &Vec4) {
        let t = self.grid.grid.time(k);
        tracker.observe(
            self.schedule,
            t,
            &schrodinger_coefficients(self.schedule, t, psi),
        );
    }

    fn finish(
        &self,
        jump_times: Vec<f64>,
        mut ledgers: Vec<PhaseLedger>,
        mut tracker: SegmentTracker,
        k: usize,
        psi: &Vec4,
    ) -> TrajectoryRecord {
        self.observe(&mut tracker, k, psi);
        ledgers.push(tracker.ledger());
        let final_norm_sq = norm_sq(psi);
        TrajectoryRecord {
            jump_times,
            final_state_nonnorm: StateVector::raw(*psi),
            final_norm_sq,
            ledgers,
            final_populations: populations(psi),
        }
    }

    /// Steps from grid index `k` until the squared norm drops to `u` or the
    /// grid ends; returns the stop index and state.
    fn run_segment(
        &self,
        mut k: usize,
        mut psi: Vec4,
        u: f64,
        tracker: &mut SegmentTracker,
    ) -> (usize, Vec4) {
        let steps = self.grid.grid.steps;
        while k < steps {
            psi = self.step(k, &psi);
            k += 1;
            if norm_sq(&psi) <= u {
                break;
            }
            if k.is_multiple_of(self.grid.cadence) {
                self.observe(tracker, k, &psi);
            }
        }
        (k, psi)
    }

    /// Continues a trajectory that jumps at grid index `k` with pre-jump state
    /// `psi` and first-segment tracker `tracker`.
    fn continue_after(
        &self,
        mut k: usize,
        mut psi: Vec4,
        mut tracker: SegmentTracker,
        rng: &mut impl Rng,
    ) -> TrajectoryRecord {
        let steps = self.grid.grid.steps;
        let mut jump_times = Vec::new();
        let mut ledgers = Vec::new();
        loop {
            // jump at k
            self.observe(&mut tracker, k, &psi);
            ledgers.push(tracker.ledger());
            jump_times.push(self.grid.grid.time(k));
            psi = jump_target(&psi).expect("a norm drop implies a |0⟩ component");
            tracker = self.tracker(k, &psi);
            if k == steps {
                return self.finish(jump_times, ledgers, tracker, k, &psi);
            }
            let u = draw_threshold(rng);
            let (stop, next) = self.run_segment(k, psi, u, &mut tracker);
            k = stop;
            psi = next;
            if norm_sq(&psi) > u {
                return self.finish(jump_times, ledgers, tracker, k, &psi);
            }
        }
    }

    fn trajectory(&self, start: &Vec4, rng: &mut impl Rng) -> TrajectoryRecord {
        let u = draw_threshold(rng);
        let mut tracker = self.tracker(0, start);
        let (k, psi) = self.run_segment(0, *start, u, &mut tracker);
        if norm_sq(&psi) > u {
            return self.finish(Vec::new(), Vec::new(), tracker, k, &psi);
        }
        self.continue_after(k, psi, tracker, rng)
    }

    fn trajectory_cached(&self, path: &NoJumpPath, rng: &mut impl Rng) -> TrajectoryRecord {
        let u = draw_threshold(rng);
        let Some(k) = path.first_crossing(u) else {
            return path.final_record.clone();
        };
        let tracker = path.snapshots[(k - 1) / self.grid.cadence];
        self.continue_after(k, path.states[k], tracker, rng)
    }
}

/// One norm-threshold trajectory: draw `u`, evolve without renormalizing until
/// `‖ψ‖² ≤ u`, jump to |0⟩, renormalize, redraw, and so on up to `t_f`.
pub fn run_trajectory(
    psi_i: &StateVector,
    schedule: &PulseSchedule,
    gamma0: f64,
    grid: &TrajectoryGrid,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let ctx = Context::new(schedule, gamma0, grid)?;
    let start = *psi_i.into_normalized()?.amplitudes();
    Ok(ctx.trajectory(&start, &mut trajectory_rng(seed, index)))
}

/// Same trajectory as [`run_trajectory`] with the first segment read from a
/// precomputed no-jump path.
pub fn run_trajectory_cached(
    path: &NoJumpPath,
    schedule: &PulseSchedule,
    gamma0: f64,
    grid: &TrajectoryGrid,
    seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let ctx = Context::new(schedule, gamma0, grid)?;
    Ok(ctx.trajectory_cached(path, &mut trajectory_rng(seed, index)))
}

/// Runs trajectories `0..n` in parallel and maps each record; results are
/// returned in index order.
pub fn map_trajectories<T: Send>(
    psi_i: &StateVector,
    schedule: &PulseSchedule,
    gamma0: f64,
    grid: &TrajectoryGrid,
    n: usize,
    seed: u64,
    f: impl Fn(u64, &TrajectoryRecord) -> T + Sync,
) -> Result<Vec<T>> {
    if n == 0 {
        return Err(invalid("n", "at least one trajectory is required"));
    }
    let ctx = Context::new(schedule, gamma0, grid)?;
    let path = NoJumpPath::new(psi_i, schedule, gamma0, grid)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let record = ctx.trajectory_cached(&path, &mut trajectory_rng(seed, i));
            f(i, &record)
        })
        .collect())
}

/// Mean over `n` trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryAverage {
    pub rho: DensityMatrix,
    pub n: usize,
    pub total_jumps: usize,
    /// Standard error of each mean population.
    pub population_std_error: [f64; 4],
}

#[derive(Clone, Copy)]
struct Accumulator {
    rho: Mat4,
    second: [f64; 4],
    jumps: usize,
}

impl Accumulator {
    fn zero() -> Self {
        Self {
            rho: Mat4::zeros(),
            second: [0.0; 4],
            jumps: 0,
        }
    }

    fn add_record(&mut self, r: &TrajectoryRecord) {
        let v = r.final_state();
        self.rho += outer(&v);
        for (s, p) in self.second.iter_mut().zip(r.final_populations) {
            *s += p * p;
        }
        self.jumps += r.jumps();
    }

    fn merge(&mut self, other: &Self) {
        self.rho += other.rho;
        for (s, o) in self.second.iter_mut().zip(other.second) {
            *s += o;
        }
        self.jumps += other.jumps;
    }
}

/// Mean of the normalized final outer products of trajectories `0..n`.
///
/// Trajectory `i` uses stream `i` of the master seed. Sums are formed in
/// fixed chunks of indices and then combined in order, so the result does not
/// depend on the number of worker threads.
pub fn average_trajectories(
    psi_i: &StateVector,
    schedule: &PulseSchedule,
    gamma0: f64,
    grid: &TrajectoryGrid,
    n: usize,
    seed: u64,
) -> Result<TrajectoryAverage> {
    if n == 0 {
        return Err(invalid("n", "at least one trajectory is required"));
    }
    let ctx = Context::new(schedule, gamma0, grid)?;
    let path = NoJumpPath::new(psi_i, schedule, gamma0, grid)?;
    let chunks: Vec<Accumulator> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::zero();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let r = ctx.trajectory_cached(&path, &mut trajectory_rng(seed, i as u64));
                acc.add_record(&r);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::zero();
    for c in &chunks {
        total.merge(c);
    }
    let nf = n as f64;
    let rho = total.rho / C64::new(nf, 0.0);
    let mut population_std_error = [0.0; 4];
    for (k, se) in population_std_error.iter_mut().enumerate() {
        let mean = rho[(k, k)].re;
        let var = (total.second[k] / nf - mean * mean).max(0.0);
        *se = (var / (nf - 1.0).max(1.0)).sqrt();
    }
    Ok(TrajectoryAverage {
        rho: DensityMatrix::unchecked(rho),
        n,
        total_jumps: total.jumps,
        population_std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed::{geometric_phase, schedule_gate};
    use crate::drive::DoubleStirap;
    use crate::linalg::{embed, ONE, ZERO};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_3, PI};
    use std::sync::OnceLock;

    fn paper() -> &'static PulseSchedule {
        static S: OnceLock<PulseSchedule> = OnceLock::new();
        S.get_or_init(|| DoubleStirap::paper().build().unwrap())
    }

    fn ground(index: usize) -> StateVector {
        StateVector::normalized(basis(index)).unwrap()
    }

    fn coarse() -> StepControl {
        StepControl::over(paper(), DEFAULT_DT, 250).unwrap()
    }

    #[test]
    fn jump_probability_examples() {
        let dt = 1e-3;
        let g = 0.2;
        assert_eq!(jump_probability(&ground(1), g, dt).unwrap(), 0.0);
        assert_abs_diff_eq!(
            jump_probability(&ground(0), g, dt).unwrap(),
            2.0 * g * dt,
            epsilon = 1e-18
        );
        let half =
            StateVector::normalized(Vec4::new(ONE, ONE, ZERO, ZERO) * C64::new(FRAC_1_SQRT_2, 0.0))
                .unwrap();
        assert_abs_diff_eq!(
            jump_probability(&half, g, dt).unwrap(),
            g * dt,
            epsilon = 1e-15
        );
        assert!(jump_probability(&half, g, 0.0).is_err());
    }

    #[test]
    fn jump_keeps_weight_and_normalizes_to_ground() {
        let c = C64::new(0.3, 0.4);
        let v = Vec4::new(c, C64::new(0.0, 0.866), ZERO, ZERO);
        let j = apply_jump(&StateVector::raw(v), 0.5).unwrap();
        assert_eq!(j.amplitudes()[0], c);
        assert_eq!(j.amplitudes().rows(1, 3).norm(), 0.0);
        let n = jump_target(&v).unwrap();
        assert_abs_diff_eq!(n[0].norm(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            apply_jump(&ground(3), 0.5),
            Err(Error::ZeroJumpComponent { .. })
        ));
    }

    #[test]
    fn extract_phase_examples() {
        let c = C64::new(0.2, -0.7);
        let same = extract_phase(c, c, 1e-3, None).unwrap();
        assert_eq!((same.phase, same.exponent), (0.0, Some(0.0)));
        let g: f64 = 0.01;
        let now = c * cis(FRAC_PI_3) * (-g * 2.0).exp();
        let e = extract_phase(now, c, g, None).unwrap();
        assert_abs_diff_eq!(e.phase, FRAC_PI_3, epsilon = 1e-14);
        assert_abs_diff_eq!(e.exponent.unwrap(), 2.0, epsilon = 1e-10);
        assert_eq!(extract_phase(now, c, 0.0, None).unwrap().exponent, None);
        assert!(extract_phase(now, ZERO, g, None).is_err());
    }

    #[test]
    fn extract_phase_unwraps_past_minus_pi() {
        let mut previous = None;
        for k in 0..=100 {
            let phase = -0.1 * k as f64;
            let e = extract_phase(cis(phase), ONE, 0.0, previous).unwrap();
            assert_abs_diff_eq!(e.phase, phase, epsilon = 1e-12);
            previous = Some(e.phase);
        }
    }

    #[test]
    fn closed_limit_reproduces_geometric_phase() {
        let r = nojump_run(&ground(0), paper(), 0.0, &coarse(), 1e-3).unwrap();
        assert_eq!(r.ledger.alpha(), None);
        assert_eq!(r.ledger.beta(), None);
        assert_abs_diff_eq!(
            r.ledger.gamma1().unwrap(),
            geometric_phase(paper()),
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(r.ledger.gamma2().unwrap(), 0.0, epsilon = 1e-4);
        assert!(r.trace.first().unwrap().is_reset());
    }

    #[test]
    fn left_projection_reconstructs_state() {
        let r = nojump_run(&ground(0), paper(), 1e-3, &coarse(), 1e-3).unwrap();
        assert!(
            r.max_reconstruction_error < 1e-8,
            "{}",
            r.max_reconstruction_error
        );
        assert!(r.max_leak < 1e-3);
    }

    #[test]
    fn weak_dephasing_leaves_geometric_phase() {
        let r = nojump_run(&ground(0), paper(), 1e-5, &coarse(), 1e-3).unwrap();
        assert_abs_diff_eq!(
            r.ledger.gamma1().unwrap(),
            geometric_phase(paper()),
            epsilon = 1e-4
        );
    }

    #[test]
    fn l_matrix_matches_direct_integration() {
        let r = nojump_run(&ground(0), paper(), 1e-3, &coarse(), 1e-3).unwrap();
        let s = paper();
        let p =
            l_matrix_populations(&r.ledger, &Vec2::new(ONE, ZERO), s.theta01(), s.phi01()).unwrap();
        let direct = r.final_populations();
        assert_abs_diff_eq!(p[0], direct[0], epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], direct[1], epsilon = 1e-6);
        // same vector up to normalization
        let l = l_matrix(&r.ledger, s.theta01(), s.phi01()).unwrap();
        let out = embed(&(l * Vec2::new(ONE, ZERO)));
        assert!(
            crate::linalg::phase_aligned_distance(
                &(out / C64::new(out.norm(), 0.0)),
                &(r.final_state.amplitudes() / C64::new(r.final_state.norm_sq().sqrt(), 0.0))
            ) < 1e-4
        );
    }

    #[test]
    fn l_matrix_limits() {
        let s = paper();
        let track = |phase, modulus_ratio| {
            Some(PhaseTrack {
                phase,
                modulus_ratio,
            })
        };
        let mut ledger = PhaseLedger {
            segment_start: 0.0,
            t: s.t_f(),
            gamma0: 0.0,
            dark1: track(-PI, 1.0),
            dark2: track(0.0, 1.0),
            gamma_b: 0.0,
            delta: 0.0,
            theta_plus: 0.0,
            theta_minus: 0.0,
        };
        let u = schedule_gate(s);
        let l = l_matrix(&ledger, s.theta01(), s.phi01()).unwrap();
        assert!((l - u.matrix()).norm() < 1e-9);
        ledger.gamma0 = 0.01;
        ledger.dark1 = track(-PI, (-0.01f64 * 3.0).exp());
        ledger.dark2 = track(0.0, (-0.01f64 * 3.0).exp());
        let l = l_matrix(&ledger, s.theta01(), s.phi01()).unwrap();
        assert!((l - u.matrix() * C64::new((-0.03f64).exp(), 0.0)).norm() < 1e-9);
        ledger.dark2 = None;
        assert!(l_matrix(&ledger, s.theta01(), s.phi01()).is_err());
    }

    #[test]
    fn post_jump_expansion_in_gap() {
        let c = post_jump_coefficients(PI / 8.0, PI / 2.0);
        let s01 = (PI / 8.0).sin();
        assert_abs_diff_eq!(c[0], s01 * FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], s01 * FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(c[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn post_jump_closed_form_matches_direct() {
        for t_j in [0.7, 1.5, 2.5, 3.5, 4.5, 5.5] {
            let r = post_jump_run(t_j, paper(), 1e-3, DEFAULT_DT, 25).unwrap();
            assert!(
                r.max_deviation() < 1e-3,
                "t_j = {t_j}: {:?} vs {:?}",
                r.closed_form,
                r.direct
            );
            assert_abs_diff_eq!(r.ledger.theta_plus, -r.ledger.theta_minus, epsilon = 1e-15);
        }
    }

    #[test]
    fn post_jump_rejects_endpoints() {
        assert!(post_jump_run(paper().t_i(), paper(), 1e-3, DEFAULT_DT, 25).is_err());
        assert!(post_jump_run(paper().t_f(), paper(), 1e-3, DEFAULT_DT, 25).is_err());
    }

    #[test]
    fn dynamic_phases_stop_after_pulses() {
        let s = DoubleStirap::paper().build().unwrap();
        let tail = PulseSchedule::from_pulses(
            *s.pulses(),
            s.phi01(),
            s.phi2_rate(),
            s.t_i(),
            s.t_f() + 1.0,
        )
        .unwrap();
        let a = post_jump_run(s.t_f() - 0.2, &s, 1e-3, DEFAULT_DT, 25).unwrap();
        let b = post_jump_run(s.t_f() - 0.2, &tail, 1e-3, DEFAULT_DT, 25).unwrap();
        assert_abs_diff_eq!(a.ledger.theta_minus, b.ledger.theta_minus, epsilon = 1e-9);
    }

    fn small_grid() -> TrajectoryGrid {
        TrajectoryGrid::new(paper(), DEFAULT_DT, 25).unwrap()
    }

    #[test]
    fn no_dephasing_means_no_jumps() {
        let r = run_trajectory(&ground(0), paper(), 0.0, &small_grid(), 7, 0).unwrap();
        assert!(r.jump_times.is_empty());
        assert_eq!(r.ledgers.len(), 1);
        assert_abs_diff_eq!(r.final_norm_sq, 1.0, epsilon = 1e-9);
        let n = nojump_run(&ground(0), paper(), 0.0, &coarse(), 1e-3).unwrap();
        assert_abs_diff_eq!(
            r.ledgers[0].gamma1().unwrap(),
            n.ledger.gamma1().unwrap(),
            epsilon = 1e-6
        );
        for (a, b) in r.final_populations.iter().zip(n.final_populations()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    const FAST_DT: f64 = 5e-4;

    /// Weak drive on a coarse grid with strong dephasing, so that most
    /// trajectories jump and each one is cheap.
    fn jumpy() -> (PulseSchedule, f64) {
        let a_max0 = 2.0 * PI * 10.0;
        let drive = DoubleStirap {
            a_max0,
            a_max1: a_max0 / (2f64.sqrt() - 1.0),
            ..DoubleStirap::paper()
        };
        (drive.build().unwrap(), 0.5)
    }

    #[test]
    fn cached_and_direct_trajectories_are_identical() {
        let (s, g) = jumpy();
        let grid = TrajectoryGrid::new(&s, FAST_DT, 25).unwrap();
        let psi = ground(0);
        let path = NoJumpPath::new(&psi, &s, g, &grid).unwrap();
        let mut jumped = 0;
        for i in 0..12 {
            let a = run_trajectory(&psi, &s, g, &grid, 99, i).unwrap();
            let b = run_trajectory_cached(&path, &s, g, &grid, 99, i).unwrap();
            assert_eq!(a, b, "trajectory {i}");
            jumped += usize::from(a.jumps() > 0);
        }
        assert!(jumped > 3);
    }

    #[test]
    fn trajectory_records_are_consistent() {
        let (s, g) = jumpy();
        let grid = TrajectoryGrid::new(&s, FAST_DT, 25).unwrap();
        for i in 0..8 {
            let r = run_trajectory(&ground(0), &s, g, &grid, 5, i).unwrap();
            assert_eq!(r.ledgers.len(), r.jumps() + 1);
            assert!(r.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(r.jump_times.iter().all(|&t| t >= s.t_i() && t <= s.t_f()));
            assert_abs_diff_eq!(r.final_populations.iter().sum::<f64>(), 1.0, epsilon = 1e-8);
            for (l, &t) in r.ledgers.iter().skip(1).zip(&r.jump_times) {
                assert_eq!(l.segment_start, t);
            }
            assert_eq!(r, run_trajectory(&ground(0), &s, g, &grid, 5, i).unwrap());
        }
    }

    #[test]
    fn segment_ledger_starts_at_zero() {
        let s = paper();
        let mut tracker = SegmentTracker::new(s, 2.0, 1e-3, &[ONE, ONE, ONE, ONE]);
        assert!(tracker.ledger().is_reset());
        tracker.observe(s, 2.0, &[ONE, ONE, ONE, ONE]);
        assert!(tracker.ledger().is_reset());
    }

    #[test]
    fn norm_is_monotone_without_jumps() {
        let (s, g) = jumpy();
        let grid = TrajectoryGrid::new(&s, FAST_DT, 25).unwrap();
        let path = NoJumpPath::new(&ground(0), &s, g, &grid).unwrap();
        let mut previous = f64::INFINITY;
        for k in 0..=grid.grid.steps {
            let n = norm_sq(path.state(k));
            assert!(n <= previous * (1.0 + 1e-13));
            previous = n;
        }
    }

    #[test]
    fn average_is_thread_count_independent() {
        let (s, g) = jumpy();
        let grid = TrajectoryGrid::new(&s, FAST_DT, 25).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| average_trajectories(&ground(0), &s, g, &grid, 2100, 3).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert!(a.rho.min_eigenvalue() > -1e-12);
        assert!((a.rho.trace() - 1.0).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn extract_phase_inverts_its_form(phase in -3.0f64..3.0, exponent in 0.0f64..50.0, g in 1e-4f64..1.0) {
            let c = C64::new(0.3, 0.9);
            let e = extract_phase(c * cis(phase) * (-g * exponent).exp(), c, g, Some(0.0)).unwrap();
            prop_assert!((e.phase - phase).abs() < 1e-12);
            prop_assert!((e.exponent.unwrap() - exponent).abs() < 1e-8);
        }

        #[test]
        fn post_jump_populations_are_normalized(t_j in 0.2f64..6.0) {
            let r = post_jump_run(t_j, paper(), 1e-3, DEFAULT_DT, 250);
            let r = r.unwrap();
            prop_assert!((r.closed_form.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(r.closed_form.iter().all(|&p| p >= 0.0));
        }
    }
}
