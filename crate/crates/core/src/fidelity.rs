//! Gate fidelity of the dephased sequence against the ideal rotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::closed::{geometric_phase, schedule_gate, GateMatrix};
use crate::drive::PulseSchedule;
use crate::error::{invalid, Error, Result};
use crate::linalg::{basis, cis, embed, psd_sqrt, Mat4, Vec2, Vec4, C64, G0, ONE, ZERO};
use crate::open::{map_trajectories, nojump_run, PhaseLedger, TrajectoryGrid};
use crate::propagate::{
    evolve_density, evolve_state, rk4_step, DensityMatrix, Generator, NoJump, StateVector,
    StepControl, DEFAULT_DT,
};

/// Default number of midpoint nodes in the one-jump quadrature.
pub const DEFAULT_NODES: usize = 200;

/// Eigenvalue floor for density-matrix inputs.
const POSITIVITY_TOL: f64 = 1e-8;

/// The six axial Bloch states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axial {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl Axial {
    pub const ALL: [Axial; 6] = [
        Axial::Zero,
        Axial::One,
        Axial::Plus,
        Axial::Minus,
        Axial::PlusI,
        Axial::MinusI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Axial::Zero => "0",
            Axial::One => "1",
            Axial::Plus => "+",
            Axial::Minus => "-",
            Axial::PlusI => "+i",
            Axial::MinusI => "-i",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.label() == label)
    }

    pub fn qubit(self) -> Vec2 {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Axial::Zero => Vec2::new(ONE, ZERO),
            Axial::One => Vec2::new(ZERO, ONE),
            Axial::Plus => Vec2::new(h, h),
            Axial::Minus => Vec2::new(h, -h),
            Axial::PlusI => Vec2::new(h, i * h),
            Axial::MinusI => Vec2::new(h, -i * h),
        }
    }
}

fn check_density(rho: &DensityMatrix, name: &str) -> Result<()> {
    let min = rho.min_eigenvalue();
    if min < -POSITIVITY_TOL {
        return Err(Error::InvalidDensityMatrix {
            reason: format!("{name} has eigenvalue {min:e}"),
        });
    }
    Ok(())
}

/// `(Tr√(√ρ₀ ρ √ρ₀))²`, evaluated as the squared trace norm of `√ρ √ρ₀`
/// so no square root of a small eigenvalue of the product is taken.
pub fn uhlmann(target: &DensityMatrix, actual: &DensityMatrix) -> Result<f64> {
    check_density(target, "target")?;
    check_density(actual, "actual")?;
    let product = psd_sqrt(actual.matrix()) * psd_sqrt(target.matrix());
    let root: f64 = product.singular_values().iter().sum();
    Ok((root * root).min(1.0))
}

/// `⟨ψ₀|ρ|ψ₀⟩`, the Uhlmann fidelity for a pure target.
pub fn pure_fidelity(target: &Vec4, actual: &DensityMatrix) -> f64 {
    (target.adjoint() * actual.matrix() * target)[(0, 0)].re
}

/// The ideal final state `U·ψ_i` on the four-level space.
pub fn target_state(gate: &GateMatrix, psi_i: &Vec2) -> Vec4 {
    embed(&gate.apply(psi_i))
}

fn normalized_qubit(psi_i: &Vec2) -> Result<Vec2> {
    let n = psi_i.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid("psi_i", "qubit state must be nonzero and finite"));
    }
    Ok(psi_i / C64::new(n, 0.0))
}

/// No-jump fidelity computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoJumpFidelity {
    /// `|⟨ψ₀|ψ_nj⟩|²` with the non-normalized no-jump state.
    pub direct: f64,
    /// `||C_D1|²e^{−Γ₀α}e^{i(γ₁−γ_D1)} + |C_D2|²e^{−Γ₀β}e^{iγ₂}|²`.
    pub closed_form: f64,
}

/// Closed-form no-jump fidelity from the initial dark weights and the ledger
/// of the complete sequence.
pub fn nojump_closed_form(initial_dark: [C64; 2], ledger: &PhaseLedger, gamma_d1: f64) -> f64 {
    let f1 = ledger.dark1.map_or(ZERO, |d| d.factor() * cis(-gamma_d1));
    let f2 = ledger.dark2.map_or(ZERO, |d| d.factor());
    (f1 * initial_dark[0].norm_sqr() + f2 * initial_dark[1].norm_sqr()).norm_sqr()
}

pub fn fidelity_nojump(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    gamma0: f64,
) -> Result<NoJumpFidelity> {
    let psi_i = normalized_qubit(psi_i)?;
    let target = target_state(&schedule_gate(schedule), &psi_i);
    let ctl = StepControl::over(schedule, DEFAULT_DT, 250)?;
    let run = nojump_run(
        &StateVector::raw(embed(&psi_i)),
        schedule,
        gamma0,
        &ctl,
        crate::closed::ADIABATIC_THRESHOLD,
    )?;
    Ok(NoJumpFidelity {
        direct: target.dotc(run.final_state.amplitudes()).norm_sqr(),
        closed_form: nojump_closed_form(run.initial_dark, &run.ledger, geometric_phase(schedule)),
    })
}

/// `H_eff†`, the generator of the backward adjoint equation.
struct Adjoint<G>(G);

impl<G: Generator> Generator for Adjoint<G> {
    #[inline]
    fn hamiltonian(&self, t: f64) -> Mat4 {
        self.0.hamiltonian(t).adjoint()
    }
}

fn pieces(span: f64, dt: f64) -> usize {
    ((span / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Integrates `i dψ/dt = H ψ` from `a` to `b` (either direction) in equal
/// steps no longer than `dt`.
fn carry(gen: &impl Generator, a: f64, b: f64, dt: f64, psi: &Vec4) -> Vec4 {
    let n = pieces((b - a).abs(), dt);
    let h = (b - a) / n as f64;
    let mut v = *psi;
    for k in 0..n {
        v = rk4_step(gen, a + k as f64 * h, h, &v);
    }
    v
}

/// Jump-time samples shared by every initial state: no-jump |0⟩ amplitudes
/// of the two basis inputs and adjoint overlaps of the two basis targets.
#[derive(Debug, Clone)]
pub struct OneJumpKernel {
    gamma0: f64,
    h: f64,
    nodes: Vec<f64>,
    /// `⟨0|ψ_nj(t_j)⟩` for inputs |0⟩ and |1⟩.
    forward: Vec<[C64; 2]>,
    /// `⟨U k|Φ(t_f, t_j)|0⟩` for targets `U|0⟩` and `U|1⟩`.
    backward: Vec<[C64; 2]>,
    /// `ψ_nj(t_f)` for inputs |0⟩ and |1⟩.
    final_states: [Vec4; 2],
    gate: GateMatrix,
}

impl OneJumpKernel {
    pub fn new(schedule: &PulseSchedule, gamma0: f64, nodes: usize, dt: f64) -> Result<Self> {
        if nodes < 50 {
            return Err(invalid(
                "nodes",
                format!("at least 50 quadrature nodes are needed, got {nodes}"),
            ));
        }
        if !(gamma0 >= 0.0) {
            return Err(invalid("gamma0", format!("must be ≥ 0, got {gamma0}")));
        }
        let (t_i, t_f) = (schedule.t_i(), schedule.t_f());
        // rejects steps that are too coarse before the unchecked sweeps below
        let gen = NoJump { schedule, gamma0 };
        let ctl = StepControl::new(dt, t_i, t_f, usize::MAX)?;
        evolve_state(
            &StateVector::raw(basis(G0)),
            &gen,
            &ctl.with_window(t_i, (t_i + dt).min(t_f))?,
            |_, _| {},
        )?;
        let h = (t_f - t_i) / nodes as f64;
        let times: Vec<f64> = (0..nodes).map(|j| t_i + (j as f64 + 0.5) * h).collect();
        let gate = schedule_gate(schedule);
        let forward_from = |input: Vec4| {
            let mut out = Vec::with_capacity(nodes);
            let mut t = t_i;
            let mut v = input;
            for &tj in &times {
                v = carry(&gen, t, tj, dt, &v);
                t = tj;
                out.push(v);
            }
            (out, carry(&gen, t, t_f, dt, &v))
        };
        let adjoint = Adjoint(gen);
        let backward_from = |target: Vec4| {
            let mut out = vec![ZERO; nodes];
            let mut t = t_f;
            let mut chi = target;
            for (j, &tj) in times.iter().enumerate().rev() {
                chi = carry(&adjoint, t, tj, dt, &chi);
                t = tj;
                out[j] = chi[G0].conj();
            }
            out
        };
        let ((f0, e0), (f1, e1)) =
            rayon::join(|| forward_from(basis(0)), || forward_from(basis(1)));
        let (b0, b1) = rayon::join(
            || backward_from(target_state(&gate, &Vec2::new(ONE, ZERO))),
            || backward_from(target_state(&gate, &Vec2::new(ZERO, ONE))),
        );
        Ok(Self {
            gamma0,
            h,
            nodes: times,
            forward: f0.iter().zip(&f1).map(|(a, b)| [a[G0], b[G0]]).collect(),
            backward: b0.into_iter().zip(b1).map(|(a, b)| [a, b]).collect(),
            final_states: [e0, e1],
            gate,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Non-normalized no-jump state at `t_f` for a qubit input (linearity).
    pub fn nojump_state(&self, psi_i: &Vec2) -> Vec4 {
        self.final_states[0] * psi_i[0] + self.final_states[1] * psi_i[1]
    }

    pub fn nojump(&self, psi_i: &Vec2) -> f64 {
        target_state(&self.gate, psi_i)
            .dotc(&self.nojump_state(psi_i))
            .norm_sqr()
    }

    /// `ξ(t_j) = |⟨ψ₀|Φ(t_f,t_j)|0⟩⟨0|ψ_nj(t_j)⟩|²` at every node.
    pub fn integrand(&self, psi_i: &Vec2) -> Vec<f64> {
        let a = psi_i[0];
        let b = psi_i[1];
        self.forward
            .iter()
            .zip(&self.backward)
            .map(|(f, q)| ((q[0] * a.conj() + q[1] * b.conj()) * (f[0] * a + f[1] * b)).norm_sqr())
            .collect()
    }

    /// `2Γ₀∫ξ dt_j` by the composite midpoint rule.
    pub fn one_jump_term(&self, psi_i: &Vec2) -> f64 {
        2.0 * self.gamma0 * self.h * self.integrand(psi_i).iter().sum::<f64>()
    }

    pub fn one_jump(&self, psi_i: &Vec2) -> f64 {
        self.nojump(psi_i) + self.one_jump_term(psi_i)
    }
}

/// `F_nj + 2Γ₀∫ξ(t_j)dt_j`; events with two or more jumps are left out.
pub fn fidelity_one_jump(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    gamma0: f64,
    nodes: usize,
) -> Result<f64> {
    let psi_i = normalized_qubit(psi_i)?;
    Ok(OneJumpKernel::new(schedule, gamma0, nodes, DEFAULT_DT)?.one_jump(&psi_i))
}

/// One-jump overlap at a single jump time by forward propagation: no-jump
/// evolution to `t_j`, the weighted jump, no-jump evolution to `t_f`.
pub fn one_jump_overlap(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    gamma0: f64,
    t_j: f64,
    dt: f64,
) -> Result<f64> {
    let psi_i = normalized_qubit(psi_i)?;
    let gen = NoJump { schedule, gamma0 };
    let before = carry(&gen, schedule.t_i(), t_j, dt, &embed(&psi_i));
    let jumped = basis(G0) * before[G0];
    let after = carry(&gen, t_j, schedule.t_f(), dt, &jumped);
    Ok(target_state(&schedule_gate(schedule), &psi_i)
        .dotc(&after)
        .norm_sqr())
}

/// Master-equation fidelity against the pure target.
pub fn fidelity_uhlmann(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    gamma0: f64,
    dt: f64,
) -> Result<f64> {
    let psi_i = normalized_qubit(psi_i)?;
    let target = target_state(&schedule_gate(schedule), &psi_i);
    let ctl = StepControl::over(schedule, dt, usize::MAX)?;
    let rho = evolve_density(
        &DensityMatrix::pure(&embed(&psi_i))?,
        gamma0,
        schedule,
        &ctl,
        |_, _| {},
    )?;
    uhlmann(&DensityMatrix::pure(&target)?, &rho)
}

/// Mean and standard error of `|⟨ψ₀|ψ⟩|²` over normalized trajectory end states.
pub fn fidelity_mc(
    psi_i: &Vec2,
    schedule: &PulseSchedule,
    gamma0: f64,
    grid: &TrajectoryGrid,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let psi_i = normalized_qubit(psi_i)?;
    let target = target_state(&schedule_gate(schedule), &psi_i);
    let values = map_trajectories(
        &StateVector::raw(embed(&psi_i)),
        schedule,
        gamma0,
        grid,
        n,
        seed,
        |_, r| target.dotc(&r.final_state()).norm_sqr(),
    )?;
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    Ok((mean, (var / nf).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMode {
    NoJump,
    OneJump,
    Mc,
    Uhlmann,
}

/// What an averaged fidelity evaluation computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityOptions {
    pub nodes: usize,
    pub dt: f64,
    /// Trajectories per initial state; `None` skips the Monte Carlo average.
    pub mc_trajectories: Option<usize>,
    pub cadence: usize,
    pub seed: u64,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            dt: DEFAULT_DT,
            mc_trajectories: None,
            cadence: 25,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFidelity {
    pub state: Axial,
    pub nojump: f64,
    pub one_jump: f64,
    pub mc: Option<(f64, f64)>,
    pub uhlmann: f64,
}

impl StateFidelity {
    pub fn get(&self, mode: FidelityMode) -> Option<f64> {
        match mode {
            FidelityMode::NoJump => Some(self.nojump),
            FidelityMode::OneJump => Some(self.one_jump),
            FidelityMode::Mc => self.mc.map(|m| m.0),
            FidelityMode::Uhlmann => Some(self.uhlmann),
        }
    }
}

/// Six-state averages at one dephasing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub gamma0: f64,
    pub f_nojump: f64,
    pub f_one_jump: f64,
    pub f_total_mc: Option<f64>,
    /// Standard error of `f_total_mc`.
    pub mc_std_error: Option<f64>,
    pub f_uhlmann: f64,
    pub per_state: Vec<StateFidelity>,
}

impl FidelityReport {
    pub fn get(&self, mode: FidelityMode) -> Option<f64> {
        match mode {
            FidelityMode::NoJump => Some(self.f_nojump),
            FidelityMode::OneJump => Some(self.f_one_jump),
            FidelityMode::Mc => self.f_total_mc,
            FidelityMode::Uhlmann => Some(self.f_uhlmann),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    values.sum::<f64>() / 6.0
}

/// Averages over the six axial states, `F = (1/6)Σ F_i`.
pub fn average_fidelity(
    schedule: &PulseSchedule,
    gamma0: f64,
    opts: &FidelityOptions,
) -> Result<FidelityReport> {
    let kernel = OneJumpKernel::new(schedule, gamma0, opts.nodes, opts.dt)?;
    let grid = match opts.mc_trajectories {
        Some(_) => Some(TrajectoryGrid::new(schedule, opts.dt, opts.cadence)?),
        None => None,
    };
    let per_state = Axial::ALL
        .par_iter()
        .map(|&state| {
            let psi = state.qubit();
            let mc = match (opts.mc_trajectories, &grid) {
                (Some(n), Some(grid)) => {
                    Some(fidelity_mc(&psi, schedule, gamma0, grid, n, opts.seed)?)
                }
                _ => None,
            };
            Ok(StateFidelity {
                state,
                nojump: kernel.nojump(&psi),
                one_jump: kernel.one_jump(&psi),
                mc,
                uhlmann: fidelity_uhlmann(&psi, schedule, gamma0, opts.dt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let f_total_mc = opts
        .mc_trajectories
        .map(|_| mean(per_state.iter().map(|s| s.mc.map_or(0.0, |m| m.0))));
    let mc_std_error = opts.mc_trajectories.map(|_| {
        per_state
            .iter()
            .map(|s| s.mc.map_or(0.0, |m| m.1).powi(2))
            .sum::<f64>()
            .sqrt()
            / 6.0
    });
    Ok(FidelityReport {
        gamma0,
        f_nojump: mean(per_state.iter().map(|s| s.nojump)),
        f_one_jump: mean(per_state.iter().map(|s| s.one_jump)),
        f_total_mc,
        mc_std_error,
        f_uhlmann: mean(per_state.iter().map(|s| s.uhlmann)),
        per_state,
    })
}

/// Uniformly distributed qubit state.
pub fn random_qubit(rng: &mut impl Rng) -> Vec2 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let theta = z.acos();
    Vec2::new(
        C64::new((theta / 2.0).cos(), 0.0),
        cis(phi) * (theta / 2.0).sin(),
    )
}

/// Mean no-jump fidelity over `samples` uniformly random initial states.
pub fn sphere_average_nojump(kernel: &OneJumpKernel, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| kernel.nojump(&random_qubit(&mut rng)))
        .sum::<f64>()
        / samples as f64
}

/// Six-state no-jump average from a kernel.
pub fn axial_average_nojump(kernel: &OneJumpKernel) -> f64 {
    mean(Axial::ALL.iter().map(|a| kernel.nojump(&a.qubit())))
}
