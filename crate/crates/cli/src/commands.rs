//! One function per experiment; each returns the files it wants written.

use anyhow::{Context, Result};
use tripod::closed::run_closed;
use tripod::fidelity::{average_fidelity, FidelityOptions};
use tripod::linalg::{embed, outer, populations};
use tripod::open::{map_trajectories, nojump_run, phase_traces, TrajectoryGrid};
use tripod::propagate::{evolve_density, evolve_state, NoJump};
use tripod::{DensityMatrix, Mat4, PulseSchedule, StateVector, StepControl, C64};

use crate::config::{GapSpec, RunConfig};
use crate::output::{number, optional, Csv, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Closed,
    Lindblad,
    Mcwf,
    Phases,
    Fidelity,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Closed => "closed",
            Command::Lindblad => "lindblad",
            Command::Mcwf => "mcwf",
            Command::Phases => "phases",
            Command::Fidelity => "fidelity",
        }
    }
}

/// The schedule with its gap resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub gap: f64,
    pub schedule: PulseSchedule,
}

pub fn resolve(config: &RunConfig) -> Result<Resolved> {
    let gap = match config.gap {
        GapSpec::Fixed(g) => g,
        GapSpec::Target(target) => {
            let drive = config.drive(0.0);
            let gap = drive
                .calibrate_gap(target, config.dt)
                .context("calibrating the gap")?;
            log::info!("calibrated gap {gap:?} for phase {target}");
            gap
        }
    };
    let schedule = config.drive(gap).build().context("building the schedule")?;
    Ok(Resolved { gap, schedule })
}

fn control(config: &RunConfig, schedule: &PulseSchedule) -> Result<StepControl> {
    Ok(StepControl::over(
        schedule,
        config.dt,
        config.observer_cadence,
    )?)
}

fn population_cells(p: [f64; 4]) -> impl Iterator<Item = String> {
    p.into_iter().map(number)
}

pub fn closed(config: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<()> {
    let ctl = control(config, &r.schedule)?;
    let run = run_closed(
        &config.initial_state.qubit(),
        &r.schedule,
        &ctl,
        config.adiabatic_threshold,
    )?;
    let mut csv = Csv::new(&["t_over_tau", "p0", "p1", "pe", "p2"]);
    for s in &run.samples {
        csv.push(
            std::iter::once(number(s.t))
                .chain(population_cells(s.populations))
                .collect(),
        );
    }
    log::info!(
        "closed: final populations {:?}, max P_e {:e}, gate error {:e}",
        run.final_populations(),
        run.max_excited,
        run.gate_error
    );
    out.add("populations.csv", csv.render());
    Ok(())
}

pub fn lindblad(config: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<()> {
    let ctl = control(config, &r.schedule)?;
    let psi = embed(&config.initial_state.qubit());
    let header = ["gamma0_tau", "t_over_tau", "p0", "p1", "pe", "p2"];
    let mut master = Csv::new(&header);
    let mut nojump = Csv::new(&header);
    for &g in &config.gamma0_tau {
        evolve_density(
            &DensityMatrix::pure(&psi)?,
            g,
            &r.schedule,
            &ctl,
            |t, rho| {
                master.push(
                    [number(g), number(t)]
                        .into_iter()
                        .chain(population_cells(rho.populations()))
                        .collect(),
                );
            },
        )?;
        let generator = NoJump {
            schedule: &r.schedule,
            gamma0: g,
        };
        evolve_state(&StateVector::raw(psi), &generator, &ctl, |t, v| {
            nojump.push(
                [number(g), number(t)]
                    .into_iter()
                    .chain(population_cells(populations(v)))
                    .collect(),
            );
        })?;
    }
    out.add("lindblad_populations.csv", master.render());
    out.add("nojump_populations.csv", nojump.render());
    Ok(())
}

pub fn mcwf(config: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<()> {
    let ctl = StepControl::over(&r.schedule, config.dt, usize::MAX)?;
    let grid = TrajectoryGrid::new(&r.schedule, config.dt, config.observer_cadence)?;
    let qubit = config.initial_state.qubit();
    let psi = embed(&qubit);
    let n = config.n_trajectories;
    let mut deviation = Csv::new(&[
        "gamma0_tau",
        "label",
        "n_trajectories",
        "p0",
        "p1",
        "pe",
        "p2",
        "dev_p0",
        "dev_p1",
        "dev_pe",
        "dev_p2",
    ]);
    let mut jumps = Csv::new(&[
        "gamma0_tau",
        "trajectory",
        "n_jumps",
        "first_jump_t_over_tau",
        "p0",
        "p1",
        "pe",
        "p2",
    ]);
    for &g in &config.gamma0_tau {
        let reference =
            evolve_density(&DensityMatrix::pure(&psi)?, g, &r.schedule, &ctl, |_, _| {})?
                .populations();
        let nj = nojump_run(
            &StateVector::raw(psi),
            &r.schedule,
            g,
            &ctl,
            config.adiabatic_threshold,
        )?;
        let records = map_trajectories(
            &StateVector::raw(psi),
            &r.schedule,
            g,
            &grid,
            n,
            config.seed,
            |_, rec| {
                (
                    rec.jumps(),
                    rec.jump_times.first().copied(),
                    rec.final_populations,
                    rec.final_state(),
                )
            },
        )?;
        // index order keeps the sum independent of the thread count
        let mut rho = Mat4::zeros();
        for (i, (count, first, pops, state)) in records.iter().enumerate() {
            rho += outer(state);
            jumps.push(
                [
                    number(g),
                    i.to_string(),
                    count.to_string(),
                    optional(*first),
                ]
                .into_iter()
                .chain(population_cells(*pops))
                .collect(),
            );
        }
        let averaged = DensityMatrix::unchecked(rho / C64::new(n as f64, 0.0)).populations();
        let mut row = |label: &str, count: usize, p: [f64; 4]| {
            let dev: Vec<String> = p
                .iter()
                .zip(reference)
                .map(|(a, b)| number(a - b))
                .collect();
            deviation.push(
                [number(g), label.to_string(), count.to_string()]
                    .into_iter()
                    .chain(population_cells(p))
                    .chain(dev)
                    .collect(),
            );
        };
        row("master", 0, reference);
        row("nojump", 1, nj.final_populations());
        row("mcwf", n, averaged);
    }
    out.add("mcwf_deviation.csv", deviation.render());
    out.add("mcwf_jumps.csv", jumps.render());
    Ok(())
}

pub fn phases(config: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<()> {
    let ctl = control(config, &r.schedule)?;
    for (k, &g) in config.gamma0_tau.iter().enumerate() {
        let trace = phase_traces(&r.schedule, g, &ctl, config.adiabatic_threshold)?;
        let mut csv = Csv::new(&["t_over_tau", "gamma1", "gamma2", "alpha", "beta"]);
        for s in &trace {
            csv.push(vec![
                number(s.t),
                number(s.gamma1),
                number(s.gamma2),
                optional(s.alpha),
                optional(s.beta),
            ]);
        }
        if let Some(last) = trace.last() {
            log::info!(
                "Γ₀τ = {g}: γ₁(t_f) = {}, γ₂(t_f) = {}",
                last.gamma1,
                last.gamma2
            );
        }
        out.add(format!("phases_{k}.csv"), csv.render());
    }
    Ok(())
}

pub fn fidelity(config: &RunConfig, r: &Resolved, out: &mut Outputs) -> Result<()> {
    let opts = FidelityOptions {
        nodes: config.one_jump_nodes,
        dt: config.dt,
        mc_trajectories: Some(config.n_trajectories),
        cadence: config.observer_cadence,
        seed: config.seed,
    };
    let mut csv = Csv::new(&["gamma0_tau", "f_nojump", "f_one_jump", "f_mc", "f_uhlmann"]);
    for &g in &config.gamma0_tau {
        let rep = average_fidelity(&r.schedule, g, &opts)?;
        csv.push(vec![
            number(g),
            number(rep.f_nojump),
            number(rep.f_one_jump),
            optional(rep.f_total_mc),
            number(rep.f_uhlmann),
        ]);
    }
    out.add("fidelity.csv", csv.render());
    Ok(())
}

/// Manifest: a configuration that reproduces the run, with comments.
pub fn manifest(command: Command, config: &RunConfig, r: &Resolved) -> String {
    let grid = StepControl::over(&r.schedule, config.dt, 1).map(|c| c.grid());
    let mut text = format!(
        "# tripod {} {}\n# gap {:?} (resolved)\n# theta01 {:?}\n# t_f {:?}\n",
        command.name(),
        env!("CARGO_PKG_VERSION"),
        r.gap,
        r.schedule.theta01(),
        r.schedule.t_f(),
    );
    if let Ok(grid) = grid {
        text.push_str(&format!("# steps {} of {:?}\n", grid.steps, grid.h));
    }
    text.push_str(&config.to_toml(r.gap));
    text
}

pub fn run(command: Command, config: &RunConfig) -> Result<Outputs> {
    let resolved = resolve(config)?;
    let mut out = Outputs::default();
    match command {
        Command::Closed => closed(config, &resolved, &mut out)?,
        Command::Lindblad => lindblad(config, &resolved, &mut out)?,
        Command::Mcwf => mcwf(config, &resolved, &mut out)?,
        Command::Phases => phases(config, &resolved, &mut out)?,
        Command::Fidelity => fidelity(config, &resolved, &mut out)?,
    }
    out.add("manifest.toml", manifest(command, config, &resolved));
    Ok(out)
}
