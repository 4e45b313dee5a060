//! Flat key/value run configuration.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use toml::{Table, Value};
use tripod::fidelity::Axial;
use tripod::{DoubleStirap, Vec2, C64};

/// Every accepted key, in manifest order.
pub const KEYS: [&str; 16] = [
    "a_max0_over_2pi",
    "a_max1_over_a_max0",
    "intra_delay",
    "gap",
    "gamma_target",
    "phi01",
    "phi2_rate",
    "gamma0_tau",
    "initial_state",
    "n_trajectories",
    "seed",
    "dt",
    "observer_cadence",
    "output_path",
    "one_jump_nodes",
    "adiabatic_threshold",
];

/// Keys that may be left out.
const OPTIONAL: [&str; 2] = ["one_jump_nodes", "adiabatic_threshold"];

/// How the gap between the two processes is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapSpec {
    Fixed(f64),
    /// Calibrated so that the dark-state phase equals this value.
    Target(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Axial(Axial),
    Amplitudes([f64; 4]),
}

impl InitialState {
    pub fn qubit(&self) -> Vec2 {
        match self {
            InitialState::Axial(a) => a.qubit(),
            InitialState::Amplitudes([r0, i0, r1, i1]) => {
                let v = Vec2::new(C64::new(*r0, *i0), C64::new(*r1, *i1));
                v / C64::new(v.norm(), 0.0)
            }
        }
    }

    fn to_toml(&self) -> String {
        match self {
            InitialState::Axial(a) => format!("\"{}\"", a.label()),
            InitialState::Amplitudes(v) => {
                format!("[{:?}, {:?}, {:?}, {:?}]", v[0], v[1], v[2], v[3])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub a_max0_over_2pi: f64,
    pub a_max1_over_a_max0: f64,
    pub intra_delay: f64,
    pub gap: GapSpec,
    pub phi01: f64,
    pub phi2_rate: f64,
    pub gamma0_tau: Vec<f64>,
    pub initial_state: InitialState,
    pub n_trajectories: usize,
    pub seed: u64,
    pub dt: f64,
    pub observer_cadence: usize,
    pub output_path: PathBuf,
    pub one_jump_nodes: usize,
    pub adiabatic_threshold: f64,
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for m in &self.0 {
            write!(f, "\n  {m}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// The Hadamard parameter set as configuration text.
pub fn paper_defaults() -> String {
    format!(
        "a_max0_over_2pi = 300.0\n\
         a_max1_over_a_max0 = {:?}\n\
         intra_delay = 1.0\n\
         gap = {:?}\n\
         phi01 = {:?}\n\
         phi2_rate = 1.0\n\
         gamma0_tau = [0.0, 1e-5, 1e-4, 1e-3, 1e-2]\n\
         initial_state = \"0\"\n\
         n_trajectories = 10000\n\
         seed = 1\n\
         dt = 4e-5\n\
         observer_cadence = 25\n\
         output_path = \".\"\n",
        1.0 / (2f64.sqrt() - 1.0),
        PI,
        PI
    )
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>()
        .map_err(|e| ConfigError(vec![format!("parse error: {e}")]))
}

/// Parses configuration text, optionally layered over the Hadamard defaults.
/// A key set in `text` replaces the default; setting either `gap` or
/// `gamma_target` drops the other one from the defaults.
pub fn parse_config(text: &str, paper: bool) -> Result<RunConfig, ConfigError> {
    let overlay = parse_table(text)?;
    let mut table = if paper {
        parse_table(&paper_defaults())?
    } else {
        Table::new()
    };
    if overlay.contains_key("gap") || overlay.contains_key("gamma_target") {
        table.remove("gap");
        table.remove("gamma_target");
    }
    table.extend(overlay);
    from_table(&table)
}

struct Reader<'a> {
    table: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn present(&mut self, key: &str) -> Option<&'a Value> {
        let v = self.table.get(key);
        if v.is_none() && !OPTIONAL.contains(&key) {
            self.errors.push(format!("{key}: missing"));
        }
        v
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        match self.present(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.errors.push(format!(
                    "{key}: expected a number, got {}",
                    other.type_str()
                ));
                None
            }
        }
    }

    fn count(&mut self, key: &str) -> Option<i64> {
        match self.present(key)? {
            Value::Integer(i) => Some(*i),
            other => {
                self.errors.push(format!(
                    "{key}: expected an integer, got {}",
                    other.type_str()
                ));
                None
            }
        }
    }

    fn check(
        &mut self,
        key: &str,
        value: Option<f64>,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Option<f64> {
        let v = value?;
        if ok(v) {
            Some(v)
        } else {
            self.errors.push(format!("{key}: {rule}, got {v}"));
            None
        }
    }

    fn positive(&mut self, key: &str) -> Option<f64> {
        let v = self.number(key);
        self.check(key, v, |x| x > 0.0 && x.is_finite(), "must be > 0")
    }

    fn finite(&mut self, key: &str) -> Option<f64> {
        let v = self.number(key);
        self.check(key, v, f64::is_finite, "must be finite")
    }

    fn positive_count(&mut self, key: &str) -> Option<usize> {
        let v = self.count(key)?;
        if v >= 1 {
            Some(v as usize)
        } else {
            self.errors.push(format!("{key}: must be ≥ 1, got {v}"));
            None
        }
    }

    fn gammas(&mut self) -> Option<Vec<f64>> {
        let key = "gamma0_tau";
        let raw: Vec<Value> = match self.present(key)? {
            Value::Array(a) => a.clone(),
            v => vec![v.clone()],
        };
        if raw.is_empty() {
            self.errors.push(format!("{key}: list is empty"));
            return None;
        }
        let mut out = Vec::with_capacity(raw.len());
        for v in raw {
            let x = match v {
                Value::Float(x) => x,
                Value::Integer(i) => i as f64,
                other => {
                    self.errors
                        .push(format!("{key}: expected numbers, got {}", other.type_str()));
                    return None;
                }
            };
            if !(x >= 0.0 && x.is_finite()) {
                self.errors.push(format!("{key}: must be ≥ 0, got {x}"));
                return None;
            }
            out.push(x);
        }
        Some(out)
    }

    fn initial_state(&mut self) -> Option<InitialState> {
        let key = "initial_state";
        match self.present(key)? {
            Value::String(s) => match Axial::from_label(s) {
                Some(a) => Some(InitialState::Axial(a)),
                None => {
                    self.errors.push(format!(
                        "{key}: unknown label {s:?}, expected one of 0, 1, +, -, +i, -i"
                    ));
                    None
                }
            },
            Value::Array(a) => {
                let nums: Option<Vec<f64>> = a
                    .iter()
                    .map(|v| match v {
                        Value::Float(x) => Some(*x),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                match nums {
                    Some(n)
                        if n.len() == 4
                            && n.iter().all(|x| x.is_finite())
                            && n.iter().any(|x| *x != 0.0) =>
                    {
                        Some(InitialState::Amplitudes([n[0], n[1], n[2], n[3]]))
                    }
                    _ => {
                        self.errors.push(format!(
                            "{key}: expected [re0, im0, re1, im1] with a nonzero entry"
                        ));
                        None
                    }
                }
            }
            other => {
                self.errors.push(format!(
                    "{key}: expected a label or four numbers, got {}",
                    other.type_str()
                ));
                None
            }
        }
    }
}

fn from_table(table: &Table) -> Result<RunConfig, ConfigError> {
    let mut r = Reader {
        table,
        errors: Vec::new(),
    };
    for key in table.keys() {
        if !KEYS.contains(&key.as_str()) {
            r.errors.push(format!("{key}: unknown key"));
        }
    }
    let a_max0_over_2pi = r.positive("a_max0_over_2pi");
    let ratio = r.number("a_max1_over_a_max0");
    let a_max1_over_a_max0 = r.check(
        "a_max1_over_a_max0",
        ratio,
        |x| x >= 0.0 && x.is_finite(),
        "must be ≥ 0",
    );
    let intra_delay = r.positive("intra_delay");
    let gap = match (
        table.contains_key("gap"),
        table.contains_key("gamma_target"),
    ) {
        (true, true) => {
            r.errors.push("gap, gamma_target: give exactly one".into());
            None
        }
        (false, false) => {
            r.errors.push("gap: missing (or set gamma_target)".into());
            None
        }
        (true, false) => r.positive("gap").map(GapSpec::Fixed),
        (false, true) => {
            let v = r.number("gamma_target");
            r.check(
                "gamma_target",
                v,
                |x| x < 0.0 && x.is_finite(),
                "must be < 0",
            )
            .map(GapSpec::Target)
        }
    };
    let phi01 = r.finite("phi01");
    let phi2_rate = r.finite("phi2_rate");
    let gamma0_tau = r.gammas();
    let initial_state = r.initial_state();
    let n_trajectories = r.positive_count("n_trajectories");
    let seed = r.count("seed").and_then(|s| {
        if s >= 0 {
            Some(s as u64)
        } else {
            r.errors.push(format!("seed: must be ≥ 0, got {s}"));
            None
        }
    });
    let dt = r.positive("dt");
    let observer_cadence = r.positive_count("observer_cadence");
    let output_path = match r.present("output_path") {
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => {
            let msg = format!("output_path: expected a string, got {}", other.type_str());
            r.errors.push(msg);
            None
        }
        None => None,
    };
    let one_jump_nodes = if table.contains_key("one_jump_nodes") {
        r.count("one_jump_nodes").and_then(|n| {
            if n >= 50 {
                Some(n as usize)
            } else {
                r.errors
                    .push(format!("one_jump_nodes: must be ≥ 50, got {n}"));
                None
            }
        })
    } else {
        Some(tripod::fidelity::DEFAULT_NODES)
    };
    let adiabatic_threshold = if table.contains_key("adiabatic_threshold") {
        let v = r.number("adiabatic_threshold");
        r.check(
            "adiabatic_threshold",
            v,
            |x| x > 0.0 && x <= 1.0,
            "must lie in (0, 1]",
        )
    } else {
        Some(tripod::closed::ADIABATIC_THRESHOLD)
    };
    if !r.errors.is_empty() {
        return Err(ConfigError(r.errors));
    }
    Ok(RunConfig {
        a_max0_over_2pi: a_max0_over_2pi.unwrap(),
        a_max1_over_a_max0: a_max1_over_a_max0.unwrap(),
        intra_delay: intra_delay.unwrap(),
        gap: gap.unwrap(),
        phi01: phi01.unwrap(),
        phi2_rate: phi2_rate.unwrap(),
        gamma0_tau: gamma0_tau.unwrap(),
        initial_state: initial_state.unwrap(),
        n_trajectories: n_trajectories.unwrap(),
        seed: seed.unwrap(),
        dt: dt.unwrap(),
        observer_cadence: observer_cadence.unwrap(),
        output_path: output_path.unwrap(),
        one_jump_nodes: one_jump_nodes.unwrap(),
        adiabatic_threshold: adiabatic_threshold.unwrap(),
    })
}

impl RunConfig {
    /// The drive with the gap left as configured (a target is not resolved).
    pub fn drive(&self, gap: f64) -> DoubleStirap {
        let a_max0 = 2.0 * PI * self.a_max0_over_2pi;
        DoubleStirap {
            a_max0,
            a_max1: a_max0 * self.a_max1_over_a_max0,
            width: 1.0,
            intra_delay: self.intra_delay,
            gap,
            phi01: self.phi01,
            phi2_rate: self.phi2_rate,
        }
    }

    /// Configuration text that reproduces this run with the gap fixed.
    pub fn to_toml(&self, gap: f64) -> String {
        let gammas: Vec<String> = self.gamma0_tau.iter().map(|g| format!("{g:?}")).collect();
        format!(
            "a_max0_over_2pi = {:?}\n\
             a_max1_over_a_max0 = {:?}\n\
             intra_delay = {:?}\n\
             gap = {:?}\n\
             phi01 = {:?}\n\
             phi2_rate = {:?}\n\
             gamma0_tau = [{}]\n\
             initial_state = {}\n\
             n_trajectories = {}\n\
             seed = {}\n\
             dt = {:?}\n\
             observer_cadence = {}\n\
             output_path = {:?}\n\
             one_jump_nodes = {}\n\
             adiabatic_threshold = {:?}\n",
            self.a_max0_over_2pi,
            self.a_max1_over_a_max0,
            self.intra_delay,
            gap,
            self.phi01,
            self.phi2_rate,
            gammas.join(", "),
            self.initial_state.to_toml(),
            self.n_trajectories,
            self.seed,
            self.dt,
            self.observer_cadence,
            self.output_path.display().to_string(),
            self.one_jump_nodes,
            self.adiabatic_threshold,
        )
    }
}
