//! Laser drive of the tripod: sin² pulse envelopes, the double-STIRAP
//! schedule, mixing angles and laser phases.
//!
//! Units: ħ = 1, times in units of the pulse width τ, amplitudes in rad/τ.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// One sin² pulse. Its support is `[t_start, t_start + 2·width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    a_max: f64,
    t_start: f64,
    width: f64,
}

impl Pulse {
    pub fn new(a_max: f64, t_start: f64, width: f64) -> Result<Self> {
        if !(a_max.is_finite() && a_max >= 0.0) {
            return Err(invalid(
                "a_max",
                format!("must be finite and ≥ 0, got {a_max}"),
            ));
        }
        if !t_start.is_finite() {
            return Err(invalid("t_start", "must be finite"));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid("width", format!("must be > 0, got {width}")));
        }
        Ok(Self {
            a_max,
            t_start,
            width,
        })
    }

    /// A pulse that is identically zero.
    pub fn off() -> Self {
        Self {
            a_max: 0.0,
            t_start: 0.0,
            width: 1.0,
        }
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + 2.0 * self.width
    }

    pub fn is_on(&self) -> bool {
        self.a_max > 0.0
    }

    /// `a_max·sin²(π(t − t_start)/(2·width))` inside the support, 0 outside.
    pub fn envelope(&self, t: f64) -> f64 {
        if t <= self.t_start || t >= self.t_end() {
            return 0.0;
        }
        let s = (PI * (t - self.t_start) / (2.0 * self.width)).sin();
        self.a_max * s * s
    }

    /// Time derivative of [`Pulse::envelope`].
    pub fn rate(&self, t: f64) -> f64 {
        if t <= self.t_start || t >= self.t_end() {
            return 0.0;
        }
        let k = PI / (2.0 * self.width);
        self.a_max * k * (2.0 * k * (t - self.t_start)).sin()
    }

    // Both ends of a sin² pulse vanish quadratically with this coefficient.
    fn edge_weight(&self) -> f64 {
        self.a_max / (self.width * self.width)
    }
}

/// Which laser a pulse belongs to: the |0⟩–|e⟩, |1⟩–|e⟩ or |2⟩–|e⟩ coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Zero = 0,
    One = 1,
    Two = 2,
}

/// Instantaneous drive at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub t: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub theta01: f64,
    pub theta_h: f64,
    pub phi01: f64,
    pub phi2: f64,
    /// dθ_H/dt; zero while the angle is held.
    pub theta_h_rate: f64,
    /// dφ₂/dt.
    pub phi2_rate: f64,
}

impl DriveSample {
    /// `√(A₀² + A₁² + A₂²)`, twice the bright-state energy.
    pub fn total_amplitude(&self) -> f64 {
        (self.a0 * self.a0 + self.a1 * self.a1 + self.a2 * self.a2).sqrt()
    }

    pub fn is_dark(&self) -> bool {
        self.a0 == 0.0 && self.a1 == 0.0 && self.a2 == 0.0
    }
}

/// Angle limit recorded at the end of a group of pulses, used while all
/// relevant amplitudes vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Hold {
    at: f64,
    value: f64,
}

/// Six pulses (three channels in each of two processes) plus the laser phases.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pulses: [Pulse; 6],
    phi01: f64,
    phi2_rate: f64,
    theta01: f64,
    t_i: f64,
    t_f: f64,
    layout: Option<DoubleStirap>,
    theta_h_holds: Vec<Hold>,
    theta01_holds: Vec<Hold>,
}

const EDGE_TOL: f64 = 1e-12;

impl PulseSchedule {
    /// Builds a schedule from explicit pulses. `pulses[3·p + c]` is channel `c`
    /// of process `p`. The configured θ₀₁ is taken from the first process's
    /// channel-0/1 peak amplitudes.
    pub fn from_pulses(
        pulses: [Pulse; 6],
        phi01: f64,
        phi2_rate: f64,
        t_i: f64,
        t_f: f64,
    ) -> Result<Self> {
        Self::assemble(pulses, phi01, phi2_rate, t_i, t_f, None)
    }

    fn assemble(
        pulses: [Pulse; 6],
        phi01: f64,
        phi2_rate: f64,
        t_i: f64,
        t_f: f64,
        layout: Option<DoubleStirap>,
    ) -> Result<Self> {
        if !phi01.is_finite() {
            return Err(invalid("phi01", "must be finite"));
        }
        if !phi2_rate.is_finite() {
            return Err(invalid("phi2_rate", "must be finite"));
        }
        if !(t_i.is_finite() && t_f.is_finite() && t_f > t_i) {
            return Err(invalid(
                "t_f",
                format!("need t_f > t_i, got [{t_i}, {t_f}]"),
            ));
        }
        for p in pulses.iter().filter(|p| p.is_on()) {
            if p.t_start() < t_i - EDGE_TOL || p.t_end() > t_f + EDGE_TOL {
                return Err(invalid(
                    "pulses",
                    format!(
                        "pulse support [{}, {}] lies outside [t_i, t_f] = [{t_i}, {t_f}]",
                        p.t_start(),
                        p.t_end()
                    ),
                ));
            }
        }
        let theta01 = {
            let (a0, a1) = (pulses[0].a_max(), pulses[1].a_max());
            if a0 == 0.0 && a1 == 0.0 {
                0.0
            } else {
                a0.atan2(a1)
            }
        };
        let theta_h_holds = hold_table(&pulses, &[0, 1, 2, 3, 4, 5], |w| {
            (w[0].hypot(w[1])).atan2(w[2])
        });
        let theta01_holds = hold_table(&pulses, &[0, 1, 3, 4], |w| w[0].atan2(w[1]));
        Ok(Self {
            pulses,
            phi01,
            phi2_rate,
            theta01,
            t_i,
            t_f,
            layout,
            theta_h_holds,
            theta01_holds,
        })
    }

    pub fn pulses(&self) -> &[Pulse; 6] {
        &self.pulses
    }

    pub fn pulse(&self, process: usize, channel: Channel) -> &Pulse {
        &self.pulses[3 * process + channel as usize]
    }

    pub fn phi01(&self) -> f64 {
        self.phi01
    }

    pub fn phi2_rate(&self) -> f64 {
        self.phi2_rate
    }

    /// The configured (constant) θ₀₁.
    pub fn theta01(&self) -> f64 {
        self.theta01
    }

    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn duration(&self) -> f64 {
        self.t_f - self.t_i
    }

    /// Parameters this schedule was built from, if it is a double-STIRAP layout.
    pub fn layout(&self) -> Option<&DoubleStirap> {
        self.layout.as_ref()
    }

    /// All pulse starts and ends of pulses that are switched on, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .pulses
            .iter()
            .filter(|p| p.is_on())
            .flat_map(|p| [p.t_start(), p.t_end()])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < EDGE_TOL);
        pts
    }

    /// Channel amplitudes `[A₀, A₁, A₂]` summed over both processes.
    #[inline]
    pub fn amplitudes(&self, t: f64) -> [f64; 3] {
        let p = &self.pulses;
        [
            p[0].envelope(t) + p[3].envelope(t),
            p[1].envelope(t) + p[4].envelope(t),
            p[2].envelope(t) + p[5].envelope(t),
        ]
    }

    fn amplitude_rates(&self, t: f64) -> [f64; 3] {
        let p = &self.pulses;
        [
            p[0].rate(t) + p[3].rate(t),
            p[1].rate(t) + p[4].rate(t),
            p[2].rate(t) + p[5].rate(t),
        ]
    }

    /// Laser phase φ₂(t) = φ̇₂·(t − t_i).
    #[inline]
    pub fn phi2(&self, t: f64) -> f64 {
        self.phi2_rate * (t - self.t_i)
    }

    /// Full drive sample, applying the hold-last-value rule to θ_H and θ₀₁
    /// wherever their defining ratios are 0/0.
    pub fn sample(&self, t: f64) -> DriveSample {
        let [a0, a1, a2] = self.amplitudes(t);
        let r = a0.hypot(a1);
        let theta01 = if r > 0.0 {
            a0.atan2(a1)
        } else {
            held(&self.theta01_holds, t).unwrap_or(self.theta01)
        };
        let (theta_h, theta_h_rate) = if r > 0.0 || a2 > 0.0 {
            let [d0, d1, d2] = self.amplitude_rates(t);
            let r_rate = if r > 0.0 {
                (a0 * d0 + a1 * d1) / r
            } else {
                0.0
            };
            let rate = (r_rate * a2 - r * d2) / (r * r + a2 * a2);
            (r.atan2(a2), rate)
        } else {
            (held(&self.theta_h_holds, t).unwrap_or(0.0), 0.0)
        };
        DriveSample {
            t,
            a0,
            a1,
            a2,
            theta01,
            theta_h,
            phi01: self.phi01,
            phi2: self.phi2(t),
            theta_h_rate,
            phi2_rate: self.phi2_rate,
        }
    }
}

// For every distinct end time of the listed pulses, the limit of the angle as
// t approaches that end from the left (where only pulses ending there remain).
fn hold_table(
    pulses: &[Pulse; 6],
    members: &[usize],
    angle: impl Fn([f64; 3]) -> f64,
) -> Vec<Hold> {
    let mut ends: Vec<f64> = members
        .iter()
        .map(|&i| pulses[i])
        .filter(|p| p.is_on())
        .map(|p| p.t_end())
        .collect();
    ends.sort_by(f64::total_cmp);
    ends.dedup_by(|a, b| (*a - *b).abs() < EDGE_TOL);
    ends.into_iter()
        .map(|at| {
            let mut w = [0.0; 3];
            for &i in members {
                let p = pulses[i];
                if p.is_on() && (p.t_end() - at).abs() < EDGE_TOL {
                    w[i % 3] += p.edge_weight();
                }
            }
            Hold {
                at,
                value: angle(w),
            }
        })
        .collect()
}

fn held(table: &[Hold], t: f64) -> Option<f64> {
    let idx = table.partition_point(|h| h.at <= t + EDGE_TOL);
    idx.checked_sub(1).map(|i| table[i].value)
}

/// Parameters of the double-STIRAP sequence.
///
/// Timing: in process 1 the channel-2 pulse starts at t = 0 and the channel-0/1
/// pulses follow after `intra_delay`. Process 2 mirrors this: its channel-0/1
/// pulses start at `gap` and channel 2 follows after `intra_delay`. `gap` is
/// therefore the separation between the starts of the two processes, which
/// for symmetric ramps equals the time sin²θ_H spends (effectively) at one.
/// The channel-2 peak amplitude is `√(A_max,0² + A_max,1²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleStirap {
    pub a_max0: f64,
    pub a_max1: f64,
    pub width: f64,
    pub intra_delay: f64,
    pub gap: f64,
    pub phi01: f64,
    pub phi2_rate: f64,
}

impl DoubleStirap {
    /// Hadamard parameter set: `A_max,0·τ/2π = 300`, `A_max,1 = A_max,0/(√2 − 1)`,
    /// `Δt = τ`, `ΔT = πτ`, `φ₂ = t/τ`, `φ₀₁ = π`.
    pub fn paper() -> Self {
        let a_max0 = 2.0 * PI * 300.0;
        Self {
            a_max0,
            a_max1: a_max0 / (2f64.sqrt() - 1.0),
            width: 1.0,
            intra_delay: 1.0,
            gap: PI,
            phi01: PI,
            phi2_rate: 1.0,
        }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn a_max2(&self) -> f64 {
        self.a_max0.hypot(self.a_max1)
    }

    /// Length of one STIRAP process.
    pub fn process_length(&self) -> f64 {
        self.intra_delay + 2.0 * self.width
    }

    /// Smallest gap for which the two processes do not overlap.
    pub fn min_gap(&self) -> f64 {
        self.process_length()
    }

    pub fn build(&self) -> Result<PulseSchedule> {
        if !(self.a_max0.is_finite() && self.a_max1.is_finite())
            || self.a_max0 < 0.0
            || self.a_max1 < 0.0
            || self.a_max0 + self.a_max1 == 0.0
        {
            return Err(invalid(
                "a_max",
                "channel 0/1 amplitudes must be ≥ 0, finite and not both zero",
            ));
        }
        if !(self.intra_delay > 0.0 && self.intra_delay <= 2.0 * self.width) {
            return Err(invalid(
                "intra_delay",
                format!(
                    "must lie in (0, 2·width] = (0, {}], got {}",
                    2.0 * self.width,
                    self.intra_delay
                ),
            ));
        }
        if !(self.gap.is_finite() && self.gap >= self.min_gap() - EDGE_TOL) {
            return Err(invalid(
                "gap",
                format!(
                    "processes overlap: gap {} < intra_delay + 2·width = {}",
                    self.gap,
                    self.min_gap()
                ),
            ));
        }
        let w = self.width;
        let d = self.intra_delay;
        let g = self.gap;
        let a2 = self.a_max2();
        let pulses = [
            Pulse::new(self.a_max0, d, w)?,
            Pulse::new(self.a_max1, d, w)?,
            Pulse::new(a2, 0.0, w)?,
            Pulse::new(self.a_max0, g, w)?,
            Pulse::new(self.a_max1, g, w)?,
            Pulse::new(a2, g + d, w)?,
        ];
        PulseSchedule::assemble(
            pulses,
            self.phi01,
            self.phi2_rate,
            0.0,
            g + self.process_length(),
            Some(*self),
        )
    }

    /// Finds the gap for which the accumulated dark-state geometric phase
    /// `−∫ φ̇₂ sin²θ_H dt` equals `target_gamma`.
    ///
    /// The phase is strictly decreasing in the gap (sin²θ_H = 1 between the
    /// processes), so a bracketing secant search converges in a few steps.
    pub fn calibrate_gap(&self, target_gamma: f64, max_step: f64) -> Result<f64> {
        if !(target_gamma < 0.0) {
            return Err(invalid(
                "target_gamma",
                format!("must be < 0, got {target_gamma}"),
            ));
        }
        if !(self.phi2_rate > 0.0) {
            return Err(invalid("phi2_rate", "calibration needs φ̇₂ > 0"));
        }
        let phase_at = |gap: f64| -> Result<f64> {
            let schedule = self.with_gap(gap).build()?;
            Ok(crate::closed::geometric_phase_with_step(
                &schedule, max_step,
            ))
        };
        let residual = |gap: f64| -> Result<f64> { Ok(phase_at(gap)? - target_gamma) };

        let mut lo = self.min_gap();
        let mut f_lo = residual(lo)?;
        if f_lo < 0.0 {
            return Err(Error::UnreachablePhase {
                target: target_gamma,
                reachable: f_lo + target_gamma,
            });
        }
        if f_lo == 0.0 {
            return Ok(lo);
        }
        let mut hi = lo + (-target_gamma / self.phi2_rate).max(self.width);
        let mut f_hi = residual(hi)?;
        while f_hi > 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi = lo + 2.0 * (hi - self.min_gap()).max(self.width);
            f_hi = residual(hi)?;
        }
        // Illinois variant of regula falsi.
        let mut side = 0i8;
        for _ in 0..100 {
            let mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            let f_mid = residual(mid)?;
            if f_mid.abs() < 1e-13 || (hi - lo).abs() < 1e-13 {
                return Ok(mid);
            }
            if f_mid > 0.0 {
                lo = mid;
                f_lo = f_mid;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = mid;
                f_hi = f_mid;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
