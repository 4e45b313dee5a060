//! Closed and open dynamics of a four-level tripod atom driven by two STIRAP
//! processes: adiabatic geometric phases, dephasing master equation, quantum
//! jump trajectories with complex phase tracking, and gate fidelity.
//!
//! Units: ħ = 1, times in units of the pulse width τ, amplitudes in rad/τ.
//! Basis order is `(|0⟩, |1⟩, |e⟩, |2⟩)`.

pub mod closed;
pub mod drive;
pub mod error;
pub mod fidelity;
pub mod linalg;
pub mod model;
pub mod open;
pub mod propagate;

pub use drive::{DoubleStirap, DriveSample, Pulse, PulseSchedule};
pub use error::{Error, Result};
pub use linalg::{Mat2, Mat4, Vec2, Vec4, C64};
pub use propagate::{DensityMatrix, StateVector, StepControl, DEFAULT_DT};
