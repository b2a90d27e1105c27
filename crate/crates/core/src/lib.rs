//! Upscaled phase-field and sharp-interface models for two-phase flow with
//! precipitation and dissolution in a thin strip.

pub mod cell_flow;
pub mod ch_cell;
pub mod compare;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod macro_solver;
pub mod model;
pub mod output;
pub mod scenario;
pub mod sharp;
pub mod simulation;

pub use error::{Error, Result};
pub use grid::{XGrid, YGrid, YMode};
pub use model::{ModelParams, PhasePoint};
pub use scenario::{ModelChoice, ModelKind, ScenarioConfig};
pub use simulation::{Checkpoint, RunOutput, Simulation, Snapshot, StepDiagnostics};
