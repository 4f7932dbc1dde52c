//! Link-level traffic state estimation from moving-camera space-time diagrams.
//!
//! A camera driving along a link records partial trajectories of vehicles in
//! the opposite lane. Those trajectories are aggregated into a sparse
//! space-time density matrix ([`discretize`]), a triangular fundamental
//! diagram is calibrated on density quartets ([`calibrate`]), and for each
//! run a genetic algorithm searches the CTM boundary conditions that best
//! reproduce the observed cells ([`estimate`]). The CTM rollout of the best
//! boundary vector is the reconstructed density field.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod ctm;
pub mod diagram;
pub mod discretize;
pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod fd;
pub mod ga;
pub mod grid;
pub mod gridsearch;
pub mod ingest;
pub mod matrix;
pub mod scenario;
pub mod seed;
pub mod svg;

pub use crate::ctm::{ctm_run, ctm_step};
pub use crate::diagram::{Fov, Sample, SpaceTimeDiagram, Trajectory};
pub use crate::error::{Error, Result};
pub use crate::fd::{flow, FdParams};
pub use crate::grid::GridSpec;
pub use crate::matrix::{BoundaryVector, DensityMatrix, Quartet};
