//! Simulation and numerics for the structured Kingman coalescent and its
//! coagulation-equation limits.
//!
//! * [`model`]: parameters, scaling quantities, stationary distribution.
//! * [`coalescent`]: exact Gillespie simulation, empirical measures, generators.
//! * [`kingman`]: coupling with Kingman coalescents, moment and emigration bounds.
//! * [`coag`]: RK4 solvers for the limiting coagulation systems.
//! * [`repr`]: branching-process and Feller-diffusion Monte Carlo.
//! * [`harness`]: verification experiments and CSV reports.

pub mod coag;
pub mod coalescent;
pub mod harness;
pub mod kingman;
pub mod model;
pub mod repr;
pub mod rng;
pub mod stats;

pub use model::{validate_params, ModelError, ModelParams, ModelSpec, Regime};
