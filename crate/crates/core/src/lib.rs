//! Cascading-failure dynamic simulation of power grids.
//!
//! The crate integrates the differential-algebraic model of a grid with
//! protection relays through a cascade of topology changes. Three runners
//! share one event engine: a variable-step trapezoidal reference, plain
//! backward Euler with large steps, and backward Euler with a
//! predictor-corrector that linearizes every post-event equilibrium to catch
//! oscillatory instabilities that backward Euler's hyperstability would
//! otherwise hide.

pub mod case_io;
pub mod coi;
pub mod dae;
pub mod engine;
pub mod error;
pub mod integrators;
pub mod metrics;
pub mod modal;
pub mod network;
pub mod protection;
pub mod runfile;
pub mod sparse;

pub use error::{Error, Result};
