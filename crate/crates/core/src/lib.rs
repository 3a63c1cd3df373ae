//! Default-contagion banking system: finite particle simulator, mean-field
//! Cauchy-Dirichlet PDE with its loss-rate fixed point, and systemic-event
//! analysis tools.
//!
//! Modules:
//! - `model`: shared parameters, initial distributions, grids
//! - `particle`: the N-bank system with exact cascade resolution
//! - `pde`: Crank-Nicolson solver for the absorbed density
//! - `fixed_point`: windowed Picard iteration for the loss rate
//! - `analysis`: boundary-density estimators, jump sizing and certification
//! - `oracle`: closed-form first-passage formulas and a limit-SDE Monte Carlo
//! - `config`/`io`: run configuration and persistence

pub mod analysis;
pub mod config;
pub mod error;
pub mod fixed_point;
pub mod io;
pub mod model;
pub mod oracle;
pub mod particle;
pub mod pde;
pub mod rng;
pub mod stats;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{InitialDistribution, ModelParams, SpaceGrid, TimeGrid};
