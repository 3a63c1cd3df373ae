//! Run configuration: one JSON file drives every subcommand.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixed_point::{FixedPointOptions, InitialGuess};
use crate::model::{InitialDistribution, ModelParams, SpaceGrid, TimeGrid};
use crate::particle::SimOptions;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV_VAR: &str = "CASCADE_SEED";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub initial: InitialDistribution,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub fixedpoint: FixedPointConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_banks: usize,
    pub dt: f64,
    pub seed: u64,
    pub bridge_correction: bool,
    /// Keep pre-cascade snapshots for events defaulting >= 1% of live banks.
    pub snapshot_cascades: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_banks: 10_000, dt: 1e-3, seed: 1, bridge_correction: true, snapshot_cascades: false }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    pub h: f64,
    pub y_max: f64,
    pub dt: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self { h: 5e-3, y_max: 5.0, dt: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub window_length: f64,
    pub m0: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub explosion_threshold: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        let d = FixedPointOptions::default();
        Self {
            window_length: d.window_length,
            m0: d.m0,
            tol: d.tol,
            max_iter: d.max_iter,
            explosion_threshold: d.explosion_threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Largest bandwidth of the (eta, eta/2, eta/4) ladder.
    pub eta: f64,
    pub epsilon: f64,
    /// Jump-condition slack.
    pub slack: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { eta: 0.1, epsilon: 1e-4, slack: 0.05 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.initial.validate()?;
        TimeGrid::for_horizon(self.model.horizon, self.simulation.dt)?;
        SpaceGrid::new(self.pde.h, self.pde.y_max)?;
        TimeGrid::for_horizon(self.model.horizon, self.pde.dt)?;
        Ok(())
    }

    /// Configured seed, unless the override variable is set.
    pub fn effective_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV_VAR) {
            Ok(v) => v.parse::<u64>().map_err(|_| {
                crate::error::Error::validation(format!("{SEED_ENV_VAR} must be a u64, got {v:?}"))
            }),
            Err(_) => Ok(self.simulation.seed),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            bridge_correction: self.simulation.bridge_correction,
            record_paths: false,
            snapshot_min_fraction: if self.simulation.snapshot_cascades { Some(0.01) } else { None },
        }
    }

    pub fn sim_grid(&self) -> Result<TimeGrid> {
        TimeGrid::for_horizon(self.model.horizon, self.simulation.dt)
    }

    pub fn pde_space(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.pde.h, self.pde.y_max)
    }

    pub fn pde_grid(&self) -> Result<TimeGrid> {
        TimeGrid::for_horizon(self.model.horizon, self.pde.dt)
    }

    pub fn fixed_point_options(&self) -> FixedPointOptions {
        FixedPointOptions {
            window_length: self.fixedpoint.window_length,
            m0: self.fixedpoint.m0,
            tol: self.fixedpoint.tol,
            max_iter: self.fixedpoint.max_iter,
            explosion_threshold: self.fixedpoint.explosion_threshold,
            initial_guess: InitialGuess::PreviousTail,
        }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| crate::error::Error::Format(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
