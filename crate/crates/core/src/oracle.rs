//! Independent verification oracles: closed-form first-passage probabilities
//! for drifted Brownian motion and a direct Monte Carlo simulator of the
//! one-dimensional limit process driven by a prescribed loss path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialDistribution, ModelParams, TimeGrid};
use crate::rng::{self, tag as tags};
use crate::stats::norm_cdf;

/// P(min_{s<=t} (y + alpha*s + sigma*B_s) > 0) by the reflection principle.
pub fn fp_survival(y: f64, t: f64, alpha: f64, sigma: f64) -> f64 {
    debug_assert!(y >= 0.0 && t > 0.0 && sigma > 0.0);
    if y == 0.0 {
        return 0.0;
    }
    let sst = sigma * t.sqrt();
    if alpha == 0.0 {
        // exp term is exactly 1; avoids 0*inf shapes for extreme y
        return 2.0 * norm_cdf(y / sst) - 1.0;
    }
    let a = norm_cdf((y + alpha * t) / sst);
    let b = (-2.0 * alpha * y / (sigma * sigma)).exp() * norm_cdf((-y + alpha * t) / sst);
    (a - b).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// Loss input for the limit-process simulator: either the rate λ or the
/// cumulative Λ, both as node values on the simulation time grid.
#[derive(Clone, Debug)]
pub enum LossInput {
    Rate(Vec<f64>),
    Cumulative(Vec<f64>),
}

impl LossInput {
    /// Cumulative Λ at every grid node.
    fn cumulative(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let values = match self {
            LossInput::Rate(v) => crate::stats::cumtrapz(v, grid.dt),
            LossInput::Cumulative(v) => v.clone(),
        };
        if values.len() != grid.n_nodes() {
            return Err(Error::validation(format!(
                "loss series has {} nodes, grid has {}",
                values.len(),
                grid.n_nodes()
            )));
        }
        if values.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::validation("cumulative loss must be non-increasing"));
        }
        Ok(values)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdeResult {
    pub times: Vec<f64>,
    pub survival: Vec<McEstimate>,
    /// (node index, surviving-path values at that node).
    pub samples: Vec<(usize, Vec<f64>)>,
}

/// Simulates `n_paths` copies of Z_t = Z_0 + alpha*t + Lambda_t + sigma*B_t
/// absorbed at 0, with optional Brownian-bridge crossing correction, and
/// returns the empirical survival curve.
pub fn simulate_limit_sde(
    params: &ModelParams,
    dist: &InitialDistribution,
    loss: &LossInput,
    n_paths: usize,
    grid: &TimeGrid,
    seed: u64,
    bridge_correction: bool,
    snapshot_nodes: &[usize],
) -> Result<SdeResult> {
    params.validate()?;
    dist.validate()?;
    if n_paths < 1 {
        return Err(Error::validation("n_paths must be >= 1"));
    }
    let lambda = loss.cumulative(grid)?;
    let n_nodes = grid.n_nodes();
    if snapshot_nodes.iter().any(|&i| i >= n_nodes) {
        return Err(Error::validation("snapshot node out of range"));
    }

    let init_stream = rng::substream(seed, tags::INIT);
    let sde_stream = rng::substream(seed, tags::SDE);
    let bridge_stream = rng::substream(seed, tags::SDE_BRIDGE);
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let sigma = params.sigma;
    let sigma2_dt = sigma * sigma * dt;

    // per path: node index of default (n_nodes if it survives the horizon)
    // plus values at the requested snapshot nodes (NaN once defaulted)
    let per_path: Vec<(usize, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut y = dist.quantile(rng::uniform(init_stream, p as u64, 0, 0));
            let mut snaps = vec![f64::NAN; snapshot_nodes.len()];
            for (k, &node) in snapshot_nodes.iter().enumerate() {
                if node == 0 {
                    snaps[k] = y;
                }
            }
            if y <= 0.0 {
                return (0, snaps);
            }
            for s in 1..n_nodes {
                let z = rng::standard_normal(sde_stream, p as u64, s as u64, 0);
                let y_new = y + params.alpha * dt + (lambda[s] - lambda[s - 1]) + sigma * sqrt_dt * z;
                if y_new <= 0.0 {
                    return (s, snaps);
                }
                if bridge_correction {
                    let e = 2.0 * y * y_new / sigma2_dt;
                    if e < 37.0 && rng::uniform(bridge_stream, p as u64, s as u64, 0) < (-e).exp() {
                        return (s, snaps);
                    }
                }
                y = y_new;
                for (k, &node) in snapshot_nodes.iter().enumerate() {
                    if node == s {
                        snaps[k] = y;
                    }
                }
            }
            (n_nodes, snaps)
        })
        .collect();

    let n = n_paths as f64;
    let mut alive_counts = vec![0usize; n_nodes];
    for (d, _) in &per_path {
        // path survives strictly past node i iff its default node > i
        for count in alive_counts.iter_mut().take((*d).min(n_nodes)) {
            *count += 1;
        }
    }
    // counting loop above is O(nodes) per path; cheap relative to stepping
    let survival = alive_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            McEstimate { value: p, std_error: (p * (1.0 - p) / n).sqrt(), n_paths }
        })
        .collect();
    let samples = snapshot_nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let vals = per_path
                .iter()
                .filter(|(d, _)| *d > node)
                .map(|(_, s)| s[k])
                .collect();
            (node, vals)
        })
        .collect();
    Ok(SdeResult { times: grid.times(), survival, samples })
}
