//! Persistence: numeric CSV (header row, UTF-8, '.' decimal, '\n' endings,
//! shortest round-trip float formatting) and versioned JSON manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::LossRate;
use crate::model::TimeGrid;
use crate::particle::{CascadeEvent, CascadeSnapshot, SimOptions, SimulationResult};
use crate::pde::DensityGrid;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    code_version: String,
    kind: String,
    data: T,
}

/// Writes `data` as a versioned JSON manifest.
pub fn save_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let env = Envelope {
        format_version: FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        data,
    };
    let text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::Format(format!("serialize {kind}: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads a versioned JSON manifest, rejecting missing or mismatched versions
/// and wrong kinds.
pub fn load_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: format version {} unsupported (expected {FORMAT_VERSION})",
            path.display(),
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(Error::Format(format!(
            "{}: manifest kind {:?}, expected {kind:?}",
            path.display(),
            env.kind
        )));
    }
    Ok(env.data)
}

/// Writes equal-length numeric columns as CSV. `{}` formatting is shortest
/// round-trip, so reloading reproduces the values bit-for-bit.
pub fn write_csv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if columns.iter().any(|c| c.len() != columns[0].len()) || headers.len() != columns.len() {
        return Err(Error::validation("CSV columns must match headers and share a length"));
    }
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for i in 0..columns[0].len() {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", col[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a numeric CSV written by `write_csv`.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let headers: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != headers.len() {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row + 2,
                fields.len(),
                headers.len()
            )));
        }
        for (k, f) in fields.iter().enumerate() {
            let v = f
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("{}: bad number {f:?}", path.display())))?;
            columns[k].push(v);
        }
    }
    Ok((headers, columns))
}

#[derive(Serialize, Deserialize)]
struct SimManifest {
    params: crate::model::ModelParams,
    n_banks: usize,
    seed: u64,
    options: SimOptions,
    tau0: Option<f64>,
}

/// Persists a simulation result as a run directory: manifest.json,
/// series.csv, cascade_events.csv and (when present) snapshots.json.
/// Per-bank paths are not persisted.
pub fn save_simulation(dir: &Path, sim: &SimulationResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_json(
        &dir.join("manifest.json"),
        "simulation",
        &SimManifest {
            params: sim.params,
            n_banks: sim.n_banks,
            seed: sim.seed,
            options: sim.options,
            tau0: sim.tau0,
        },
    )?;
    write_csv(
        &dir.join("series.csv"),
        &["time", "survivor_fraction", "cum_log_loss"],
        &[&sim.times, &sim.survivor_fraction, &sim.cum_log_loss],
    )?;
    let (mut t, mut sb, mut nd, mut li) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ev in &sim.cascade_events {
        t.push(ev.time);
        sb.push(ev.survivors_before as f64);
        nd.push(ev.n_defaults as f64);
        li.push(ev.loss_increment);
    }
    write_csv(
        &dir.join("cascade_events.csv"),
        &["time", "survivors_before", "n_defaults", "loss_increment"],
        &[&t, &sb, &nd, &li],
    )?;
    if !sim.snapshots.is_empty() {
        save_json(&dir.join("snapshots.json"), "snapshots", &sim.snapshots)?;
    }
    Ok(())
}

pub fn load_simulation(dir: &Path) -> Result<SimulationResult> {
    let m: SimManifest = load_json(&dir.join("manifest.json"), "simulation")?;
    let (_, series) = read_csv(&dir.join("series.csv"))?;
    let (_, ev_cols) = read_csv(&dir.join("cascade_events.csv"))?;
    let cascade_events = (0..ev_cols[0].len())
        .map(|i| CascadeEvent {
            time: ev_cols[0][i],
            survivors_before: ev_cols[1][i] as usize,
            n_defaults: ev_cols[2][i] as usize,
            loss_increment: ev_cols[3][i],
        })
        .collect();
    let snap_path = dir.join("snapshots.json");
    let snapshots: Vec<CascadeSnapshot> =
        if snap_path.exists() { load_json(&snap_path, "snapshots")? } else { Vec::new() };
    let mut cols = series.into_iter();
    Ok(SimulationResult {
        params: m.params,
        n_banks: m.n_banks,
        seed: m.seed,
        options: m.options,
        times: cols.next().unwrap(),
        survivor_fraction: cols.next().unwrap(),
        cum_log_loss: cols.next().unwrap(),
        cascade_events,
        snapshots,
        tau0: m.tau0,
        paths: None,
    })
}

#[derive(Serialize, Deserialize)]
struct GridManifest {
    space: crate::model::SpaceGrid,
    time: TimeGrid,
    warnings: Vec<String>,
}

/// Persists a density grid: manifest.json, series.csv (mass/boundary slope)
/// and values.csv in long format (time node, space node, value) for the
/// retained rows.
pub fn save_density_grid(dir: &Path, grid: &DensityGrid) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_json(
        &dir.join("manifest.json"),
        "density_grid",
        &GridManifest { space: grid.space, time: grid.time, warnings: grid.warnings.clone() },
    )?;
    let times = grid.time.times();
    write_csv(
        &dir.join("series.csv"),
        &["time", "mass", "boundary_slope"],
        &[&times, &grid.mass, &grid.boundary_slope],
    )?;
    let (mut ti, mut yj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in &grid.rows {
        for (j, v) in row.iter().enumerate() {
            ti.push(*i as f64);
            yj.push(j as f64);
            pv.push(*v);
        }
    }
    write_csv(&dir.join("values.csv"), &["time_node", "space_node", "p"], &[&ti, &yj, &pv])?;
    Ok(())
}

pub fn load_density_grid(dir: &Path) -> Result<DensityGrid> {
    let m: GridManifest = load_json(&dir.join("manifest.json"), "density_grid")?;
    let (_, series) = read_csv(&dir.join("series.csv"))?;
    let (_, vals) = read_csv(&dir.join("values.csv"))?;
    let n_nodes = m.space.n_nodes();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in 0..vals[0].len() {
        let i = vals[0][k] as usize;
        let j = vals[1][k] as usize;
        if rows.last().map(|(ri, _)| *ri) != Some(i) {
            rows.push((i, vec![0.0; n_nodes]));
        }
        rows.last_mut().unwrap().1[j] = vals[2][k];
    }
    Ok(DensityGrid {
        space: m.space,
        time: m.time,
        mass: series[1].clone(),
        boundary_slope: series[2].clone(),
        rows,
        warnings: m.warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct RateManifest {
    time: TimeGrid,
    exploded: bool,
    t_reg_estimate: Option<f64>,
}

pub fn save_loss_rate(dir: &Path, rate: &LossRate) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_json(
        &dir.join("manifest.json"),
        "loss_rate",
        &RateManifest {
            time: rate.time,
            exploded: rate.exploded,
            t_reg_estimate: rate.t_reg_estimate,
        },
    )?;
    let times = rate.time.times();
    let cumulative = rate.cumulative();
    write_csv(
        &dir.join("lambda.csv"),
        &["time", "lambda", "l2_running", "cumulative"],
        &[&times, &rate.values, &rate.l2_running, &cumulative],
    )?;
    Ok(())
}

pub fn load_loss_rate(dir: &Path) -> Result<LossRate> {
    let m: RateManifest = load_json(&dir.join("manifest.json"), "loss_rate")?;
    let (_, cols) = read_csv(&dir.join("lambda.csv"))?;
    let mut rate = LossRate::from_values(&m.time, cols[1].clone());
    rate.exploded = m.exploded;
    rate.t_reg_estimate = m.t_reg_estimate;
    Ok(rate)
}
