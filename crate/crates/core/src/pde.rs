//! Crank–Nicolson solver for the absorbed-density equation
//! dp/dt = -(alpha + lambda_t) dp/dy + (sigma^2/2) d2p/dy2 on (0, y_max)
//! with homogeneous Dirichlet walls, plus the mass-conservation and
//! survival-bound diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::LossRate;
use crate::model::{InitialDistribution, ModelParams, SpaceGrid, TimeGrid};
use crate::stats::{cumtrapz, norm_cdf, trapz};

/// How much of the space-time solution to keep. Mass and boundary-slope
/// series are always stored; full storage at fine resolutions is hundreds of
/// megabytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    Full,
    /// Keep every k-th row (first and last always).
    Strided(usize),
    MassOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityGrid {
    pub space: SpaceGrid,
    pub time: TimeGrid,
    /// total mass per time node, trapezoidal
    pub mass: Vec<f64>,
    /// one-sided second-order (d_y p)(t, 0) per time node
    pub boundary_slope: Vec<f64>,
    /// retained rows as (time node, values); always contains first and last
    pub rows: Vec<(usize, Vec<f64>)>,
    pub warnings: Vec<String>,
}

impl DensityGrid {
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows
            .binary_search_by_key(&i, |(k, _)| *k)
            .ok()
            .map(|idx| self.rows[idx].1.as_slice())
    }

    pub fn final_values(&self) -> &[f64] {
        &self.rows.last().unwrap().1
    }
}

/// Solves the Cauchy–Dirichlet problem from the initial density `f_nu`.
pub fn solve_cdp(
    params: &ModelParams,
    f_nu: &InitialDistribution,
    lam: &LossRate,
    space: &SpaceGrid,
    time: &TimeGrid,
) -> Result<DensityGrid> {
    let stride = (time.n_steps / 200).max(1);
    solve_cdp_store(params, f_nu, lam, space, time, StoreMode::Strided(stride))
}

pub fn solve_cdp_store(
    params: &ModelParams,
    f_nu: &InitialDistribution,
    lam: &LossRate,
    space: &SpaceGrid,
    time: &TimeGrid,
    store: StoreMode,
) -> Result<DensityGrid> {
    f_nu.validate()?;
    f_nu.require_pde()?;
    space.check_covers(f_nu, params.sigma, time.time(time.n_steps))?;
    let p0: Vec<f64> = (0..space.n_nodes()).map(|j| f_nu.density_at(space.node(j))).collect();
    solve_cdp_from_values(params, &p0, lam, space, time, store)
}

/// Same solve starting from raw node values (used for window continuation,
/// where the entry state is a previously computed row, not a distribution).
pub fn solve_cdp_from_values(
    params: &ModelParams,
    p0: &[f64],
    lam: &LossRate,
    space: &SpaceGrid,
    time: &TimeGrid,
    store: StoreMode,
) -> Result<DensityGrid> {
    params.validate()?;
    let n = space.n_cells();
    if p0.len() != n + 1 {
        return Err(Error::validation(format!(
            "initial row has {} nodes, grid needs {}",
            p0.len(),
            n + 1
        )));
    }
    if lam.values.len() != time.n_nodes() {
        return Err(Error::validation(format!(
            "loss rate has {} nodes, time grid has {}",
            lam.values.len(),
            time.n_nodes()
        )));
    }
    let h = space.h;
    let dt = time.dt;
    let sigma2 = params.sigma * params.sigma;
    let diff = 0.5 * sigma2;

    let mut p = p0.to_vec();
    p[0] = 0.0;
    p[n] = 0.0;
    let initial_mass = trapz(&p, h);

    let keep = |i: usize| match store {
        StoreMode::Full => true,
        StoreMode::Strided(k) => i % k == 0 || i == time.n_steps,
        StoreMode::MassOnly => i == 0 || i == time.n_steps,
    };

    let mut grid = DensityGrid {
        space: *space,
        time: *time,
        mass: Vec::with_capacity(time.n_nodes()),
        boundary_slope: Vec::with_capacity(time.n_nodes()),
        rows: Vec::new(),
        warnings: Vec::new(),
    };
    let slope_at_zero = |p: &[f64]| (4.0 * p[1] - p[2]) / (2.0 * h);
    grid.mass.push(initial_mass);
    grid.boundary_slope.push(slope_at_zero(&p));
    if keep(0) {
        grid.rows.push((0, p.clone()));
    }

    let mut rhs = vec![0.0; n + 1];
    let mut scratch = vec![0.0; n + 1];
    let mut max_courant: f64 = 0.0;
    let mut upwinded = false;

    for i in 0..time.n_steps {
        // lambda is an L2 object; use the midpoint value on each step
        let c = params.alpha + 0.5 * (lam.values[i] + lam.values[i + 1]);
        max_courant = max_courant.max(c.abs() * dt / h);
        // interior operator coefficients: L p_j = lo*p_{j-1} + di*p_j + up*p_{j+1}
        let (lo, di, up) = if c.abs() * h / sigma2 <= 2.0 {
            (diff / (h * h) + c / (2.0 * h), -2.0 * diff / (h * h), diff / (h * h) - c / (2.0 * h))
        } else {
            upwinded = true;
            if c > 0.0 {
                (diff / (h * h) + c / h, -2.0 * diff / (h * h) - c / h, diff / (h * h))
            } else {
                (diff / (h * h), -2.0 * diff / (h * h) + c / h, diff / (h * h) - c / h)
            }
        };
        let half = 0.5 * dt;
        for j in 1..n {
            rhs[j] = p[j] + half * (lo * p[j - 1] + di * p[j] + up * p[j + 1]);
        }
        // Thomas solve of (I - half*L) p_new = rhs with constant coefficients
        let (a, b, cc) = (-half * lo, 1.0 - half * di, -half * up);
        scratch[1] = cc / b;
        rhs[1] /= b;
        for j in 2..n {
            let m = b - a * scratch[j - 1];
            scratch[j] = cc / m;
            rhs[j] = (rhs[j] - a * rhs[j - 1]) / m;
        }
        p[n - 1] = rhs[n - 1];
        for j in (1..n - 1).rev() {
            p[j] = rhs[j] - scratch[j] * p[j + 1];
        }
        p[0] = 0.0;
        p[n] = 0.0;

        let mass = trapz(&p, h);
        if mass < 1e-12 {
            return Err(Error::numerics(format!(
                "density mass {mass:.3e} below 1e-12 at t={}: total absorption",
                time.time(i + 1)
            )));
        }
        grid.mass.push(mass);
        grid.boundary_slope.push(slope_at_zero(&p));
        if keep(i + 1) {
            grid.rows.push((i + 1, p.clone()));
        }
    }
    if max_courant > 1.0 {
        grid.warnings.push(format!(
            "convection Courant number reached {max_courant:.3}; time accuracy degraded"
        ));
    }
    if upwinded {
        grid.warnings
            .push("convection was upwinded on some steps (first-order accuracy there)".into());
    }
    Ok(grid)
}

/// r(t) = mass(t) - mass(0) + (sigma^2/2) * int_0^t slope(s, 0) ds; zero for
/// the exact absorbed density.
pub fn conservation_residual(grid: &DensityGrid, sigma: f64) -> Vec<f64> {
    let flux = cumtrapz(&grid.boundary_slope, grid.time.dt);
    grid.mass
        .iter()
        .zip(&flux)
        .map(|(m, f)| m - grid.mass[0] + 0.5 * sigma * sigma * f)
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalBoundsReport {
    pub slack: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mass: Vec<f64>,
    /// time-node indices where a bound fails beyond the slack
    pub violations: Vec<usize>,
    pub max_violation: f64,
}

impl SurvivalBoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks, at every grid time,
///   exp(-I(t)) * ∫ (2Φ(y/(σ√t))-1)^2 f dy  <=  mass(t)
///   mass(t)  <=  exp(I(t)/2) * ∫ (2Φ(y/(σ√t))-1)^{1/2} f dy
/// with I(t) = ∫_0^t ((α+λ_s)/σ)^2 ds, allowing `slack` for discretization.
pub fn check_survival_bounds(
    grid: &DensityGrid,
    params: &ModelParams,
    lam: &LossRate,
    f_nu: &InitialDistribution,
    slack: f64,
) -> SurvivalBoundsReport {
    let space = &grid.space;
    let f: Vec<f64> = (0..space.n_nodes()).map(|j| f_nu.density_at(space.node(j))).collect();
    let rates: Vec<f64> = lam
        .values
        .iter()
        .map(|l| {
            let r = (params.alpha + l) / params.sigma;
            r * r
        })
        .collect();
    let exponent = cumtrapz(&rates, grid.time.dt);
    let mut report = SurvivalBoundsReport {
        slack,
        lower: Vec::with_capacity(grid.mass.len()),
        upper: Vec::with_capacity(grid.mass.len()),
        mass: grid.mass.clone(),
        violations: Vec::new(),
        max_violation: 0.0,
    };
    for (i, &mass) in grid.mass.iter().enumerate() {
        let t = grid.time.time(i);
        let sst = params.sigma * t.sqrt();
        let mut q_sq = vec![0.0; f.len()];
        let mut q_half = vec![0.0; f.len()];
        for (j, &fy) in f.iter().enumerate() {
            let y = space.node(j);
            let base = if i == 0 {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                2.0 * norm_cdf(y / sst) - 1.0
            };
            q_sq[j] = base * base * fy;
            q_half[j] = base.sqrt() * fy;
        }
        let lower = (-exponent[i]).exp() * trapz(&q_sq, space.h);
        let upper = (0.5 * exponent[i]).exp() * trapz(&q_half, space.h);
        let viol = (lower - mass).max(mass - upper).max(0.0);
        if viol > slack {
            report.violations.push(i);
        }
        report.max_violation = report.max_violation.max(viol);
        report.lower.push(lower);
        report.upper.push(upper);
    }
    report
}
