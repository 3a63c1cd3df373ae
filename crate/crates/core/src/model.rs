//! Shared domain types: model parameters, initial distributions, grids.
//!
//! Everything here is immutable after construction and safe to share across
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Global dynamics constants: drift, volatility, non-core exposure level and
/// time horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Log-asset drift per unit time.
    pub alpha: f64,
    /// Volatility per sqrt-time.
    pub sigma: f64,
    /// Non-core exposure level C in [0, 1).
    pub exposure_c: f64,
    /// Horizon T.
    pub horizon: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::validation(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.exposure_c) {
            return Err(Error::validation(format!(
                "exposure_c must be in [0, 1), got {}",
                self.exposure_c
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::validation(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Analytic or tabulated family for the law of initial log-asset values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    /// Uniform on [a, b]; a == b is the point-mass limit.
    Uniform { a: f64, b: f64 },
    /// Triangular with support [a, b] and mode m.
    Triangular { a: f64, m: f64, b: f64 },
    /// Piecewise-linear density through `(grid[i], values[i])`; duplicated
    /// grid points are not allowed (densities here are continuous).
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// The law of initial log-asset values together with the user-asserted
/// vanishing neighborhood `[0, gap]` of the default barrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]

pub struct InitialDistribution {
    #[serde(flatten)]
    pub kind: InitialKind,
    /// Radius of the neighborhood of 0 on which the density vanishes.
    pub gap: f64,
}

/// Which hypothesis set a distribution satisfies; PDE runs require the
/// stronger one (continuous, piecewise differentiable, zero at the barrier).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSet {
    SimulationOnly,
    Pde,
}

impl InitialDistribution {
    pub fn uniform(a: f64, b: f64, gap: f64) -> Self {
        Self { kind: InitialKind::Uniform { a, b }, gap }
    }

    pub fn triangular(a: f64, m: f64, b: f64, gap: f64) -> Self {
        Self { kind: InitialKind::Triangular { a, m, b }, gap }
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>, gap: f64) -> Self {
        Self { kind: InitialKind::Tabulated { grid, values }, gap }
    }

    /// Uniform(a, b) with the jumps at the support edges replaced by quintic
    /// smoothstep ramps of width `ramp`, tabulated and renormalized to unit
    /// mass. Satisfies the PDE hypothesis set.
    pub fn mollified_uniform(a: f64, b: f64, ramp: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && ramp > 0.0 && 2.0 * ramp < b - a) {
            return Err(Error::validation(format!(
                "mollified_uniform needs 0 < a < b and 0 < 2*ramp < b-a, got a={a} b={b} ramp={ramp}"
            )));
        }
        let pieces = vec![(a, a + ramp, 1.0, true), (b - ramp, b, 1.0, false)];
        let mut grid = vec![a];
        let mut values = vec![0.0];
        let n_ramp = 64;
        for (lo, hi, level, rising) in pieces {
            for i in 1..=n_ramp {
                let x = lo + (hi - lo) * i as f64 / n_ramp as f64;
                let s = (x - lo) / (hi - lo);
                let s = smoothstep5(s);
                grid.push(x);
                values.push(level * if rising { s } else { 1.0 - s });
            }
        }
        // the plateau is linear between the ramp ends, so no extra knots needed
        grid.sort_by(|u, v| u.partial_cmp(v).unwrap());
        let mass = tab_trapz(&grid, &values);
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self::tabulated(grid, values, a))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap > 0.0) {
            return Err(Error::validation(format!("gap must be > 0, got {}", self.gap)));
        }
        match &self.kind {
            InitialKind::Uniform { a, b } => {
                if !(*a > 0.0 && *b >= *a) {
                    return Err(Error::validation(format!(
                        "uniform needs 0 < a <= b, got a={a} b={b}"
                    )));
                }
                if *a < self.gap {
                    return Err(Error::validation(format!(
                        "uniform support starts at {a} inside the vanishing gap {}",
                        self.gap
                    )));
                }
            }
            InitialKind::Triangular { a, m, b } => {
                if !(*a > 0.0 && *a <= *m && *m <= *b && *a < *b) {
                    return Err(Error::validation(format!(
                        "triangular needs 0 < a <= m <= b, a < b, got a={a} m={m} b={b}"
                    )));
                }
                if *a < self.gap {
                    return Err(Error::validation(format!(
                        "triangular support starts at {a} inside the vanishing gap {}",
                        self.gap
                    )));
                }
            }
            InitialKind::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(Error::validation(
                        "tabulated density needs matching grid/values of length >= 2",
                    ));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::validation("tabulated grid must be strictly increasing"));
                }
                if grid[0] < 0.0 {
                    return Err(Error::validation("tabulated grid must lie in [0, inf)"));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::validation("tabulated values must be finite and >= 0"));
                }
                // density must vanish on [0, gap]
                let first_nonzero = grid
                    .iter()
                    .zip(values)
                    .find(|(_, v)| **v > 0.0)
                    .map(|(x, _)| *x);
                if let Some(x) = first_nonzero {
                    // with linear interpolation the density is positive just
                    // left of the first nonzero knot unless its predecessor
                    // sits at or beyond the gap
                    let idx = grid.iter().position(|g| *g == x).unwrap();
                    let support_start = if idx == 0 { grid[0] } else { grid[idx - 1] };
                    if support_start < self.gap {
                        return Err(Error::validation(format!(
                            "tabulated density is positive below the vanishing gap {} (support starts at {support_start})",
                            self.gap
                        )));
                    }
                } else {
                    return Err(Error::validation("tabulated density is identically zero"));
                }
                let mass = tab_trapz(grid, values);
                if (mass - 1.0).abs() > 1e-12 {
                    return Err(Error::validation(format!(
                        "tabulated density has mass {mass}, must be 1 within 1e-12"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Which hypothesis set this distribution satisfies. PDE use requires a
    /// continuous piecewise-differentiable density with value 0 at y = 0.
    pub fn hypothesis_set(&self) -> HypothesisSet {
        match &self.kind {
            InitialKind::Uniform { .. } => HypothesisSet::SimulationOnly,
            InitialKind::Triangular { .. } | InitialKind::Tabulated { .. } => HypothesisSet::Pde,
        }
    }

    pub fn require_pde(&self) -> Result<()> {
        if self.hypothesis_set() != HypothesisSet::Pde {
            return Err(Error::validation(
                "initial distribution does not satisfy the PDE hypothesis set \
                 (continuous density vanishing at the barrier); use triangular or tabulated",
            ));
        }
        Ok(())
    }

    /// True for the degenerate uniform(a, a) point mass.
    pub fn is_point_mass(&self) -> bool {
        matches!(self.kind, InitialKind::Uniform { a, b } if a == b)
    }

    /// Density value at y >= 0. Zero outside the support; zero everywhere for
    /// a point mass (which has no density).
    pub fn density_at(&self, y: f64) -> f64 {
        match &self.kind {
            InitialKind::Uniform { a, b } => {
                if a == b || y < *a || y > *b {
                    0.0
                } else {
                    1.0 / (b - a)
                }
            }
            InitialKind::Triangular { a, m, b } => {
                if y < *a || y > *b {
                    0.0
                } else if y < *m {
                    2.0 * (y - a) / ((b - a) * (m - a))
                } else if y > *m {
                    2.0 * (b - y) / ((b - a) * (b - m))
                } else {
                    2.0 / (b - a)
                }
            }
            InitialKind::Tabulated { grid, values } => tab_interp(grid, values, y),
        }
    }

    /// CDF at y.
    pub fn cdf(&self, y: f64) -> f64 {
        match &self.kind {
            InitialKind::Uniform { a, b } => {
                if a == b {
                    if y >= *a {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    ((y - a) / (b - a)).clamp(0.0, 1.0)
                }
            }
            InitialKind::Triangular { a, m, b } => {
                if y <= *a {
                    0.0
                } else if y >= *b {
                    1.0
                } else if y <= *m {
                    (y - a) * (y - a) / ((b - a) * (m - a))
                } else {
                    1.0 - (b - y) * (b - y) / ((b - a) * (b - m))
                }
            }
            InitialKind::Tabulated { grid, values } => {
                if y <= grid[0] {
                    return 0.0;
                }
                let mut acc = 0.0;
                for i in 0..grid.len() - 1 {
                    let (x0, x1) = (grid[i], grid[i + 1]);
                    let (f0, f1) = (values[i], values[i + 1]);
                    if y >= x1 {
                        acc += 0.5 * (f0 + f1) * (x1 - x0);
                    } else {
                        let d = y - x0;
                        let s = (f1 - f0) / (x1 - x0);
                        acc += f0 * d + 0.5 * s * d * d;
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    /// Largest support point.
    pub fn support_max(&self) -> f64 {
        match &self.kind {
            InitialKind::Uniform { b, .. } => *b,
            InitialKind::Triangular { b, .. } => *b,
            InitialKind::Tabulated { grid, values } => {
                let idx = values.iter().rposition(|v| *v > 0.0).unwrap_or(0);
                grid[(idx + 1).min(grid.len() - 1)]
            }
        }
    }

    /// Quantile function (inverse CDF) for u in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            InitialKind::Uniform { a, b } => a + (b - a) * u,
            InitialKind::Triangular { a, m, b } => {
                let fm = (m - a) / (b - a);
                if u <= fm {
                    a + ((b - a) * (m - a) * u).sqrt()
                } else {
                    b - ((b - a) * (b - m) * (1.0 - u)).sqrt()
                }
            }
            InitialKind::Tabulated { grid, values } => {
                // walk segments of the piecewise-quadratic CDF
                let mut acc = 0.0;
                for i in 0..grid.len() - 1 {
                    let (x0, x1) = (grid[i], grid[i + 1]);
                    let (f0, f1) = (values[i], values[i + 1]);
                    let seg = 0.5 * (f0 + f1) * (x1 - x0);
                    if acc + seg >= u || i == grid.len() - 2 {
                        let target = (u - acc).clamp(0.0, seg);
                        let s = (f1 - f0) / (x1 - x0);
                        let d = if s.abs() < 1e-14 * (f0.abs() + 1.0) {
                            if f0 > 0.0 {
                                target / f0
                            } else {
                                0.0
                            }
                        } else {
                            let disc = (f0 * f0 + 2.0 * s * target).max(0.0);
                            (disc.sqrt() - f0) / s
                        };
                        return x0 + d.clamp(0.0, x1 - x0);
                    }
                    acc += seg;
                }
                *grid.last().unwrap()
            }
        }
    }

    /// `n` independent draws, deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n < 1 {
            return Err(Error::validation("sample size must be >= 1"));
        }
        self.validate()?;
        Ok((0..n)
            .map(|i| self.quantile(rng::uniform(seed, i as u64, 0, 0)))
            .collect())
    }
}

/// Quintic smoothstep: C2, 0 -> 1 on [0, 1].
fn smoothstep5(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Trapezoid over a non-uniform table.
pub(crate) fn tab_trapz(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, f)| 0.5 * (f[0] + f[1]) * (x[1] - x[0]))
        .sum()
}

/// Linear interpolation; zero outside the table.
pub(crate) fn tab_interp(grid: &[f64], values: &[f64], y: f64) -> f64 {
    if y < grid[0] || y > *grid.last().unwrap() {
        return 0.0;
    }
    let idx = match grid.binary_search_by(|g| g.partial_cmp(&y).unwrap()) {
        Ok(i) => return values[i],
        Err(i) => i,
    };
    let (x0, x1) = (grid[idx - 1], grid[idx]);
    let w = (y - x0) / (x1 - x0);
    values[idx - 1] * (1.0 - w) + values[idx] * w
}

/// Uniform time grid {0, dt, ..., n_steps * dt}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::validation(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid covering `horizon` within one step.
    pub fn for_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && horizon >= 0.0) {
            return Err(Error::validation(format!(
                "need dt > 0 and horizon >= 0, got dt={dt} horizon={horizon}"
            )));
        }
        let n = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
        Ok(Self { dt, n_steps: n })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }
}

/// Uniform space grid {0, h, ..., y_max} truncating the half-line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceGrid {
    pub h: f64,
    pub y_max: f64,
}

impl SpaceGrid {
    pub fn new(h: f64, y_max: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::validation(format!("h must be > 0, got {h}")));
        }
        let ratio = y_max / h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 16.0 {
            return Err(Error::validation(format!(
                "y_max/h must be an integer >= 16, got {ratio}"
            )));
        }
        Ok(Self { h, y_max })
    }

    pub fn n_cells(&self) -> usize {
        (self.y_max / self.h).round() as usize
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells() + 1
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// The truncation must leave less than 1e-10 of initial mass within four
    /// standard deviations of the outer boundary.
    pub fn check_covers(&self, dist: &InitialDistribution, sigma: f64, horizon: f64) -> Result<()> {
        let threshold = self.y_max - 4.0 * sigma * horizon.sqrt();
        let tail = 1.0 - dist.cdf(threshold);
        if tail >= 1e-10 {
            return Err(Error::validation(format!(
                "initial mass {tail:.3e} beyond y_max - 4*sigma*sqrt(T) = {threshold}; enlarge y_max"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(vals: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        let mut h = vec![0.0; bins];
        let w = (hi - lo) / bins as f64;
        let n = vals.len() as f64;
        for &v in vals {
            if v >= lo && v < hi {
                h[((v - lo) / w) as usize] += 1.0 / (n * w);
            }
        }
        h
    }

    #[test]
    fn degenerate_uniform_is_point_mass() {
        let d = InitialDistribution::uniform(1.0, 1.0, 0.5);
        d.validate().unwrap();
        let s = d.sample(100, 7).unwrap();
        assert!(s.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn uniform_sample_mean() {
        let d = InitialDistribution::uniform(0.5, 1.5, 0.25);
        let n = 1_000_000;
        let s = d.sample(n, 11).unwrap();
        let mean = s.iter().sum::<f64>() / n as f64;
        let std = (1.0f64 / 12.0).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * std / (n as f64).sqrt(), "mean={mean}");
    }

    #[test]
    fn triangular_ecdf_matches_quadrature_oracle() {
        let d = InitialDistribution::triangular(0.2, 0.5, 1.0, 0.1);
        // independent oracle: Simpson quadrature of the closed-form density
        let m = 4096;
        let (a, q) = (0.2, 0.5);
        let mut integral = 0.0;
        let w = (q - a) / m as f64;
        for i in 0..m {
            let (x0, x1) = (a + i as f64 * w, a + (i + 1) as f64 * w);
            let xm = 0.5 * (x0 + x1);
            integral +=
                w / 6.0 * (d.density_at(x0) + 4.0 * d.density_at(xm) + d.density_at(x1));
        }
        assert!((integral - 0.375).abs() < 1e-10);
        let n = 1_000_000;
        let s = d.sample(n, 3).unwrap();
        let ecdf = s.iter().filter(|&&x| x <= 0.5).count() as f64 / n as f64;
        assert!((ecdf - integral).abs() < 0.002, "ecdf={ecdf}");
    }

    #[test]
    fn density_values() {
        let d = InitialDistribution::uniform(0.5, 1.5, 0.25);
        assert_eq!(d.density_at(1.0), 1.0);
        assert_eq!(d.density_at(0.1), 0.0);
        let t = InitialDistribution::tabulated(vec![1.0, 2.0], vec![0.5, 1.5], 0.5);
        assert_eq!(t.density_at(1.5), 1.0);
    }

    #[test]
    fn every_family_integrates_to_one() {
        let dists = [
            InitialDistribution::uniform(0.5, 1.5, 0.25),
            InitialDistribution::triangular(0.2, 0.5, 1.0, 0.1),
            InitialDistribution::mollified_uniform(0.5, 1.5, 0.05).unwrap(),
        ];
        for d in &dists {
            d.validate().unwrap();
            // numeric quadrature over [0, y_max]
            let n = 200_000;
            let y_max = 3.0;
            let w = y_max / n as f64;
            let mass: f64 = (0..=n)
                .map(|i| {
                    let c = if i == 0 || i == n { 0.5 } else { 1.0 };
                    c * d.density_at(i as f64 * w)
                })
                .sum::<f64>()
                * w;
            assert!((mass - 1.0).abs() < 3e-5, "mass={mass} for {d:?}");
        }
    }

    #[test]
    fn histograms_match_density() {
        for d in [
            InitialDistribution::uniform(0.5, 1.5, 0.25),
            InitialDistribution::triangular(0.2, 0.5, 1.0, 0.1),
            InitialDistribution::mollified_uniform(0.5, 1.5, 0.1).unwrap(),
        ] {
            let n = 1_000_000;
            let s = d.sample(n, 19).unwrap();
            let bins = 100;
            let (lo, hi) = (0.0, 2.0);
            let h = sim(&s, lo, hi, bins);
            let w = (hi - lo) / bins as f64;
            let mut sup: f64 = 0.0;
            for (i, hv) in h.iter().enumerate() {
                // bin-averaged density
                let m = 16;
                let avg: f64 = (0..m)
                    .map(|k| d.density_at(lo + (i as f64 + (k as f64 + 0.5) / m as f64) * w))
                    .sum::<f64>()
                    / m as f64;
                sup = sup.max((hv - avg).abs());
            }
            assert!(sup < 0.05, "sup={sup} for {d:?}");
        }
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(InitialDistribution::uniform(0.5, 1.5, 0.6).validate().is_err());
        assert!(InitialDistribution::uniform(-0.1, 1.0, 0.01).validate().is_err());
        assert!(InitialDistribution::tabulated(vec![0.0, 1.0], vec![1.0, 1.0], 0.1)
            .validate()
            .is_err());
        assert!(ModelParams { alpha: 0.0, sigma: 0.0, exposure_c: 0.1, horizon: 1.0 }
            .validate()
            .is_err());
        assert!(ModelParams { alpha: 0.0, sigma: 1.0, exposure_c: 1.0, horizon: 1.0 }
            .validate()
            .is_err());
        assert!(SpaceGrid::new(0.1, 1.05).is_err());
        assert!(SpaceGrid::new(0.1, 0.5).is_err());
    }

    #[test]
    fn quantile_inverts_cdf_tabulated() {
        let d = InitialDistribution::mollified_uniform(0.5, 1.5, 0.05).unwrap();
        for &u in &[0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let y = d.quantile(u);
            assert!((d.cdf(y) - u).abs() < 1e-9, "u={u} y={y}");
        }
    }

    #[test]
    fn point_mass_not_pde_admissible() {
        let d = InitialDistribution::uniform(1.0, 1.0, 0.5);
        assert!(d.require_pde().is_err());
        let t = InitialDistribution::mollified_uniform(0.5, 1.5, 0.05).unwrap();
        assert!(t.require_pde().is_ok());
    }
}
