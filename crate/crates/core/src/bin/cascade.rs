//! Command-line front end: run configs in, CSV/JSON artifacts out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cascade_core::analysis::{
    self, boundary_density_ladder, c_star, certify_jump, holder_exponent, jump_size,
    verify_physical_jump_condition, DensityProfile, Snapshot,
};
use cascade_core::config::RunConfig;
use cascade_core::fixed_point::solve_lambda;
use cascade_core::io;
use cascade_core::model::{InitialKind, TimeGrid};
use cascade_core::oracle::{simulate_limit_sde, LossInput};
use cascade_core::particle::simulate;
use cascade_core::pde::{check_survival_bounds, conservation_residual, solve_cdp};
use cascade_core::{Error, Result};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Default-cascade model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the N-bank particle simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the absorbed-density equation with a given (or zero) loss rate.
    Pde {
        #[arg(long)]
        config: PathBuf,
        /// Directory containing a saved loss rate; zero rate when omitted.
        #[arg(long)]
        lambda: Option<PathBuf>,
    },
    /// Solve the loss-rate fixed point.
    Fixedpoint {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo of the one-dimensional limit process.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        n_paths: usize,
    },
    /// Analysis toolkit on a saved simulation directory.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Simulation run directory (output of `simulate`).
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print the certification constant c*(sigma).
    Cstar {
        #[arg(long)]
        sigma: f64,
    },
    /// Cross-method comparison: particle ladder vs PDE vs MC.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "exit_code": code })
            );
            ExitCode::from(code as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config } => cmd_simulate(&config),
        Command::Pde { config, lambda } => cmd_pde(&config, lambda.as_deref()),
        Command::Fixedpoint { config } => cmd_fixedpoint(&config),
        Command::Oracle { config, lambda, n_paths } => {
            cmd_oracle(&config, lambda.as_deref(), n_paths)
        }
        Command::Analyze { config, dir } => cmd_analyze(&config, &dir),
        Command::Cstar { sigma } => {
            let (c, m) = c_star(sigma)?;
            println!("{}", serde_json::json!({ "sigma": sigma, "c_star": c, "m_star": m }));
            Ok(())
        }
        Command::Compare { config } => cmd_compare(&config),
    }
}

fn cmd_simulate(config: &std::path::Path) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let seed = cfg.effective_seed()?;
    let grid = cfg.sim_grid()?;
    let sim = simulate(
        &cfg.model,
        &cfg.initial,
        cfg.simulation.n_banks,
        &grid,
        seed,
        &cfg.sim_options(),
    )?;
    let dir = cfg.output_dir.join("simulate");
    io::save_simulation(&dir, &sim)?;
    println!(
        "simulate: n={} seed={} final_survivors={:.6} events={} -> {}",
        sim.n_banks,
        seed,
        sim.survivor_fraction.last().unwrap(),
        sim.cascade_events.len(),
        dir.display()
    );
    Ok(())
}

fn load_or_zero_rate(
    lambda: Option<&std::path::Path>,
    grid: &TimeGrid,
) -> Result<cascade_core::fixed_point::LossRate> {
    match lambda {
        None => Ok(cascade_core::fixed_point::LossRate::zero(grid)),
        Some(dir) => {
            let rate = io::load_loss_rate(dir)?;
            if rate.values.len() != grid.n_nodes() {
                return Err(Error::validation(format!(
                    "loss rate has {} nodes, PDE grid needs {}",
                    rate.values.len(),
                    grid.n_nodes()
                )));
            }
            Ok(rate)
        }
    }
}

fn cmd_pde(config: &std::path::Path, lambda: Option<&std::path::Path>) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let space = cfg.pde_space()?;
    let time = cfg.pde_grid()?;
    let rate = load_or_zero_rate(lambda, &time)?;
    let grid = solve_cdp(&cfg.model, &cfg.initial, &rate, &space, &time)?;
    let dir = cfg.output_dir.join("pde");
    io::save_density_grid(&dir, &grid)?;
    let residual = conservation_residual(&grid, cfg.model.sigma);
    io::write_csv(
        &dir.join("conservation.csv"),
        &["time", "residual"],
        &[&time.times(), &residual],
    )?;
    let bounds = check_survival_bounds(&grid, &cfg.model, &rate, &cfg.initial, 1e-3);
    io::save_json(&dir.join("survival_bounds.json"), "survival_bounds", &bounds)?;
    for w in &grid.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "pde: final mass={:.6} max |residual|={:.3e} bounds_ok={} -> {}",
        grid.mass.last().unwrap(),
        residual.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        bounds.passed(),
        dir.display()
    );
    Ok(())
}

fn cmd_fixedpoint(config: &std::path::Path) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let space = cfg.pde_space()?;
    let time = cfg.pde_grid()?;
    let (rate, report) =
        solve_lambda(&cfg.model, &cfg.initial, &space, &time, &cfg.fixed_point_options())?;
    let dir = cfg.output_dir.join("fixedpoint");
    io::save_loss_rate(&dir, &rate)?;
    io::save_json(&dir.join("report.json"), "fixed_point_report", &report)?;
    println!(
        "fixedpoint: converged={} exploded={} t_reg={:?} windows={} -> {}",
        report.converged,
        rate.exploded,
        rate.t_reg_estimate,
        report.windows.len(),
        dir.display()
    );
    if rate.exploded {
        return Err(Error::numerics(format!(
            "loss rate blow-up detected, t_reg estimate {:?}",
            rate.t_reg_estimate
        )));
    }
    Ok(())
}

fn cmd_oracle(
    config: &std::path::Path,
    lambda: Option<&std::path::Path>,
    n_paths: usize,
) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let seed = cfg.effective_seed()?;
    // a provided loss rate drives the SDE on its own time grid; otherwise
    // run a zero rate on the simulation grid
    let (grid, rate) = match lambda {
        None => {
            let grid = cfg.sim_grid()?;
            let rate = cascade_core::fixed_point::LossRate::zero(&grid);
            (grid, rate)
        }
        Some(dir) => {
            let rate = io::load_loss_rate(dir)?;
            (rate.time.clone(), rate)
        }
    };
    let loss = LossInput::Cumulative(rate.cumulative());
    let res = simulate_limit_sde(
        &cfg.model,
        &cfg.initial,
        &loss,
        n_paths,
        &grid,
        seed,
        cfg.simulation.bridge_correction,
        &[],
    )?;
    let dir = cfg.output_dir.join("oracle");
    std::fs::create_dir_all(&dir)?;
    let (v, se): (Vec<f64>, Vec<f64>) =
        res.survival.iter().map(|e| (e.value, e.std_error)).unzip();
    io::write_csv(
        &dir.join("survival.csv"),
        &["time", "survival", "std_error"],
        &[&res.times, &v, &se],
    )?;
    println!(
        "oracle: n_paths={n_paths} terminal survival={:.6} (se {:.2e}) -> {}",
        v.last().unwrap(),
        se.last().unwrap(),
        dir.display()
    );
    Ok(())
}

fn initial_profile(cfg: &RunConfig) -> Result<Option<DensityProfile>> {
    let d = &cfg.initial;
    Ok(match &d.kind {
        InitialKind::Tabulated { grid, values } => {
            Some(DensityProfile::new(grid.clone(), values.clone())?)
        }
        InitialKind::Triangular { a, m, b } => {
            Some(DensityProfile::new(vec![*a, *m, *b], vec![
                0.0,
                d.density_at(*m),
                0.0,
            ])?)
        }
        InitialKind::Uniform { a, b } if a < b => Some(DensityProfile::new(
            vec![*a, *a, *b, *b],
            vec![0.0, 1.0 / (b - a), 1.0 / (b - a), 0.0],
        )?),
        InitialKind::Uniform { .. } => None, // point mass has no density
    })
}

#[derive(Serialize)]
struct AnalyzeReport {
    holder_exponent: Option<f64>,
    jump_condition: analysis::JumpConditionReport,
    initial_jump: Option<analysis::JumpSolution>,
    initial_certified: Option<bool>,
    initial_q_sup: Option<f64>,
    boundary_density: Vec<analysis::BoundaryDensityEstimate>,
}

fn cmd_analyze(config: &std::path::Path, dir: &std::path::Path) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let sim = io::load_simulation(dir)?;
    let dt = if sim.times.len() > 1 { sim.times[1] - sim.times[0] } else { 1.0 };
    let holder = if sim.cum_log_loss.len() >= 64 {
        holder_exponent(&sim.cum_log_loss, dt)?
    } else {
        None
    };
    let jump_condition = verify_physical_jump_condition(&sim, sim.params.exposure_c, cfg.analysis.slack);
    let profile = initial_profile(&cfg)?;
    let (initial_jump, initial_certified, initial_q_sup) = match &profile {
        Some(p) => {
            let j = jump_size(p, sim.params.exposure_c).ok();
            let (cert, q) = certify_jump(
                p,
                p.total_mass(),
                &sim.params,
                cfg.analysis.epsilon,
                cfg.analysis.eta,
            )?;
            (j, Some(cert), Some(q))
        }
        None => (None, None, None),
    };
    // boundary density from the last stored pre-cascade snapshot, if any
    let boundary_density = match sim.snapshots.last() {
        Some(s) => boundary_density_ladder(
            &Snapshot::Samples(&s.sorted_pre_values),
            s.survivors_before as f64 / sim.n_banks as f64,
            cfg.analysis.eta,
            s.time,
        )?,
        None => Vec::new(),
    };
    let report = AnalyzeReport {
        holder_exponent: holder,
        jump_condition,
        initial_jump,
        initial_certified,
        initial_q_sup,
        boundary_density,
    };
    let out = cfg.output_dir.join("analysis.json");
    std::fs::create_dir_all(&cfg.output_dir)?;
    io::save_json(&out, "analysis", &report)?;
    println!(
        "analyze: holder={:?} jump_condition_ok={} -> {}",
        report.holder_exponent,
        report.jump_condition.all_passed(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    n_ladder: Vec<(usize, f64)>,
    mc_vs_pde_sup_gap: f64,
    mc_sup_std_error: f64,
    pde_converged: bool,
}

fn cmd_compare(config: &std::path::Path) -> Result<()> {
    let cfg = RunConfig::from_file(config)?;
    let seed = cfg.effective_seed()?;
    let space = cfg.pde_space()?;
    let pde_time = cfg.pde_grid()?;
    let (rate, fp_report) =
        solve_lambda(&cfg.model, &cfg.initial, &space, &pde_time, &cfg.fixed_point_options())?;
    if rate.exploded {
        return Err(Error::numerics("fixed point exploded; compare needs a regular run"));
    }
    let pde_grid = solve_cdp(&cfg.model, &cfg.initial, &rate, &space, &pde_time)?;
    let lambda_pde = rate.cumulative();
    let pde_times = pde_time.times();

    // particle ladder: Lambda^N vs Lambda^PDE sup gap at simulation times
    let sim_grid = cfg.sim_grid()?;
    let mut ladder = Vec::new();
    for scale in [100usize, 10, 1] {
        let n = (cfg.simulation.n_banks / scale).max(10);
        let sim = simulate(&cfg.model, &cfg.initial, n, &sim_grid, seed, &cfg.sim_options())?;
        let mut sup: f64 = 0.0;
        for (i, &t) in sim.times.iter().enumerate() {
            let l_pde = interp(&pde_times, &lambda_pde, t);
            if sim.cum_log_loss[i].is_finite() {
                sup = sup.max((sim.cum_log_loss[i] - l_pde).abs());
            }
        }
        ladder.push((n, sup));
    }

    // MC of the limit process driven by Lambda^PDE vs PDE mass
    let lam_on_sim: Vec<f64> =
        sim_grid.times().iter().map(|&t| interp(&pde_times, &lambda_pde, t)).collect();
    let mc = simulate_limit_sde(
        &cfg.model,
        &cfg.initial,
        &LossInput::Cumulative(lam_on_sim),
        cfg.simulation.n_banks,
        &sim_grid,
        seed,
        cfg.simulation.bridge_correction,
        &[],
    )?;
    let mut mc_gap: f64 = 0.0;
    let mut mc_se: f64 = 0.0;
    for (i, &t) in mc.times.iter().enumerate() {
        let mass = interp(&pde_times, &pde_grid.mass, t);
        mc_gap = mc_gap.max((mc.survival[i].value - mass).abs());
        mc_se = mc_se.max(mc.survival[i].std_error);
    }

    let report = CompareReport {
        n_ladder: ladder,
        mc_vs_pde_sup_gap: mc_gap,
        mc_sup_std_error: mc_se,
        pde_converged: fp_report.converged,
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.join("compare.json");
    io::save_json(&out, "compare", &report)?;
    println!(
        "compare: ladder={:?} mc_gap={:.4e} -> {}",
        report.n_ladder,
        report.mc_vs_pde_sup_gap,
        out.display()
    );
    Ok(())
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let i = xs.partition_point(|&v| v <= x);
    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] * (1.0 - w) + ys[i] * w
}
