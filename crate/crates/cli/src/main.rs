//! `wide`: configuration-driven runs of the space-time variational solver.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use wide_core::diagnostics::{
    apriori_bounds, energy_report, epsilon_sweep, AprioriBounds, EnergyReport, SigmaPairResult,
};
use wide_core::euler_lagrange::{el_report, ElReport};
use wide_core::field::leray_project;
use wide_core::functional::{
    eval_functional, prepare_initial_datum, FunctionalBreakdown, Trajectory, WideParams,
};
use wide_core::io;
use wide_core::optimizer::{
    minimize_global, run_incremental, stationarity_norm, IncrementalReport, MinimizeReport,
};
use wide_core::reference::{projection_solve_with, ExactSolutionSpec, ReferenceOptions};
use wide_core::VelocityField;

use config::{DatumKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "wide",
    version,
    about = "Space-time variational Navier-Stokes solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps, overriding `sweep.workers`.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Run seed, overriding the top-level `seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimise the functional over the whole trajectory.
    Minimize,
    /// March forward one slab at a time.
    Incremental,
    /// Integrate with the projection reference solver.
    Reference,
    /// Minimise for every ε in `sweep.eps_list` and compare with the reference.
    Sweep,
    /// Recompute all diagnostics on a stored trajectory.
    Check {
        /// Trajectory checkpoint to inspect.
        trajectory: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    NotConverged,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    workers: Option<usize>,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(if informational { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let path = cli.config.context("--config PATH is required")?;
    let mut cfg = config::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers == Some(0) {
        anyhow::bail!("--workers must be at least 1");
    }
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let out = cli.out.unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let ctx = Ctx {
        cfg,
        out,
        workers: cli.workers,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Minimize => cmd_minimize(&ctx),
        Command::Incremental => cmd_incremental(&ctx),
        Command::Reference => cmd_reference(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Check { trajectory } => cmd_check(&ctx, &trajectory),
    }
}

fn outcome(converged: bool) -> Outcome {
    if converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).with_context(|| format!("cannot write {}", path.display()))
}

/// The four artifacts of a global minimisation.
fn write_minimizer(
    dir: &Path,
    traj: &Trajectory,
    params: &WideParams,
    report: &MinimizeReport,
    el: &ElReport,
    energy: &EnergyReport,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    io::write_trajectory(dir.join("trajectory.wnst"), traj, params)?;
    write_json(&dir.join("minimize_report.json"), report)?;
    write_json(&dir.join("el_report.json"), el)?;
    write_text(&dir.join("energy_report.csv"), &io::energy_csv(energy))
}

fn initial_datum(ctx: &Ctx, params: &WideParams) -> Result<VelocityField> {
    Ok(prepare_initial_datum(
        &ctx.cfg.raw_datum()?,
        params,
        ctx.cfg.datum.c0,
    )?)
}

fn cmd_minimize(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let steps = cfg.steps()?;
    let u0 = initial_datum(ctx, &params)?;
    let init = Trajectory::constant(&u0, cfg.params.tau, steps)?;
    ctx.info(format!(
        "minimizing over {steps} slices at epsilon = {}",
        params.epsilon
    ));
    let (traj, report) = minimize_global(&init, &params, &cfg.optimizer)?;
    let el = el_report(&traj, &params, &cfg.el_options())?;
    let energy = energy_report(
        &traj,
        &params,
        cfg.diagnostics.tol_energy,
        cfg.diagnostics.obs_fraction,
    );
    write_minimizer(&ctx.out, &traj, &params, &report, &el, &energy)?;
    ctx.info(format!(
        "{} after {} iterations: I = {:.10e}, gradient norm {:.3e}",
        if report.converged {
            "converged"
        } else {
            "NOT converged"
        },
        report.iterations,
        report.breakdown.total,
        report.grad_norm
    ));
    Ok(outcome(report.converged))
}

fn cmd_incremental(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let steps = cfg.steps()?;
    let u0 = initial_datum(ctx, &params)?;
    ctx.info(format!("incremental stepping over {steps} slabs"));
    let (traj, report): (Trajectory, IncrementalReport) =
        run_incremental(&u0, &params, cfg.params.tau, steps, &cfg.optimizer)?;
    io::write_trajectory(ctx.path("trajectory.wnst"), &traj, &params)?;
    write_json(&ctx.path("incremental_report.json"), &report)?;
    let energy = energy_report(
        &traj,
        &params,
        cfg.diagnostics.tol_energy,
        cfg.diagnostics.obs_fraction,
    );
    write_text(&ctx.path("energy_report.csv"), &io::energy_csv(&energy))?;
    ctx.info(format!(
        "{} slabs, {} iterations, worst gradient norm {:.3e}",
        report.steps, report.iterations, report.max_grad_norm
    ));
    Ok(outcome(report.converged))
}

#[derive(Serialize)]
struct ReferenceSummary {
    steps: usize,
    substeps: usize,
    max_cfl: f64,
    cfl_warning: bool,
    /// Max-norm distance of the final slice from the exact Taylor-Green field.
    exact_max_error: Option<f64>,
}

fn cmd_reference(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let params = cfg.params()?;
    let steps = cfg.steps()?;
    let u0 = leray_project(&cfg.raw_datum()?);
    let opts = ReferenceOptions {
        convection: params.convection,
        substeps: cfg.reference.substeps,
    };
    let run = projection_solve_with(&u0, params.nu, cfg.params.tau, steps, &opts)?;
    if run.cfl_warning {
        eprintln!("warning: CFL number {:.3} exceeds 0.5", run.max_cfl);
    }
    let exact_max_error = if cfg.datum.kind == DatumKind::TaylorGreen {
        let spec = ExactSolutionSpec::taylor_green(cfg.datum.amplitude, params.nu);
        let exact = spec.evaluate(params.horizon, *u0.grid())?;
        Some(run.trajectory.last().sub(&exact).max_abs())
    } else {
        None
    };
    io::write_trajectory(ctx.path("trajectory.wnst"), &run.trajectory, &params)?;
    write_text(
        &ctx.path("final_field.csv"),
        &io::field_csv(run.trajectory.last()),
    )?;
    write_json(
        &ctx.path("reference_report.json"),
        &ReferenceSummary {
            steps,
            substeps: opts.substeps,
            max_cfl: run.max_cfl,
            cfl_warning: run.cfl_warning,
            exact_max_error,
        },
    )?;
    if let Some(err) = exact_max_error {
        ctx.info(format!(
            "final slice differs from exact Taylor-Green by {err:.3e} (max norm)"
        ));
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    eps: f64,
    dist_l2h1: f64,
    dist_cl2: f64,
    minimize: &'a MinimizeReport,
    breakdown: &'a FunctionalBreakdown,
    apriori: &'a AprioriBounds,
    el: &'a ElReport,
    energy_violation: bool,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    entries: Vec<SweepRow<'a>>,
    ratios: Vec<f64>,
    trend_ok: bool,
    sigma_pair: Option<SigmaPairResult>,
    eps_span_distance: Option<f64>,
    partial: bool,
    failed: Vec<f64>,
    reference_max_cfl: f64,
    reference_cfl_warning: bool,
}

fn cmd_sweep(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let sweep_cfg = cfg.sweep_config(cfg.raw_datum()?, ctx.workers)?;
    ctx.info(format!(
        "sweeping epsilon over {:?} with {} worker(s)",
        sweep_cfg.eps_list, sweep_cfg.workers
    ));
    let report = epsilon_sweep(&sweep_cfg)?;
    for e in &report.entries {
        let params = sweep_cfg.base.with_epsilon(e.epsilon);
        let dir = ctx.path(&format!("eps_{}", e.epsilon));
        write_minimizer(&dir, &e.trajectory, &params, &e.minimize, &e.el, &e.energy)?;
    }
    write_text(&ctx.path("sweep.csv"), &io::sweep_csv(&report))?;
    let summary = SweepSummary {
        entries: report
            .entries
            .iter()
            .map(|e| SweepRow {
                eps: e.epsilon,
                dist_l2h1: e.distances.l2_h1,
                dist_cl2: e.distances.c_l2,
                minimize: &e.minimize,
                breakdown: &e.breakdown,
                apriori: &e.apriori,
                el: &e.el,
                energy_violation: e.energy.violation,
            })
            .collect(),
        ratios: report.ratios(),
        trend_ok: report.trend_ok,
        sigma_pair: report.sigma_pair,
        eps_span_distance: report.eps_span_distance,
        partial: report.partial,
        failed: report.failed.clone(),
        reference_max_cfl: report.reference.max_cfl,
        reference_cfl_warning: report.reference.cfl_warning,
    };
    write_json(&ctx.path("sweep.json"), &summary)?;
    for e in &report.entries {
        ctx.info(format!(
            "eps = {:<8} L2(H1) distance {:.4e}  C(L2) distance {:.4e}  {} iterations",
            e.epsilon, e.distances.l2_h1, e.distances.c_l2, e.minimize.iterations
        ));
    }
    ctx.info(format!("trend within slack: {}", report.trend_ok));
    Ok(outcome(report.failed.is_empty() && !report.partial))
}

#[derive(Serialize)]
struct CheckRow {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    epsilon: f64,
    sigma: f64,
    nu: f64,
    horizon: f64,
    steps: usize,
    breakdown: FunctionalBreakdown,
    stationarity: f64,
    el: &'a ElReport,
    apriori: AprioriBounds,
    energy_violation: bool,
    checks: Vec<CheckRow>,
}

fn cmd_check(ctx: &Ctx, path: &Path) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let (stored, mut params) = io::read_trajectory(path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    params.convection = cfg.params.convection;
    let grid = cfg.grid()?;
    if stored.grid().n != grid.n || stored.grid().dim != grid.dim {
        anyhow::bail!(
            "checkpoint grid {}^{} does not match config grid {}^{}",
            stored.grid().n,
            stored.grid().dim,
            grid.n,
            grid.dim
        );
    }
    let traj = if *stored.grid() == grid {
        stored
    } else {
        let tau = stored.tau();
        let slices = stored
            .into_slices()
            .into_iter()
            .map(|u| VelocityField::from_components(grid, u.into_components()))
            .collect::<wide_core::Result<Vec<_>>>()?;
        Trajectory::new(grid, tau, slices)?
    };
    let d = &cfg.diagnostics;
    let breakdown = eval_functional(&traj, &params)?;
    let stationarity = stationarity_norm(&traj, &params)?;
    let el = el_report(&traj, &params, &cfg.el_options())?;
    let energy = energy_report(&traj, &params, d.tol_energy, d.obs_fraction);
    let apriori = apriori_bounds(&traj, &params, cfg.el_options().s);
    let excess = |v: f64, limit: f64| CheckRow {
        name: "",
        value: v,
        limit,
        pass: v <= limit,
    };
    let worst_energy = energy
        .times
        .iter()
        .zip(&energy.lhs_unif)
        .filter(|(&t, _)| t <= d.obs_fraction * traj.horizon() * (1.0 + 1e-12))
        .map(|(_, &l)| l / energy.rhs - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let rows = vec![
        CheckRow {
            name: "epsilon_floor",
            ..excess(params.epsilon_floor(), params.epsilon * (1.0 + 1e-12))
        },
        CheckRow {
            name: "stationarity",
            ..excess(stationarity, cfg.optimizer.grad_tol)
        },
        CheckRow {
            name: "divergence",
            ..excess(traj.max_relative_divergence(), 1e-10)
        },
        CheckRow {
            name: "energy",
            pass: !energy.violation,
            ..excess(worst_energy, d.tol_energy)
        },
        CheckRow {
            name: "strong_residual",
            ..excess(el.strong_residual_norm, d.residual_tol)
        },
        CheckRow {
            name: "weak_residual",
            ..excess(el.weak_max(), d.residual_tol)
        },
        CheckRow {
            name: "kernel_gap",
            ..excess(el.kernel_identity_error, d.kernel_tol)
        },
    ];
    let all_pass = rows.iter().all(|r| r.pass);
    if !ctx.quiet {
        println!("{:<16} {:>14} {:>14}  result", "check", "value", "limit");
        for r in &rows {
            println!(
                "{:<16} {:>14.6e} {:>14.6e}  {}",
                r.name,
                r.value,
                r.limit,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    write_json(
        &ctx.path("check_report.json"),
        &CheckReport {
            epsilon: params.epsilon,
            sigma: params.sigma,
            nu: params.nu,
            horizon: params.horizon,
            steps: traj.steps(),
            breakdown,
            stationarity,
            el: &el,
            apriori,
            energy_violation: energy.violation,
            checks: rows,
        },
    )?;
    Ok(outcome(all_pass))
}
