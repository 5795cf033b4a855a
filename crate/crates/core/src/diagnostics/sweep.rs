use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimates::{
    apriori_bounds, energy_report, relative_distances, AprioriBounds, Distances, EnergyReport,
};
use crate::error::{Error, Result};
use crate::euler_lagrange::{el_report, window_end, ElOptions, ElReport};
use crate::field::{leray_project, VelocityField};
use crate::functional::{prepare_initial_datum, FunctionalBreakdown, Trajectory, WideParams};
use crate::optimizer::{minimize_global, MinimizeOptions, MinimizeReport};
use crate::reference::{projection_solve_with, ReferenceOptions, ReferenceRun};

/// Settings of an ε-sweep. `base` supplies σ, ν, T and the convection flag;
/// its `epsilon` is ignored.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub datum: VelocityField,
    pub base: WideParams,
    pub tau: f64,
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    pub c0: f64,
    pub minimize: MinimizeOptions,
    pub el: ElOptions,
    pub tol_energy: f64,
    /// Observation window `[0, obs_fraction · T]` for all distances.
    pub obs_fraction: f64,
    /// Allowed relative growth of the distance per ε step.
    pub trend_slack: f64,
    /// Two σ values compared at the smallest ε.
    pub sigma_pair: Option<(f64, f64)>,
    /// Also compare the σ pair at the largest ε.
    pub sigma_pair_at_largest: bool,
    pub reference_substeps: usize,
    /// Worker threads; 1 runs members sequentially.
    pub workers: usize,
}

impl SweepConfig {
    pub fn new(datum: VelocityField, base: WideParams, tau: f64, eps_list: Vec<f64>) -> Self {
        SweepConfig {
            datum,
            base,
            tau,
            eps_list,
            c0: 1e3,
            minimize: MinimizeOptions::default(),
            el: ElOptions::default(),
            tol_energy: 0.05,
            obs_fraction: 0.8,
            trend_slack: 0.1,
            sigma_pair: None,
            sigma_pair_at_largest: false,
            reference_substeps: 10,
            workers: 1,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        let ratio = self.base.horizon / self.tau;
        let steps = ratio.round();
        if self.tau.is_nan()
            || self.tau <= 0.0
            || (ratio - steps).abs() > 1e-9 * ratio.max(1.0)
            || steps < 1.0
        {
            return Err(Error::InvalidParams(format!(
                "time step {} does not divide the horizon {}",
                self.tau, self.base.horizon
            )));
        }
        Ok(steps as usize)
    }

    fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.steps()?;
        if self.eps_list.is_empty() {
            return Err(Error::InvalidParams("eps_list is empty".into()));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams(
                "eps_list must be strictly decreasing".into(),
            ));
        }
        for &eps in &self.eps_list {
            self.base.with_epsilon(eps).validate()?;
            self.base.with_epsilon(eps).check_epsilon_floor()?;
        }
        if !(self.obs_fraction > 0.0 && self.obs_fraction <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "obs_fraction must lie in (0, 1], got {}",
                self.obs_fraction
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParams("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// One member of the sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub distances: Distances,
    pub breakdown: FunctionalBreakdown,
    pub minimize: MinimizeReport,
    pub energy: EnergyReport,
    pub apriori: AprioriBounds,
    pub el: ElReport,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPairResult {
    pub sigma_a: f64,
    pub sigma_b: f64,
    /// Relative L²(H¹) distance between the two minimisers at the smallest ε.
    pub distance_smallest: f64,
    /// The same at the largest ε, when requested.
    pub distance_largest: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub reference: ReferenceRun,
    /// `d_{i+1} ≤ (1 + slack) d_i` for the L²(H¹) distances.
    pub trend_ok: bool,
    pub sigma_pair: Option<SigmaPairResult>,
    /// Relative L²(H¹) distance between the minimisers at the largest and the
    /// smallest ε.
    pub eps_span_distance: Option<f64>,
    pub partial: bool,
    /// Members whose minimisation did not converge.
    pub failed: Vec<f64>,
}

impl SweepReport {
    /// `d_{i+1} / d_i` for the L²(H¹) distances.
    pub fn ratios(&self) -> Vec<f64> {
        self.entries
            .windows(2)
            .map(|w| w[1].distances.l2_h1 / w[0].distances.l2_h1)
            .collect()
    }
}

fn solve(
    cfg: &SweepConfig,
    params: &WideParams,
    steps: usize,
) -> Result<(Trajectory, MinimizeReport)> {
    let u0 = prepare_initial_datum(&cfg.datum, params, cfg.c0)?;
    let init = Trajectory::constant(&u0, cfg.tau, steps)?;
    minimize_global(&init, params, &cfg.minimize)
}

fn member(cfg: &SweepConfig, eps: f64, steps: usize, reference: &Trajectory) -> Result<SweepEntry> {
    let params = cfg.base.with_epsilon(eps);
    let (traj, report) = solve(cfg, &params, steps)?;
    let last = window_end(steps, 1.0 - cfg.obs_fraction);
    Ok(SweepEntry {
        epsilon: eps,
        distances: relative_distances(&traj, reference, last),
        breakdown: report.breakdown,
        energy: energy_report(&traj, &params, cfg.tol_energy, cfg.obs_fraction),
        apriori: apriori_bounds(&traj, &params, cfg.el.s),
        el: el_report(&traj, &params, &cfg.el)?,
        minimize: report,
        trajectory: traj,
    })
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 1 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Minimises at every ε, compares with the projection-solver reference from
/// the projected datum, and evaluates all diagnostics.
pub fn epsilon_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let steps = cfg.steps()?;
    let reference = projection_solve_with(
        &leray_project(&cfg.datum),
        cfg.base.nu,
        cfg.tau,
        steps,
        &ReferenceOptions {
            convection: cfg.base.convection,
            substeps: cfg.reference_substeps,
        },
    )?;
    let last = window_end(steps, 1.0 - cfg.obs_fraction);
    let results: Vec<Result<SweepEntry>> = in_pool(cfg.workers, || {
        let run = |&eps: &f64| member(cfg, eps, steps, &reference.trajectory);
        if cfg.workers == 1 {
            cfg.eps_list.iter().map(run).collect()
        } else {
            cfg.eps_list.par_iter().map(run).collect()
        }
    })?;
    let mut entries = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (eps, r) in cfg.eps_list.iter().zip(results) {
        match r {
            Ok(e) => {
                if !e.minimize.converged {
                    failed.push(*eps);
                }
                entries.push(e);
            }
            Err(Error::NonFinite { .. }) => failed.push(*eps),
            Err(e) => return Err(e),
        }
    }
    let trend_ok = entries
        .windows(2)
        .all(|w| w[1].distances.l2_h1 <= (1.0 + cfg.trend_slack) * w[0].distances.l2_h1);

    let sigma_pair = match cfg.sigma_pair {
        Some((sa, sb)) => {
            let pair_distance = |eps: f64| -> Result<(f64, bool)> {
                let run = |sigma: f64| -> Result<(Trajectory, bool)> {
                    let params = cfg.base.with_epsilon(eps).with_sigma(sigma);
                    match entries
                        .iter()
                        .find(|e| e.epsilon == eps && cfg.base.sigma == sigma)
                    {
                        Some(e) => Ok((e.trajectory.clone(), e.minimize.converged)),
                        None => {
                            let (t, r) = solve(cfg, &params, steps)?;
                            Ok((t, r.converged))
                        }
                    }
                };
                let (a, ca) = run(sa)?;
                let (b, cb) = run(sb)?;
                Ok((relative_distances(&b, &a, last).l2_h1, ca && cb))
            };
            let smallest = *cfg.eps_list.last().expect("nonempty");
            let (d_small, c_small) = pair_distance(smallest)?;
            let (d_large, c_large) = if cfg.sigma_pair_at_largest {
                let (d, c) = pair_distance(cfg.eps_list[0])?;
                (Some(d), c)
            } else {
                (None, true)
            };
            Some(SigmaPairResult {
                sigma_a: sa,
                sigma_b: sb,
                distance_smallest: d_small,
                distance_largest: d_large,
                converged: c_small && c_large,
            })
        }
        None => None,
    };
    if let Some(sp) = &sigma_pair {
        if !sp.converged {
            failed.push(*cfg.eps_list.last().expect("nonempty"));
        }
    }
    let eps_span_distance = (entries.len() >= 2).then(|| {
        let first = &entries[0].trajectory;
        let lastt = &entries[entries.len() - 1].trajectory;
        relative_distances(first, lastt, last).l2_h1
    });
    failed.dedup();
    Ok(SweepReport {
        partial: !failed.is_empty(),
        entries,
        reference,
        trend_ok,
        sigma_pair,
        eps_span_distance,
        failed,
    })
}
