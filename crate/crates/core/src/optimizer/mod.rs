//! Minimisation of the discrete functional over whole trajectories, and the
//! causal one-slab-at-a-time scheme.

mod lbfgs;

use std::time::Instant;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

pub use lbfgs::LineSearchOptions;

use crate::error::{Error, Result};
use crate::field::spectral::{self, Spectrum};
use crate::field::{inner_product, ConvectionState, VelocityField};
use crate::functional::{
    combine, eval_functional, Assembly, FunctionalBreakdown, TimeWeights, Trajectory, WideParams,
};
use crate::grid::GridSpec;
use lbfgs::{Objective, Settings};

/// Approximate inverse Hessian used as the initial quasi-Newton metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    /// Scale slice `n` by the reciprocal of its total time weight.
    TimeWeight,
    /// Exact inverse of the Stokes part of the Hessian, one tridiagonal
    /// solve in time per Fourier mode.
    #[default]
    SpaceTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Threshold on the weight-normalised gradient norm.
    pub grad_tol: f64,
    /// Number of stored quasi-Newton pairs.
    pub memory: usize,
    pub line_search: LineSearchOptions,
    pub preconditioner: Preconditioner,
    /// Store wall-clock time in the report (off keeps reports reproducible).
    pub record_timing: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 500,
            grad_tol: 1e-7,
            memory: 10,
            line_search: LineSearchOptions::default(),
            preconditioner: Preconditioner::SpaceTime,
            record_timing: false,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.memory == 0 {
            return Err(Error::InvalidParams("memory must be at least 1".into()));
        }
        self.line_search.validate()
    }

    fn settings(&self) -> Settings {
        Settings {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            memory: self.memory,
            line_search: self.line_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub breakdown: FunctionalBreakdown,
    pub grad_norm: f64,
    pub converged: bool,
    pub seconds: Option<f64>,
    pub message: String,
}

impl Serialize for MinimizeReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Record {
            iters: usize,
            total: f64,
            grad_norm: f64,
            converged: bool,
            seconds: Option<f64>,
        }
        Record {
            iters: self.iterations,
            total: self.breakdown.total,
            grad_norm: self.grad_norm,
            converged: self.converged,
            seconds: self.seconds,
        }
        .serialize(s)
    }
}

fn flatten<'a>(fields: impl Iterator<Item = &'a VelocityField>) -> Vec<f64> {
    fields
        .flat_map(|f| f.components().iter().flatten().copied())
        .collect()
}

fn unflatten(grid: GridSpec, x: &[f64]) -> Vec<VelocityField> {
    let np = grid.points();
    x.chunks(grid.dim * np)
        .map(|chunk| {
            let comps = chunk.chunks(np).map(<[f64]>::to_vec).collect();
            VelocityField::from_components(grid, comps).expect("chunk sizes match the grid")
        })
        .collect()
}

/// Global objective over slices `1..=N`.
struct GlobalObjective<'a> {
    params: &'a WideParams,
    grid: GridSpec,
    tau: f64,
    u0: &'a VelocityField,
    weights: TimeWeights,
    preconditioner: Preconditioner,
}

impl GlobalObjective<'_> {
    fn trajectory(&self, x: &[f64]) -> Trajectory {
        let mut slices = Vec::with_capacity(self.weights.steps() + 1);
        slices.push(self.u0.clone());
        slices.extend(unflatten(self.grid, x));
        Trajectory::new(self.grid, self.tau, slices).expect("slices share the grid")
    }

    fn slice_len(&self) -> usize {
        self.grid.dim * self.grid.points()
    }

    fn space_time_solve(&self, g: &[f64]) -> Vec<f64> {
        let plan = spectral::plan(&self.grid);
        let dim = self.grid.dim;
        let np = self.grid.points();
        let steps = self.weights.steps();
        let spectra: Vec<Vec<Spectrum>> = g
            .par_chunks(self.slice_len())
            .map(|chunk| chunk.chunks(np).map(|c| plan.forward(c)).collect())
            .collect();
        let w = &self.weights;
        let tau2 = self.tau * self.tau;
        let visc = self.params.nu / self.params.epsilon;
        // mode-major solutions: solved[idx][n * dim + a]
        let solved: Vec<Vec<Complex64>> = (0..np)
            .into_par_iter()
            .map(|idx| {
                let mut out = vec![Complex64::new(0.0, 0.0); steps * dim];
                if plan.modes.nyquist[idx] {
                    return out;
                }
                let lambda = plan.modes.k2[idx];
                let diag = |n: usize| {
                    let next = if n < steps { w.average[n + 1] } else { 0.0 };
                    (w.average[n] + next) / tau2 + visc * w.hat[n] * lambda
                };
                let off = |n: usize| -w.average[n + 1] / tau2;
                let mut cp = vec![0.0; steps + 1];
                let mut denom = vec![0.0; steps + 1];
                for n in 1..=steps {
                    let sub = if n > 1 { off(n - 1) } else { 0.0 };
                    denom[n] = diag(n) - sub * cp[n - 1];
                    cp[n] = if n < steps { off(n) / denom[n] } else { 0.0 };
                }
                for a in 0..dim {
                    let mut dp = vec![Complex64::new(0.0, 0.0); steps + 1];
                    for n in 1..=steps {
                        let sub = if n > 1 { off(n - 1) } else { 0.0 };
                        dp[n] = (spectra[n - 1][a][idx] - dp[n - 1] * sub) / denom[n];
                    }
                    let mut x = dp[steps];
                    out[(steps - 1) * dim + a] = x;
                    for n in (1..steps).rev() {
                        x = dp[n] - x * cp[n];
                        out[(n - 1) * dim + a] = x;
                    }
                }
                out
            })
            .collect();
        let mut result = vec![0.0; g.len()];
        result
            .par_chunks_mut(self.slice_len())
            .enumerate()
            .for_each(|(n, chunk)| {
                for (a, comp) in chunk.chunks_mut(np).enumerate() {
                    let spec: Spectrum = (0..np).map(|idx| solved[idx][n * dim + a]).collect();
                    comp.copy_from_slice(&plan.inverse_real(&spec));
                }
            });
        result
    }
}

impl Objective for GlobalObjective<'_> {
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let asm = Assembly::new(&self.trajectory(x), self.params)?;
        let f = asm.breakdown().total;
        let g = flatten(asm.gradient()[1..].iter());
        Ok((f, g))
    }

    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        match self.preconditioner {
            Preconditioner::None => g.to_vec(),
            Preconditioner::TimeWeight => g
                .chunks(self.slice_len())
                .enumerate()
                .flat_map(|(i, c)| {
                    let h = self.weights.hat[i + 1];
                    c.iter().map(move |v| v / h)
                })
                .collect(),
            Preconditioner::SpaceTime => self.space_time_solve(g),
        }
    }

    fn stop_norm(&self, g: &[f64]) -> f64 {
        let sum: f64 = g
            .chunks(self.slice_len())
            .enumerate()
            .map(|(i, c)| c.iter().map(|v| v * v).sum::<f64>() / self.weights.hat[i + 1].powi(2))
            .sum();
        (self.tau * self.grid.cell_volume() * sum).sqrt()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        s * self.tau * self.grid.cell_volume()
    }
}

/// Weight-normalised gradient norm `(Σ_n τ ‖g_n / h_n‖²)^{1/2}` at `traj`.
pub fn stationarity_norm(traj: &Trajectory, params: &WideParams) -> Result<f64> {
    let asm = Assembly::new(traj, params)?;
    let g = asm.gradient();
    let sum: f64 = (1..=asm.steps())
        .map(|n| inner_product(&g[n], &g[n]) / asm.weights.hat[n].powi(2))
        .sum();
    Ok((traj.tau() * sum).sqrt())
}

/// Minimises the functional over slices `1..=N` with slice 0 held fixed.
pub fn minimize_global(
    init: &Trajectory,
    params: &WideParams,
    opts: &MinimizeOptions,
) -> Result<(Trajectory, MinimizeReport)> {
    params.validate()?;
    opts.validate()?;
    let start = Instant::now();
    let steps = init.steps();
    if steps == 0 {
        let report = MinimizeReport {
            iterations: 0,
            breakdown: FunctionalBreakdown::default(),
            grad_norm: 0.0,
            converged: true,
            seconds: opts.record_timing.then(|| start.elapsed().as_secs_f64()),
            message: "no unknown slices".into(),
        };
        return Ok((init.clone(), report));
    }
    let obj = GlobalObjective {
        params,
        grid: *init.grid(),
        tau: init.tau(),
        u0: init.initial(),
        weights: TimeWeights::new(params, init.tau(), steps),
        preconditioner: opts.preconditioner,
    };
    let x0 = flatten(init.slices()[1..].iter());
    let out = lbfgs::minimize(&obj, x0, &opts.settings())?;
    let traj = obj.trajectory(&out.x);
    let breakdown = eval_functional(&traj, params)?;
    let report = MinimizeReport {
        iterations: out.iterations,
        breakdown,
        grad_norm: out.grad_norm,
        converged: out.converged,
        seconds: opts.record_timing.then(|| start.elapsed().as_secs_f64()),
        message: out.message,
    };
    Ok((traj, report))
}

/// One-slab objective of the causal scheme,
/// `τ[½‖(w−u)/τ + w·∇w‖² + σ/2‖w·∇w‖²] + ν/2‖∇w‖² − ν/2‖∇u‖²`.
struct SlabObjective<'a> {
    u_prev: &'a VelocityField,
    params: &'a WideParams,
    tau: f64,
    prev_grad_sq: f64,
}

impl SlabObjective<'_> {
    fn value_and_gradient(&self, w: &VelocityField) -> (f64, VelocityField) {
        let grid = *w.grid();
        let plan = spectral::plan(&grid);
        let p = self.params;
        let state = p.convection.then(|| ConvectionState::new(w));
        let conv = match &state {
            Some(s) => s.value().clone(),
            None => VelocityField::zeros(grid),
        };
        let r = combine(&[
            (1.0 / self.tau, w),
            (-1.0 / self.tau, self.u_prev),
            (1.0, &conv),
        ]);
        let what = w.spectra();
        let grad_sq = plan.norm_factor() * plan.sum_sq_grad(&what);
        let f = self.tau
            * (0.5 * inner_product(&r, &r) + 0.5 * p.sigma * inner_product(&conv, &conv))
            + 0.5 * p.nu * (grad_sq - self.prev_grad_sq);
        let mut g = r.spectra();
        if let Some(s) = &state {
            let m = combine(&[(1.0, &r), (p.sigma, &conv)]);
            for (gc, ac) in g.iter_mut().zip(s.adjoint_spectra(&m)) {
                for (x, y) in gc.iter_mut().zip(ac) {
                    *x += y * self.tau;
                }
            }
        }
        for (gc, uc) in g.iter_mut().zip(&what) {
            for (idx, (x, y)) in gc.iter_mut().zip(uc).enumerate() {
                if !plan.modes.nyquist[idx] {
                    *x += *y * (p.nu * plan.modes.k2[idx]);
                }
            }
        }
        plan.project(&mut g);
        (f, VelocityField::from_spectra(grid, &g))
    }
}

impl Objective for SlabObjective<'_> {
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let grid = *self.u_prev.grid();
        let w = unflatten(grid, x).pop().expect("one slice");
        let (f, g) = self.value_and_gradient(&w);
        Ok((f, g.into_components().into_iter().flatten().collect()))
    }

    fn precondition(&self, g: &[f64]) -> Vec<f64> {
        let grid = *self.u_prev.grid();
        let plan = spectral::plan(&grid);
        let np = grid.points();
        let nu = self.params.nu;
        g.chunks(np)
            .flat_map(|c| {
                let mut s = plan.forward(c);
                for (idx, z) in s.iter_mut().enumerate() {
                    *z /= 1.0 / self.tau + nu * plan.modes.k2[idx];
                }
                plan.inverse_real(&s)
            })
            .collect()
    }

    fn stop_norm(&self, g: &[f64]) -> f64 {
        self.dot(g, g).sqrt()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        s * self.u_prev.grid().cell_volume()
    }
}

/// Outcome of one causal step.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabStep {
    pub field: VelocityField,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Value of the one-slab objective at `w`.
pub fn slab_objective(
    w: &VelocityField,
    u_prev: &VelocityField,
    params: &WideParams,
    tau: f64,
) -> f64 {
    slab(u_prev, params, tau).value_and_gradient(w).0
}

fn slab<'a>(u_prev: &'a VelocityField, params: &'a WideParams, tau: f64) -> SlabObjective<'a> {
    let plan = spectral::plan(u_prev.grid());
    SlabObjective {
        u_prev,
        params,
        tau,
        prev_grad_sq: plan.norm_factor() * plan.sum_sq_grad(&u_prev.spectra()),
    }
}

/// Minimises the one-slab objective starting from `u_prev`, with the full report.
pub fn step_incremental_report(
    u_prev: &VelocityField,
    params: &WideParams,
    tau: f64,
    opts: &MinimizeOptions,
) -> Result<SlabStep> {
    params.validate()?;
    opts.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParams(format!(
            "time step must be positive, got {tau}"
        )));
    }
    let obj = slab(u_prev, params, tau);
    let x0 = flatten(std::iter::once(u_prev));
    let out = lbfgs::minimize(&obj, x0, &opts.settings())?;
    Ok(SlabStep {
        field: unflatten(*u_prev.grid(), &out.x).pop().expect("one slice"),
        objective: out.f,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// One causal step: the minimiser of the one-slab objective.
pub fn step_incremental(
    u_prev: &VelocityField,
    params: &WideParams,
    tau: f64,
    opts: &MinimizeOptions,
) -> Result<VelocityField> {
    Ok(step_incremental_report(u_prev, params, tau, opts)?.field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub steps: usize,
    pub iterations: usize,
    pub max_grad_norm: f64,
    pub converged: bool,
}

/// Folds [`step_incremental`] `steps` times starting from `u0`.
pub fn run_incremental(
    u0: &VelocityField,
    params: &WideParams,
    tau: f64,
    steps: usize,
    opts: &MinimizeOptions,
) -> Result<(Trajectory, IncrementalReport)> {
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push(u0.clone());
    let mut report = IncrementalReport {
        steps,
        iterations: 0,
        max_grad_norm: 0.0,
        converged: true,
    };
    for _ in 0..steps {
        let step = step_incremental_report(slices.last().expect("nonempty"), params, tau, opts)?;
        report.iterations += step.iterations;
        report.max_grad_norm = report.max_grad_norm.max(step.grad_norm);
        report.converged &= step.converged;
        slices.push(step.field);
    }
    Ok((Trajectory::new(*u0.grid(), tau, slices)?, report))
}
