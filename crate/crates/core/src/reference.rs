//! Ground truth: exact Taylor-Green vortices, an exact Stokes solver, and a
//! semi-implicit projection solver for the Navier-Stokes equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::spectral;
use crate::field::{advect, VelocityField};
use crate::functional::Trajectory;
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactKind {
    TaylorGreen2d,
}

/// A closed-form solution of the periodic Navier-Stokes equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactSolutionSpec {
    pub kind: ExactKind,
    pub amplitude: f64,
    pub viscosity: f64,
}

impl ExactSolutionSpec {
    pub fn taylor_green(amplitude: f64, viscosity: f64) -> Self {
        ExactSolutionSpec {
            kind: ExactKind::TaylorGreen2d,
            amplitude,
            viscosity,
        }
    }

    pub fn evaluate(&self, t: f64, grid: GridSpec) -> Result<VelocityField> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParams(format!(
                "amplitude must be finite, got {}",
                self.amplitude
            )));
        }
        match self.kind {
            ExactKind::TaylorGreen2d => {
                Ok(taylor_green(t, grid, self.viscosity)?.scaled(self.amplitude))
            }
        }
    }

    pub fn trajectory(&self, grid: GridSpec, tau: f64, steps: usize) -> Result<Trajectory> {
        let slices = (0..=steps)
            .map(|n| self.evaluate(tau * n as f64, grid))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(grid, tau, slices)
    }
}

/// `e^{-2νt} (sin x cos y, −cos x sin y)` on a 2D grid.
pub fn taylor_green(t: f64, grid: GridSpec, nu: f64) -> Result<VelocityField> {
    if grid.dim != 2 {
        return Err(Error::Unsupported(format!(
            "the Taylor-Green vortex is two-dimensional, grid has dimension {}",
            grid.dim
        )));
    }
    let decay = (-2.0 * nu * t).exp();
    Ok(VelocityField::from_fn(grid, |x| {
        [
            decay * x[0].sin() * x[1].cos(),
            -decay * x[0].cos() * x[1].sin(),
            0.0,
        ]
    }))
}

/// Exact heat-semigroup evolution `û(k) e^{-ν|k|²t}`.
pub fn stokes_solve(u0: &VelocityField, nu: f64, t: f64) -> VelocityField {
    if t == 0.0 {
        return u0.clone();
    }
    let plan = spectral::plan(u0.grid());
    let mut comps = u0.spectra();
    for c in &mut comps {
        for (z, &k2) in c.iter_mut().zip(&plan.modes.k2) {
            *z *= (-nu * k2 * t).exp();
        }
    }
    VelocityField::from_spectra(*u0.grid(), &comps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    /// Include the convection term (off gives the Stokes problem).
    pub convection: bool,
    /// Internal steps per output interval.
    pub substeps: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            convection: true,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub trajectory: Trajectory,
    /// Largest `max|u| τ n / (2π)` over all internal steps.
    pub max_cfl: f64,
    /// True when `max_cfl` exceeded 0.5.
    pub cfl_warning: bool,
}

/// Semi-implicit projection scheme with one internal step per output slice.
pub fn projection_solve(
    u0: &VelocityField,
    nu: f64,
    tau: f64,
    steps: usize,
) -> Result<ReferenceRun> {
    projection_solve_with(u0, nu, tau, steps, &ReferenceOptions::default())
}

/// `û ← e^{-ν|k|²δ} (û − δ P(u·∇u)^)` with `δ = τ / substeps`, explicit
/// dealiased convection and exact integrating factor for the diffusion.
pub fn projection_solve_with(
    u0: &VelocityField,
    nu: f64,
    tau: f64,
    steps: usize,
    opts: &ReferenceOptions,
) -> Result<ReferenceRun> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "viscosity must be nonnegative, got {nu}"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParams(format!(
            "time step must be positive, got {tau}"
        )));
    }
    if opts.substeps == 0 {
        return Err(Error::InvalidParams("substeps must be at least 1".into()));
    }
    let grid = *u0.grid();
    let plan = spectral::plan(&grid);
    let delta = tau / opts.substeps as f64;
    let factor: Vec<f64> = plan
        .modes
        .k2
        .iter()
        .map(|&k2| (-nu * k2 * delta).exp())
        .collect();
    let cfl_scale = delta * grid.n as f64 / grid.domain_length;
    let mut hat = u0.spectra();
    plan.project(&mut hat);
    let mut current = VelocityField::from_spectra(grid, &hat);
    let mut slices = Vec::with_capacity(steps + 1);
    slices.push(current.clone());
    let mut max_cfl: f64 = 0.0;
    for _ in 0..steps {
        for _ in 0..opts.substeps {
            max_cfl = max_cfl.max(current.max_abs() * cfl_scale);
            if opts.convection {
                let mut conv = advect(&current).spectra();
                plan.project(&mut conv);
                for (h, c) in hat.iter_mut().zip(&conv) {
                    for (x, y) in h.iter_mut().zip(c) {
                        *x -= y * delta;
                    }
                }
            }
            for h in hat.iter_mut() {
                for (x, f) in h.iter_mut().zip(&factor) {
                    *x *= f;
                }
            }
            current = VelocityField::from_spectra(grid, &hat);
        }
        slices.push(current.clone());
    }
    Ok(ReferenceRun {
        trajectory: Trajectory::new(grid, tau, slices)?,
        max_cfl,
        cfl_warning: max_cfl > 0.5,
    })
}
