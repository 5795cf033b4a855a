use crate::error::{Error, Result};
use crate::field::{divergence, VelocityField};
use crate::grid::GridSpec;

/// Velocity slices `u_0..u_N` at times `t_n = nτ`. Slice 0 is the fixed
/// initial datum and is never an optimisation unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    tau: f64,
    slices: Vec<VelocityField>,
}

impl Trajectory {
    pub fn new(grid: GridSpec, tau: f64, slices: Vec<VelocityField>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParams(format!(
                "time step must be positive, got {tau}"
            )));
        }
        if slices.is_empty() {
            return Err(Error::Input(
                "a trajectory needs at least the initial slice".into(),
            ));
        }
        for s in &slices {
            grid.same_as(s.grid())?;
        }
        Ok(Trajectory { grid, tau, slices })
    }

    /// `u_n = u0` for `n = 0..=steps`.
    pub fn constant(u0: &VelocityField, tau: f64, steps: usize) -> Result<Self> {
        Trajectory::new(*u0.grid(), tau, vec![u0.clone(); steps + 1])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time steps `N`.
    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.tau * n as f64
    }

    pub fn slices(&self) -> &[VelocityField] {
        &self.slices
    }

    pub fn slice(&self, n: usize) -> &VelocityField {
        &self.slices[n]
    }

    pub fn initial(&self) -> &VelocityField {
        &self.slices[0]
    }

    pub fn last(&self) -> &VelocityField {
        &self.slices[self.steps()]
    }

    #[cfg(test)]
    pub(crate) fn slices_mut(&mut self) -> &mut [VelocityField] {
        &mut self.slices
    }

    pub fn into_slices(self) -> Vec<VelocityField> {
        self.slices
    }

    /// Largest slice-wise divergence relative to the largest velocity.
    pub fn max_relative_divergence(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| {
                let m = s.max_abs();
                if m == 0.0 {
                    0.0
                } else {
                    divergence(s).max_abs() / m
                }
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        self.grid.same_as(&other.grid)?;
        if self.steps() != other.steps() || self.tau != other.tau {
            return Err(Error::GridMismatch(format!(
                "time grids differ: {} steps of {} vs {} steps of {}",
                self.steps(),
                self.tau,
                other.steps(),
                other.tau
            )));
        }
        Ok(())
    }
}
