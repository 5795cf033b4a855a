//! Velocity fields on the periodic torus and the operators acting on them.

mod ops;
pub(crate) mod spectral;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub(crate) use ops::ConvectionState;
pub use ops::{
    advect, advect_adjoint, advect_linearized, divergence, inner_product, leray_project,
    sobolev_norm, stokes_apply, stokes_pairing_quadrature, truncate_dealias,
};
pub use spectral::Spectrum;

/// Order `s` of a periodic Sobolev space `H^s`; negative orders give dual norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0.0);
    pub const H1: SobolevIndex = SobolevIndex(1.0);
}

/// Real vector field sampled on a [`GridSpec`], one row-major array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
}

impl VelocityField {
    pub fn zeros(grid: GridSpec) -> Self {
        VelocityField {
            grid,
            components: vec![vec![0.0; grid.points()]; grid.dim],
        }
    }

    pub fn from_components(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        grid.validate()?;
        if components.len() != grid.dim {
            return Err(Error::GridMismatch(format!(
                "expected {} components, got {}",
                grid.dim,
                components.len()
            )));
        }
        if let Some(c) = components.iter().find(|c| c.len() != grid.points()) {
            return Err(Error::GridMismatch(format!(
                "component has {} values, grid has {} points",
                c.len(),
                grid.points()
            )));
        }
        Ok(VelocityField { grid, components })
    }

    /// Samples `f(x)` at every grid point; only the first `dim` outputs are used.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = VelocityField::zeros(grid);
        for idx in 0..grid.points() {
            let v = f(grid.coordinates(idx));
            for (c, x) in out.components.iter_mut().zip(v) {
                c[idx] = x;
            }
        }
        out
    }

    /// Divergence-free, mean-zero field with independent Gaussian Fourier
    /// coefficients on `0 < |k| <= k_cut`, scaled to unit max norm times `amplitude`.
    pub fn random(grid: GridSpec, k_cut: f64, amplitude: f64, seed: u64) -> Self {
        let plan = spectral::plan(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut comps: Vec<Spectrum> = (0..grid.dim)
            .map(|_| {
                plan.modes
                    .k2
                    .iter()
                    .map(|&k2| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        if k2 > 0.0 && k2 <= k_cut * k_cut {
                            Complex64::new(re, im)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        plan.project(&mut comps);
        let mut out = VelocityField::from_spectra(grid, &comps);
        let m = out.max_abs();
        if m > 0.0 {
            out.scale(amplitude / m);
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn means(&self) -> Vec<f64> {
        let np = self.grid.points() as f64;
        self.components
            .iter()
            .map(|c| c.iter().sum::<f64>() / np)
            .collect()
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.components {
            for x in c.iter_mut() {
                *x *= a;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &VelocityField) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            for (x, y) in c.iter_mut().zip(o) {
                *x += a * y;
            }
        }
    }

    pub fn sub(&self, other: &VelocityField) -> VelocityField {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).sqrt()
    }

    /// Spectral gradient, `out[i * dim + j] = ∂_j u_i`.
    pub fn gradient(&self) -> Vec<Vec<f64>> {
        let plan = spectral::plan(&self.grid);
        let dim = self.grid.dim;
        let mut out = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            let hat = plan.forward(&self.components[i]);
            for j in 0..dim {
                out.push(plan.inverse_real(&plan.derivative(&hat, j)));
            }
        }
        out
    }

    pub(crate) fn spectra(&self) -> Vec<Spectrum> {
        let plan = spectral::plan(&self.grid);
        self.components.iter().map(|c| plan.forward(c)).collect()
    }

    pub(crate) fn from_spectra(grid: GridSpec, comps: &[Spectrum]) -> Self {
        let plan = spectral::plan(&grid);
        VelocityField {
            grid,
            components: comps.iter().map(|c| plan.inverse_real(c)).collect(),
        }
    }
}

/// Real scalar field on a [`GridSpec`] (divergence, pressure).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}
