use rustfft::num_complex::Complex64;

use super::spectral::{self, Plan, Spectrum};
use super::{ScalarField, SobolevIndex, VelocityField};
use crate::grid::GridSpec;

fn same_grid(a: &VelocityField, b: &VelocityField) {
    if let Err(e) = a.grid().same_as(b.grid()) {
        panic!("{e}");
    }
}

/// Leray projection onto mean-free, divergence-free fields.
pub fn leray_project(f: &VelocityField) -> VelocityField {
    let plan = spectral::plan(f.grid());
    let mut comps = f.spectra();
    plan.project(&mut comps);
    VelocityField::from_spectra(*f.grid(), &comps)
}

/// Spectral truncation to the dealiased mode set.
pub fn truncate_dealias(f: &VelocityField) -> VelocityField {
    let plan = spectral::plan(f.grid());
    let mut comps = f.spectra();
    for c in &mut comps {
        plan.truncate(c);
    }
    VelocityField::from_spectra(*f.grid(), &comps)
}

/// Dealiased convection `u·∇u`, evaluated as `T[(Tu)·∇(Tu)]` with `T` the
/// dealiasing truncation.
pub fn advect(u: &VelocityField) -> VelocityField {
    ConvectionState::new(u).value().clone()
}

/// Derivative of [`advect`] at `u` in direction `phi`.
pub fn advect_linearized(u: &VelocityField, phi: &VelocityField) -> VelocityField {
    same_grid(u, phi);
    ConvectionState::new(u).linearized(phi)
}

/// L²-adjoint of [`advect_linearized`] at `u`, applied to `m`.
pub fn advect_adjoint(u: &VelocityField, m: &VelocityField) -> VelocityField {
    same_grid(u, m);
    let state = ConvectionState::new(u);
    VelocityField::from_spectra(*u.grid(), &state.adjoint_spectra(m))
}

/// Stokes operator `Au = -Δu` (spectral; the Nyquist plane is dropped).
pub fn stokes_apply(u: &VelocityField) -> VelocityField {
    let plan = spectral::plan(u.grid());
    let mut comps = u.spectra();
    for c in &mut comps {
        for (idx, z) in c.iter_mut().enumerate() {
            *z = if plan.modes.nyquist[idx] {
                Complex64::new(0.0, 0.0)
            } else {
                *z * plan.modes.k2[idx]
            };
        }
    }
    VelocityField::from_spectra(*u.grid(), &comps)
}

/// `(Σ_k (1+|k|²)^s |f̂(k)|²)^{1/2}`, normalised so that `s = 0` is the L² norm.
pub fn sobolev_norm(f: &VelocityField, s: SobolevIndex) -> f64 {
    let plan = spectral::plan(f.grid());
    spectra_sobolev_norm(&plan, &f.spectra(), s.0)
}

pub(crate) fn spectra_sobolev_norm(plan: &Plan, comps: &[Spectrum], s: f64) -> f64 {
    if s == 0.0 {
        return (plan.norm_factor() * plan.sum_sq(comps)).sqrt();
    }
    let weights: Vec<f64> = plan.modes.k2.iter().map(|&k2| (1.0 + k2).powf(s)).collect();
    let total: f64 = comps
        .iter()
        .map(|c| {
            c.iter()
                .zip(&weights)
                .map(|(z, w)| w * z.norm_sqr())
                .sum::<f64>()
        })
        .sum();
    (plan.norm_factor() * total).sqrt()
}

/// Discrete L² inner product with cell-volume weighting.
pub fn inner_product(f: &VelocityField, g: &VelocityField) -> f64 {
    same_grid(f, g);
    let dot: f64 = f
        .components()
        .iter()
        .zip(g.components())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    dot * f.grid().cell_volume()
}

/// `∫ ∇u : ∇ψ` by grid quadrature of spectral gradients.
pub fn stokes_pairing_quadrature(u: &VelocityField, psi: &VelocityField) -> f64 {
    same_grid(u, psi);
    let gu = u.gradient();
    let gp = psi.gradient();
    let dot: f64 = gu
        .iter()
        .zip(&gp)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    dot * u.grid().cell_volume()
}

/// Spectral divergence.
pub fn divergence(u: &VelocityField) -> ScalarField {
    let plan = spectral::plan(u.grid());
    let comps = u.spectra();
    let mut acc = vec![Complex64::new(0.0, 0.0); u.grid().points()];
    for (axis, c) in comps.iter().enumerate() {
        for (a, d) in acc.iter_mut().zip(plan.derivative(c, axis)) {
            *a += d;
        }
    }
    ScalarField {
        grid: *u.grid(),
        values: plan.inverse_real(&acc),
    }
}

/// Truncated velocity and its gradient on the grid, shared by the value,
/// linearisation and adjoint of the convection term at one state `u`.
pub(crate) struct ConvectionState {
    grid: GridSpec,
    tu: Vec<Vec<f64>>,
    /// `grad[i * dim + j] = ∂_j (Tu)_i`
    grad: Vec<Vec<f64>>,
    value: VelocityField,
}

impl ConvectionState {
    pub fn new(u: &VelocityField) -> Self {
        let grid = *u.grid();
        let plan = spectral::plan(&grid);
        let (tu, grad) = truncated_with_gradient(&plan, u);
        let dim = grid.dim;
        let np = grid.points();
        let mut prod = vec![vec![0.0; np]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let (g, t) = (&grad[i * dim + j], &tu[j]);
                for p in 0..np {
                    prod[i][p] += t[p] * g[p];
                }
            }
        }
        let value = truncate_grid(&plan, grid, &prod);
        ConvectionState {
            grid,
            tu,
            grad,
            value,
        }
    }

    pub fn value(&self) -> &VelocityField {
        &self.value
    }

    /// `T[Tφ·∇Tu + Tu·∇Tφ]`
    pub fn linearized(&self, phi: &VelocityField) -> VelocityField {
        let plan = spectral::plan(&self.grid);
        let dim = self.grid.dim;
        let np = self.grid.points();
        let (tp, gp) = truncated_with_gradient(&plan, phi);
        let mut prod = vec![vec![0.0; np]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let (gu, gphi) = (&self.grad[i * dim + j], &gp[i * dim + j]);
                let (tphi, tuj) = (&tp[j], &self.tu[j]);
                for p in 0..np {
                    prod[i][p] += tphi[p] * gu[p] + tuj[p] * gphi[p];
                }
            }
        }
        truncate_grid(&plan, self.grid, &prod)
    }

    fn truncated(&self, m: &VelocityField) -> Vec<Vec<f64>> {
        let plan = spectral::plan(&self.grid);
        m.components()
            .iter()
            .map(|c| {
                let mut s = plan.forward(c);
                plan.truncate(&mut s);
                plan.inverse_real(&s)
            })
            .collect()
    }

    /// Unprojected spectra of `(∇Tu)ᵀ Tm` (before the final truncation).
    fn transpose_term(&self, tm: &[Vec<f64>]) -> Vec<Spectrum> {
        let plan = spectral::plan(&self.grid);
        let dim = self.grid.dim;
        let np = self.grid.points();
        (0..dim)
            .map(|j| {
                let mut a = vec![0.0; np];
                for (i, t) in tm.iter().enumerate().take(dim) {
                    let g = &self.grad[i * dim + j];
                    for ((acc, gp), tp) in a.iter_mut().zip(g).zip(t) {
                        *acc += gp * tp;
                    }
                }
                plan.forward(&a)
            })
            .collect()
    }

    /// Spectra of `div(Tm ⊗ Tu)`, component `i` being `Σ_j ∂_j(Tm_i Tu_j)`.
    fn flux_divergence(&self, tm: &[Vec<f64>]) -> Vec<Spectrum> {
        let plan = spectral::plan(&self.grid);
        let dim = self.grid.dim;
        (0..dim)
            .map(|i| {
                let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.points()];
                for j in 0..dim {
                    let flux: Vec<f64> =
                        tm[i].iter().zip(&self.tu[j]).map(|(x, y)| x * y).collect();
                    for (a, d) in acc.iter_mut().zip(plan.derivative(&plan.forward(&flux), j)) {
                        *a += d;
                    }
                }
                acc
            })
            .collect()
    }

    /// `T[(∇Tu)ᵀ Tm]` as a field.
    pub fn transpose_gradient_field(&self, m: &VelocityField) -> VelocityField {
        let plan = spectral::plan(&self.grid);
        let mut s = self.transpose_term(&self.truncated(m));
        s.iter_mut().for_each(|c| plan.truncate(c));
        VelocityField::from_spectra(self.grid, &s)
    }

    /// `-T div(Tm ⊗ Tu)` as a field.
    pub fn flux_divergence_field(&self, m: &VelocityField) -> VelocityField {
        let plan = spectral::plan(&self.grid);
        let mut s = self.flux_divergence(&self.truncated(m));
        for c in &mut s {
            plan.truncate(c);
            c.iter_mut().for_each(|z| *z = -*z);
        }
        VelocityField::from_spectra(self.grid, &s)
    }

    /// Grid values of the flux tensor `Tm ⊗ Tu`, entry `i * dim + j` = `Tm_i Tu_j`.
    pub fn flux(&self, m: &VelocityField) -> Vec<Vec<f64>> {
        let tm = self.truncated(m);
        let dim = self.grid.dim;
        let mut out = Vec::with_capacity(dim * dim);
        for t in &tm {
            for u in &self.tu {
                out.push(t.iter().zip(u).map(|(x, y)| x * y).collect());
            }
        }
        out
    }

    /// Spectra of `T[(∇Tu)ᵀ Tm − div(Tm ⊗ Tu)]`.
    pub fn adjoint_spectra(&self, m: &VelocityField) -> Vec<Spectrum> {
        let plan = spectral::plan(&self.grid);
        let tm = self.truncated(m);
        let mut out = self.transpose_term(&tm);
        for (o, d) in out.iter_mut().zip(self.flux_divergence(&tm)) {
            for (x, y) in o.iter_mut().zip(d) {
                *x -= y;
            }
            plan.truncate(o);
        }
        out
    }
}

fn truncated_with_gradient(plan: &Plan, u: &VelocityField) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = u.dim();
    let mut tu = Vec::with_capacity(dim);
    let mut grad = Vec::with_capacity(dim * dim);
    for c in u.components() {
        let mut s = plan.forward(c);
        plan.truncate(&mut s);
        for j in 0..dim {
            grad.push(plan.inverse_real(&plan.derivative(&s, j)));
        }
        tu.push(plan.inverse_real(&s));
    }
    (tu, grad)
}

fn truncate_grid(plan: &Plan, grid: GridSpec, comps: &[Vec<f64>]) -> VelocityField {
    let spectra: Vec<Spectrum> = comps
        .iter()
        .map(|c| {
            let mut s = plan.forward(c);
            plan.truncate(&mut s);
            s
        })
        .collect();
    VelocityField::from_spectra(grid, &spectra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tg(grid: GridSpec) -> VelocityField {
        VelocityField::from_fn(grid, |x| {
            [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
        })
    }

    fn max_diff(a: &VelocityField, b: &VelocityField) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn gradient_field_projects_to_zero() {
        let grid = GridSpec::new(2, 16).unwrap();
        let f = VelocityField::from_fn(grid, |x| [-x[0].sin(), 0.0, 0.0]);
        assert!(leray_project(&f).max_abs() < 1e-14);
    }

    #[test]
    fn taylor_green_is_fixed_by_projection() {
        let grid = GridSpec::new(2, 16).unwrap();
        let u = tg(grid);
        assert!(max_diff(&leray_project(&u), &u) < 1e-14);
    }

    #[test]
    fn taylor_green_convection_is_a_gradient() {
        let grid = GridSpec::new(2, 32).unwrap();
        let u = tg(grid);
        let b = advect(&u);
        let expected = VelocityField::from_fn(grid, |x| {
            [0.5 * (2.0 * x[0]).sin(), 0.5 * (2.0 * x[1]).sin(), 0.0]
        });
        assert!(max_diff(&b, &expected) < 1e-13);
        assert!(leray_project(&b).max_abs() < 1e-13);
    }

    #[test]
    fn convection_matches_finite_differences_on_fine_grid() {
        // independent oracle: second-order central differences at n = 256
        let n = 256;
        let h = 2.0 * PI / n as f64;
        let grid = GridSpec::new(2, 32).unwrap();
        let b = advect(&tg(grid));
        let field = |x: f64, y: f64| [x.sin() * y.cos(), -x.cos() * y.sin()];
        let mut err: f64 = 0.0;
        for i in (0..n).step_by(8) {
            for j in (0..n).step_by(8) {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let u = field(x, y);
                let dx = |c: usize| (field(x + h, y)[c] - field(x - h, y)[c]) / (2.0 * h);
                let dy = |c: usize| (field(x, y + h)[c] - field(x, y - h)[c]) / (2.0 * h);
                let fd = [u[0] * dx(0) + u[1] * dy(0), u[0] * dx(1) + u[1] * dy(1)];
                let idx = (i / 8) * 32 + j / 8;
                err = err.max((fd[0] - b.component(0)[idx]).abs());
                err = err.max((fd[1] - b.component(1)[idx]).abs());
            }
        }
        assert!(err < 1e-3, "fd mismatch {err}");
    }

    #[test]
    fn stokes_operator_on_taylor_green() {
        let grid = GridSpec::new(2, 16).unwrap();
        let u = tg(grid);
        assert!(max_diff(&stokes_apply(&u), &u.scaled(2.0)) < 1e-13);
        assert!(stokes_apply(&VelocityField::zeros(grid)).is_zero());
    }

    #[test]
    fn sobolev_norms_of_single_mode() {
        let grid = GridSpec::new(2, 16).unwrap();
        let f = VelocityField::from_fn(grid, |x| [x[0].sin(), 0.0, 0.0]);
        let l2 = (2.0 * PI * PI).sqrt();
        assert!((sobolev_norm(&f, SobolevIndex::L2) - l2).abs() < 1e-12);
        assert!((sobolev_norm(&f, SobolevIndex(-1.0)) - l2 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inner_product_of_taylor_green() {
        let grid = GridSpec::new(2, 16).unwrap();
        let u = tg(grid);
        assert!((inner_product(&u, &u) - 2.0 * PI * PI).abs() < 1e-11);
        assert_eq!(inner_product(&u, &VelocityField::zeros(grid)), 0.0);
    }

    #[test]
    fn adjoint_matches_linearisation() {
        let grid = GridSpec::new(2, 16).unwrap();
        let u = VelocityField::random(grid, 6.0, 1.0, 1);
        let phi = VelocityField::random(grid, 7.0, 1.0, 2);
        let m = VelocityField::random(grid, 7.0, 1.0, 3);
        let lhs = inner_product(&advect_linearized(&u, &phi), &m);
        let rhs = inner_product(&phi, &advect_adjoint(&u, &m));
        assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn divergence_of_projected_field_vanishes() {
        let grid = GridSpec::new(3, 8).unwrap();
        let f = VelocityField::from_fn(grid, |x| {
            [x[0].sin() * x[2].cos(), x[1].cos(), x[0] * 0.0 + x[2].sin()]
        });
        let p = leray_project(&f);
        assert!(divergence(&p).max_abs() < 1e-12 * f.max_abs());
    }
}
