//! The discrete weighted inertia-dissipation-energy functional, its gradient on
//! divergence-free trajectories, and the construction of the initial datum.
//!
//! For slices `u_0..u_N` with `D_n = (u_n - u_{n-1})/τ` and `C_n = u_n·∇u_n`,
//! slab `n` contributes
//!
//! ```text
//! τ { α_n [½‖D_n + C_{n-1}‖² + σ/2 ‖C_{n-1}‖² + ν/(2ε) ‖∇u_{n-1}‖²]
//!   + β_n [½‖D_n + C_n‖²     + σ/2 ‖C_n‖²     + ν/(2ε) ‖∇u_n‖²] }
//! ```
//!
//! where `α_n, β_n` are the exact integrals of `e^{-t/ε}` against the two hat
//! functions of the interval (see [`TimeWeights`]).

mod params;
mod trajectory;
mod weights;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use params::WideParams;
pub use trajectory::Trajectory;
pub use weights::{exp_weights, TimeWeights};

use crate::error::{Error, Result};
use crate::field::spectral::{self, Spectrum};
use crate::field::{inner_product, leray_project, ConvectionState, VelocityField};
use crate::grid::GridSpec;

/// The three weighted parts of the functional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalBreakdown {
    pub inertia: f64,
    pub stabilization: f64,
    pub dissipation: f64,
    pub total: f64,
}

/// `Σ_i c_i f_i`
pub(crate) fn combine(terms: &[(f64, &VelocityField)]) -> VelocityField {
    let mut out = VelocityField::zeros(*terms[0].1.grid());
    for (c, f) in terms {
        if *c != 0.0 {
            out.add_scaled(*c, f);
        }
    }
    out
}

/// Per-slice quantities shared by the value, gradient and Euler-Lagrange terms.
pub(crate) struct Assembly {
    pub params: WideParams,
    pub weights: TimeWeights,
    pub grid: GridSpec,
    pub tau: f64,
    pub spectra: Vec<Vec<Spectrum>>,
    states: Vec<Option<ConvectionState>>,
    /// `C_n`, zero when convection is disabled.
    pub conv: Vec<VelocityField>,
    /// `D_n`, entry 0 is zero.
    pub diff: Vec<VelocityField>,
    /// `‖∇u_n‖²`
    pub grad_sq: Vec<f64>,
}

impl Assembly {
    pub fn new(traj: &Trajectory, params: &WideParams) -> Result<Self> {
        params.validate()?;
        let grid = *traj.grid();
        let plan = spectral::plan(&grid);
        let tau = traj.tau();
        let steps = traj.steps();
        let slices = traj.slices();
        let per_slice: Vec<_> = slices
            .par_iter()
            .map(|u| {
                let hat = u.spectra();
                let grad_sq = plan.norm_factor() * plan.sum_sq_grad(&hat);
                let state = params.convection.then(|| ConvectionState::new(u));
                let conv = match &state {
                    Some(s) => s.value().clone(),
                    None => VelocityField::zeros(grid),
                };
                (hat, grad_sq, state, conv)
            })
            .collect();
        let mut spectra = Vec::with_capacity(steps + 1);
        let mut grad_sq = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut conv = Vec::with_capacity(steps + 1);
        for (h, g, s, c) in per_slice {
            spectra.push(h);
            grad_sq.push(g);
            states.push(s);
            conv.push(c);
        }
        let diff = (0..=steps)
            .map(|n| {
                if n == 0 {
                    VelocityField::zeros(grid)
                } else {
                    combine(&[(1.0 / tau, &slices[n]), (-1.0 / tau, &slices[n - 1])])
                }
            })
            .collect();
        Ok(Assembly {
            params: *params,
            weights: TimeWeights::new(params, tau, steps),
            grid,
            tau,
            spectra,
            states,
            conv,
            diff,
            grad_sq,
        })
    }

    pub fn steps(&self) -> usize {
        self.diff.len() - 1
    }

    pub fn breakdown(&self) -> FunctionalBreakdown {
        let p = &self.params;
        let w = &self.weights;
        let parts: Vec<[f64; 3]> = (1..=self.steps())
            .into_par_iter()
            .map(|n| {
                let rl = combine(&[(1.0, &self.diff[n]), (1.0, &self.conv[n - 1])]);
                let rr = combine(&[(1.0, &self.diff[n]), (1.0, &self.conv[n])]);
                let (a, b) = (w.left[n], w.right[n]);
                let inertia = 0.5 * (a * inner_product(&rl, &rl) + b * inner_product(&rr, &rr));
                let cl = inner_product(&self.conv[n - 1], &self.conv[n - 1]);
                let cr = inner_product(&self.conv[n], &self.conv[n]);
                let stab = 0.5 * p.sigma * (a * cl + b * cr);
                let diss =
                    p.nu / (2.0 * p.epsilon) * (a * self.grad_sq[n - 1] + b * self.grad_sq[n]);
                [self.tau * inertia, self.tau * stab, self.tau * diss]
            })
            .collect();
        let mut out = FunctionalBreakdown::default();
        for [i, s, d] in parts {
            out.inertia += i;
            out.stabilization += s;
            out.dissipation += d;
        }
        out.total = out.inertia + out.stabilization + out.dissipation;
        out
    }

    /// `Q_n = α_n (D_n + C_{n-1}) + β_n (D_n + C_n)` for `1 ≤ n ≤ N`, zero at `N+1`.
    pub fn q(&self, n: usize) -> VelocityField {
        if n > self.steps() {
            return VelocityField::zeros(self.grid);
        }
        let w = &self.weights;
        combine(&[
            (w.average[n], &self.diff[n]),
            (w.left[n], &self.conv[n - 1]),
            (w.right[n], &self.conv[n]),
        ])
    }

    /// `M_n = β_n D_n + α_{n+1} D_{n+1} + (1+σ) h_n C_n`, the field paired with
    /// the linearised convection at slice `n`.
    pub fn m(&self, n: usize) -> VelocityField {
        let w = &self.weights;
        let mut out = self.diff[n].scaled(w.right[n]);
        if n < self.steps() {
            out.add_scaled(w.left[n + 1], &self.diff[n + 1]);
        }
        out.add_scaled((1.0 + self.params.sigma) * w.hat[n], &self.conv[n]);
        out
    }

    pub fn state(&self, n: usize) -> Option<&ConvectionState> {
        self.states[n].as_ref()
    }

    /// Spectra of `J_nᵀ M_n`, or `None` without convection.
    pub fn adjoint_term(&self, n: usize, m: &VelocityField) -> Option<Vec<Spectrum>> {
        self.states[n].as_ref().map(|s| s.adjoint_spectra(m))
    }

    /// `J_n φ`, zero without convection.
    pub fn linearized(&self, n: usize, phi: &VelocityField) -> VelocityField {
        match &self.states[n] {
            Some(s) => s.linearized(phi),
            None => VelocityField::zeros(self.grid),
        }
    }

    /// Unprojected gradient spectra at slice `n ≥ 1`.
    fn gradient_spectra(&self, n: usize) -> Vec<Spectrum> {
        let plan = spectral::plan(&self.grid);
        let p = &self.params;
        let dq = combine(&[
            (1.0 / self.tau, &self.q(n)),
            (-1.0 / self.tau, &self.q(n + 1)),
        ]);
        let mut out = dq.spectra();
        if let Some(adj) = self.adjoint_term(n, &self.m(n)) {
            for (o, a) in out.iter_mut().zip(adj) {
                for (x, y) in o.iter_mut().zip(a) {
                    *x += y;
                }
            }
        }
        let visc = p.nu / p.epsilon * self.weights.hat[n];
        for (o, u) in out.iter_mut().zip(&self.spectra[n]) {
            for (idx, (x, y)) in o.iter_mut().zip(u).enumerate() {
                if !plan.modes.nyquist[idx] {
                    *x += *y * (visc * plan.modes.k2[idx]);
                }
            }
        }
        out
    }

    /// Projected gradient, normalised so that `Σ_n τ⟨g_n, φ_n⟩` is the
    /// derivative along `φ`. Entry 0 is zero.
    pub fn gradient(&self) -> Vec<VelocityField> {
        let plan = spectral::plan(&self.grid);
        let mut out: Vec<VelocityField> = (1..=self.steps())
            .into_par_iter()
            .map(|n| {
                let mut s = self.gradient_spectra(n);
                plan.project(&mut s);
                VelocityField::from_spectra(self.grid, &s)
            })
            .collect();
        out.insert(0, VelocityField::zeros(self.grid));
        out
    }

    /// Derivative along `dir` computed from the linearisation (no adjoints).
    pub fn directional(&self, dir: &Trajectory) -> f64 {
        let plan = spectral::plan(&self.grid);
        let p = &self.params;
        let w = &self.weights;
        let phi = dir.slices();
        let lin: Vec<VelocityField> = (0..=self.steps())
            .into_par_iter()
            .map(|n| self.linearized(n, &phi[n]))
            .collect();
        let grad_pair: Vec<f64> = (0..=self.steps())
            .into_par_iter()
            .map(|n| {
                let ph = phi[n].spectra();
                let mut s = 0.0;
                for (a, b) in self.spectra[n].iter().zip(&ph) {
                    for (idx, (x, y)) in a.iter().zip(b).enumerate() {
                        if !plan.modes.nyquist[idx] {
                            s += plan.modes.k2[idx] * (x.conj() * y).re;
                        }
                    }
                }
                s * plan.norm_factor()
            })
            .collect();
        let terms: Vec<f64> = (1..=self.steps())
            .into_par_iter()
            .map(|n| {
                let dphi = combine(&[(1.0 / self.tau, &phi[n]), (-1.0 / self.tau, &phi[n - 1])]);
                let rl = combine(&[(1.0, &self.diff[n]), (1.0, &self.conv[n - 1])]);
                let rr = combine(&[(1.0, &self.diff[n]), (1.0, &self.conv[n])]);
                let left = inner_product(&rl, &combine(&[(1.0, &dphi), (1.0, &lin[n - 1])]))
                    + p.sigma * inner_product(&self.conv[n - 1], &lin[n - 1])
                    + p.nu / p.epsilon * grad_pair[n - 1];
                let right = inner_product(&rr, &combine(&[(1.0, &dphi), (1.0, &lin[n])]))
                    + p.sigma * inner_product(&self.conv[n], &lin[n])
                    + p.nu / p.epsilon * grad_pair[n];
                self.tau * (w.left[n] * left + w.right[n] * right)
            })
            .collect();
        terms.iter().sum()
    }
}

/// Value of the discrete functional and its three parts.
pub fn eval_functional(traj: &Trajectory, params: &WideParams) -> Result<FunctionalBreakdown> {
    Ok(Assembly::new(traj, params)?.breakdown())
}

/// Gradient with respect to slices `1..=N` in the divergence-free subspace, as
/// a trajectory whose slice 0 is zero.
pub fn grad_functional(traj: &Trajectory, params: &WideParams) -> Result<Trajectory> {
    let asm = Assembly::new(traj, params)?;
    Trajectory::new(asm.grid, asm.tau, asm.gradient())
}

/// Value and gradient from one assembly.
pub fn value_and_gradient(
    traj: &Trajectory,
    params: &WideParams,
) -> Result<(FunctionalBreakdown, Vec<VelocityField>)> {
    let asm = Assembly::new(traj, params)?;
    Ok((asm.breakdown(), asm.gradient()))
}

/// Derivative of the functional at `traj` along `dir`, evaluated through the
/// linearised convection rather than the adjoint used by [`grad_functional`].
pub fn directional_derivative(
    traj: &Trajectory,
    params: &WideParams,
    dir: &Trajectory,
) -> Result<f64> {
    traj.check_compatible(dir)?;
    Ok(Assembly::new(traj, params)?.directional(dir))
}

/// `‖∇u‖² + ε‖u·∇u‖²`, the quantity bounded by `C_0/ε` for the initial datum.
pub fn initial_datum_bound(u: &VelocityField, params: &WideParams) -> f64 {
    let g = u.gradient();
    let grad_sq: f64 = g.iter().flatten().map(|x| x * x).sum::<f64>() * u.grid().cell_volume();
    let conv = if params.convection {
        let c = crate::field::advect(u);
        inner_product(&c, &c)
    } else {
        0.0
    };
    grad_sq + params.epsilon * conv
}

/// Projects `u0_raw` and truncates it to the largest Fourier shell
/// `|k| ≤ k_max` for which [`initial_datum_bound`] stays below `c0/ε`.
pub fn prepare_initial_datum(
    u0_raw: &VelocityField,
    params: &WideParams,
    c0: f64,
) -> Result<VelocityField> {
    params.validate()?;
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(Error::Config(format!("c0 must be positive, got {c0}")));
    }
    let grid = *u0_raw.grid();
    let plan = spectral::plan(&grid);
    let projected = leray_project(u0_raw);
    let hat = projected.spectra();
    let tol = 1e-14 * hat.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let mut shells: Vec<f64> = (0..grid.points())
        .filter(|&idx| hat.iter().any(|c| c[idx].norm() > tol))
        .map(|idx| plan.modes.k2[idx])
        .collect();
    if shells.is_empty() {
        return Ok(VelocityField::zeros(grid));
    }
    shells.sort_by(f64::total_cmp);
    shells.dedup();
    let limit = c0 / params.epsilon;
    for (i, &k2max) in shells.iter().enumerate().rev() {
        let candidate = if i == shells.len() - 1 {
            projected.clone()
        } else {
            let cut: Vec<Spectrum> = hat
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(&plan.modes.k2)
                        .map(|(&z, &k2)| {
                            if k2 <= k2max {
                                z
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        })
                        .collect()
                })
                .collect();
            VelocityField::from_spectra(grid, &cut)
        };
        if initial_datum_bound(&candidate, params) <= limit {
            return Ok(candidate);
        }
    }
    Err(Error::Config(format!(
        "c0 = {c0} admits no nonzero mode of the initial datum at epsilon = {}",
        params.epsilon
    )))
}
