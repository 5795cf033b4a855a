//! Euler-Lagrange quantities of the discrete functional: the terms `v`, `f`,
//! `g`, `Au`, `B(u)`, weak and strong residuals, the kernel representation
//! of `v`, and the pressure.
//!
//! With `Q_n`, `M_n` and the weights as in [`crate::functional`], the discrete
//! terms at slice `n ≥ 1` are
//!
//! ```text
//! v_n = P Q_n / w_n                    m_n = M_n / h_n
//! f_n = ε T[(∇Tu_n)ᵀ Tm_n]             g_n = −ε T div(Tm_n ⊗ Tu_n)
//! E_n = ε (w_n v_n − w_{n+1} v_{n+1}) / (τ h_n) + P(f_n + g_n) + ν A u_n
//! ```
//!
//! and `E_n = ε g_n / h_n` for the gradient `g_n` of the functional, so `E`
//! vanishes exactly at discrete stationary points.

mod quadrature;

use serde::{Serialize, Serializer};

pub use quadrature::{gauss_legendre, integrate, kernel, kernel_norms};

use crate::error::{Error, Result};
use crate::field::spectral::{self, Spectrum};
use crate::field::{
    advect, divergence, inner_product, leray_project, sobolev_norm, stokes_apply, ScalarField,
    SobolevIndex, VelocityField,
};
use crate::functional::{combine, Assembly, Trajectory, WideParams};

/// Per-slice Euler-Lagrange terms, indexed by slice `0..=N`. Entry 0 of `v`,
/// `m`, `f`, `g` and `g_flux` is zero (no interval ends there).
#[derive(Debug, Clone)]
pub struct ElTerms {
    pub v: Vec<VelocityField>,
    pub m: Vec<VelocityField>,
    pub f: Vec<VelocityField>,
    /// Field form of `g`, whose L² pairing with `ψ` is `ε ∫ m ⊗ u : ∇ψ`.
    pub g: Vec<VelocityField>,
    /// `ε Tm ⊗ Tu`, entry `i * dim + j`.
    pub g_flux: Vec<Vec<Vec<f64>>>,
    pub au: Vec<VelocityField>,
    pub b: Vec<VelocityField>,
}

fn assemble(asm: &Assembly, traj: &Trajectory) -> ElTerms {
    let steps = asm.steps();
    let grid = asm.grid;
    let eps = asm.params.epsilon;
    let w = &asm.weights;
    let zero = VelocityField::zeros(grid);
    let dim = grid.dim;
    let mut terms = ElTerms {
        v: vec![zero.clone()],
        m: vec![zero.clone()],
        f: vec![zero.clone()],
        g: vec![zero.clone()],
        g_flux: vec![vec![vec![0.0; grid.points()]; dim * dim]],
        au: Vec::with_capacity(steps + 1),
        b: Vec::with_capacity(steps + 1),
    };
    for n in 0..=steps {
        terms.au.push(stokes_apply(traj.slice(n)));
        terms.b.push(leray_project(&asm.conv[n]));
        if n == 0 {
            continue;
        }
        terms
            .v
            .push(leray_project(&asm.q(n)).scaled(1.0 / w.average[n]));
        let m = asm.m(n).scaled(1.0 / w.hat[n]);
        match asm.state(n) {
            Some(state) => {
                terms.f.push(state.transpose_gradient_field(&m).scaled(eps));
                terms.g.push(state.flux_divergence_field(&m).scaled(eps));
                let mut flux = state.flux(&m);
                flux.iter_mut().flatten().for_each(|x| *x *= eps);
                terms.g_flux.push(flux);
            }
            None => {
                terms.f.push(zero.clone());
                terms.g.push(zero.clone());
                terms.g_flux.push(vec![vec![0.0; grid.points()]; dim * dim]);
            }
        }
        terms.m.push(m);
    }
    terms
}

/// Assembles `v`, `m`, `f`, `g`, `Au` and `B(u) = P(u·∇u)` on every slice.
pub fn assemble_el_terms(traj: &Trajectory, params: &WideParams) -> Result<ElTerms> {
    let asm = Assembly::new(traj, params)?;
    Ok(assemble(&asm, traj))
}

/// `H_n = P(f_n + g_n) + ν A u_n`
fn source(terms: &ElTerms, nu: f64, n: usize) -> VelocityField {
    let fg = combine(&[(1.0, &terms.f[n]), (1.0, &terms.g[n])]);
    combine(&[(1.0, &leray_project(&fg)), (nu, &terms.au[n])])
}

fn strong_fields(asm: &Assembly, terms: &ElTerms) -> Vec<VelocityField> {
    let steps = asm.steps();
    let w = &asm.weights;
    let (eps, tau) = (asm.params.epsilon, asm.tau);
    let mut out = vec![VelocityField::zeros(asm.grid)];
    for n in 1..=steps {
        let scale = eps / (tau * w.hat[n]);
        let mut e = terms.v[n].scaled(scale * w.average[n]);
        if n < steps {
            e.add_scaled(-scale * w.average[n + 1], &terms.v[n + 1]);
        }
        e.add_scaled(1.0, &source(terms, asm.params.nu, n));
        out.push(e);
    }
    out
}

/// Strong-form residual fields `E_n`, `n = 0..=N` (entry 0 is zero).
pub fn strong_residual_fields(
    traj: &Trajectory,
    params: &WideParams,
) -> Result<Vec<VelocityField>> {
    let asm = Assembly::new(traj, params)?;
    let terms = assemble(&asm, traj);
    Ok(strong_fields(&asm, &terms))
}

/// Last slice inside the observation window `[0, (1 − buffer) T]`.
pub fn window_end(steps: usize, buffer: f64) -> usize {
    (((1.0 - buffer) * steps as f64) + 1e-9).floor() as usize
}

fn aggregate_l2(fields: &[VelocityField], tau: f64, last: usize, s: SobolevIndex) -> f64 {
    (1..=last)
        .map(|n| tau * sobolev_norm(&fields[n], s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `(Σ_{n=1}^{M} τ ‖E_n‖²_{H^s})^{1/2}` with `M` the last slice before the
/// terminal buffer.
pub fn strong_el_residual(
    traj: &Trajectory,
    params: &WideParams,
    s: SobolevIndex,
    buffer: f64,
) -> Result<f64> {
    check_buffer(buffer)?;
    let fields = strong_residual_fields(traj, params)?;
    Ok(aggregate_l2(
        &fields,
        traj.tau(),
        window_end(traj.steps(), buffer),
        s,
    ))
}

fn check_buffer(buffer: f64) -> Result<()> {
    if (0.0..1.0).contains(&buffer) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "buffer must lie in [0, 1), got {buffer}"
        )))
    }
}

fn check_test_function(traj: &Trajectory, phi: &Trajectory) -> Result<()> {
    traj.check_compatible(phi)?;
    if !phi.initial().is_zero() || !phi.last().is_zero() {
        return Err(Error::Input(
            "test functions must vanish at t = 0 and t = T".into(),
        ));
    }
    for (n, s) in phi.slices().iter().enumerate() {
        if divergence(s).max_abs() > 1e-10 * s.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Input(format!(
                "test function is not divergence-free at slice {n}"
            )));
        }
    }
    Ok(())
}

fn weak_with(asm: &Assembly, traj: &Trajectory, phi: &Trajectory) -> Result<f64> {
    check_test_function(traj, phi)?;
    let scaled: Vec<VelocityField> = phi
        .slices()
        .iter()
        .enumerate()
        .map(|(n, s)| {
            if n == 0 {
                s.clone()
            } else {
                s.scaled(1.0 / asm.weights.hat[n])
            }
        })
        .collect();
    let dir = Trajectory::new(asm.grid, asm.tau, scaled)?;
    Ok(asm.params.epsilon * asm.directional(&dir))
}

/// Weak Euler-Lagrange form `ε dI[φ / h]` for each test trajectory, which
/// equals `Σ_n τ ⟨E_n, φ_n⟩`. It is evaluated through the linearised
/// functional, independently of the assembled strong terms.
pub fn weak_el_residual(
    traj: &Trajectory,
    params: &WideParams,
    tests: &[Trajectory],
) -> Result<Vec<f64>> {
    let asm = Assembly::new(traj, params)?;
    tests.iter().map(|phi| weak_with(&asm, traj, phi)).collect()
}

/// Divergence-free test trajectories `φ_n = b(t_n) ψ_k` with `ψ_k` random
/// low-mode fields and `b(t) = sin²(πt / T_b)` on `[0, T_b]`, `T_b = 0.8T`.
pub fn default_test_functions(
    traj: &Trajectory,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let horizon = traj.horizon();
    let support = 0.8 * horizon;
    (0..count)
        .map(|k| {
            let psi = VelocityField::random(*traj.grid(), 3.0, 1.0, seed.wrapping_add(k as u64));
            let slices = (0..=traj.steps())
                .map(|n| {
                    let t = traj.time(n);
                    let b = if t < support {
                        (std::f64::consts::PI * t / support).sin().powi(2)
                    } else {
                        0.0
                    };
                    if b == 0.0 {
                        VelocityField::zeros(*traj.grid())
                    } else {
                        psi.scaled(b)
                    }
                })
                .collect();
            Trajectory::new(*traj.grid(), traj.tau(), slices)
        })
        .collect()
}

/// Probe slices: 8 evenly spaced times in `[0, 0.6T]`, snapped to slices `≥ 1`.
pub fn kernel_probes(steps: usize, tau: f64) -> Vec<usize> {
    let horizon = tau * steps as f64;
    let mut probes: Vec<usize> = (0..8)
        .map(|j| {
            let t = 0.6 * horizon * j as f64 / 7.0;
            ((t / tau).round() as usize).clamp(1, steps.max(1))
        })
        .collect();
    probes.dedup();
    probes
}

fn kernel_gaps(asm: &Assembly, terms: &ElTerms, s: SobolevIndex) -> Vec<(usize, f64)> {
    let steps = asm.steps();
    if steps == 0 {
        return Vec::new();
    }
    let w = &asm.weights;
    let (eps, tau) = (asm.params.epsilon, asm.tau);
    // suffix sums S_j = Σ_{m ≥ j} h_m H_m
    let mut suffix = vec![VelocityField::zeros(asm.grid); steps + 2];
    for m in (1..=steps).rev() {
        let mut acc = suffix[m + 1].clone();
        acc.add_scaled(w.hat[m], &source(terms, asm.params.nu, m));
        suffix[m] = acc;
    }
    kernel_probes(steps, tau)
        .into_iter()
        .map(|j| {
            let gap = combine(&[(1.0, &terms.v[j]), (tau / (eps * w.average[j]), &suffix[j])]);
            (j, sobolev_norm(&gap, s))
        })
        .collect()
}

/// Largest gap over the probe times between `v(t_j)` and the discrete kernel
/// convolution `−(τ/ε) Σ_{m ≥ j} (h_m / w_j) H_m`, the discrete counterpart of
/// `v = K ∗ (f + g + νAu)`. Zero at exact discrete stationary points.
pub fn kernel_convolution_check(
    traj: &Trajectory,
    params: &WideParams,
    s: SobolevIndex,
) -> Result<f64> {
    let asm = Assembly::new(traj, params)?;
    let terms = assemble(&asm, traj);
    Ok(kernel_gaps(&asm, &terms, s)
        .into_iter()
        .map(|(_, g)| g)
        .fold(0.0, f64::max))
}

/// Mean-free pressure solving `−Δp = div(u·∇u)`, so that
/// `P(u·∇u) = u·∇u + ∇p`.
pub fn recover_pressure(u: &VelocityField) -> ScalarField {
    let grid = *u.grid();
    let plan = spectral::plan(&grid);
    let b = advect(u).spectra();
    let mut p: Spectrum = vec![Default::default(); grid.points()];
    for (axis, c) in b.iter().enumerate() {
        for (acc, d) in p.iter_mut().zip(plan.derivative(c, axis)) {
            *acc += d;
        }
    }
    for (idx, z) in p.iter_mut().enumerate() {
        let k2 = plan.modes.k2[idx];
        *z = if k2 > 0.0 {
            *z / k2
        } else {
            Default::default()
        };
    }
    ScalarField {
        grid,
        values: plan.inverse_real(&p),
    }
}

/// Dual order and terminal buffer used by [`el_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElOptions {
    pub s: SobolevIndex,
    pub buffer: f64,
    pub test_functions: usize,
    pub seed: u64,
}

impl Default for ElOptions {
    fn default() -> Self {
        ElOptions {
            s: SobolevIndex(-3.0),
            buffer: 0.2,
            test_functions: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElReport {
    pub weak_residuals: Vec<f64>,
    pub strong_residual_norm: f64,
    pub kernel_identity_error: f64,
    /// `Σ τ ‖P(f + g)‖_{H^s}` over the window.
    pub fg_l1_dual: f64,
    /// `(Σ τ ‖v‖²_{H^s})^{1/2}` over the window.
    pub v_l2_dual: f64,
    pub s: f64,
    pub buffer: f64,
}

impl ElReport {
    pub fn weak_max(&self) -> f64 {
        self.weak_residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

impl Serialize for ElReport {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Record {
            weak_max: f64,
            strong_norm: f64,
            kernel_gap: f64,
            s: f64,
            buffer: f64,
            fg_l1_dual: f64,
            v_l2_dual: f64,
        }
        Record {
            weak_max: self.weak_max(),
            strong_norm: self.strong_residual_norm,
            kernel_gap: self.kernel_identity_error,
            s: self.s,
            buffer: self.buffer,
            fg_l1_dual: self.fg_l1_dual,
            v_l2_dual: self.v_l2_dual,
        }
        .serialize(ser)
    }
}

/// All residual diagnostics from one assembly, with the default test functions.
pub fn el_report(traj: &Trajectory, params: &WideParams, opts: &ElOptions) -> Result<ElReport> {
    check_buffer(opts.buffer)?;
    let asm = Assembly::new(traj, params)?;
    let terms = assemble(&asm, traj);
    let tests = default_test_functions(traj, opts.test_functions, opts.seed)?;
    let weak = tests
        .iter()
        .map(|phi| weak_with(&asm, traj, phi))
        .collect::<Result<Vec<_>>>()?;
    let strong = strong_fields(&asm, &terms);
    let last = window_end(traj.steps(), opts.buffer);
    let tau = traj.tau();
    let fg_l1_dual = (1..=last)
        .map(|n| {
            let fg = leray_project(&combine(&[(1.0, &terms.f[n]), (1.0, &terms.g[n])]));
            tau * sobolev_norm(&fg, opts.s)
        })
        .sum();
    Ok(ElReport {
        weak_residuals: weak,
        strong_residual_norm: aggregate_l2(&strong, tau, last, opts.s),
        kernel_identity_error: kernel_gaps(&asm, &terms, opts.s)
            .into_iter()
            .map(|(_, g)| g)
            .fold(0.0, f64::max),
        fg_l1_dual,
        v_l2_dual: aggregate_l2(&terms.v, tau, last, opts.s),
        s: opts.s.0,
        buffer: opts.buffer,
    })
}

/// `Σ_n τ ⟨E_n, φ_n⟩` from the assembled strong-form terms.
pub fn strong_pairing(traj: &Trajectory, params: &WideParams, phi: &Trajectory) -> Result<f64> {
    traj.check_compatible(phi)?;
    let fields = strong_residual_fields(traj, params)?;
    Ok((1..=traj.steps())
        .map(|n| traj.tau() * inner_product(&fields[n], phi.slice(n)))
        .sum())
}
