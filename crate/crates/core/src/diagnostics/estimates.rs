use serde::{Deserialize, Serialize};

use crate::field::spectral;
use crate::field::{
    advect, inner_product, leray_project, sobolev_norm, SobolevIndex, VelocityField,
};
use crate::functional::{combine, Trajectory, WideParams};

/// Energy balance along a trajectory, one entry per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    /// `‖u_n‖²`
    pub energy: Vec<f64>,
    /// `‖∇u_n‖²`
    pub dissipation_rate: Vec<f64>,
    /// `‖u(T')‖² + 2ν ∫_0^{T'} (1 − e^{-t/ε}) ‖∇u‖²`
    pub lhs_unif: Vec<f64>,
    /// `‖u(T')‖² + 2ν ∫_0^{T'} ‖∇u‖²`
    pub lhs_ei: Vec<f64>,
    /// `‖u_0‖²`
    pub rhs: f64,
    /// `rhs − lhs_ei`
    pub slack_ei: Vec<f64>,
    /// `rhs − lhs_unif`
    pub slack_unif: Vec<f64>,
    pub tol_energy: f64,
    /// Fraction of the horizon over which violations are flagged.
    pub probe_fraction: f64,
    pub violation: bool,
}

/// Energy report with time integrals by the trapezoidal rule. A violation is
/// flagged when `lhs_unif(T') > rhs (1 + tol_energy)` for some slice with
/// `T' ≤ probe_fraction · T`.
pub fn energy_report(
    traj: &Trajectory,
    params: &WideParams,
    tol_energy: f64,
    probe_fraction: f64,
) -> EnergyReport {
    let tau = traj.tau();
    let times: Vec<f64> = (0..=traj.steps()).map(|n| traj.time(n)).collect();
    let energy: Vec<f64> = traj.slices().iter().map(|u| inner_product(u, u)).collect();
    let dissipation_rate: Vec<f64> = traj.slices().iter().map(sobolev_norm_grad_sq).collect();
    let weight = |t: f64| -(-t / params.epsilon).exp_m1();
    let (mut acc_unif, mut acc_ei) = (0.0, 0.0);
    let mut lhs_unif = Vec::with_capacity(times.len());
    let mut lhs_ei = Vec::with_capacity(times.len());
    for n in 0..times.len() {
        if n > 0 {
            let (a, b) = (dissipation_rate[n - 1], dissipation_rate[n]);
            acc_ei += 0.5 * tau * (a + b);
            acc_unif += 0.5 * tau * (weight(times[n - 1]) * a + weight(times[n]) * b);
        }
        lhs_unif.push(energy[n] + 2.0 * params.nu * acc_unif);
        lhs_ei.push(energy[n] + 2.0 * params.nu * acc_ei);
    }
    let rhs = energy[0];
    let limit = probe_fraction * traj.horizon() * (1.0 + 1e-12);
    let violation = times
        .iter()
        .zip(&lhs_unif)
        .any(|(&t, &l)| t <= limit && l > rhs * (1.0 + tol_energy));
    EnergyReport {
        slack_ei: lhs_ei.iter().map(|l| rhs - l).collect(),
        slack_unif: lhs_unif.iter().map(|l| rhs - l).collect(),
        times,
        energy,
        dissipation_rate,
        lhs_unif,
        lhs_ei,
        rhs,
        tol_energy,
        probe_fraction,
        violation,
    }
}

fn sobolev_norm_grad_sq(u: &VelocityField) -> f64 {
    let plan = spectral::plan(u.grid());
    plan.norm_factor() * plan.sum_sq_grad(&u.spectra())
}

/// Uniform-in-ε quantities of the energy and duality estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBounds {
    /// `ε Σ τ ‖D_n‖²`
    pub eps_dt2: f64,
    /// `ε Σ τ ‖u_n·∇u_n‖²`
    pub eps_conv2: f64,
    /// `(Σ τ ‖∇u_n‖²)^{1/2}`
    pub l2_h1: f64,
    /// `max_n ‖u_n‖`
    pub linf_l2: f64,
    /// `(Σ τ ‖D_n‖²_{H^s})^{1/2}`
    pub dt_dual: f64,
    /// `(Σ τ ‖P(u_n·∇u_n)‖²_{H^s})^{1/2}`
    pub conv_dual: f64,
    /// `C_0(ε) = ε‖∇u_0‖² + ε²‖u_0·∇u_0‖²`, the value scale of the constant competitor.
    pub c0: f64,
    pub eps_dt2_normalized: f64,
    pub eps_conv2_normalized: f64,
    /// Sobolev constant `C_s` with `‖B(u)‖_{H^s} ≤ C_s ‖u‖ ‖∇u‖`.
    pub sobolev_constant: f64,
    /// `max_n ‖P(u_n·∇u_n)‖_{H^s} / (C_s ‖u_n‖ ‖∇u_n‖)`; at most one.
    pub convection_bound_ratio: f64,
    pub s: f64,
}

/// `(Σ_k (1+|k|²)^s / (2π)^d)^{1/2}` over the grid's modes, bounding
/// `‖ψ‖_∞ ≤ C_s ‖ψ‖_{H^{-s}}` for `s < 0`.
pub fn sobolev_constant(grid: &crate::grid::GridSpec, s: SobolevIndex) -> f64 {
    let plan = spectral::plan(grid);
    let sum: f64 = plan
        .modes
        .k2
        .iter()
        .zip(&plan.modes.nyquist)
        .filter(|(_, &nyq)| !nyq)
        .map(|(&k2, _)| (1.0 + k2).powf(s.0))
        .sum();
    (sum / grid.volume()).sqrt()
}

pub fn apriori_bounds(traj: &Trajectory, params: &WideParams, s: SobolevIndex) -> AprioriBounds {
    let tau = traj.tau();
    let eps = params.epsilon;
    let conv = |u: &VelocityField| {
        if params.convection {
            advect(u)
        } else {
            VelocityField::zeros(*u.grid())
        }
    };
    let cs = sobolev_constant(traj.grid(), s);
    let mut out = AprioriBounds {
        eps_dt2: 0.0,
        eps_conv2: 0.0,
        l2_h1: 0.0,
        linf_l2: traj.initial().norm(),
        dt_dual: 0.0,
        conv_dual: 0.0,
        c0: 0.0,
        eps_dt2_normalized: 0.0,
        eps_conv2_normalized: 0.0,
        sobolev_constant: cs,
        convection_bound_ratio: 0.0,
        s: s.0,
    };
    for n in 1..=traj.steps() {
        let u = traj.slice(n);
        let d = combine(&[(1.0 / tau, u), (-1.0 / tau, traj.slice(n - 1))]);
        let c = conv(u);
        let pc = leray_project(&c);
        let grad_sq = sobolev_norm_grad_sq(u);
        out.eps_dt2 += eps * tau * inner_product(&d, &d);
        out.eps_conv2 += eps * tau * inner_product(&c, &c);
        out.l2_h1 += tau * grad_sq;
        out.linf_l2 = out.linf_l2.max(u.norm());
        out.dt_dual += tau * sobolev_norm(&d, s).powi(2);
        let pc_dual = sobolev_norm(&pc, s);
        out.conv_dual += tau * pc_dual.powi(2);
        let scale = cs * u.norm() * grad_sq.sqrt();
        if scale > 0.0 {
            out.convection_bound_ratio = out.convection_bound_ratio.max(pc_dual / scale);
        }
    }
    out.l2_h1 = out.l2_h1.sqrt();
    out.dt_dual = out.dt_dual.sqrt();
    out.conv_dual = out.conv_dual.sqrt();
    let u0 = traj.initial();
    let c0conv = conv(u0);
    out.c0 = eps * sobolev_norm_grad_sq(u0) + eps * eps * inner_product(&c0conv, &c0conv);
    if out.c0 > 0.0 {
        out.eps_dt2_normalized = out.eps_dt2 / out.c0;
        out.eps_conv2_normalized = out.eps_conv2 / out.c0;
    }
    out
}

/// Coefficient of the large-time energy bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaCertificate {
    /// `min{1, 2σ − 1/4, ν} (1 − e^{-1})`
    pub c: f64,
    /// True iff `σ > 1/8` and `ν > 0`.
    pub valid: bool,
}

pub fn sigma_certificate(params: &WideParams) -> SigmaCertificate {
    let c = 1.0f64.min(2.0 * params.sigma - 0.25).min(params.nu) * (1.0 - (-1.0f64).exp());
    SigmaCertificate {
        c,
        valid: params.sigma > 0.125 && params.nu > 0.0,
    }
}

/// Relative distances between two trajectories on slices `0..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    /// `‖u − r‖_{L²(H¹)} / ‖r‖_{L²(H¹)}` over slices `1..=last`.
    pub l2_h1: f64,
    /// `max_n ‖u_n − r_n‖ / max_n ‖r_n‖` over slices `0..=last`.
    pub c_l2: f64,
}

pub fn relative_distances(u: &Trajectory, r: &Trajectory, last: usize) -> Distances {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_diff: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for n in 0..=last.min(u.steps()).min(r.steps()) {
        let diff = u.slice(n).sub(r.slice(n));
        if n > 0 {
            num += sobolev_norm(&diff, SobolevIndex::H1).powi(2);
            den += sobolev_norm(r.slice(n), SobolevIndex::H1).powi(2);
        }
        max_diff = max_diff.max(diff.norm());
        max_ref = max_ref.max(r.slice(n).norm());
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
    Distances {
        l2_h1: ratio(num.sqrt(), den.sqrt()),
        c_l2: ratio(max_diff, max_ref),
    }
}
