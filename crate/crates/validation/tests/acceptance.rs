//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use wide_core::diagnostics::{
    energy_report, epsilon_sweep, sigma_certificate, SweepConfig, SweepReport,
};
use wide_core::euler_lagrange::{el_report, kernel_norms, ElOptions};
use wide_core::field::{
    advect, inner_product, leray_project, stokes_apply, stokes_pairing_quadrature,
};
use wide_core::functional::{
    directional_derivative, eval_functional, grad_functional, Trajectory, WideParams,
};
use wide_core::io;
use wide_core::optimizer::{minimize_global, MinimizeOptions};
use wide_core::reference::{projection_solve, taylor_green, ExactSolutionSpec};
use wide_core::{GridSpec, VelocityField};

/// Outcome of one criterion: pass flag plus a one-line summary.
type Verdict = (bool, String);

const SWEEP_EPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

fn combine(a: &Trajectory, s: f64, b: &Trajectory) -> Trajectory {
    let slices = a
        .slices()
        .iter()
        .zip(b.slices())
        .map(|(u, d)| {
            let mut w = u.clone();
            w.add_scaled(s, d);
            w
        })
        .collect();
    Trajectory::new(*a.grid(), a.tau(), slices).unwrap()
}

fn random_trajectory(
    grid: GridSpec,
    tau: f64,
    steps: usize,
    seed: u64,
    zero_start: bool,
) -> Trajectory {
    let slices = (0..=steps)
        .map(|n| {
            if zero_start && n == 0 {
                VelocityField::zeros(grid)
            } else {
                VelocityField::random(grid, 4.0, 1.0, seed * 1000 + n as u64)
            }
        })
        .collect();
    Trajectory::new(grid, tau, slices).unwrap()
}

fn gradient_fidelity() -> Verdict {
    let grid = GridSpec::new(2, 16).unwrap();
    let (tau, steps) = (0.02, 16);
    let p = WideParams::new(0.2, 0.25, 0.1, tau * steps as f64).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let t = random_trajectory(grid, tau, steps, 2 * seed + 1, false);
        let dir = random_trajectory(grid, tau, steps, 2 * seed + 2, true);
        let g = grad_functional(&t, &p).unwrap();
        let analytic: f64 = (1..=steps)
            .map(|n| tau * inner_product(g.slice(n), dir.slice(n)))
            .sum();
        let h = 1e-5;
        let f = |s: f64| eval_functional(&combine(&t, s, &dir), &p).unwrap().total;
        let fd = (f(h) - f(-h)) / (2.0 * h);
        worst = worst.max((analytic - fd).abs() / fd.abs());
        let forward = directional_derivative(&t, &p, &dir).unwrap();
        worst = worst.max((analytic - forward).abs() / forward.abs());
    }
    (
        worst <= 1e-6,
        format!("worst relative error {worst:.2e} over 20 trajectories (limit 1e-6)"),
    )
}

fn variational_identities() -> Verdict {
    let grid = GridSpec::new(2, 32).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let raw = VelocityField::random(grid, 8.0, 1.0, seed).scaled(1.0);
        let mut f = raw.clone();
        // Add a gradient part so the projection has something to remove.
        let g = VelocityField::from_fn(grid, |x| {
            [
                (2.0 * x[0] + x[1]).cos(),
                (2.0 * x[0] + x[1]).cos() * 0.5,
                0.0,
            ]
        });
        f.add_scaled(1.0, &g);
        let pf = leray_project(&f);
        worst = worst.max(leray_project(&pf).sub(&pf).norm() / pf.norm());
        worst = worst.max(inner_product(&pf, &f.sub(&pf)).abs() / (f.norm() * f.norm()));
        let u = leray_project(&raw);
        let b = advect(&u);
        worst = worst.max(inner_product(&b, &u).abs() / (b.norm() * u.norm()));
        let psi = VelocityField::random(grid, 8.0, 1.0, seed + 100);
        let a = inner_product(&stokes_apply(&u), &psi);
        let q = stokes_pairing_quadrature(&u, &psi);
        worst = worst.max((a - q).abs() / (stokes_apply(&u).norm() * psi.norm()));
    }
    (
        worst <= 1e-11,
        format!("worst relative defect {worst:.2e} (limit 1e-11)"),
    )
}

fn constant_trajectory_value() -> Verdict {
    // Midpoint quadrature of the analytic integrands on a fine grid.
    let m = 128;
    let h = 2.0 * PI / m as f64;
    let (mut conv2, mut grad2) = (0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let (cx, sx, cy, sy) = (x.cos(), x.sin(), y.cos(), y.sin());
            let c = [sx * cx, sy * cy];
            conv2 += (c[0] * c[0] + c[1] * c[1]) * h * h;
            grad2 += 2.0 * (cx * cx * cy * cy + sx * sx * sy * sy) * h * h;
        }
    }
    let quad_ok = (conv2 - PI * PI).abs() < 1e-10 && (grad2 - 4.0 * PI * PI).abs() < 1e-10;
    let grid = GridSpec::new(2, 32).unwrap();
    let (eps, sigma, nu) = (0.1, 0.25, 0.1);
    let p = WideParams::new(eps, sigma, nu, 2.0).unwrap();
    let u0 = taylor_green(0.0, grid, nu).unwrap();
    let traj = Trajectory::constant(&u0, 1e-2, 200).unwrap();
    let value = eval_functional(&traj, &p).unwrap().total;
    let expect = eps * (1.0 + sigma) / 2.0 * conv2 + nu / 2.0 * grad2;
    let rel = (value - expect).abs() / expect;
    (
        quad_ok && rel <= 1e-2,
        format!("I = {value:.6}, closed form {expect:.6}, relative gap {rel:.2e} (limit 1e-2); quadrature {conv2:.12}/{grad2:.12}"),
    )
}

fn hat_weights(eps: f64, tau: f64, n: usize) -> (f64, f64) {
    let m = 4000;
    let (mut left, mut right) = (0.0, 0.0);
    for j in 0..m {
        let theta = (j as f64 + 0.5) / m as f64;
        let e = (-(((n - 1) as f64 + theta) * tau) / eps).exp() / m as f64;
        left += e * (1.0 - theta);
        right += e * theta;
    }
    (left, right)
}

/// Nodal amplitudes of one Fourier mode solving the discrete two-point problem.
fn mode_two_point(eps: f64, nu: f64, lambda: f64, tau: f64, steps: usize) -> Vec<f64> {
    let mut h = DMatrix::<f64>::zeros(steps, steps);
    let mut rhs = DVector::<f64>::zeros(steps);
    let c = tau * nu * lambda / eps;
    for n in 1..=steps {
        let (al, be) = hat_weights(eps, tau, n);
        let w = (al + be) / tau;
        let i = n - 1;
        h[(i, i)] += w + c * be;
        if n >= 2 {
            h[(i - 1, i - 1)] += w + c * al;
            h[(i, i - 1)] -= w;
            h[(i - 1, i)] -= w;
        } else {
            rhs[i] += w;
        }
    }
    h.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn sweep_config(convection: bool) -> SweepConfig {
    let grid = GridSpec::new(2, 32).unwrap();
    let u0 = taylor_green(0.0, grid, 0.1).unwrap();
    let mut base = WideParams::new(SWEEP_EPS[0], 0.25, 0.1, 1.0).unwrap();
    base.convection = convection;
    let mut cfg = SweepConfig::new(u0, base, 1e-2, SWEEP_EPS.to_vec());
    if convection {
        cfg.sigma_pair = Some((0.25, 1.0));
        cfg.sigma_pair_at_largest = true;
    }
    cfg
}

fn stokes_flag() -> Verdict {
    let grid = GridSpec::new(2, 32).unwrap();
    let (eps, nu, tau, steps) = (0.05, 0.1, 1e-2, 100);
    let p = WideParams::new(eps, 0.25, nu, 1.0)
        .unwrap()
        .without_convection();
    let u0 = taylor_green(0.0, grid, nu).unwrap();
    let init = Trajectory::constant(&u0, tau, steps).unwrap();
    let opts = MinimizeOptions {
        grad_tol: 1e-10,
        ..MinimizeOptions::default()
    };
    let (traj, _) = minimize_global(&init, &p, &opts).unwrap();
    let amp = mode_two_point(eps, nu, 2.0, tau, steps);
    let oracle_err = (1..=steps)
        .map(|n| traj.slice(n).sub(&u0.scaled(amp[n - 1])).norm() / (amp[n - 1] * u0.norm()))
        .fold(0.0, f64::max);

    let report = epsilon_sweep(&sweep_config(false)).unwrap();
    let ratios = report.ratios();
    let ratios_ok = ratios.iter().all(|r| (0.4..=0.7).contains(r));
    let dists: Vec<String> = report
        .entries
        .iter()
        .map(|e| format!("{:.3e}", e.distances.l2_h1))
        .collect();
    let ratio_txt: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    (
        oracle_err <= 1e-3 && ratios_ok,
        format!(
            "mode oracle error {oracle_err:.2e} (limit 1e-3); distances [{}], ratios [{}] (each in [0.4, 0.7])",
            dists.join(", "),
            ratio_txt.join(", ")
        ),
    )
}

fn reference_accuracy() -> Verdict {
    let grid = GridSpec::new(2, 32).unwrap();
    let u0 = taylor_green(0.0, grid, 0.1).unwrap();
    let run = projection_solve(&u0, 0.1, 1e-3, 1000).unwrap();
    let err = run
        .trajectory
        .last()
        .sub(&taylor_green(1.0, grid, 0.1).unwrap())
        .max_abs();
    (
        err <= 5e-3,
        format!("max-norm error at T = 1: {err:.2e} (limit 5e-3)"),
    )
}

fn theorem_sweep(report: &SweepReport) -> Verdict {
    let d: Vec<f64> = report.entries.iter().map(|e| e.distances.l2_h1).collect();
    let smallest = *d.last().unwrap();
    let converged = report.failed.is_empty() && !report.partial;
    let txt: Vec<String> = d.iter().map(|x| format!("{x:.4}")).collect();
    (
        report.trend_ok && smallest <= 0.05 && converged,
        format!(
            "L2(0,0.8;H1) distances [{}] (10% trend slack), smallest {smallest:.4} (limit 0.05), converged {converged}",
            txt.join(", ")
        ),
    )
}

fn energy_estimate(report: &SweepReport) -> Verdict {
    let violations = report
        .entries
        .iter()
        .filter(|e| e.minimize.converged && e.energy.violation)
        .count();
    let grid = GridSpec::new(2, 32).unwrap();
    let p = WideParams::new(0.1, 0.25, 0.1, 1.0).unwrap();
    let exact = ExactSolutionSpec::taylor_green(1.0, 0.1)
        .trajectory(grid, 1e-2, 100)
        .unwrap();
    let e = energy_report(&exact, &p, 0.05, 1.0);
    let gap = e
        .lhs_ei
        .iter()
        .map(|l| (l - e.rhs).abs() / e.rhs)
        .fold(0.0, f64::max);
    (
        violations == 0 && gap <= 1e-3,
        format!("{violations} minimisers violate the 5% bound; exact TG energy-equality gap {gap:.2e} (limit 1e-3)"),
    )
}

fn apriori(report: &SweepReport) -> Verdict {
    let spread = |f: &dyn Fn(&wide_core::diagnostics::SweepEntry) -> f64| {
        let v: Vec<f64> = report.entries.iter().map(f).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let dt = spread(&|e| e.apriori.eps_dt2_normalized);
    let cv = spread(&|e| e.apriori.eps_conv2_normalized);
    let raw_dt = spread(&|e| e.apriori.eps_dt2);
    let raw_cv = spread(&|e| e.apriori.eps_conv2);
    let sums: Vec<f64> = report
        .entries
        .iter()
        .map(|e| e.apriori.eps_dt2 + e.apriori.eps_conv2)
        .collect();
    let halving = sums.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let kernel_err = SWEEP_EPS
        .iter()
        .map(|&eps| {
            let (l1, l2) = kernel_norms(eps);
            (l1 - 1.0).abs().max((l2 - 1.0 / (2.0 * eps).sqrt()).abs())
        })
        .fold(0.0, f64::max);
    let gap = report
        .entries
        .iter()
        .map(|e| e.el.kernel_identity_error)
        .fold(0.0, f64::max);
    (
        dt <= 2.0 && cv <= 2.0 && halving <= 1.5 && kernel_err <= 1e-10 && gap <= 1e-3,
        format!(
            "C0-normalised max/min {dt:.3} and {cv:.3} (limit 2; raw {raw_dt:.1} and {raw_cv:.1}), halving ratio {halving:.3} (limit 1.5), kernel norms {kernel_err:.1e}, kernel gap {gap:.1e}"
        ),
    )
}

fn sigma_threshold(report: &SweepReport) -> Verdict {
    let flags_ok = [(0.1, false), (0.125, false), (0.13, true), (0.25, true)]
        .iter()
        .all(|&(s, valid)| {
            let p = WideParams::new(0.1, s, 0.1, 1.0).unwrap();
            sigma_certificate(&p).valid == valid
        });
    let pair = report.sigma_pair.as_ref().expect("sigma pair configured");
    let span = report.eps_span_distance.expect("span distance");
    (
        flags_ok && pair.converged && pair.distance_smallest < span,
        format!(
            "certificate flags ok {flags_ok}; sigma 0.25 vs 1.0 at smallest eps {:.4} < eps-span {span:.4}",
            pair.distance_smallest
        ),
    )
}

fn determinism() -> Verdict {
    let grid = GridSpec::new(2, 16).unwrap();
    let p = WideParams::new(0.1, 0.25, 0.1, 0.4).unwrap();
    let run = || {
        let u0 = VelocityField::random(grid, 4.0, 1.0, 42);
        let init = Trajectory::constant(&leray_project(&u0), 0.02, 20).unwrap();
        let (traj, rep) = minimize_global(&init, &p, &MinimizeOptions::default()).unwrap();
        let el = el_report(&traj, &p, &ElOptions::default()).unwrap();
        let text = io::to_json(&rep).unwrap()
            + &io::to_json(&el).unwrap()
            + &io::energy_csv(&energy_report(&traj, &p, 0.05, 0.8));
        (traj, text)
    };
    let (a, ja) = run();
    let (_, jb) = run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.wnst");
    io::write_trajectory(&path, &a, &p).unwrap();
    let (back, q) = io::read_trajectory(&path).unwrap();
    let bits = |t: &Trajectory| -> Vec<u64> {
        t.slices()
            .iter()
            .flat_map(|u| u.components().iter().flatten().map(|x| x.to_bits()))
            .collect()
    };
    let field_path = dir.path().join("u.wnsf");
    io::write_field(&field_path, a.last()).unwrap();
    let field_ok = io::read_field(&field_path).unwrap() == *a.last();
    let trip =
        bits(&a) == bits(&back) && q == p && back.tau().to_bits() == a.tau().to_bits() && field_ok;
    (
        ja == jb && trip,
        format!(
            "identical reports {}, bit-exact checkpoints {trip}",
            ja == jb
        ),
    )
}

type SweepCheck = (usize, &'static str, f64, fn(&SweepReport) -> Verdict);

type Row = (usize, &'static str, Verdict, f64, f64);

fn timed(id: usize, name: &'static str, limit: f64, f: impl FnOnce() -> Verdict) -> Row {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    (id, name, verdict, start.elapsed().as_secs_f64(), limit)
}

fn main() {
    let mut results: Vec<Row> = vec![
        timed(1, "gradient fidelity", 60.0, gradient_fidelity),
        timed(2, "variational identities", 60.0, variational_identities),
        timed(
            3,
            "constant-trajectory value",
            60.0,
            constant_trajectory_value,
        ),
        timed(4, "Stokes-flag oracle and O(eps) rate", 300.0, stokes_flag),
        timed(5, "reference-solver accuracy", 60.0, reference_accuracy),
    ];
    let start = Instant::now();
    let sweep = catch_unwind(|| epsilon_sweep(&sweep_config(true)).unwrap());
    let sweep_secs = start.elapsed().as_secs_f64();
    let shared: [SweepCheck; 4] = [
        (6, "nonlinear eps-sweep convergence", 1800.0, theorem_sweep),
        (7, "energy estimate", 1800.0, energy_estimate),
        (8, "a-priori bounds and kernel", 1800.0, apriori),
        (9, "sigma threshold", 900.0, sigma_threshold),
    ];
    for (id, name, limit, check) in shared {
        results.push(match &sweep {
            Ok(report) => {
                let (id, name, verdict, secs, limit) = timed(id, name, limit, || check(report));
                (id, name, verdict, secs + sweep_secs, limit)
            }
            Err(_) => (
                id,
                name,
                (false, "sweep panicked".into()),
                sweep_secs,
                limit,
            ),
        });
    }
    results.push(timed(10, "determinism and round-trip", 60.0, determinism));

    println!();
    let mut failures = 0;
    for (id, name, (ok, detail), secs, limit) in &results {
        let within = *secs <= *limit;
        let pass = *ok && within;
        failures += usize::from(!pass);
        let extra = if within {
            String::new()
        } else {
            format!(" [runtime over {limit:.0}s]")
        };
        println!(
            "criterion {id:>2} {} {name}: {detail} ({secs:.1}s){extra}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "\nacceptance: {} passed, {failures} failed",
        results.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
