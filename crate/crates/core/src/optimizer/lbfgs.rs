//! Limited-memory BFGS with a strong-Wolfe line search on flat vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sufficient-decrease and curvature constants of the line search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchOptions {
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations allowed per search.
    pub max_evals: usize,
    /// Relative size of rounding noise in the objective value.
    pub value_noise: f64,
}

impl Default for LineSearchOptions {
    fn default() -> Self {
        LineSearchOptions {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 30,
            value_noise: 1e-12,
        }
    }
}

impl LineSearchOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidParams(format!(
                "line search constants must satisfy 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if !(self.value_noise >= 0.0 && self.value_noise < 1e-3) {
            return Err(Error::InvalidParams(format!(
                "value_noise must lie in [0, 1e-3), got {}",
                self.value_noise
            )));
        }
        if self.max_evals < 2 {
            return Err(Error::InvalidParams(
                "line search needs at least 2 evaluations".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) trait Objective {
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Approximate inverse Hessian applied to a gradient.
    fn precondition(&self, g: &[f64]) -> Vec<f64>;
    /// Norm used by the stopping test.
    fn stop_norm(&self, g: &[f64]) -> f64;
    /// Inner product in which `evaluate` returns the gradient.
    fn dot(&self, a: &[f64], b: &[f64]) -> f64;
}

pub(crate) struct Settings {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub line_search: LineSearchOptions,
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

fn finite(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Minimiser of the cubic through `(a, fa, da)` and `(b, fb, db)`, kept inside
/// the interval away from its ends.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let trial = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    } else {
        f64::NAN
    };
    if trial.is_finite() && trial > lo + margin && trial < hi - margin {
        trial
    } else {
        0.5 * (lo + hi)
    }
}

enum Search {
    Accepted(Point),
    Failed,
}

fn line_search<O: Objective>(
    obj: &O,
    x0: &[f64],
    f0: f64,
    d0: f64,
    p: &[f64],
    alpha_init: f64,
    opts: &LineSearchOptions,
) -> Search {
    let (c1, c2) = (opts.c1, opts.c2);
    let mut evals = 0;
    let mut fallback: Option<Point> = None;
    let probe = |alpha: f64, evals: &mut usize| -> Point {
        *evals += 1;
        let x = axpy(alpha, p, x0);
        match obj.evaluate(&x) {
            Ok((f, g)) if finite(f, &g) => {
                let d = obj.dot(&g, p);
                Point { alpha, f, d, x, g }
            }
            _ => Point {
                alpha,
                f: f64::INFINITY,
                d: f64::NAN,
                x,
                g: Vec::new(),
            },
        }
    };
    let noise = opts.value_noise * f0.abs();
    let consider = |pt: &Point, fallback: &mut Option<Point>| {
        if pt.f < f0 && pt.d.is_finite() && fallback.as_ref().is_none_or(|b| pt.f < b.f) {
            *fallback = Some(Point {
                alpha: pt.alpha,
                f: pt.f,
                d: pt.d,
                x: pt.x.clone(),
                g: pt.g.clone(),
            });
        }
    };
    // Strong Wolfe, or approximate Wolfe once the change in value is at the
    // rounding level: the slope condition below guarantees decrease for a
    // locally quadratic objective even when it cannot be resolved in `f`.
    let accept = |pt: &Point| {
        let strong = pt.f <= f0 + c1 * pt.alpha * d0 && pt.d.abs() <= -c2 * d0;
        let approx = pt.f <= f0 + noise && pt.d >= c2 * d0 && pt.d <= (2.0 * c1 - 1.0) * d0;
        strong || approx
    };

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        d: d0,
        x: Vec::new(),
        g: Vec::new(),
    };
    let mut alpha = alpha_init;
    let (mut lo, mut hi);
    loop {
        let cur = probe(alpha, &mut evals);
        consider(&cur, &mut fallback);
        if accept(&cur) {
            return Search::Accepted(cur);
        }
        if cur.f > f0 + c1 * alpha * d0 || (evals > 1 && cur.f >= prev.f) || !cur.d.is_finite() {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.d >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if evals >= opts.max_evals {
            return fallback.map_or(Search::Failed, Search::Accepted);
        }
        alpha = 2.0 * cur.alpha;
        prev = cur;
    }
    while evals < opts.max_evals {
        let trial = if hi.d.is_finite() && hi.f.is_finite() {
            cubic_step(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d)
        } else {
            0.5 * (lo.alpha + hi.alpha)
        };
        if (hi.alpha - lo.alpha).abs() <= 1e-14 * hi.alpha.abs().max(lo.alpha.abs()) {
            break;
        }
        let cur = probe(trial, &mut evals);
        consider(&cur, &mut fallback);
        if accept(&cur) {
            return Search::Accepted(cur);
        }
        if cur.f > f0 + c1 * trial * d0 || cur.f >= lo.f || !cur.d.is_finite() {
            hi = cur;
        } else {
            if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    fallback.map_or(Search::Failed, Search::Accepted)
}

pub(crate) fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, s: &Settings) -> Result<Outcome> {
    let (mut f, mut g) = obj.evaluate(&x0)?;
    if !finite(f, &g) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut x = x0;
    let mut gnorm = obj.stop_norm(&g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut restarted = false;
    let mut iterations = 0;
    let mut message = String::from("maximum iterations reached");
    let mut converged = false;
    while iterations < s.max_iters {
        if gnorm <= s.grad_tol {
            converged = true;
            message = "gradient tolerance reached".into();
            break;
        }
        // two-loop recursion with the preconditioner as initial inverse Hessian
        let mut q = g.clone();
        let mut coeffs = Vec::with_capacity(history.len());
        for (sv, yv, rho) in history.iter().rev() {
            let a = rho * obj.dot(sv, &q);
            q = axpy(-a, yv, &q);
            coeffs.push(a);
        }
        let mut r = obj.precondition(&q);
        if let Some((sv, yv, _)) = history.back() {
            let hy = obj.precondition(yv);
            let gamma = obj.dot(sv, yv) / obj.dot(yv, &hy);
            r.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((sv, yv, rho), a) in history.iter().zip(coeffs.iter().rev()) {
            let b = rho * obj.dot(yv, &r);
            r = axpy(a - b, sv, &r);
        }
        let p: Vec<f64> = r.iter().map(|v| -v).collect();
        let d0 = obj.dot(&g, &p);
        if d0.is_nan() || d0 >= 0.0 {
            if history.is_empty() {
                message = "preconditioned gradient is not a descent direction".into();
                break;
            }
            history.clear();
            continue;
        }
        match line_search(obj, &x, f, d0, &p, 1.0, &s.line_search) {
            Search::Accepted(pt) => {
                iterations += 1;
                if !finite(pt.f, &pt.g) {
                    return Err(Error::NonFinite {
                        iteration: iterations,
                    });
                }
                let sv: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = obj.dot(&sv, &yv);
                if sy > 0.0 {
                    if history.len() == s.memory {
                        history.pop_front();
                    }
                    history.push_back((sv, yv, 1.0 / sy));
                }
                x = pt.x;
                f = pt.f;
                g = pt.g;
                gnorm = obj.stop_norm(&g);
                restarted = false;
            }
            Search::Failed => {
                if restarted || history.is_empty() {
                    message = "line search failed".into();
                    break;
                }
                restarted = true;
                history.clear();
            }
        }
    }
    if !converged && gnorm <= s.grad_tol {
        converged = true;
        message = "gradient tolerance reached".into();
    }
    Ok(Outcome {
        x,
        f,
        grad_norm: gnorm,
        iterations,
        converged,
        message,
    })
}
