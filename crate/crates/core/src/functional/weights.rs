use super::WideParams;

/// Exponential time weights of the discrete functional on a uniform grid.
///
/// Vectors are indexed by interval `n = 1..=N`; entry 0 is unused and zero.
/// `average[n]` is the mean of `e^{-t/ε}` over `(t_{n-1}, t_n]`;
/// `left[n] + right[n] = average[n]` split it between the two endpoints as the
/// exact integrals of `e^{-t/ε}` against the linear hat functions;
/// `hat[n] = right[n] + left[n+1]` is the total weight attached to slice `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWeights {
    pub tau: f64,
    pub average: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub hat: Vec<f64>,
}

/// `(1 - e^{-x}) / x`
fn i0(x: f64) -> f64 {
    if x < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `∫_0^1 s e^{-xs} ds = (1 - e^{-x}(1 + x)) / x²`
fn i1(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_k (-x)^k / (k! (k + 2))
        let mut term = 1.0;
        let mut sum = 0.5;
        for k in 1..30 {
            term *= -x / k as f64;
            sum += term / (k + 2) as f64;
        }
        sum
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

impl TimeWeights {
    pub fn new(params: &WideParams, tau: f64, steps: usize) -> Self {
        let x = tau / params.epsilon;
        let (a0, a1) = (i0(x), i1(x));
        let mut average = vec![0.0; steps + 1];
        let mut left = vec![0.0; steps + 1];
        let mut right = vec![0.0; steps + 1];
        for n in 1..=steps {
            let decay = (-((n - 1) as f64) * x).exp();
            average[n] = decay * a0;
            left[n] = decay * (a0 - a1);
            right[n] = decay * a1;
        }
        let hat = (0..=steps)
            .map(|n| {
                if n == 0 {
                    0.0
                } else {
                    right[n] + left.get(n + 1).copied().unwrap_or(0.0)
                }
            })
            .collect();
        TimeWeights {
            tau,
            average,
            left,
            right,
            hat,
        }
    }

    pub fn steps(&self) -> usize {
        self.average.len() - 1
    }
}

/// `w_n = (ε/τ)(e^{-t_{n-1}/ε} - e^{-t_n/ε})` for `n = 1..=N`.
pub fn exp_weights(params: &WideParams, tau: f64, steps: usize) -> Vec<f64> {
    TimeWeights::new(params, tau, steps).average[1..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> WideParams {
        WideParams::new(eps, 0.25, 0.1, 1.0).unwrap()
    }

    #[test]
    fn unit_interval_weight() {
        let w = exp_weights(&params(1.0), 1.0, 3);
        assert!((w[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn large_epsilon_gives_unit_weights() {
        let w = exp_weights(&params(1e12), 0.01, 10);
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn telescoping_sum() {
        let (eps, tau, n) = (0.07, 0.01, 100);
        let s: f64 = exp_weights(&params(eps), tau, n)
            .iter()
            .map(|w| tau * w)
            .sum();
        let exact = eps * (1.0 - (-(n as f64) * tau / eps).exp());
        assert!((s - exact).abs() < 1e-15);
    }

    #[test]
    fn endpoint_split_matches_quadrature() {
        let (eps, tau) = (0.05, 0.02);
        let tw = TimeWeights::new(&params(eps), tau, 4);
        // Simpson on a fine grid for ∫ e^{-t/ε} (t - t_{n-1})/τ dt / τ over interval 3
        let (a, b) = (2.0 * tau, 3.0 * tau);
        let m = 2000;
        let h = (b - a) / m as f64;
        let f = |t: f64| (-t / eps).exp() * (t - a) / tau;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let right = s * h / 3.0 / tau;
        assert!((tw.right[3] - right).abs() < 1e-12);
        assert!((tw.left[3] + tw.right[3] - tw.average[3]).abs() < 1e-15);
        assert_eq!(tw.hat[4], tw.right[4]);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        let below = i1(0.5 - 1e-12);
        let above = i1(0.5 + 1e-12);
        assert!((below - above).abs() < 1e-11);
    }
}
