//! Gauss-Legendre rules and the exponential kernel norms.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess refined by Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]` with `panels` panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let part: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * f(mid + 0.5 * h * xi))
            .sum();
        total += 0.5 * h * part;
    }
    total
}

/// Kernel `K(t) = ε^{-1} e^{t/ε}` for `t < 0`, zero for `t > 0`.
pub fn kernel(epsilon: f64, t: f64) -> f64 {
    if t < 0.0 {
        (t / epsilon).exp() / epsilon
    } else {
        0.0
    }
}

/// `(‖K‖_{L¹}, ‖K‖_{L²})` by quadrature over `[-60ε, 0]`; the neglected tail
/// is below `e^{-60}`.
pub fn kernel_norms(epsilon: f64) -> (f64, f64) {
    let a = -60.0 * epsilon;
    let l1 = integrate(|t| kernel(epsilon, t).abs(), a, 0.0, 240, 10);
    let l2 = integrate(|t| kernel(epsilon, t).powi(2), a, 0.0, 240, 10).sqrt();
    (l1, l2)
}
