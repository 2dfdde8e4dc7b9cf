//! Small numerical helpers: Gauss-Legendre nodes and panel/adaptive
//! quadrature.

use crate::{Error, Result};

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre polynomial from the
/// Chebyshev-based initial guess.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
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

/// Fixed-order Gauss-Legendre integration of `f` over `[a, b]`.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    nodes
        .iter()
        .zip(weights.iter())
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Panel-doubling adaptive Gauss-Legendre: split `[a, b]` into `2^k` panels
/// of a 20-point rule until two refinements agree within `tol` (relative,
/// with an absolute floor).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(20);
    let eval_panels = |panels: usize| -> f64 {
        let step = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            let mid = lo + 0.5 * step;
            let half = 0.5 * step;
            let mut acc = 0.0;
            for (&x, &w) in nodes.iter().zip(weights.iter()) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
        total
    };
    let mut prev = eval_panels(1);
    let mut panels = 2;
    while panels <= 512 {
        let cur = eval_panels(panels);
        let delta = (cur - prev).abs();
        if delta <= tol * cur.abs().max(1e-300) || delta <= 1e-16 {
            return Ok(cur);
        }
        prev = cur;
        panels *= 2;
    }
    Err(Error::QuadratureDiverged((prev).abs()))
}
