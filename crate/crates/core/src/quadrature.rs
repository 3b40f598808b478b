//! Gauss-Legendre nodes and normalized associated Legendre functions P^1_n.

use std::f64::consts::PI;

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Values of the L2-normalized P^1_n(x), n = 1..=n_max, written to `out`.
///
/// Normalization: the integral of P^1_n(x)^2 over [-1, 1] is 1. The
/// Condon-Shortley phase is dropped.
pub fn assoc_legendre_m1(n_max: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() >= n_max);
    if n_max == 0 {
        return;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    out[0] = (0.75f64).sqrt() * s;
    if n_max == 1 {
        return;
    }
    out[1] = x * 5.0f64.sqrt() * out[0];
    for n in 3..=n_max {
        let nf = n as f64;
        let a = ((4.0 * nf * nf - 1.0) / (nf * nf - 1.0)).sqrt();
        let nm1 = nf - 1.0;
        let b = ((nm1 * nm1 - 1.0) / (4.0 * nm1 * nm1 - 1.0)).sqrt();
        out[n - 1] = a * (x * out[n - 2] - b * out[n - 3]);
    }
}
