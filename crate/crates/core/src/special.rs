//! Special functions needed for volumes and bounds.

use std::f64::consts::PI;

/// `ln Γ(n/2 + 1)`, exact up to rounding for every positive integer `n`.
///
/// Only half-integer and integer arguments appear in ball volumes, so the
/// product formulas are used directly instead of a general approximation.
pub fn ln_gamma_half_plus_one(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        (1..=n / 2).map(|i| (i as f64).ln()).sum()
    } else {
        let m = n.div_ceil(2);
        0.5 * PI.ln() + (1..=m).map(|i| (i as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// Riemann zeta at an integer `s >= 2`.
///
/// Direct summation of the first `K - 1` terms plus the Euler–Maclaurin tail
/// through `B_6`; with `K = 64` the omitted `B_8` term is below `1e-17`
/// relative for all `s >= 2`.
pub fn zeta(s: u32) -> f64 {
    assert!(s >= 2, "zeta diverges at s = {s}");
    const K: u32 = 64;
    let s_f = s as f64;
    // Sum smallest terms first.
    let head: f64 = (1..K).rev().map(|k| (k as f64).powf(-s_f)).sum();
    let k = K as f64;
    let ks = k.powf(-s_f);
    let tail = k * ks / (s_f - 1.0) + 0.5 * ks + s_f * ks / (12.0 * k)
        - s_f * (s_f + 1.0) * (s_f + 2.0) * ks / (720.0 * k.powi(3))
        + s_f * (s_f + 1.0) * (s_f + 2.0) * (s_f + 3.0) * (s_f + 4.0) * ks / (30240.0 * k.powi(5));
    head + tail
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product Gauss–Legendre integral of `f` over the cube `[a, b]^k`.
pub fn cube_quadrature<F: Fn(&[f64]) -> f64>(f: F, k: usize, a: f64, b: f64, m: usize) -> f64 {
    if k == 0 {
        return f(&[]);
    }
    let (nodes, weights) = gauss_legendre(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let xs: Vec<f64> = nodes.iter().map(|t| mid + half * t).collect();
    let mut idx = vec![0usize; k];
    let mut point = vec![0.0; k];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for d in 0..k {
            point[d] = xs[idx[d]];
            w *= weights[idx[d]];
        }
        total += w * f(&point);
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == k {
                return total * half.powi(k as i32);
            }
        }
    }
}
