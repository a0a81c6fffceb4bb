//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        total += half * rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>();
    }
    total
}

/// Mean and variance of log(1 + delta), delta ~ U[-u, u], by quadrature.
/// The integrand is folded onto [0, u] so the odd parts cancel analytically.
pub fn log_error_moments(u: f64) -> (f64, f64) {
    let mean = integrate(|d| 0.5 * (-d * d).ln_1p(), 0.0, u, 64) / u;
    let second = integrate(|d| 0.5 * (d.ln_1p().powi(2) + (-d).ln_1p().powi(2)), 0.0, u, 64) / u;
    (mean, second - mean * mean)
}

/// exp(x) - 1 by its Taylor series, summed smallest term first.
pub fn expm1_series(x: f64) -> f64 {
    assert!(x.abs() < 1.0);
    let mut terms = vec![];
    let mut t = x;
    let mut k = 1.0;
    while t.abs() > 1e-40 {
        terms.push(t);
        k += 1.0;
        t *= x / k;
    }
    terms.iter().rev().sum()
}

/// Dense solve with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}
