//! The stochastic two-point boundary value problem
//!
//! ```text
//! d/dx ((1 + theta1 x) du/dx) = -50 theta2^2,   u(0) = u(1) = 0,
//! ```
//!
//! discretized by second-order central differences on `M` intervals,
//! solved with the Thomas algorithm and integrated with a Riemann sum.
//! The quantity of interest is `p = int_0^1 u dx`, known in closed form.

use rayon::prelude::*;

use crate::bounds::{gamma_dbea, gamma_mmibea, gamma_vibea, solve_member_confidence, union_confidence, LogErrorStats, Method};
use crate::error::{Error, Result};
use crate::kernels::{
    dot_with, gamma_ls, reference_solve, thomas_report, thomas_with, BoundConfig, LsCombination, ThomasOutcome,
    TriDiagonal,
};
use crate::precision::{Arithmetic, FloatFormat};
use crate::rng::Stream;

/// Samples per cell when bracketing derivatives of the exact solution.
pub const SAMPLES_PER_CELL: usize = 64;
/// Relative outward padding applied to each sampled range.
pub const RANGE_PADDING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpParams {
    pub theta1: f64,
    pub theta2: f64,
    pub m: usize,
}

impl BvpParams {
    pub fn new(theta1: f64, theta2: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 intervals, got {m}")));
        }
        if !(theta1 >= 0.0) || !(theta2 > 0.0) || !theta1.is_finite() || !theta2.is_finite() {
            return Err(Error::invalid(format!("theta = ({theta1}, {theta2}) out of range")));
        }
        Ok(BvpParams { theta1, theta2, m })
    }

    /// Draws `theta1 ~ U[0,1] + 0.1`, `theta2 ~ U[0,1] + 1` from substream `index`.
    pub fn sample(seed: u64, index: u64, m: usize) -> Result<Self> {
        let mut s = Stream::named(seed, "params", index);
        let theta1 = s.next_unit() + 0.1;
        let theta2 = s.next_unit() + 1.0;
        BvpParams::new(theta1, theta2, m)
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.m as f64
    }

    fn forcing(&self) -> f64 {
        50.0 * self.theta2 * self.theta2
    }
}

/// `A u = b` for the interior nodes `x_i = i dx`, `i = 1..M-1`.
pub fn assemble(p: &BvpParams) -> (TriDiagonal, Vec<f64>) {
    let m = p.m;
    let h = p.theta1 / m as f64;
    let dx = p.dx();
    let alpha = |i: usize| 1.0 + h * (i as f64 - 0.5);
    let nu = |i: usize| 1.0 + h * (i as f64 + 0.5);
    let t = TriDiagonal {
        sub: (2..m).map(alpha).collect(),
        diag: (1..m).map(|i| -2.0 - 2.0 * h * i as f64).collect(),
        sup: (1..m - 1).map(nu).collect(),
    };
    let b = vec![-p.forcing() * dx * dx; m - 1];
    (t, b)
}

/// `p(theta1, theta2) = int_0^1 u dx`.
pub fn analytic_p(theta1: f64, theta2: f64) -> Result<f64> {
    if !(theta1 > 0.0) {
        return Err(Error::Domain(format!("theta1 = {theta1} must be positive")));
    }
    let l = theta1.ln_1p();
    Ok(25.0 * theta2 * theta2 * (-2.0 * theta1 + (2.0 + theta1) * l) / (theta1 * theta1 * l))
}

/// Exact solution and its first three derivatives at `x`.
pub fn analytic_u(theta1: f64, theta2: f64, x: f64) -> [f64; 4] {
    let k = 50.0 * theta2 * theta2;
    if theta1 == 0.0 {
        return [k * x * (1.0 - x) / 2.0, k * (0.5 - x), -k, 0.0];
    }
    let l = theta1.ln_1p();
    let w = 1.0 + theta1 * x;
    [
        k / theta1 * ((theta1 * x).ln_1p() / l - x),
        k / theta1 * (theta1 / (w * l) - 1.0),
        -k * theta1 / (w * w * l),
        2.0 * k * theta1 * theta1 / (w * w * w * l),
    ]
}

/// Range of `f` over `[a, b]` from dense samples, padded outward by
/// [`RANGE_PADDING`] of its width.
fn sampled_range(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..=SAMPLES_PER_CELL {
        let v = f(a + (b - a) * k as f64 / SAMPLES_PER_CELL as f64);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = RANGE_PADDING * (hi - lo);
    (lo - pad, hi + pad)
}

/// Forcing constant in the truncation residual
/// `t_i = alpha_i u_{i-1} + beta_i u_i + nu_i u_{i+1} + 50 theta2^2 dx^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TruncationForcing {
    /// `k = 2`, the right-hand side actually assembled.
    #[default]
    Consistent,
    /// `k = 3`, as printed in the interval definition of `t_i`.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationEnclosure {
    pub t_inf: Vec<f64>,
    pub t_sup: Vec<f64>,
    /// Componentwise enclosure of `R u - u_tilde`.
    pub eps_lo: Vec<f64>,
    pub eps_hi: Vec<f64>,
    dx: f64,
}

impl DiscretizationEnclosure {
    pub fn contains(&self, eps: &[f64]) -> bool {
        eps.iter()
            .zip(self.eps_lo.iter().zip(&self.eps_hi))
            .all(|(e, (lo, hi))| lo <= e && e <= hi)
    }

    pub fn max_width(&self) -> f64 {
        self.eps_lo.iter().zip(&self.eps_hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    /// Width of the induced enclosure of `dx * sum_i eps_i`, the error the
    /// nodal discretization error contributes to the Riemann sum.
    pub fn qoi_width(&self) -> f64 {
        self.dx * self.eps_lo.iter().zip(&self.eps_hi).map(|(l, h)| h - l).sum::<f64>()
    }

    /// Enclosure of `dx * sum_i eps_i`.
    pub fn qoi_interval(&self) -> (f64, f64) {
        (self.dx * self.eps_lo.iter().sum::<f64>(), self.dx * self.eps_hi.iter().sum::<f64>())
    }
}

pub fn discretization_enclosure(p: &BvpParams) -> Result<DiscretizationEnclosure> {
    discretization_enclosure_with(p, TruncationForcing::Consistent)
}

/// Enclosure of the discretization error from Taylor expansions with
/// Lagrange remainders around each node. With the consistent forcing the
/// polynomial terms of the residual cancel exactly, leaving
/// `t_i = dx^3/6 (nu_i u'''(c+) - alpha_i u'''(c-))`.
pub fn discretization_enclosure_with(p: &BvpParams, forcing: TruncationForcing) -> Result<DiscretizationEnclosure> {
    let (a, _) = assemble(p);
    let m = p.m;
    let dx = p.dx();
    let h = p.theta1 / m as f64;
    let offset = match forcing {
        TruncationForcing::Consistent => 0.0,
        TruncationForcing::AsPrinted => p.forcing() * (dx * dx * dx - dx * dx),
    };
    let u3 = |x| analytic_u(p.theta1, p.theta2, x)[3];
    let c = dx * dx * dx / 6.0;
    let (mut t_inf, mut t_sup) = (Vec::with_capacity(m - 1), Vec::with_capacity(m - 1));
    for i in 1..m {
        let x = i as f64 * dx;
        let alpha = 1.0 + h * (i as f64 - 0.5);
        let nu = 1.0 + h * (i as f64 + 0.5);
        let (lm, hm) = sampled_range(u3, x - dx, x);
        let (lp, hp) = sampled_range(u3, x, x + dx);
        t_inf.push(offset + c * (nu * lp - alpha * hm));
        t_sup.push(offset + c * (nu * hp - alpha * lm));
    }
    // A has a negative diagonal and positive off-diagonals, so A^{-1} <= 0
    // entrywise and the endpoints swap.
    let e1 = reference_solve(&a, &t_sup)?;
    let e2 = reference_solve(&a, &t_inf)?;
    let eps_lo = e1.iter().zip(&e2).map(|(x, y)| x.min(*y)).collect();
    let eps_hi = e1.iter().zip(&e2).map(|(x, y)| x.max(*y)).collect();
    Ok(DiscretizationEnclosure {
        t_inf,
        t_sup,
        eps_lo,
        eps_hi,
        dx,
    })
}

/// `R u - u_tilde` with the discrete solution computed in `f64`.
pub fn true_discretization_error(p: &BvpParams) -> Result<Vec<f64>> {
    let (a, b) = assemble(p);
    let u = reference_solve(&a, &b)?;
    Ok((1..p.m)
        .zip(&u)
        .map(|(i, ui)| analytic_u(p.theta1, p.theta2, i as f64 * p.dx())[0] - ui)
        .collect())
}

/// Enclosure of `p - dx sum_i u(x_i)`, the trapezoid-rule error, from the
/// range of `u''` on each cell.
pub fn quadrature_enclosure(p: &BvpParams) -> (f64, f64) {
    let dx = p.dx();
    let u2 = |x| analytic_u(p.theta1, p.theta2, x)[2];
    let (mut lo, mut hi) = (0.0, 0.0);
    for j in 0..p.m {
        let (a, b) = sampled_range(u2, j as f64 * dx, (j + 1) as f64 * dx);
        lo -= b;
        hi -= a;
    }
    let c = dx * dx * dx / 12.0;
    (c * lo, c * hi)
}

/// `dx sum_i u_i`, multiply-accumulate left to right.
pub fn riemann_with<A: Arithmetic>(u_hat: &[f64], dx: f64, ar: &mut A) -> Result<f64> {
    let w = vec![dx; u_hat.len()];
    dot_with(u_hat, &w, ar)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannOutcome {
    pub p_hat: f64,
    /// `(method, dx gamma_{M-1} ||u_hat||_1)`; `None` where DBEA is invalid.
    pub bounds: Vec<(Method, Option<f64>)>,
    /// Products covered by the union bound: `M - 1`.
    pub events: u64,
}

pub fn riemann_integrate(u_hat: &[f64], dx: f64, fmt: &FloatFormat, cfg: &BoundConfig) -> Result<RiemannOutcome> {
    if !(dx > 0.0) {
        return Err(Error::invalid(format!("dx = {dx} must be positive")));
    }
    let p_hat = riemann_with(u_hat, dx, &mut { *fmt })?;
    let n = u_hat.len() as u64;
    let norm1: f64 = u_hat.iter().map(|v| v.abs()).sum();
    let g = method_gammas(fmt.unit_roundoff(), n, n, cfg)?;
    Ok(RiemannOutcome {
        p_hat,
        bounds: g.into_iter().map(|(m, g)| (m, g.map(|g| dx * g * norm1))).collect(),
        events: n,
    })
}

fn method_gammas(u: f64, n: u64, events: u64, cfg: &BoundConfig) -> Result<Vec<(Method, Option<f64>)>> {
    let zeta = solve_member_confidence(cfg.target, events)?;
    let stats = LogErrorStats::uniform_with(u, cfg.c_bound)?;
    Ok(vec![
        (Method::Dbea, gamma_dbea(u, n).ok().map(|r| r.gamma)),
        (Method::Mmibea, Some(gamma_mmibea(zeta, u, n)?.gamma)),
        (Method::Vibea, Some(gamma_vibea(zeta, u, n, &stats)?.gamma)),
    ])
}

/// Rounding bound on `|p_hat - p_tilde|` for the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiBound {
    pub method: Method,
    pub gamma_ls: Option<f64>,
    pub gamma_sum: Option<f64>,
    /// `dx ((M-1) gamma_LS C_LS + gamma_{M-1} ||u_hat||_1)`.
    pub bound: Option<f64>,
    pub member_zeta: f64,
    pub confidence: f64,
}

/// Total union-bound event count of solve plus Riemann sum: `8M - 14`.
pub fn pipeline_events(m: usize) -> u64 {
    8 * m as u64 - 14
}

/// Composes the solve and summation constants at one member confidence,
/// solved so that all `8M - 14` products are covered with `cfg.target`.
pub fn qoi_bounds(m: usize, u: f64, c_ls_abs: f64, u_hat_norm1: f64, cfg: &BoundConfig) -> Result<Vec<QoiBound>> {
    let events = pipeline_events(m);
    let n = m as u64 - 1;
    let dx = 1.0 / m as f64;
    let zeta = solve_member_confidence(cfg.target, events)?;
    let g1 = method_gammas(u, 1, events, cfg)?;
    let g2 = method_gammas(u, 2, events, cfg)?;
    let gs = method_gammas(u, n, events, cfg)?;
    Ok(g1
        .iter()
        .zip(&g2)
        .zip(&gs)
        .map(|((&(method, a), &(_, b)), &(_, s))| {
            let (combination, member, confidence) = if method == Method::Dbea {
                (LsCombination::Deterministic, 1.0, 1.0)
            } else {
                (LsCombination::Full, zeta, union_confidence(zeta, events))
            };
            let ls = a.zip(b).map(|(x, y)| gamma_ls(x, y, combination));
            QoiBound {
                method,
                gamma_ls: ls,
                gamma_sum: s,
                bound: ls.zip(s).map(|(l, s)| dx * (n as f64 * l * c_ls_abs + s * u_hat_norm1)),
                member_zeta: member,
                confidence,
            }
        })
        .collect())
}

impl QoiBound {
    pub fn find(bounds: &[QoiBound], method: Method) -> Option<&QoiBound> {
        bounds.iter().find(|b| b.method == method)
    }
}

/// One BVP realization computed in a low-precision format.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpRun {
    pub params: BvpParams,
    pub fmt: FloatFormat,
    pub solve: ThomasOutcome,
    pub p_hat: f64,
    /// Riemann sum of the `f64` solution of the rounded system; the rounding
    /// bounds refer to `|p_hat - p_tilde|`.
    pub p_tilde: f64,
    /// Riemann sum of the `f64` solution of the unrounded system.
    pub p_tilde_exact_inputs: f64,
    pub p_exact: Option<f64>,
    pub qoi_bounds: Vec<QoiBound>,
}

impl BvpRun {
    pub fn rounding_error(&self) -> f64 {
        (self.p_hat - self.p_tilde).abs()
    }
}

/// Assembles, rounds the system into `fmt`, solves and integrates.
pub fn solve_qoi(p: &BvpParams, fmt: &FloatFormat) -> Result<f64> {
    let (a, b) = assemble(p);
    let (a, b) = (a.round_to(fmt)?, fmt.round_slice(&b)?);
    let mut ar = *fmt;
    let (_, u_hat) = thomas_with(&a, &b, &mut ar)?;
    riemann_with(&u_hat, fmt.round(p.dx())?, &mut ar)
}

/// Full pipeline with measured errors and bounds attached.
pub fn run(p: &BvpParams, fmt: &FloatFormat, cfg: &BoundConfig) -> Result<BvpRun> {
    let (a0, b0) = assemble(p);
    let (a, b) = (a0.round_to(fmt)?, fmt.round_slice(&b0)?);
    let dx = fmt.round(p.dx())?;
    let mut ar = *fmt;
    let (f, u_hat) = thomas_with(&a, &b, &mut ar)?;
    let p_hat = riemann_with(&u_hat, dx, &mut ar)?;
    let solve = thomas_report(&a, &b, f, u_hat, fmt, cfg)?;
    let mut exact = FloatFormat::REFERENCE;
    let p_tilde = riemann_with(&reference_solve(&a, &b)?, dx, &mut exact)?;
    let p_tilde_exact_inputs = riemann_with(&reference_solve(&a0, &b0)?, p.dx(), &mut exact)?;
    let norm1: f64 = solve.x_hat.iter().map(|v| v.abs()).sum();
    let qoi = qoi_bounds(p.m, fmt.unit_roundoff(), solve.c_ls_abs, norm1, cfg)?;
    Ok(BvpRun {
        params: *p,
        fmt: *fmt,
        solve,
        p_hat,
        p_tilde,
        p_tilde_exact_inputs,
        p_exact: analytic_p(p.theta1, p.theta2).ok(),
        qoi_bounds: qoi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub q_hat: f64,
    /// Mean of the analytic `p` over the same parameter draws.
    pub q_ref: f64,
    pub abs_err_vs_reference: f64,
    /// Large-sample analytic estimate of `E[P]`.
    pub q_large: f64,
    pub abs_err_total: f64,
    /// `sigma_hat / sqrt(n)` of the computed samples.
    pub std_error: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Analytic-`p` Monte Carlo estimate of `E[P]` from a stream disjoint from the experiment draws.
pub fn reference_q(seed: u64, samples: usize) -> Result<f64> {
    let chunk = 1 << 16;
    let parts: Vec<f64> = (0..samples.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut s = Stream::named(seed, "reference-q", c as u64);
            let len = chunk.min(samples - c * chunk);
            (0..len)
                .map(|_| {
                    let t1 = s.next_unit() + 0.1;
                    let t2 = s.next_unit() + 1.0;
                    analytic_p(t1, t2).unwrap()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(parts.iter().sum::<f64>() / samples as f64)
}

/// Monte Carlo estimate of `E[P]` with each sample solved on `m` intervals in `fmt`.
/// Samples hitting a zero pivot are skipped and counted.
pub fn monte_carlo_q(m: usize, n_samples: usize, fmt: &FloatFormat, seed: u64, reference_samples: usize) -> Result<MonteCarloResult> {
    if n_samples == 0 {
        return Err(Error::EmptySample);
    }
    let draws: Vec<Result<Option<(f64, f64)>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let p = BvpParams::sample(seed, i as u64, m)?;
            match solve_qoi(&p, fmt) {
                Ok(q) => Ok(Some((q, analytic_p(p.theta1, p.theta2)?))),
                Err(Error::ZeroPivot { .. }) => Ok(None),
                Err(e) => Err(Error::Trial { index: i, source: Box::new(e) }),
            }
        })
        .collect();
    let mut vals = Vec::with_capacity(n_samples);
    let mut skipped = 0;
    for d in draws {
        match d? {
            Some(v) => vals.push(v),
            None => skipped += 1,
        }
    }
    if vals.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = vals.len() as f64;
    let q_hat = vals.iter().map(|v| v.0).sum::<f64>() / n;
    let q_ref = vals.iter().map(|v| v.1).sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v.0 - q_hat).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let q_large = reference_q(seed, reference_samples)?;
    Ok(MonteCarloResult {
        q_hat,
        q_ref,
        abs_err_vs_reference: (q_hat - q_ref).abs(),
        q_large,
        abs_err_total: (q_hat - q_large).abs(),
        std_error: (var / n).sqrt(),
        used: vals.len(),
        skipped,
    })
}

/// Sources of error in `p_hat` for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub params: BvpParams,
    pub fmt: FloatFormat,
    /// Width of the enclosure of the discretization contribution to the Riemann sum.
    pub discretization_width: f64,
    /// Enclosure of `p - p_tilde` (nodal discretization plus quadrature error).
    pub discretization_interval: (f64, f64),
    pub rounding_bounds: Vec<QoiBound>,
    pub measured_rounding: f64,
    pub measured_total: Option<f64>,
}

pub fn budget(p: &BvpParams, fmt: &FloatFormat, cfg: &BoundConfig) -> Result<Budget> {
    let enc = discretization_enclosure(p)?;
    let (el, eh) = enc.qoi_interval();
    let (ql, qh) = quadrature_enclosure(p);
    let r = run(p, fmt, cfg)?;
    Ok(Budget {
        params: *p,
        fmt: *fmt,
        discretization_width: enc.qoi_width(),
        discretization_interval: (el + ql, eh + qh),
        measured_rounding: r.rounding_error(),
        measured_total: r.p_exact.map(|q| (q - r.p_hat).abs()),
        rounding_bounds: r.qoi_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_zero_assembly() {
        let p = BvpParams::new(0.0, 2.0, 4).unwrap();
        let (a, b) = assemble(&p);
        assert_eq!(a, TriDiagonal::constant(3, 1.0, -2.0, 1.0));
        assert_eq!(b, vec![-50.0 * 4.0 / 16.0; 3]);
    }

    #[test]
    fn coefficient_example() {
        let p = BvpParams::new(1.0, 1.0, 4).unwrap();
        let (a, _) = assemble(&p);
        // alpha_2 sits in row 2 (index 1)
        assert_eq!(a.sub[0], 11.0 / 8.0);
    }

    #[test]
    fn interface_coefficients_agree() {
        let p = BvpParams::new(0.7, 1.3, 32).unwrap();
        let (a, _) = assemble(&p);
        // alpha_{i+1} and nu_i both evaluate the diffusivity at x_{i+1/2}
        for i in 0..a.sup.len() {
            assert_eq!(a.sub[i], a.sup[i]);
        }
    }

    #[test]
    fn analytic_solution_satisfies_ode() {
        let (t1, t2) = (0.6, 1.4);
        let [u0, ..] = analytic_u(t1, t2, 0.0);
        let [u1, ..] = analytic_u(t1, t2, 1.0);
        assert!(u0.abs() < 1e-14 && u1.abs() < 1e-12);
        for x in [0.1, 0.5, 0.9] {
            let [_, d1, d2, _] = analytic_u(t1, t2, x);
            let lhs = t1 * d1 + (1.0 + t1 * x) * d2;
            assert!((lhs + 50.0 * t2 * t2).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_p_scaling_and_domain() {
        let a = analytic_p(0.4, 1.0).unwrap();
        assert!((analytic_p(0.4, 2.0).unwrap() - 4.0 * a).abs() < 1e-12 * a);
        assert!(matches!(analytic_p(0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn riemann_trivial() {
        let cfg = BoundConfig::default();
        let r = riemann_integrate(&[1.0; 7], 0.125, &FloatFormat::FP16, &cfg).unwrap();
        assert_eq!(r.p_hat, 7.0 * 0.125);
        assert_eq!(r.events, 7);
        let r = riemann_integrate(&[0.3], 0.5, &FloatFormat::REFERENCE, &cfg).unwrap();
        assert_eq!(r.p_hat, 0.15);
    }

    #[test]
    fn pipeline_event_count() {
        assert_eq!(pipeline_events(8), 7 * 7 - 6 + 7);
    }
}
