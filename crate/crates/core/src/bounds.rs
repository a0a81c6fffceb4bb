//! Constants bounding a product of rounding errors `prod (1 + delta_i)^rho_i = 1 + theta_n`.
//!
//! Three analyses are provided:
//!
//! * DBEA, the worst case `gamma_n = n u / (1 - n u)`;
//! * the mean-informed Hoeffding analysis, both in its original
//!   `lambda`-parameterized form and the modified confidence form;
//! * VIBEA, a Bernstein bound that uses the mean and variance of
//!   `log(1 + delta)` under the uniform rounding model.
//!
//! All probabilistic constants hold with probability at least `zeta` for a
//! single product; [`union_confidence`] composes them over several products.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{counter_u64, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dbea,
    MibeaOriginal,
    Mmibea,
    Vibea,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dbea, Method::MibeaOriginal, Method::Mmibea, Method::Vibea];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dbea => "dbea",
            Method::MibeaOriginal => "mibea",
            Method::Mmibea => "mmibea",
            Method::Vibea => "vibea",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dbea" => Ok(Method::Dbea),
            "mibea" | "mibea-original" => Ok(Method::MibeaOriginal),
            "mmibea" => Ok(Method::Mmibea),
            "vibea" => Ok(Method::Vibea),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

/// Which bound on `|log(1 + delta)|` is used as the Bernstein constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CBound {
    /// `c = log(1 + u)`, the published value.
    #[default]
    Paper,
    /// `c = -log(1 - u)`, the true supremum over `[-u, u]`.
    Symmetric,
}

impl CBound {
    pub fn value(self, u: f64) -> f64 {
        match self {
            CBound::Paper => u.ln_1p(),
            CBound::Symmetric => -(-u).ln_1p(),
        }
    }
}

impl fmt::Display for CBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CBound::Paper => "paper",
            CBound::Symmetric => "symmetric",
        })
    }
}

impl FromStr for CBound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CBound::Paper),
            "symmetric" => Ok(CBound::Symmetric),
            _ => Err(Error::Parse(format!("unknown c bound '{s}' (paper|symmetric)"))),
        }
    }
}

fn check_u(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("unit roundoff {u} not in (0, 1)")))
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if (0.0..1.0).contains(&zeta) {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence {zeta} not in [0, 1)")))
    }
}

/// `log((1 - zeta) / 2)`, always negative.
#[inline]
fn log_half_tail(zeta: f64) -> f64 {
    (-zeta).ln_1p() - std::f64::consts::LN_2
}

/// `atanh(u)/u - 1 = sum_{k>=1} u^{2k} / (2k + 1)`, accurate for small `u`.
fn atanh_ratio_minus_one(u: f64) -> f64 {
    if u > 0.5 {
        return u.atanh() / u - 1.0;
    }
    let x = u * u;
    let mut term = x;
    let mut sum = 0.0;
    let mut k = 1.0;
    while term > sum * 1e-18 || sum == 0.0 {
        sum += term / (2.0 * k + 1.0);
        term *= x;
        k += 1.0;
        if term == 0.0 {
            break;
        }
    }
    sum
}

/// `(c, mu, sigma^2)` of `log(1 + delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogErrorStats {
    pub c: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub kappa: f64,
}

impl LogErrorStats {
    /// Statistics for `delta ~ U[-u, u]` with the published `c`.
    pub fn uniform(u: f64) -> Result<Self> {
        Self::uniform_with(u, CBound::Paper)
    }

    /// Statistics for `delta ~ U[-u, u]`.
    ///
    /// With `s = atanh(u)/u - 1` the mean and variance reduce to
    /// `mu = s + log(1 - u^2)/2` and `sigma^2 = u^2 (1 + s)^2 - 2s - s^2`,
    /// which avoid the cancellation of the textbook log-sum expressions.
    pub fn uniform_with(u: f64, c_bound: CBound) -> Result<Self> {
        check_u(u)?;
        let s = atanh_ratio_minus_one(u);
        let mu = s + 0.5 * (-u * u).ln_1p();
        let sigma_sq = (u * u * (1.0 + s) * (1.0 + s) - 2.0 * s - s * s).max(0.0);
        Ok(LogErrorStats {
            c: c_bound.value(u),
            mu,
            sigma_sq,
            kappa: u * u - 1.0,
        })
    }

    /// The published closed forms evaluated term by term in `f64`.
    /// Loses most digits of `sigma^2` at single precision; kept only for comparison.
    pub fn uniform_literal(u: f64) -> Result<Self> {
        check_u(u)?;
        let (lm, lp) = ((-u).ln_1p(), u.ln_1p());
        let kappa = -1.0 + u * u;
        let mu = (-2.0 * u + (-1.0 + u) * lm + (1.0 + u) * lp) / (2.0 * u);
        let sigma_sq =
            (4.0 * u * u + kappa * (lm * lm - 2.0 * lm * lp + lp * lp)) / (4.0 * u * u);
        Ok(LogErrorStats {
            c: lp,
            mu,
            sigma_sq,
            kappa,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    pub gamma: f64,
    pub holds_with_prob_at_least: f64,
    pub t_value: Option<f64>,
}

/// One bound evaluation: method, confidence, unit roundoff and operation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub method: Method,
    pub zeta: f64,
    pub u: f64,
    pub n: u64,
    pub lambda: Option<f64>,
    pub c_bound: CBound,
}

impl BoundSpec {
    pub fn new(method: Method, zeta: f64, u: f64, n: u64) -> Self {
        BoundSpec {
            method,
            zeta,
            u,
            n,
            lambda: None,
            c_bound: CBound::Paper,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_c_bound(mut self, c_bound: CBound) -> Self {
        self.c_bound = c_bound;
        self
    }

    pub fn evaluate(&self) -> Result<BoundResult> {
        check_u(self.u)?;
        if self.lambda.is_some() != (self.method == Method::MibeaOriginal) {
            return Err(Error::invalid("lambda is required by, and only by, the original MIBEA"));
        }
        match self.method {
            Method::Dbea => gamma_dbea(self.u, self.n),
            Method::MibeaOriginal => gamma_mibea_original(self.u, self.n, self.lambda.unwrap()),
            Method::Mmibea => gamma_mmibea(self.zeta, self.u, self.n),
            Method::Vibea => {
                let stats = LogErrorStats::uniform_with(self.u, self.c_bound)?;
                gamma_vibea(self.zeta, self.u, self.n, &stats)
            }
        }
    }
}

/// Deterministic `gamma_n = n u / (1 - n u)`.
pub fn gamma_dbea(u: f64, n: u64) -> Result<BoundResult> {
    check_u(u)?;
    let nu = n as f64 * u;
    if nu >= 1.0 {
        return Err(Error::BoundInvalid { nu });
    }
    Ok(BoundResult {
        gamma: nu / (1.0 - nu),
        holds_with_prob_at_least: 1.0,
        t_value: None,
    })
}

/// Hoeffding probability as printed: `1 - 2 exp(-lambda (1 - u)^2 / 2)`, clamped at 0.
pub fn hoeffding_probability(lambda: f64, u: f64) -> f64 {
    (1.0 - 2.0 * (-lambda * (1.0 - u).powi(2) / 2.0).exp()).max(0.0)
}

/// Hoeffding probability with the exponent quadratic in `lambda`, the form
/// that makes `lambda_dagger` reproduce `zeta` exactly.
pub fn hoeffding_probability_squared(lambda: f64, u: f64) -> f64 {
    (1.0 - 2.0 * (-(lambda * (1.0 - u)).powi(2) / 2.0).exp()).max(0.0)
}

/// Original mean-informed constant `exp(lambda sqrt(n) u + n u^2/(1-u)) - 1`.
pub fn gamma_mibea_original(u: f64, n: u64, lambda: f64) -> Result<BoundResult> {
    check_u(u)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda {lambda} must be non-negative")));
    }
    let n = n as f64;
    Ok(BoundResult {
        gamma: (lambda * n.sqrt() * u + n * u * u / (1.0 - u)).exp_m1(),
        holds_with_prob_at_least: hoeffding_probability(lambda, u),
        t_value: None,
    })
}

/// `lambda` at which the original and modified mean-informed constants coincide.
pub fn lambda_dagger(zeta: f64, u: f64) -> Result<f64> {
    check_zeta(zeta)?;
    check_u(u)?;
    Ok((-2.0 * log_half_tail(zeta)).sqrt() / (1.0 - u))
}

/// Modified mean-informed constant.
pub fn gamma_mmibea(zeta: f64, u: f64, n: u64) -> Result<BoundResult> {
    check_zeta(zeta)?;
    check_u(u)?;
    let n = n as f64;
    let c = u / (1.0 - u);
    let t = c * (-2.0 * n * log_half_tail(zeta)).sqrt();
    Ok(BoundResult {
        gamma: (t + n * u * u / (1.0 - u)).exp_m1(),
        holds_with_prob_at_least: zeta,
        t_value: Some(t),
    })
}

/// Variance-informed constant `exp(t + n |mu|) - 1`, with `t` the positive
/// root of the Bernstein tail equation.
pub fn gamma_vibea(zeta: f64, u: f64, n: u64, stats: &LogErrorStats) -> Result<BoundResult> {
    check_zeta(zeta)?;
    check_u(u)?;
    let n = n as f64;
    let l = log_half_tail(zeta);
    let c = stats.c;
    let t = (-c * l + (c * c * l * l - 18.0 * n * l * stats.sigma_sq).sqrt()) / 3.0;
    Ok(BoundResult {
        gamma: (t + n * stats.mu.abs()).exp_m1(),
        holds_with_prob_at_least: zeta,
        t_value: Some(t),
    })
}

/// `Q(zeta, k) = 1 - k (1 - zeta)`: probability that `k` events, each
/// holding with probability at least `zeta`, hold together. Not clamped.
pub fn union_confidence(zeta: f64, k: u64) -> f64 {
    1.0 - k as f64 * (1.0 - zeta)
}

/// Member confidence `zeta` such that `Q(zeta, k) = target`.
pub fn solve_member_confidence(target: f64, k: u64) -> Result<f64> {
    check_zeta(target)?;
    if k == 0 {
        return Err(Error::invalid("event count must be at least 1"));
    }
    let zeta = 1.0 - (1.0 - target) / k as f64;
    if zeta >= 1.0 {
        return Err(Error::InfeasibleConfidence { zeta });
    }
    Ok(zeta)
}

/// Window over which a crossing must persist before it is accepted.
pub const CRITICAL_WINDOW: u64 = 1000;
/// Largest operation count scanned for a crossing.
pub const CRITICAL_SCAN_CAP: u64 = 10_000_000;

/// Smallest `n` from which VIBEA beats MMIBEA (`n_c`) and DBEA (`n_d`).
pub fn critical_sizes(zeta: f64, u: f64) -> Result<(u64, u64)> {
    critical_sizes_with(zeta, u, CBound::Paper)
}

pub fn critical_sizes_with(zeta: f64, u: f64, c_bound: CBound) -> Result<(u64, u64)> {
    critical_sizes_for(zeta, u, &LogErrorStats::uniform_with(u, c_bound)?)
}

pub fn critical_sizes_for(zeta: f64, u: f64, stats: &LogErrorStats) -> Result<(u64, u64)> {
    check_zeta(zeta)?;
    check_u(u)?;
    let vibea = |n| gamma_vibea(zeta, u, n, stats).map(|r| r.gamma);
    let n_c = first_stable(CRITICAL_SCAN_CAP, |n| {
        Ok(vibea(n)? < gamma_mmibea(zeta, u, n)?.gamma)
    })?;
    // DBEA only exists while n u < 1; a crossing that survives to the end
    // of that range is accepted even if shorter than the window.
    let last_valid = ((1.0 / u).ceil() as u64).saturating_sub(1).min(CRITICAL_SCAN_CAP);
    let last_valid = if (last_valid as f64) * u >= 1.0 { last_valid - 1 } else { last_valid };
    let n_d = first_stable(last_valid, |n| Ok(vibea(n)? < gamma_dbea(u, n)?.gamma))?;
    Ok((n_c, n_d))
}

/// Smallest `n >= 1` such that `pred` holds on `[n, n + window]` (or on
/// `[n, end]` when the window would pass `end`).
fn first_stable(end: u64, mut pred: impl FnMut(u64) -> Result<bool>) -> Result<u64> {
    let mut start = None;
    for n in 1..=end {
        if pred(n)? {
            let s = *start.get_or_insert(n);
            if n - s >= CRITICAL_WINDOW {
                return Ok(s);
            }
        } else {
            start = None;
        }
    }
    start.ok_or(Error::ScanCapExceeded { cap: end })
}

/// Fraction of `trials` sampled products whose deviation
/// `|prod (1 + delta_i)^rho_i - 1|` is at most `bound.gamma`.
pub fn coverage_oracle(bound: &BoundResult, u: f64, n: u64, trials: usize, seed: u64) -> Result<f64> {
    let dev = product_deviations(&[u], n, trials, seed)?;
    Ok(coverage(&dev[0], bound.gamma))
}

/// Fraction of deviations at most `gamma`.
pub fn coverage(deviations: &[f64], gamma: f64) -> f64 {
    deviations.iter().filter(|&&d| d <= gamma).count() as f64 / deviations.len() as f64
}

const BLOCK: usize = 1024;
const LANES: usize = 8;
/// Largest number of unit roundoffs sampled in one pass.
pub const MAX_SHARED_U: usize = 4;

/// Samples `trials` products of `n` factors `(1 + u v_i)^{rho_i}` with
/// `v_i ~ U[-1, 1)` and `rho_i = +-1` equally likely, and returns
/// `|product - 1|` per trial for every `u` in `us`.
///
/// The same `(v_i, rho_i)` draws are reused for each `u`. Each draw
/// consumes 32 random bits: 31 for `v` and one for `rho`. Trial `k` reads
/// substream `(seed, k)`, so the result does not depend on scheduling.
pub fn product_deviations(us: &[f64], n: u64, trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if us.is_empty() || us.len() > MAX_SHARED_U {
        return Err(Error::invalid(format!("between 1 and {MAX_SHARED_U} unit roundoffs")));
    }
    for &u in us {
        check_u(u)?;
    }
    let per_trial: Vec<[f64; MAX_SHARED_U]> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let key = Stream::new(seed, k as u64).key();
            trial_deviation(us, n, key)
        })
        .collect();
    Ok((0..us.len()).map(|j| per_trial.iter().map(|d| d[j]).collect()).collect())
}

fn trial_deviation(us: &[f64], n: u64, key: u64) -> [f64; MAX_SHARED_U] {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("avx512dq") {
            // SAFETY: the required CPU features were just detected.
            return unsafe { trial_deviation_avx512(us, n, key) };
        }
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { trial_deviation_avx2(us, n, key) };
        }
    }
    trial_deviation_generic(us, n, key)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx512dq,avx512vl,avx2")]
unsafe fn trial_deviation_avx512(us: &[f64], n: u64, key: u64) -> [f64; MAX_SHARED_U] {
    trial_deviation_generic(us, n, key)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn trial_deviation_avx2(us: &[f64], n: u64, key: u64) -> [f64; MAX_SHARED_U] {
    trial_deviation_generic(us, n, key)
}

/// Same IEEE operations in the same order on every code path (no fused
/// multiply-add), so the dispatched variants are bit-identical.
#[inline(always)]
fn trial_deviation_generic(us: &[f64], n: u64, key: u64) -> [f64; MAX_SHARED_U] {
    const SCALE: f64 = 1.0 / (1u64 << 30) as f64;
    let mut up = [0f64; BLOCK];
    let mut down = [0f64; BLOCK];
    let mut num = [[1.0f64; LANES]; MAX_SHARED_U];
    let mut den = [[1.0f64; LANES]; MAX_SHARED_U];
    let mut done = 0u64;
    while done < n {
        let len = (n - done).min(BLOCK as u64) as usize;
        let base = done / 2;
        for k in 0..BLOCK / 2 {
            let x = counter_u64(key, base + k as u64);
            for (h, half) in [x as u32, (x >> 32) as u32].into_iter().enumerate() {
                let v = ((half as i32) >> 1) as f64 * SCALE;
                let m = (half & 1) as f64;
                up[2 * k + h] = v * m;
                down[2 * k + h] = v - v * m;
            }
        }
        for (j, &u) in us.iter().enumerate() {
            let (nj, dj) = (&mut num[j], &mut den[j]);
            let full = len / LANES * LANES;
            for (a, b) in up[..full].chunks_exact(LANES).zip(down[..full].chunks_exact(LANES)) {
                for l in 0..LANES {
                    nj[l] *= 1.0 + u * a[l];
                    dj[l] *= 1.0 + u * b[l];
                }
            }
            for l in 0..len - full {
                nj[l] *= 1.0 + u * up[full + l];
                dj[l] *= 1.0 + u * down[full + l];
            }
        }
        done += len as u64;
    }
    let mut out = [0f64; MAX_SHARED_U];
    for j in 0..us.len() {
        let p: f64 = num[j].iter().product::<f64>() / den[j].iter().product::<f64>();
        out[j] = (p - 1.0).abs();
    }
    out
}
