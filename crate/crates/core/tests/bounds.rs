mod common;

use common::{expm1_series, log_error_moments};
use proptest::prelude::*;
use rounding_uq::bounds::*;

const U16: f64 = 1.0 / 2048.0;
const U32: f64 = 1.0 / 16_777_216.0;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn log_stats_match_quadrature() {
    for u in [0.5, U16, U32] {
        let (mu, var) = log_error_moments(u);
        let s = LogErrorStats::uniform(u).unwrap();
        assert!(rel(s.mu, mu) < 1e-12, "mu at u={u}: {} vs {mu}", s.mu);
        assert!(rel(s.sigma_sq, var) < 1e-12, "var at u={u}: {} vs {var}", s.sigma_sq);
        assert_eq!(s.kappa, u * u - 1.0);
        assert_eq!(s.c, u.ln_1p());
    }
    assert!(LogErrorStats::uniform(U32).unwrap().mu.abs() < 2f64.powi(-40));
}

#[test]
fn log_stats_half_closed_form() {
    let expect = -1.0 + (-0.5) * 0.5f64.ln() + 1.5 * 1.5f64.ln();
    assert!(rel(LogErrorStats::uniform(0.5).unwrap().mu, expect) < 1e-14);
}

#[test]
fn literal_closed_form_loses_sigma_at_single_precision() {
    let stable = LogErrorStats::uniform(U32).unwrap();
    let literal = LogErrorStats::uniform_literal(U32).unwrap();
    assert!(rel(literal.sigma_sq, stable.sigma_sq) > 1e-3);
    let half = LogErrorStats::uniform_literal(0.5).unwrap();
    assert!(rel(half.sigma_sq, LogErrorStats::uniform(0.5).unwrap().sigma_sq) < 1e-12);
}

#[test]
fn mibea_original_against_series() {
    let g = gamma_mibea_original(U32, 100, 1.0).unwrap().gamma;
    let oracle = expm1_series(10.0 * U32 + 100.0 * U32 * U32 / (1.0 - U32));
    assert!(rel(g, oracle) < 1e-14);
}

// Values produced by the quadrature/series oracle, then frozen.
#[test]
fn frozen_constants() {
    let s = LogErrorStats::uniform(U16).unwrap();
    let v = gamma_vibea(0.99, U16, 1_000_000, &s).unwrap();
    assert!(rel(v.gamma, 1.607_217_465_909_970_9) < 1e-13);
    assert_eq!(v.holds_with_prob_at_least, 0.99);
    let m = gamma_mmibea(0.99, U32, 10_000).unwrap();
    assert!(rel(m.gamma, 1.940_301_058_701_443_7e-5) < 1e-13);
    assert_eq!(gamma_mmibea(0.99, U32, 0).unwrap().gamma, 0.0);
}

#[test]
fn mmibea_equals_original_at_lambda_dagger() {
    for &(zeta, u, n) in &[(0.99, U16, 10u64), (0.9, U32, 12345), (0.5, 0.01, 7)] {
        let l = lambda_dagger(zeta, u).unwrap();
        let a = gamma_mmibea(zeta, u, n).unwrap().gamma;
        let b = gamma_mibea_original(u, n, l).unwrap().gamma;
        assert!(rel(a, b) < 1e-12);
        // only the quadratic-exponent probability reproduces zeta
        assert!(hoeffding_probability_squared(l, u) >= zeta - 1e-12);
        assert!((hoeffding_probability_squared(l, u) - zeta).abs() < 1e-12);
    }
}

#[test]
fn vibea_scaling_ratio_at_large_n() {
    let s = LogErrorStats::uniform(U16).unwrap();
    let n = 100_000_000;
    let ratio = gamma_mmibea(0.99, U16, n).unwrap().gamma / gamma_vibea(0.99, U16, n, &s).unwrap().gamma;
    assert!(ratio > 1e5, "ratio {ratio:e}");
}

#[test]
fn critical_sizes_fp16_table() {
    let expect = [(0.5, (1, 2)), (0.9, (2, 4)), (0.95, (2, 5)), (0.99, (3, 8)), (0.999, (4, 11))];
    for (zeta, nc) in expect {
        assert_eq!(critical_sizes(zeta, U16).unwrap(), nc, "zeta {zeta}");
    }
}

#[test]
fn critical_sizes_fp32_agreeing_entries() {
    assert_eq!(critical_sizes(0.5, U32).unwrap(), (1, 2));
    assert_eq!(critical_sizes(0.95, U32).unwrap(), (2, 5));
}

#[test]
fn crossing_holds_beyond_critical_sizes() {
    for u in [U16, U32] {
        let s = LogErrorStats::uniform(u).unwrap();
        for zeta in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let (nc, nd) = critical_sizes(zeta, u).unwrap();
            let mut ns: Vec<u64> = (nc..nc + 3000).collect();
            ns.extend((0..60).map(|k| (10f64.powf(3.5 + k as f64 * 0.1)) as u64));
            for n in ns {
                let v = gamma_vibea(zeta, u, n, &s).unwrap().gamma;
                assert!(v < gamma_mmibea(zeta, u, n).unwrap().gamma, "n_c at n={n}");
                if n >= nd && (n as f64) * u < 1.0 {
                    assert!(v < gamma_dbea(u, n).unwrap().gamma, "n_d at n={n}");
                }
            }
        }
    }
}

#[test]
fn coverage_vibea_at_thousand_ops() {
    let s = LogErrorStats::uniform(U16).unwrap();
    let b = gamma_vibea(0.99, U16, 1000, &s).unwrap();
    let cov = coverage_oracle(&b, U16, 1000, 100_000, 17).unwrap();
    assert!(cov >= 0.99 - 0.005, "coverage {cov}");
}

proptest! {
    #[test]
    fn vibea_increasing_in_n(zeta in 0.0f64..0.9999, e in 4i32..30, n in 0u64..10_000_000) {
        let u = 2f64.powi(-e);
        let s = LogErrorStats::uniform(u).unwrap();
        // past exp overflow both sides are infinite
        prop_assume!(gamma_mmibea(zeta, u, n + 1).unwrap().gamma.is_finite());
        prop_assert!(gamma_vibea(zeta, u, n + 1, &s).unwrap().gamma > gamma_vibea(zeta, u, n, &s).unwrap().gamma);
        prop_assert!(gamma_mmibea(zeta, u, n + 1).unwrap().gamma > gamma_mmibea(zeta, u, n).unwrap().gamma);
    }

    #[test]
    fn vibea_increasing_in_zeta(z1 in 0.0f64..0.999, dz in 1e-6f64..1e-3, e in 4i32..30, n in 1u64..1_000_000) {
        let u = 2f64.powi(-e);
        let s = LogErrorStats::uniform(u).unwrap();
        let z2 = z1 + dz;
        prop_assume!(gamma_mmibea(z2, u, n).unwrap().gamma.is_finite());
        prop_assert!(gamma_vibea(z2, u, n, &s).unwrap().gamma > gamma_vibea(z1, u, n, &s).unwrap().gamma);
        prop_assert!(gamma_mmibea(z2, u, n).unwrap().gamma > gamma_mmibea(z1, u, n).unwrap().gamma);
    }

    #[test]
    fn vibea_increasing_in_u(zeta in 0.0f64..0.9999, e in 4i32..30, n in 1u64..1_000_000) {
        let (lo, hi) = (2f64.powi(-e - 1), 2f64.powi(-e));
        let (sl, sh) = (LogErrorStats::uniform(lo).unwrap(), LogErrorStats::uniform(hi).unwrap());
        prop_assume!(gamma_mmibea(zeta, hi, n).unwrap().gamma.is_finite());
        prop_assert!(gamma_vibea(zeta, hi, n, &sh).unwrap().gamma > gamma_vibea(zeta, lo, n, &sl).unwrap().gamma);
        prop_assert!(gamma_mmibea(zeta, hi, n).unwrap().gamma > gamma_mmibea(zeta, lo, n).unwrap().gamma);
    }

    #[test]
    fn stats_invariants(u in 1e-9f64..0.99) {
        let s = LogErrorStats::uniform(u).unwrap();
        prop_assert!(s.c > 0.0 && s.sigma_sq >= 0.0);
        prop_assert!(s.mu < 0.0 && s.mu.abs() <= s.c);
    }

    #[test]
    fn q_composition(zeta in 0.0f64..1.0, m in 1u64..10_000, n in 1u64..10_000) {
        let lhs = 1.0 - m as f64 * (1.0 - union_confidence(zeta, n));
        let rhs = union_confidence(zeta, m * n);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0) * (m * n) as f64);
    }

    #[test]
    fn member_confidence_round_trip(target in 0.0f64..0.9999, k in 1u64..100_000_000) {
        let zeta = solve_member_confidence(target, k).unwrap();
        prop_assert!(zeta < 1.0);
        prop_assert!((union_confidence(zeta, k) - target).abs() < 1e-15 * k as f64 + 1e-15);
    }

    #[test]
    fn dbea_valid_below_one(u in 1e-8f64..0.5, n in 0u64..1000) {
        let r = gamma_dbea(u, n);
        if (n as f64) * u < 1.0 {
            prop_assert!(r.unwrap().gamma >= 0.0);
        } else {
            prop_assert!(r.is_err());
        }
    }
}
