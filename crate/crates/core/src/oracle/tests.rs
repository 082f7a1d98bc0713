use super::*;
use approx::assert_relative_eq;
use num_complex::Complex64;

use crate::model::{HestonParams, OptionSpec};

fn params(rho: f64, r: f64) -> HestonParams {
    HestonParams::new(2.0, 0.04, 0.3, rho, r).unwrap()
}

#[test]
fn characteristic_function_normalisation() {
    for &t in &[0.1, 1.0, 10.0] {
        let p = params(-0.6, 0.03);
        let one = log_forward_cf(&p, 0.05, t, Complex64::new(0.0, 0.0));
        assert_relative_eq!(one.re, 1.0, max_relative = 1e-14);
        // X = ln(S_T/F) has E[e^X] = 1
        let mart = log_forward_cf(&p, 0.05, t, Complex64::new(0.0, -1.0));
        assert_relative_eq!(mart.re, 1.0, max_relative = 1e-12);
        assert!(mart.im.abs() < 1e-12);
    }
}

#[test]
fn characteristic_function_is_continuous_for_long_maturities() {
    let p = HestonParams::new(0.5, 0.09, 1.0, -0.9, 0.0).unwrap();
    let mut prev = log_forward_cf(&p, 0.09, 30.0, Complex64::new(0.0, -0.5));
    for k in 1..4000 {
        let u = k as f64 * 0.01;
        let cur = log_forward_cf(&p, 0.09, 30.0, Complex64::new(u, -0.5));
        assert!((cur - prev).norm() < 0.05, "jump at u = {u}");
        prev = cur;
    }
}

#[test]
fn standard_atm_call() {
    // independent reference from a separate quadrature of the same model
    let spec = OptionSpec::call(1.0, 1.0).unwrap();
    let c = heston_call(&params(0.1, 0.0), &spec, 1.0, 0.04).unwrap();
    assert_relative_eq!(c, 0.07781043102059304, max_relative = 1e-8);
}

#[test]
fn put_call_parity() {
    for &(rho, r, k, t) in &[
        (0.1, 0.0, 1.0, 1.0),
        (0.1, 0.01, 1.0, 1.0),
        (-0.7, 0.05, 0.7, 2.0),
        (0.5, 0.02, 1.4, 0.25),
        (-0.3, 0.03, 1.0, 10.0),
    ] {
        let p = params(rho, r);
        let call = OptionSpec::call(k, t).unwrap();
        let c = heston_price(&p, &call, 1.0, 0.05).unwrap();
        let q = heston_price(&p, &call.flipped(), 1.0, 0.05).unwrap();
        assert!((c - q - (1.0 - k * (-r * t).exp())).abs() < 1e-8, "{rho} {r} {k} {t}");
    }
}

#[test]
fn tiny_strike_call_is_the_spot() {
    let spec = OptionSpec::call(1e-8, 1.0).unwrap();
    let c = heston_call(&params(0.1, 0.02), &spec, 1.0, 0.04).unwrap();
    assert!((c - 1.0).abs() < 1e-7);
}

#[test]
fn vanishing_vol_of_vol_recovers_black_scholes() {
    let p = HestonParams::new(50.0, 0.04, 1e-3, 0.1, 0.02).unwrap();
    for &k in &[0.8, 1.0, 1.25] {
        let spec = OptionSpec::call(k, 1.0).unwrap();
        let h = heston_call(&p, &spec, 1.0, 0.04).unwrap();
        let bs = black_scholes(&spec, 1.0, 0.02, 0.2);
        assert!((h - bs).abs() < 1e-4, "K = {k}: {h} vs {bs}");
    }
}

#[test]
fn black_scholes_parity_and_zero_vol() {
    let call = OptionSpec::call(1.1, 0.5).unwrap();
    let c = black_scholes(&call, 1.0, 0.03, 0.25);
    let q = black_scholes(&call.flipped(), 1.0, 0.03, 0.25);
    assert_relative_eq!(c - q, 1.0 - 1.1 * (-0.015f64).exp(), epsilon = 1e-14);
    let itm = OptionSpec::call(0.9, 1.0).unwrap();
    assert_relative_eq!(black_scholes(&itm, 1.0, 0.0, 0.0), 0.1, epsilon = 1e-15);
}

#[test]
fn rejects_bad_inputs() {
    let spec = OptionSpec::call(1.0, 1.0).unwrap();
    assert!(heston_call(&params(0.1, 0.0), &spec, 0.0, 0.04).is_err());
    assert!(heston_put(&params(0.1, 0.0), &spec, 1.0, -0.1).is_err());
    assert!(McConfig::new(0, 10, 1).is_err());
    assert!(McConfig::new(10, 0, 1).is_err());
}

#[test]
fn mc_is_deterministic_and_thread_independent() {
    let p = params(0.1, 0.01);
    let spec = OptionSpec::call(1.0, 1.0).unwrap();
    let cfg = McConfig::new(20_000, 50, 42).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_price(&p, &spec, 1.0, 0.04, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    assert_ne!(a.mean, mc_price(&p, &spec, 1.0, 0.04, &McConfig::new(20_000, 50, 43).unwrap()).unwrap().mean);
}

#[test]
fn mc_spot_is_a_martingale_without_rates() {
    let p = params(-0.5, 0.0);
    let cfg = McConfig::new(100_000, 50, 7).unwrap();
    let est = mc_expectation(&p, 1.0, 0.04, 1.0, &cfg, |s, _| s).unwrap();
    assert!((est.mean - 1.0).abs() <= 3.0 * est.std_error, "{est:?}");
}

#[test]
fn mc_variance_mean_follows_reversion() {
    let p = params(0.3, 0.01);
    let (y0, t) = (0.09, 0.7);
    let cfg = McConfig::new(100_000, 200, 11).unwrap();
    let est = mc_expectation(&p, 1.0, y0, t, &cfg, |_, y| y).unwrap();
    let exact = p.m + (y0 - p.m) * (-p.kappa * t).exp();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn mc_agrees_with_semi_analytic_price() {
    let p = params(0.1, 0.01);
    let spec = OptionSpec::call(1.0, 1.0).unwrap();
    let est = mc_price(&p, &spec, 1.0, 0.04, &McConfig::new(100_000, 100, 2024).unwrap()).unwrap();
    let exact = heston_call(&p, &spec, 1.0, 0.04).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn mc_standard_error_slope() {
    let p = params(0.1, 0.0);
    let spec = OptionSpec::call(1.0, 1.0).unwrap();
    let pts: Vec<(f64, f64)> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&n| {
            let e = mc_price(&p, &spec, 1.0, 0.04, &McConfig::new(n, 20, 5).unwrap()).unwrap();
            ((n as f64).ln(), e.std_error.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.1, "{slope}");
}
