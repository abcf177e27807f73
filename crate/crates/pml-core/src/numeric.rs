//! Log-domain helpers and the Laplace sampler.
//!
//! Everything probability-flavoured in this crate is kept in log space;
//! these are the few primitives that make that workable without losing
//! precision in the tails.

use rand::Rng;

/// Stable `log(sum(exp(xs)))`.
///
/// Empty input and all-`-inf` input both return `-inf` (the log of an
/// empty / zero sum). A `+inf` entry propagates to `+inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Stable `log(1 - exp(x))` for `x < 0`.
///
/// Splits at `-ln 2`: near zero use `ln(-expm1(x))`, far from zero use
/// `ln_1p(-exp(x))`.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < -std::f64::consts::LN_2 {
        (-x.exp()).ln_1p()
    } else {
        (-x.exp_m1()).ln()
    }
}

/// Stable `log(exp(a) - exp(b))` for `a > b`.
pub fn ln_exp_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b);
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + ln_one_minus_exp(b - a)
}

/// L1 distance between two equal-length slices.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Draw one sample from the unit-scale Laplace distribution by inverse CDF.
///
/// With `u` uniform on (0,1) and `c = u - 1/2`, the draw is
/// `-sign(c) * ln(1 - 2|c|)`. `u == 0` is rejected and redrawn so the log
/// never sees zero; `u == 0.5` maps to exactly zero. This transform is part
/// of the reproducibility contract: a seeded generator yields the same
/// trajectory on every platform.
pub fn sample_unit_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u == 0.0 {
            continue;
        }
        let c = u - 0.5;
        let t = 1.0 - 2.0 * c.abs();
        return -c.signum() * t.ln();
    }
}

/// Log-density of a Laplace draw: `-ln(2m) - |z - mu| / m`, `m > 0`.
pub fn laplace_log_density(z: f64, mu: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0);
    -(2.0 * m).ln() - (z - mu).abs() / m
}
