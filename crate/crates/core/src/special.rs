//! Special functions: exponential integral, Bessel J0 and the
//! Rayleigh-fading log expectation built on them.

use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp1(x: f64) -> f64 {
    assert!(x > 0.0, "exp1 requires x > 0, got {x}");
    if x <= 1.0 {
        exp1_series(x)
    } else {
        exp1_scaled_cf(x) * (-x).exp()
    }
}

/// Scaled exponential integral `e^x E1(x)` for `x > 0`, finite for large `x`.
pub fn exp1_scaled(x: f64) -> f64 {
    assert!(x > 0.0, "exp1_scaled requires x > 0, got {x}");
    if x <= 1.0 {
        exp1_series(x) * x.exp()
    } else {
        exp1_scaled_cf(x)
    }
}

fn exp1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -x / kf;
        let contrib = -term / kf;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

// Modified Lentz evaluation of the continued fraction for e^x E1(x).
fn exp1_scaled_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `E[log(1 + a|u|²)]` for `u ~ CN(0,1)`, equal to `e^{1/a} E1(1/a)`.
pub fn expected_log1p_exp(a: f64) -> f64 {
    assert!(a >= 0.0 && !a.is_nan(), "expected_log1p_exp requires a >= 0, got {a}");
    if a == 0.0 {
        return 0.0;
    }
    if a < 1e-8 {
        // E[log(1+aX)] = a - a^2 + 2a^3 - ... for X ~ Exp(1).
        return a - a * a + 2.0 * a * a * a;
    }
    exp1_scaled(1.0 / a)
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        j0_series(x)
    } else {
        j0_miller(x)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

// Backward recurrence normalised with 1 = J0 + 2 Σ J_{2k}.
fn j0_miller(x: f64) -> f64 {
    let start = x + 10.0 * x.cbrt() + 40.0;
    let mut m = start.ceil() as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0;
    let mut j_cur = 1e-30;
    let mut norm = 0.0;
    for k in (1..=m).rev() {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += j_cur;
    j_cur / norm
}

/// `J0(2π f lag)`, the Clarke autocorrelation at a symbol lag.
pub fn clarke_rho(normalized_doppler: f64, lag: usize) -> f64 {
    bessel_j0(2.0 * PI * normalized_doppler * lag as f64)
}
