//! First-order Bessel J1, Y1 (large argument only) and Struve H1.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT_J: f64 = 12.0;
const SERIES_LIMIT_H: f64 = 16.0;

/// Bessel function of the first kind, order one.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x <= SERIES_LIMIT_J {
        j1_series(x)
    } else {
        hankel_asymptotic(x).0
    }
}

/// Bessel function of the second kind, order one, for `x > 12`.
pub fn bessel_y1_large(x: f64) -> f64 {
    debug_assert!(x > SERIES_LIMIT_J);
    hankel_asymptotic(x).1
}

fn j1_series(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = x / 2.0;
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// (J1, Y1) from the Hankel expansion, summed until terms stop shrinking.
fn hankel_asymptotic(x: f64) -> (f64, f64) {
    let mu = 4.0;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a: f64 = 1.0; // a_k(ν) / x^k
    let mut last: f64 = f64::INFINITY;
    for k in 0..60 {
        if a.abs() > last {
            break;
        }
        last = a.abs();
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
        let odd = (2 * k + 1) as f64;
        a *= (mu - odd * odd) / ((k + 1) as f64 * 8.0 * x);
        if a == 0.0 {
            break;
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    let amp = (2.0 / (PI * x)).sqrt();
    (
        amp * (p * chi.cos() - q * chi.sin()),
        amp * (p * chi.sin() + q * chi.cos()),
    )
}

/// Struve function of order one.
pub fn struve_h1(x: f64) -> f64 {
    if x < 0.0 {
        return struve_h1(-x);
    }
    if x <= SERIES_LIMIT_H {
        // Σ (−1)^k (x/2)^{2k+2} / (Γ(k+3/2) Γ(k+5/2))
        let h = x / 2.0;
        let mut term = h * h / (PI.sqrt() / 2.0 * 3.0 * PI.sqrt() / 4.0);
        let mut sum = term;
        for k in 0..300 {
            let kf = k as f64;
            term *= -(h * h) / ((kf + 1.5) * (kf + 2.5));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // H1 − Y1 ~ (1/π) Σ c_k, c_0 = 2, asymptotic so stop at the smallest term
        let mut c: f64 = 2.0;
        let mut sum = 0.0;
        let mut last: f64 = f64::INFINITY;
        for k in 0..60 {
            if c.abs() > last {
                break;
            }
            sum += c;
            last = c.abs();
            let kf = k as f64;
            c *= (kf + 0.5) * (0.5 - kf) * 4.0 / (x * x);
        }
        bessel_y1_large(x) + sum / PI
    }
}
