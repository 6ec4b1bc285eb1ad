//! Regularized incomplete gamma function.

use super::lgamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Returns `(P(a, x), Q(a, x))` for `a > 0`, `x >= 0`.
///
/// The smaller of the two is computed directly (series below `a + 1`,
/// continued fraction above) and the other as its complement, so both keep
/// full relative accuracy where it matters for tail masses.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefix = a * x.ln() - x - lgamma(a);
    if x < a + 1.0 {
        let p = lower_series(a, x, log_prefix);
        (p, 1.0 - p)
    } else {
        let q = upper_fraction(a, x, log_prefix);
        (1.0 - q, q)
    }
}

fn lower_series(a: f64, x: f64, log_prefix: f64) -> f64 {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (log_prefix + sum.ln()).exp()
}

/// Modified Lentz evaluation of the continued fraction for `Q`.
fn upper_fraction(a: f64, x: f64, log_prefix: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (log_prefix + h.ln()).exp()
}

/// Cumulative distribution of a gamma law with the given shape and scale.
pub fn gamma_cdf(shape: f64, scale: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    regularized_gamma(shape, w / scale).0
}
