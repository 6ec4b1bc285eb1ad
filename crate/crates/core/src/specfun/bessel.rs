//! Modified Bessel function of the first kind in log space.

use once_cell::sync::Lazy;

use super::{lgamma, SignedLog};
use crate::error::{Error, Result};

/// Orders at or above this use the uniform expansion once `x >= order`.
const DEBYE_MIN_ORDER: f64 = 25.0;
const DEBYE_TERMS: usize = 11;

/// `ln I_order(x)` with sign.
///
/// Orders in `(-1, 0)` are real-valued orders of the ascending series;
/// `order = -1` is folded onto `I_1`.
pub fn log_bessel_i(order: f64, x: f64) -> Result<SignedLog> {
    if !order.is_finite() || order < -1.0 {
        return Err(Error::domain("log_bessel_i", format!("order must be >= -1, got {order}")));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain("log_bessel_i", format!("argument must be finite and >= 0, got {x}")));
    }
    let nu = if order == -1.0 { 1.0 } else { order };
    if x == 0.0 {
        return if nu == 0.0 {
            Ok(SignedLog::ONE)
        } else if nu > 0.0 {
            Ok(SignedLog::ZERO)
        } else {
            Err(Error::domain("log_bessel_i", format!("I_{nu}(0) diverges")))
        };
    }
    let log = if nu >= DEBYE_MIN_ORDER && x >= nu {
        debye(nu, x)
    } else {
        ascending_series(nu, x)
    };
    Ok(SignedLog::positive(log))
}

/// Sum of `(x/2)^(2k+nu) / (k! Gamma(k+nu+1))`, anchored at its largest
/// term so that neither tail over- or underflows.
pub(crate) fn ascending_series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let peak = 0.5 * ((nu * nu + 4.0 * q).sqrt() - (nu + 2.0));
    let k0 = peak.max(0.0).ceil();
    let log_t0 = (2.0 * k0 + nu) * half.ln() - lgamma(k0 + 1.0) - lgamma(k0 + nu + 1.0);

    let mut sum = 1.0;
    let mut t = 1.0;
    let mut k = k0;
    loop {
        t *= q / ((k + 1.0) * (k + nu + 1.0));
        sum += t;
        k += 1.0;
        if t < 1e-17 * sum {
            break;
        }
    }
    t = 1.0;
    k = k0;
    while k >= 1.0 {
        t *= k * (k + nu) / q;
        sum += t;
        k -= 1.0;
        if t < 1e-17 * sum {
            break;
        }
    }
    log_t0 + sum.ln()
}

/// Coefficients of the Debye polynomials `u_k(t)`, lowest power first.
static DEBYE_U: Lazy<Vec<Vec<f64>>> = Lazy::new(|| {
    let mut polys = vec![vec![1.0]];
    for k in 0..DEBYE_TERMS - 1 {
        let u = &polys[k];
        // u_{k+1} = t^2 (1 - t^2) u_k' / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds
        let mut next = vec![0.0; u.len() + 3];
        for (p, &c) in u.iter().enumerate().skip(1) {
            let d = c * p as f64 * 0.5;
            next[p + 1] += d;
            next[p + 3] -= d;
        }
        for (p, &c) in u.iter().enumerate() {
            next[p + 1] += 0.125 * c / (p + 1) as f64;
            next[p + 3] -= 0.625 * c / (p + 3) as f64;
        }
        polys.push(next);
    }
    polys
});

fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Uniform asymptotic expansion in the order.
pub(crate) fn debye(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = z.hypot(1.0);
    let t = 1.0 / root;
    let eta = root + (z / (1.0 + root)).ln();
    let mut series = 0.0;
    let mut scale = 1.0;
    for u in DEBYE_U.iter() {
        series += poly_eval(u, t) * scale;
        scale /= nu;
    }
    nu * eta - 0.5 * (2.0 * std::f64::consts::PI * nu).ln() - 0.5 * root.ln() + series.ln()
}
