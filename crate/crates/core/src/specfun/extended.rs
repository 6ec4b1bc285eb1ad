//! Extended-precision fallback for sums that cancel catastrophically.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::ops::{BitTest, UnsignedAbs};
use dashu_int::{IBig, Sign};

use super::{alternating_sum, CompensatedSum, SignedLog};
use crate::error::{Error, Result};

/// Binary floating point number with caller-chosen precision.
pub type Ext = FBig<HalfEven, 2>;

/// Loss beyond which a double-precision sum is redone in extended precision.
pub const ESCALATION_DIGITS: f64 = 6.0;
/// Significant digits an extended-precision result must retain.
pub const REQUIRED_DIGITS: f64 = 30.0;
const START_BITS: usize = 256;
const MAX_BITS: usize = 1 << 15;
const LOG10_2: f64 = std::f64::consts::LOG10_2;

/// Exact conversion of a finite `f64`, widened to `bits` of precision.
pub fn ext(v: f64, bits: usize) -> Ext {
    Ext::try_from(v)
        .expect("finite f64")
        .with_precision(bits)
        .value()
}

/// Integer `n` as an extended number of the given precision.
pub fn ext_int(n: i64, bits: usize) -> Ext {
    Ext::from(IBig::from(n)).with_precision(bits).value()
}

/// `base^exp` for a non-negative integer exponent.
pub fn ext_powi(base: &Ext, exp: u64) -> Ext {
    base.powi(IBig::from(exp))
}

/// `log2 |x|`, finite for any non-zero value regardless of its exponent.
pub fn log2_abs(x: &Ext) -> f64 {
    let repr = x.repr();
    let sig = repr.significand().unsigned_abs();
    let bits = sig.bit_len();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(63);
    let top: u64 = u64::try_from(&(sig >> shift)).expect("63-bit prefix");
    (top as f64).log2() + (shift as isize + repr.exponent()) as f64
}

pub fn to_signed_log(x: &Ext) -> SignedLog {
    let sig = x.repr().significand();
    let sign = if sig.is_zero() {
        0
    } else if sig.sign() == Sign::Positive {
        1
    } else {
        -1
    };
    SignedLog::new(log2_abs(x) * std::f64::consts::LN_2, sign)
}

/// Outcome of [`escalating_sum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumOutcome {
    pub value: SignedLog,
    pub cancellation_digits: f64,
    /// Precision used by the extended path, if it was needed.
    pub extended_bits: Option<usize>,
}

/// Plain extended-precision sum; returns the sum and the cancellation loss
/// in decimal digits.
pub fn alternating_sum_extended(terms: &[Ext]) -> (Ext, f64) {
    let mut iter = terms.iter();
    let Some(first) = iter.next() else {
        return (Ext::ZERO, 0.0);
    };
    let mut sum = first.clone();
    let mut peak = log2_abs(first);
    for t in iter {
        sum = &sum + t;
        peak = peak.max(log2_abs(t));
    }
    let loss = if sum.repr().is_zero() {
        f64::INFINITY
    } else {
        ((peak - log2_abs(&sum)) * LOG10_2 + (terms.len() as f64).log10()).max(0.0)
    };
    (sum, loss)
}

/// Sums `f64_terms` in double precision and, if more than
/// [`ESCALATION_DIGITS`] digits cancel, recomputes the sum from
/// `ext_terms(bits)` with growing precision until [`REQUIRED_DIGITS`]
/// survive.
pub fn escalating_sum<F>(f64_terms: &[SignedLog], ext_terms: F) -> Result<SumOutcome>
where
    F: Fn(usize) -> Vec<Ext>,
{
    let CompensatedSum {
        value,
        cancellation_digits,
    } = alternating_sum(f64_terms);
    if cancellation_digits <= ESCALATION_DIGITS {
        return Ok(SumOutcome {
            value,
            cancellation_digits,
            extended_bits: None,
        });
    }
    let guess = if cancellation_digits.is_finite() {
        ((cancellation_digits + REQUIRED_DIGITS) / LOG10_2) as usize + 64
    } else {
        START_BITS
    };
    let mut bits = guess.max(START_BITS);
    while bits <= MAX_BITS {
        let (sum, loss) = alternating_sum_extended(&ext_terms(bits));
        let retained = bits as f64 * LOG10_2 - loss;
        if retained >= REQUIRED_DIGITS {
            return Ok(SumOutcome {
                value: to_signed_log(&sum),
                cancellation_digits: loss,
                extended_bits: Some(bits),
            });
        }
        let needed = if loss.is_finite() {
            ((loss + REQUIRED_DIGITS) / LOG10_2) as usize + 64
        } else {
            0
        };
        bits = needed.max(2 * bits);
    }
    Err(Error::numerical(
        "escalating_sum",
        format!("cancellation of {cancellation_digits:.1} digits not resolved within {MAX_BITS} bits"),
    ))
}
