//! Special functions and summation primitives.
//!
//! Probability factors in this crate routinely leave the range of `f64`
//! (a Mandel-Rice factor with shape 8e-6, a Bessel function of order 178),
//! so most routines return a [`SignedLog`] and callers exponentiate only at
//! the end.

mod bessel;
pub mod extended;
mod incgamma;

pub use bessel::log_bessel_i;
pub use incgamma::{gamma_cdf, regularized_gamma};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real number stored as `sign * exp(log_magnitude)`.
///
/// `sign == 0` exactly when the value is zero; the magnitude is then
/// `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    pub log_magnitude: f64,
    pub sign: i8,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        log_magnitude: f64::NEG_INFINITY,
        sign: 0,
    };
    pub const ONE: SignedLog = SignedLog {
        log_magnitude: 0.0,
        sign: 1,
    };

    /// Positive value with the given natural log.
    pub fn positive(log_magnitude: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                log_magnitude,
                sign: 1,
            }
        }
    }

    pub fn new(log_magnitude: f64, sign: i8) -> Self {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                log_magnitude,
                sign: sign.signum(),
            }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            SignedLog {
                log_magnitude: v.abs().ln(),
                sign: if v > 0.0 { 1 } else { -1 },
            }
        }
    }

    /// Linear value; may overflow to infinity or underflow to zero.
    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_magnitude.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn neg(self) -> Self {
        SignedLog {
            log_magnitude: self.log_magnitude,
            sign: -self.sign,
        }
    }

    pub fn mul(self, other: SignedLog) -> Self {
        Self::new(self.log_magnitude + other.log_magnitude, self.sign * other.sign)
    }

    /// Multiplies by `exp(log_factor)`.
    pub fn scale(self, log_factor: f64) -> Self {
        Self::new(self.log_magnitude + log_factor, self.sign)
    }
}

/// Result of a compensated summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedSum {
    pub value: SignedLog,
    /// `log10(sum |t_k| / |sum t_k|)`; infinite for exact cancellation of
    /// non-zero terms.
    pub cancellation_digits: f64,
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_6;

/// `zeta(k) - 1` for `k = 2, 3, ...`.
const ZETA_MINUS_ONE: [f64; 39] = [
    0.644_934_066_848_226_436_47,
    0.202_056_903_159_594_285_4,
    0.082_323_233_711_138_191_516,
    0.036_927_755_143_369_926_331,
    0.017_343_061_984_449_139_715,
    0.008_349_277_381_922_826_839_8,
    0.004_077_356_197_944_339_378_7,
    0.002_008_392_826_082_214_417_9,
    0.000_994_575_127_818_085_337_15,
    0.000_494_188_604_119_464_558_7,
    0.000_246_086_553_308_048_298_64,
    0.000_122_713_347_578_489_146_75,
    6.124_813_505_870_482_925_9e-5,
    3.058_823_630_702_049_355_2e-5,
    1.528_225_940_865_187_173_3e-5,
    7.637_197_637_899_762_273_6e-6,
    3.817_293_264_999_839_856_5e-6,
    1.908_212_716_553_938_925_7e-6,
    9.539_620_338_727_961_131_5e-7,
    4.769_329_867_878_064_631_2e-7,
    2.384_505_027_277_329_9e-7,
    1.192_199_259_653_110_730_7e-7,
    5.960_818_905_125_947_961_2e-8,
    2.980_350_351_465_228_018_6e-8,
    1.490_155_482_836_504_123_5e-8,
    7.450_711_789_835_429_492e-9,
    3.725_334_024_788_457_054_8e-9,
    1.862_659_723_513_049_006_4e-9,
    9.313_274_324_196_681_828_7e-10,
    4.656_629_065_033_784_073e-10,
    2.328_311_833_676_505_492e-10,
    1.164_155_017_270_051_977_6e-10,
    5.820_772_087_902_700_889_2e-11,
    2.910_385_044_497_099_686_9e-11,
    1.455_192_189_104_198_423_6e-11,
    7.275_959_835_057_481_014_5e-12,
    3.637_979_547_378_651_190_2e-12,
    1.818_989_650_307_065_947_6e-12,
    9.094_947_840_263_889_282_5e-13,
];

/// `ln Gamma(2 + z)` for `|z| <= 0.5` from the zeta series.
fn lgamma_two_plus(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut zk = -z;
    for (i, c) in ZETA_MINUS_ONE.iter().enumerate() {
        zk *= -z;
        let term = c * zk / (i + 2) as f64;
        acc += term;
        if term.abs() < 1e-18 * z.abs() {
            break;
        }
    }
    z * (1.0 - EULER_GAMMA) + acc
}

const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Unchecked `ln Gamma(x)` for `x > 0`.
pub(crate) fn lgamma(x: f64) -> f64 {
    if x < 0.5 {
        lgamma_small(x)
    } else if x < 1.5 {
        let z = x - 1.0;
        lgamma_two_plus(z) - z.ln_1p()
    } else if x < 2.5 {
        lgamma_two_plus(x - 2.0)
    } else if x < 15.0 {
        let mut y = x;
        let mut prod = 1.0;
        while y >= 2.5 {
            y -= 1.0;
            prod *= y;
        }
        prod.ln() + lgamma_two_plus(y - 2.0)
    } else {
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        let mut corr = 0.0;
        let mut p = inv;
        for c in STIRLING {
            corr += c * p;
            p *= inv2;
        }
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + corr
    }
}

/// `ln Gamma(x)` for `0 < x < 0.5` via `Gamma(x) = Gamma(1 + x) / x`.
fn lgamma_small(x: f64) -> f64 {
    lgamma_two_plus(x) - x.ln_1p() - x.ln()
}

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("log_gamma", format!("argument must be positive and finite, got {x}")));
    }
    Ok(lgamma(x))
}

/// `ln n!`.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    lgamma(n as f64 + 1.0)
}

/// `ln C(n, k)` for `k <= n`.
pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `sin(x) / x` with the removable singularity at zero.
pub fn sinc(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-4 {
        let x2 = a * a;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        a.sin() / a
    }
}

/// Compensated sum of signed log-space terms.
///
/// Terms are rescaled by the largest magnitude and added with Neumaier's
/// variant of Kahan summation. The returned `cancellation_digits` estimates
/// how many significant digits the cancellation destroyed.
pub fn alternating_sum(terms: &[SignedLog]) -> CompensatedSum {
    let peak = terms
        .iter()
        .filter(|t| t.sign != 0)
        .map(|t| t.log_magnitude)
        .fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return CompensatedSum {
            value: SignedLog::ZERO,
            cancellation_digits: 0.0,
        };
    }
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    let mut abs_sum = 0.0_f64;
    for t in terms.iter().filter(|t| t.sign != 0) {
        let v = f64::from(t.sign) * (t.log_magnitude - peak).exp();
        abs_sum += v.abs();
        let s = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - s) + v;
        } else {
            comp += (v - s) + sum;
        }
        sum = s;
    }
    let total = sum + comp;
    if total == 0.0 {
        return CompensatedSum {
            value: SignedLog::ZERO,
            cancellation_digits: f64::INFINITY,
        };
    }
    CompensatedSum {
        value: SignedLog::from_f64(total).scale(peak),
        cancellation_digits: (abs_sum / total.abs()).log10().max(0.0),
    }
}
