//! Photon-number and photocount statistics.
//!
//! The joint photon-number law is a two-fold convolution of Mandel-Rice
//! distributions: one shared draw for the pairs plus independent noise in
//! each arm. Photocounts follow from the pixelated-detector response
//! `T(m, n)`, whose closed form is an alternating sum that cancels badly
//! for large `m` and is therefore evaluated with extended precision when
//! needed.

use dashu_int::IBig;
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectorModel, FieldMoments, JointDistribution, ModeComponent, TwinBeamParams, Validate};
use crate::specfun::extended::{self, ext, ext_powi, Ext, ESCALATION_DIGITS, REQUIRED_DIGITS};
use crate::specfun::{alternating_sum, lgamma, ln_binomial, ln_factorial, SignedLog};

/// Largest photon number considered by default.
pub const MAX_PHOTONS: usize = 512;
/// Tail mass tolerated when choosing default photon-number cutoffs.
pub const CUTOFF_TAIL: f64 = 1e-10;

/// `ln p(n; M, B)` of the Mandel-Rice law.
pub fn log_mandel_rice(n: u64, modes: f64, mean_photons: f64) -> Result<f64> {
    if !(modes > 0.0 && modes.is_finite()) || !(mean_photons > 0.0 && mean_photons.is_finite()) {
        return Err(Error::domain(
            "mandel_rice",
            format!("mode count and occupation must be positive, got M = {modes}, B = {mean_photons}"),
        ));
    }
    let nf = n as f64;
    Ok(lgamma(nf + modes) - ln_factorial(n) - lgamma(modes) + nf * mean_photons.ln()
        - (nf + modes) * mean_photons.ln_1p())
}

/// Mandel-Rice probability `Gamma(n+M) / (n! Gamma(M)) B^n / (1+B)^(n+M)`.
pub fn mandel_rice(n: u64, modes: f64, mean_photons: f64) -> Result<f64> {
    log_mandel_rice(n, modes, mean_photons).map(f64::exp)
}

/// Probabilities of `0..=n_max` photons in one component; an absent
/// component is a point mass at zero.
pub fn component_pmf(c: &ModeComponent, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if c.is_absent() {
        out[0] = 1.0;
        return out;
    }
    let (m, b) = (c.modes(), c.mean_photons());
    let lg_m = lgamma(m);
    let ln_b = b.ln();
    let ln_1pb = b.ln_1p();
    for (n, p) in out.iter_mut().enumerate() {
        let nf = n as f64;
        *p = (lgamma(nf + m) - ln_factorial(n as u64) - lg_m + nf * ln_b - (nf + m) * ln_1pb).exp();
    }
    out
}

fn convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate().take(len) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Smallest `n` at which the arm marginal has accumulated `1 - CUTOFF_TAIL`,
/// capped at [`MAX_PHOTONS`].
fn arm_cutoff(paired: &ModeComponent, noise: &ModeComponent) -> usize {
    let marginal = convolve(
        &component_pmf(paired, MAX_PHOTONS),
        &component_pmf(noise, MAX_PHOTONS),
        MAX_PHOTONS + 1,
    );
    let mut acc = 0.0;
    for (n, p) in marginal.iter().enumerate() {
        acc += p;
        if acc >= 1.0 - CUTOFF_TAIL {
            return n;
        }
    }
    MAX_PHOTONS
}

/// Default photon-number cutoffs `(n_s_max, n_i_max)`.
pub fn default_cutoffs(params: &TwinBeamParams) -> (usize, usize) {
    (
        arm_cutoff(&params.paired(), &params.signal_noise()),
        arm_cutoff(&params.paired(), &params.idler_noise()),
    )
}

/// Joint photon-number distribution on `[0, n_s_max] x [0, n_i_max]`.
pub fn joint_photon_distribution(
    params: &TwinBeamParams,
    cutoffs: (usize, usize),
) -> Result<JointDistribution> {
    params.check()?;
    let (ns_max, ni_max) = cutoffs;
    let pp = component_pmf(&params.paired(), ns_max.min(ni_max));
    let ps = component_pmf(&params.signal_noise(), ns_max);
    let pi = component_pmf(&params.idler_noise(), ni_max);
    let peak = pp.iter().copied().fold(0.0, f64::max);
    let mut table = Array2::zeros((ns_max + 1, ni_max + 1));
    for (n, &w) in pp.iter().enumerate() {
        // Paired terms this far below the peak cannot reach any cell above
        // 1e-300 relative to the table.
        if w <= peak * 1e-300 {
            continue;
        }
        for s in n..=ns_max {
            let a = w * ps[s - n];
            if a == 0.0 {
                continue;
            }
            let mut row = table.row_mut(s);
            for i in n..=ni_max {
                row[i] += a * pi[i - n];
            }
        }
    }
    let jd = JointDistribution::from_table(table)?;
    if jd.truncation_mass() > 0.5 {
        return Err(Error::validation(
            "photon-number cutoffs",
            format!(
                "cutoffs {cutoffs:?} leave {:.3} of the probability outside the table",
                jd.truncation_mass()
            ),
        ));
    }
    Ok(jd)
}

/// Tabulated detector response `T(m, n)` for `m <= m_max`, `n <= n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResponseTable {
    detector: DetectorModel,
    table: Array2<f64>,
}

impl DetectorResponseTable {
    pub fn detector(&self) -> &DetectorModel {
        &self.detector
    }

    /// Rows are photocounts `m`, columns photon numbers `n`.
    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }

    pub fn m_max(&self) -> usize {
        self.table.nrows() - 1
    }

    pub fn n_max(&self) -> usize {
        self.table.ncols() - 1
    }

    /// Probability captured by the table in each column.
    pub fn column_sums(&self) -> Array1<f64> {
        self.table.sum_axis(Axis(0))
    }

    /// Identity response (perfect photon-number resolution), used to pass
    /// photon-number tables through unchanged.
    pub fn identity(detector: DetectorModel, n_max: usize) -> Self {
        DetectorResponseTable {
            detector,
            table: Array2::eye(n_max + 1),
        }
    }
}

fn check_response_args(d: &DetectorModel, m: usize) -> Result<()> {
    d.check()?;
    if m > d.pixels() as usize {
        return Err(Error::validation(
            "photocount",
            format!("{m} photocounts exceed the {} pixels", d.pixels()),
        ));
    }
    Ok(())
}

/// `ln` of `C(N, m) (1-D)^N (1-eta)^n`. The binomial is accumulated
/// factor by factor, which stays accurate for large `N` where differences of
/// log-gammas lose absolute precision.
fn log_prefactor(d: &DetectorModel, m: usize, n: usize) -> f64 {
    let big_n = d.pixels() as f64;
    let ln_choose: f64 = (0..m).map(|k| ((big_n - k as f64) / (k + 1) as f64).ln()).sum();
    ln_choose + big_n * (-d.dark_rate()).ln_1p() + n as f64 * (-d.efficiency()).ln_1p()
}

/// Double-precision terms of the inner sum for one `(m, n)`.
fn f64_terms(d: &DetectorModel, m: usize, n: usize) -> Vec<SignedLog> {
    let eta = d.efficiency();
    let ratio = eta / (1.0 - eta) / d.pixels() as f64;
    let ln_keep = (-d.dark_rate()).ln_1p();
    (0..=m)
        .map(|l| {
            let lm = ln_binomial(m as u64, l as u64) - l as f64 * ln_keep + n as f64 * (l as f64 * ratio).ln_1p();
            SignedLog::new(lm, if l % 2 == 0 { 1 } else { -1 })
        })
        .collect()
}

/// Shared extended-precision factors `(-1)^l (1-D)^(-l) x_l^n` for one column.
fn ext_column_factors(d: &DetectorModel, l_max: usize, n: usize, bits: usize) -> Vec<Ext> {
    let one = ext(1.0, bits);
    let eta = ext(d.efficiency(), bits);
    let ratio = &eta / (&one - &eta) / ext(d.pixels() as f64, bits);
    let inv_keep = &one / (&one - ext(d.dark_rate(), bits));
    let mut keep_pow = one.clone();
    (0..=l_max)
        .map(|l| {
            if l > 0 {
                keep_pow = &keep_pow * &inv_keep;
            }
            let x = &one + &ratio * ext(l as f64, bits);
            let t = &keep_pow * ext_powi(&x, n as u64);
            if l % 2 == 0 {
                t
            } else {
                -t
            }
        })
        .collect()
}

fn finish_probability(value: f64, m: usize, n: usize) -> Result<f64> {
    const ROUND_OFF: f64 = 1e-12;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else if value < 0.0 && value > -ROUND_OFF {
        Ok(0.0)
    } else if value > 1.0 && value < 1.0 + ROUND_OFF {
        Ok(1.0)
    } else {
        Err(Error::numerical(
            "detector_response",
            format!("T({m}, {n}) = {value:e} is not a probability"),
        ))
    }
}

/// Probability of `m` photocounts from `n` incident photons.
pub fn detector_response(d: &DetectorModel, m: usize, n: usize) -> Result<f64> {
    check_response_args(d, m)?;
    if d.dark_rate() == 0.0 && m > n {
        return Ok(0.0);
    }
    let det = *d;
    let outcome = extended::escalating_sum(&f64_terms(d, m, n), move |bits| {
        let factors = ext_column_factors(&det, m, n, bits);
        let mut binom = IBig::from(1u8);
        (0..=m)
            .map(|l| {
                if l > 0 {
                    binom = binom.clone() * IBig::from(m - l + 1) / IBig::from(l);
                }
                Ext::from(binom.clone()).with_precision(bits).value() * &factors[l]
            })
            .collect()
    })?;
    // The extended sum can underflow f64 on its own, so recombine in log space.
    let sign = if m % 2 == 0 { 1 } else { -1 };
    let value = outcome.value.scale(log_prefactor(d, m, n)).mul(SignedLog::new(0.0, sign)).to_f64();
    finish_probability(value, m, n)
}

/// Cells whose Chernoff bound falls below `e^NEGLIGIBLE_LN` (about 1e-40)
/// are left at zero in tables.
const NEGLIGIBLE_LN: f64 = -92.1;

/// `ln` of a Chernoff bound on `T(m, n)` for counts above the mean: the
/// count never exceeds detected photons plus dark events on all pixels.
fn log_upper_tail_bound(d: &DetectorModel, m: usize, n: usize) -> f64 {
    let (eta, dark, big_n) = (d.efficiency(), d.dark_rate(), d.pixels() as f64);
    let mean = eta * n as f64 + dark * big_n;
    let mf = m as f64;
    if mf <= mean {
        return 0.0;
    }
    let slope = |t: f64| {
        let e = t.exp();
        eta * e / (1.0 - eta + eta * e) * n as f64 + dark * e / (1.0 - dark + dark * e) * big_n - mf
    };
    let (mut a, mut b) = (0.0, 1.0);
    while slope(b) < 0.0 && b < 700.0 {
        b *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if slope(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t = 0.5 * (a + b);
    let em1 = t.exp_m1();
    (-t * mf + n as f64 * (eta * em1).ln_1p() + big_n * (dark * em1).ln_1p()).min(0.0)
}

/// One column of the response table.
fn response_column(d: &DetectorModel, m_max: usize, n: usize) -> Result<Vec<f64>> {
    let mut col = vec![0.0; m_max + 1];
    let mut m_hi = if d.dark_rate() == 0.0 { m_max.min(n) } else { m_max };
    let start = (d.efficiency() * n as f64 + d.dark_rate() * d.pixels() as f64).ceil() as usize;
    if let Some(m) = (start..=m_hi).find(|&m| log_upper_tail_bound(d, m, n) < NEGLIGIBLE_LN) {
        m_hi = m - 1;
    }

    let sign = |m: usize| if m % 2 == 0 { 1 } else { -1 };
    let mut first_pending = None;
    for m in 0..=m_hi {
        let sum = alternating_sum(&f64_terms(d, m, n));
        if sum.cancellation_digits > ESCALATION_DIGITS {
            first_pending = Some(m);
            break;
        }
        let v = sum.value.scale(log_prefactor(d, m, n)).mul(SignedLog::new(0.0, sign(m))).to_f64();
        col[m] = finish_probability(v, m, n)?;
    }
    let Some(m0) = first_pending else {
        return Ok(col);
    };

    // ln |b_l| of the shared factors, and the running maximum over l <= m.
    let eta = d.efficiency();
    let ratio = eta / (1.0 - eta) / d.pixels() as f64;
    let ln_keep = (-d.dark_rate()).ln_1p();
    let mut ln_bmax = Vec::with_capacity(m_hi + 1);
    let mut running = f64::NEG_INFINITY;
    for l in 0..=m_hi {
        running = running.max(-(l as f64) * ln_keep + n as f64 * (l as f64 * ratio).ln_1p());
        ln_bmax.push(running);
    }
    // Rounding in the transform grows like (m + 1) 2^m max|b_l|.
    let ln_scale = |m: usize| ((m + 1) as f64).ln() + m as f64 * std::f64::consts::LN_2 + ln_bmax[m];

    const LN_10: f64 = std::f64::consts::LN_10;
    const LOG10_2: f64 = std::f64::consts::LOG10_2;
    // First guess assumes no retained cell is below the negligible level.
    let guess = (ln_scale(m_hi) - (NEGLIGIBLE_LN - log_prefactor(d, m_hi, n))) / LN_10;
    let mut bits = (((guess + REQUIRED_DIGITS) / LOG10_2) as usize + 64).max(256);
    loop {
        // Binomial transform: after k passes a[l] = sum_j C(k, j) b_{l+j},
        // so a[0] after m passes is the inner sum for row m.
        let mut a = ext_column_factors(d, m_hi, n, bits);
        let mut worst_loss: f64 = 0.0;
        let mut sums = Vec::with_capacity(m_hi + 1 - m0);
        for m in 0..=m_hi {
            if m >= m0 {
                let s = extended::to_signed_log(&a[0]);
                let loss = if s.is_zero() {
                    f64::INFINITY
                } else {
                    (ln_scale(m) - s.log_magnitude) / LN_10
                };
                worst_loss = worst_loss.max(loss);
                sums.push((m, s));
            }
            for l in 0..m_hi - m {
                a[l] = &a[l] + &a[l + 1];
            }
        }
        if bits as f64 * LOG10_2 - worst_loss >= REQUIRED_DIGITS {
            for (m, s) in sums {
                let v = s.scale(log_prefactor(d, m, n)).mul(SignedLog::new(0.0, sign(m))).to_f64();
                col[m] = finish_probability(v, m, n)?;
            }
            return Ok(col);
        }
        if !worst_loss.is_finite() || bits >= 1 << 15 {
            return Err(Error::numerical(
                "response_table",
                format!("column n = {n} keeps cancelling beyond {bits} bits"),
            ));
        }
        bits = (((worst_loss + REQUIRED_DIGITS + 4.0) / LOG10_2) as usize + 64).max(2 * bits);
    }
}

/// Detector response for all `m <= m_max`, `n <= n_max`.
pub fn response_table(d: &DetectorModel, m_max: usize, n_max: usize) -> Result<DetectorResponseTable> {
    check_response_args(d, m_max)?;
    let columns: Vec<Vec<f64>> = (0..=n_max)
        .into_par_iter()
        .map(|n| response_column(d, m_max, n))
        .collect::<Result<_>>()?;
    let mut table = Array2::zeros((m_max + 1, n_max + 1));
    for (n, col) in columns.iter().enumerate() {
        for (m, v) in col.iter().enumerate() {
            table[[m, n]] = *v;
        }
    }
    Ok(DetectorResponseTable { detector: *d, table })
}

/// Photocount distribution `p_c = T_s p T_i^T`, truncated at the table
/// extents.
pub fn photocount_distribution(
    p: &JointDistribution,
    d_s: &DetectorResponseTable,
    d_i: &DetectorResponseTable,
) -> Result<JointDistribution> {
    let (ns, ni) = p.probs().dim();
    if d_s.table.ncols() < ns || d_i.table.ncols() < ni {
        return Err(Error::validation(
            "detector response table",
            format!(
                "tables cover n <= ({}, {}) but the distribution extends to ({}, {})",
                d_s.n_max(),
                d_i.n_max(),
                ns - 1,
                ni - 1
            ),
        ));
    }
    let ts = d_s.table.slice(ndarray::s![.., ..ns]);
    let ti = d_i.table.slice(ndarray::s![.., ..ni]);
    let pc = ts.dot(p.probs()).dot(&ti.t());
    JointDistribution::from_table(pc)
}

/// Distribution of `n_s + n_i`.
pub fn sum_distribution(p: &JointDistribution) -> Vec<f64> {
    let (r, c) = p.probs().dim();
    let mut out = vec![0.0; r + c - 1];
    for ((s, i), v) in p.probs().indexed_iter() {
        out[s + i] += v;
    }
    out
}

/// `1 + <(Delta(W_s - W_i))^2> / (<W_s> + <W_i>)` of the photon-number
/// difference, from the normally ordered moments of the three components.
pub fn noise_reduction_factor(fm: &FieldMoments) -> Result<f64> {
    fm.check()?;
    let denominator = 2.0 * fm.mean_p + fm.mean_s + fm.mean_i;
    if denominator <= 0.0 {
        return Err(Error::domain("noise_reduction_factor", "field carries no photons"));
    }
    Ok(1.0 + (fm.var_s + fm.var_i - 2.0 * fm.mean_p) / denominator)
}
