//! s-ordered quasi-distributions of integrated intensities.
//!
//! The paired field has a closed form with two branches separated by the
//! threshold ordering: an oscillating sinc form close to normal ordering,
//! which can go negative, and a non-negative Bessel form below it. Noise
//! fields are gamma densities and enter by convolution.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_axis, trapezoid_weights, FieldMoments, ModeComponent, QdiiGrid, TwinBeamParams, Validate};
use crate::specfun::{gamma_cdf, lgamma, log_bessel_i, sinc};

/// Grids capturing less noise mass than this, or whose integral is further
/// than `1 - MIN_NOISE_MASS` from one, are rejected as too coarse or too
/// short.
pub const MIN_NOISE_MASS: f64 = 0.95;

fn check_ordering(s: f64) -> Result<()> {
    if !(s > -1.0 && s <= 1.0) {
        return Err(Error::domain("qdii", format!("ordering parameter must lie in (-1, 1], got {s}")));
    }
    Ok(())
}

/// Ordering-dependent coefficients of the paired-field form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingContext {
    pub s: f64,
    /// `B_p + (1 - s) / 2`
    pub b_p_s: f64,
    /// `sqrt(B_p (B_p + 1))`
    pub d_p: f64,
    /// `-s B_p + (1 - s)^2 / 4`
    pub k_p_s: f64,
    /// `1 + 2 (B_p - D_p)`
    pub s_th_paired: f64,
}

impl OrderingContext {
    pub fn new(b_p: f64, s: f64) -> Result<Self> {
        check_ordering(s)?;
        if !(b_p >= 0.0 && b_p.is_finite()) {
            return Err(Error::domain("qdii", format!("pair occupation must be >= 0, got {b_p}")));
        }
        let d_p = (b_p * (b_p + 1.0)).sqrt();
        Ok(OrderingContext {
            s,
            b_p_s: b_p + 0.5 * (1.0 - s),
            d_p,
            k_p_s: -s * b_p + 0.25 * (1.0 - s) * (1.0 - s),
            s_th_paired: 1.0 + 2.0 * (b_p - d_p),
        })
    }

    /// True above the threshold, where the sinc form applies.
    pub fn is_sinc_branch(&self) -> bool {
        self.k_p_s < 0.0
    }
}

/// Paired-field quasi-distribution at `(W_s, W_i)` for `M_p` modes.
pub fn paired_qdii(ctx: &OrderingContext, modes: f64, w_s: f64, w_i: f64) -> Result<f64> {
    if !(modes > 0.0 && modes.is_finite()) {
        return Err(Error::domain("paired_qdii", format!("mode count must be positive, got {modes}")));
    }
    if !(w_s >= 0.0 && w_i >= 0.0) {
        return Err(Error::domain("paired_qdii", "intensities must be non-negative"));
    }
    let k = ctx.k_p_s;
    if k == 0.0 {
        return Err(Error::domain(
            "paired_qdii",
            format!("s = {} is the branch boundary, where neither form is defined", ctx.s),
        ));
    }
    let product = w_s * w_i;
    if product == 0.0 {
        if modes > 1.0 {
            return Ok(0.0);
        }
        if modes < 1.0 {
            return Err(Error::numerical(
                "paired_qdii",
                format!("density diverges on the axes for M_p = {modes} < 1"),
            ));
        }
    }
    let ln_power = if modes == 1.0 { 0.0 } else { 0.5 * (modes - 1.0) * product.ln() };
    let b = ctx.b_p_s;
    let (log_mag, sign) = if k < 0.0 {
        let root = (-k).sqrt();
        let x = sinc((w_s - w_i) / root);
        if x == 0.0 {
            return Ok(0.0);
        }
        let log = ln_power - lgamma(modes) - modes * b.ln() - (w_s + w_i) / (2.0 * b)
            - std::f64::consts::PI.ln()
            - root.ln()
            + x.abs().ln();
        (log, x.signum())
    } else if ctx.d_p == 0.0 {
        // Vanishing occupation: the Bessel factor reduces to its leading
        // power and the form factorizes into two gamma densities.
        let log = 2.0 * ln_power - 2.0 * lgamma(modes) - modes * k.ln() - b * (w_s + w_i) / k;
        (log, 1.0)
    } else {
        let arg = 2.0 * ctx.d_p * product.sqrt() / k;
        let bessel = log_bessel_i(modes - 1.0, arg)?;
        if bessel.is_zero() {
            return Ok(0.0);
        }
        let log = ln_power - lgamma(modes) - k.ln() - (modes - 1.0) * ctx.d_p.ln() - b * (w_s + w_i) / k
            + bessel.log_magnitude;
        (log, bessel.sign as f64)
    };
    let v = log_mag.exp();
    if !v.is_finite() {
        return Err(Error::numerical(
            "paired_qdii",
            format!("value at ({w_s}, {w_i}) overflows (log magnitude {log_mag})"),
        ));
    }
    Ok(sign * v)
}

/// Gamma density of an s-ordered multi-thermal field with `M` modes of mean
/// occupation `B`.
pub fn thermal_qdii(modes: f64, mean_photons: f64, s: f64, w: f64) -> Result<f64> {
    let b = mean_photons + 0.5 * (1.0 - s);
    if !(b > 0.0) {
        return Err(Error::domain(
            "thermal_qdii",
            format!("B + (1 - s)/2 = {b} must be positive"),
        ));
    }
    if !(modes > 0.0) || !(w >= 0.0) {
        return Err(Error::domain("thermal_qdii", "need M > 0 and W >= 0"));
    }
    if w == 0.0 {
        return Ok(if modes < 1.0 {
            f64::INFINITY
        } else if modes == 1.0 {
            1.0 / b
        } else {
            0.0
        });
    }
    Ok(((modes - 1.0) * w.ln() - lgamma(modes) - modes * b.ln() - w / b).exp())
}

fn check_arguments(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("characteristic_function", "arguments must be finite"));
    }
    Ok(())
}

fn power_factor(base: Complex64, modes: f64) -> Result<Complex64> {
    if modes == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if base.norm() == 0.0 {
        return Err(Error::domain("characteristic_function", "argument is a pole"));
    }
    Ok(base.powf(-modes))
}

/// Normally ordered characteristic function `<exp(i a W_s + i b W_i)>`.
pub fn characteristic_function(params: &TwinBeamParams, a: f64, b: f64) -> Result<Complex64> {
    s_ordered_characteristic_function(params, 1.0, a, b)
}

/// Characteristic function of the s-ordered quasi-distribution.
pub fn s_ordered_characteristic_function(params: &TwinBeamParams, s: f64, a: f64, b: f64) -> Result<Complex64> {
    check_ordering(s)?;
    check_arguments(&[a, b])?;
    let i = Complex64::i();
    let thermal = |c: &ModeComponent, t: f64| -> Result<Complex64> {
        if c.is_absent() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        power_factor(1.0 - i * t * (c.mean_photons() + 0.5 * (1.0 - s)), c.modes())
    };
    let pairs = params.paired();
    let paired = if pairs.is_absent() {
        Complex64::new(1.0, 0.0)
    } else {
        let ctx = OrderingContext::new(pairs.mean_photons(), s)?;
        power_factor(1.0 - i * ctx.b_p_s * (a + b) - ctx.k_p_s * a * b, pairs.modes())?
    };
    Ok(thermal(&params.signal_noise(), a)? * thermal(&params.idler_noise(), b)? * paired)
}

/// Threshold ordering of the whole field and its two weighted averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiagnostics {
    /// `None` when the radicand is negative.
    pub s_th: Option<f64>,
    /// Mode-weighted mean occupation.
    pub beta: f64,
    /// Mode-weighted noise variance minus paired mean.
    pub gamma: f64,
    /// `beta^2 - gamma`
    pub radicand: f64,
}

/// Ordering below which the quasi-distribution of the whole field is
/// non-negative, `1 + 2 (beta - sqrt(beta^2 - gamma))`.
pub fn ordering_threshold(params: &TwinBeamParams) -> Result<ThresholdDiagnostics> {
    params.check()?;
    let mode = |c: ModeComponent| if c.is_absent() { (0.0, 0.0) } else { (c.modes(), c.mean_photons()) };
    let (mp, bp) = mode(params.paired());
    let (ms, bs) = mode(params.signal_noise());
    let (mi, bi) = mode(params.idler_noise());
    let weight = ms + mi + 2.0 * mp;
    if weight <= 0.0 {
        return Err(Error::domain("ordering_threshold", "field has no modes"));
    }
    let beta = (ms * bs + mi * bi + 2.0 * mp * bp) / weight;
    let gamma = (ms * bs * bs + mi * bi * bi - 2.0 * mp * bp) / weight;
    let radicand = beta * beta - gamma;
    Ok(ThresholdDiagnostics {
        s_th: (radicand >= 0.0).then(|| 1.0 + 2.0 * (beta - radicand.sqrt())),
        beta,
        gamma,
        radicand,
    })
}

/// Outcome of the non-classicality test on field moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonclassicality {
    /// `2 <W_p> - <(dW_s)^2> - <(dW_i)^2>`
    pub margin: f64,
    pub nonclassical: bool,
    /// Mode form `M_s B_s^2 + M_i B_i^2 <= 2 M_p B_p`, the non-strict version.
    pub mode_form_holds: bool,
}

pub fn nonclassicality(fm: &FieldMoments) -> Result<Nonclassicality> {
    fm.check()?;
    let margin = 2.0 * fm.mean_p - fm.var_s - fm.var_i;
    Ok(Nonclassicality {
        margin,
        nonclassical: margin > 0.0,
        mode_form_holds: fm.var_s + fm.var_i <= 2.0 * fm.mean_p,
    })
}

fn axis_step(what: &'static str, axis: &[f64]) -> Result<f64> {
    check_axis(what, axis)?;
    if axis[0] != 0.0 || axis.len() < 2 {
        return Err(Error::validation(what, "axis must start at 0 and hold at least two points"));
    }
    let h = axis[1];
    let uniform = axis
        .iter()
        .enumerate()
        .all(|(k, w)| (w - k as f64 * h).abs() <= 1e-9 * h.max(*w));
    if !uniform {
        return Err(Error::validation(what, "axis must be uniformly spaced"));
    }
    Ok(h)
}

/// Probability mass of one noise component lumped onto the axis points, each
/// point taking the cell between the midpoints to its neighbours.
fn lumped_noise(c: &ModeComponent, s: f64, n: usize, h: f64) -> Result<Vec<f64>> {
    let mut q = vec![0.0; n];
    if c.is_absent() {
        q[0] = 1.0;
        return Ok(q);
    }
    let scale = c.mean_photons() + 0.5 * (1.0 - s);
    if !(scale > 0.0) {
        return Err(Error::domain("joint_qdii_grid", "noise scale B + (1 - s)/2 must be positive"));
    }
    let mut prev = 0.0;
    for (k, slot) in q.iter_mut().enumerate() {
        let edge = if k + 1 == n { (n - 1) as f64 * h } else { (k as f64 + 0.5) * h };
        let cdf = gamma_cdf(c.modes(), scale, edge);
        *slot = cdf - prev;
        prev = cdf;
    }
    Ok(q)
}

/// Pointwise paired-field values on the grid.
fn paired_kernel(pairs: &ModeComponent, s: f64, ws: &[f64], wi: &[f64]) -> Result<Array2<f64>> {
    let ctx = OrderingContext::new(pairs.mean_photons(), s)?;
    let rows: Vec<Vec<f64>> = ws
        .par_iter()
        .map(|&x| wi.iter().map(|&y| paired_qdii(&ctx, pairs.modes(), x, y)).collect())
        .collect::<Result<_>>()?;
    let mut kernel = Array2::zeros((ws.len(), wi.len()));
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            kernel[[r, c]] = v;
        }
    }
    Ok(kernel)
}

/// Convolution of the paired field with both noise fields on a uniform grid
/// starting at zero.
pub fn joint_qdii_grid(params: &TwinBeamParams, s: f64, w_s_axis: &[f64], w_i_axis: &[f64]) -> Result<QdiiGrid> {
    check_ordering(s)?;
    params.check()?;
    let h_s = axis_step("signal intensity axis", w_s_axis)?;
    let h_i = axis_step("idler intensity axis", w_i_axis)?;
    let (ns, ni) = (w_s_axis.len(), w_i_axis.len());
    let q_s = lumped_noise(&params.signal_noise(), s, ns, h_s)?;
    let q_i = lumped_noise(&params.idler_noise(), s, ni, h_i)?;
    let mass = q_s.iter().sum::<f64>() * q_i.iter().sum::<f64>();
    if mass < MIN_NOISE_MASS {
        return Err(Error::validation(
            "quasi-distribution grid",
            format!("grid captures only {mass:.3} of the noise probability; extend or refine it"),
        ));
    }
    let pairs = params.paired();
    if pairs.is_absent() {
        // Independent noise only: lumped masses over their cell widths.
        let (a, b) = (trapezoid_weights(w_s_axis), trapezoid_weights(w_i_axis));
        let values = Array2::from_shape_fn((ns, ni), |(j, k)| q_s[j] / a[j] * q_i[k] / b[k]);
        return QdiiGrid::new(w_s_axis.to_vec(), w_i_axis.to_vec(), values, s);
    }
    let kernel = paired_kernel(&pairs, s, w_s_axis, w_i_axis)?;

    // Separable convolution: signal axis first, then idler axis.
    let mut along_s = Array2::zeros((ns, ni));
    along_s
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut row)| {
            for (jp, &q) in q_s.iter().enumerate().take(j + 1) {
                if q != 0.0 {
                    row.scaled_add(q, &kernel.row(j - jp));
                }
            }
        });
    let mut values = Array2::zeros((ns, ni));
    values
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut row)| {
            let src = along_s.row(j);
            for k in 0..ni {
                let mut acc = 0.0;
                for (kp, &q) in q_i.iter().enumerate().take(k + 1) {
                    acc += q * src[k - kp];
                }
                row[k] = acc;
            }
        });
    let grid = QdiiGrid::new(w_s_axis.to_vec(), w_i_axis.to_vec(), values, s)?;
    let norm = grid.trapezoid_integral();
    if (norm - 1.0).abs() > 1.0 - MIN_NOISE_MASS {
        return Err(Error::validation(
            "quasi-distribution grid",
            format!("grid integrates to {norm:.4}; extend or refine it"),
        ));
    }
    Ok(grid)
}

/// Default grid for a state: both axes run to eight standard deviations
/// above the mean intensity of the wider arm.
pub fn default_axis_max(params: &TwinBeamParams, s: f64) -> f64 {
    let shift = 0.5 * (1.0 - s);
    let moments = |c: ModeComponent| {
        if c.is_absent() {
            (0.0, 0.0)
        } else {
            let b = c.mean_photons() + shift;
            (c.modes() * b, c.modes() * b * b)
        }
    };
    let (mp, vp) = moments(params.paired());
    let arm = |c: ModeComponent| {
        let (m, v) = moments(c);
        mp + m + 8.0 * (vp + v).sqrt()
    };
    arm(params.signal_noise()).max(arm(params.idler_noise())).max(1e-3)
}

/// `cells + 1` uniformly spaced points on `[0, max]`.
pub fn uniform_axis(max: f64, cells: usize) -> Vec<f64> {
    let h = max / cells as f64;
    (0..=cells).map(|k| k as f64 * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn paper() -> TwinBeamParams {
        TwinBeamParams::from_values(179.0, 0.055, 8e-6, 320.0, 8e-3, 12.0).unwrap()
    }

    #[test]
    fn context_coefficients() {
        let c = OrderingContext::new(0.055, 1.0).unwrap();
        assert_eq!(c.b_p_s, 0.055);
        assert_eq!(c.k_p_s, -0.055);
        assert!(c.is_sinc_branch());
        assert!((c.s_th_paired - 0.6282).abs() < 1e-4);
        let c = OrderingContext::new(0.055, 0.0).unwrap();
        assert!(!c.is_sinc_branch());
        assert!(OrderingContext::new(0.1, -1.0).is_err());
        assert!(OrderingContext::new(0.1, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn branch_follows_threshold(b in 0.001f64..5.0, s in -0.99f64..1.0) {
            let c = OrderingContext::new(b, s).unwrap();
            prop_assume!((s - c.s_th_paired).abs() > 1e-9);
            prop_assert_eq!(c.is_sinc_branch(), s > c.s_th_paired);
            prop_assert!(c.b_p_s > 0.0);
        }
    }

    #[test]
    fn single_mode_bessel_diagonal() {
        let c = OrderingContext::new(0.3, 0.0).unwrap();
        for w in [0.0, 0.2, 1.0, 4.0] {
            let k = c.k_p_s;
            let want = (1.0 / k) * (-2.0 * c.b_p_s * w / k).exp() * log_bessel_i(0.0, 2.0 * c.d_p * w / k).unwrap().to_f64();
            assert_relative_eq!(paired_qdii(&c, 1.0, w, w).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn sinc_diagonal_is_positive() {
        let c = OrderingContext::new(0.055, 1.0).unwrap();
        for w in [0.5, 5.0, 9.9, 15.0] {
            assert!(paired_qdii(&c, 179.0, w, w).unwrap() > 0.0);
        }
    }

    #[test]
    fn normal_ordering_has_negative_strips() {
        let c = OrderingContext::new(0.055, 1.0).unwrap();
        let root = 0.055f64.sqrt();
        // Sinc argument 1.5 pi, between the first two zeros.
        let off = 1.5 * std::f64::consts::PI * root;
        let v = paired_qdii(&c, 179.0, 9.9 + off / 2.0, 9.9 - off / 2.0).unwrap();
        assert!(v < 0.0, "{v}");
    }

    #[test]
    fn branch_boundary_is_rejected() {
        let b: f64 = 0.055;
        let s_th = 1.0 + 2.0 * (b - (b * (b + 1.0)).sqrt());
        let mut c = OrderingContext::new(b, s_th).unwrap();
        c.k_p_s = 0.0;
        assert!(paired_qdii(&c, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_mode_thermal_is_exponential() {
        for w in [0.0, 0.5, 3.0] {
            assert_relative_eq!(thermal_qdii(1.0, 2.0, 1.0, w).unwrap(), (-w / 2.0).exp() / 2.0, max_relative = 1e-13);
            assert_relative_eq!(thermal_qdii(1.0, 2.0, 0.0, w).unwrap(), (-w / 2.5).exp() / 2.5, max_relative = 1e-13);
        }
        assert!(thermal_qdii(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn characteristic_function_basics() {
        let p = paper();
        assert_eq!(characteristic_function(&p, 0.0, 0.0).unwrap(), Complex64::new(1.0, 0.0));
        let noise_only = TwinBeamParams::from_values(0.0, 0.0, 2.0, 0.5, 1.0, 3.0).unwrap();
        let (a, b) = (0.3, -0.7);
        let i = Complex64::i();
        let want = (1.0 - i * a * 0.5).powf(-2.0) * (1.0 - i * b * 3.0).powf(-1.0);
        assert!((characteristic_function(&noise_only, a, b).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn characteristic_function_moments() {
        let p = TwinBeamParams::from_values(3.0, 0.4, 2.0, 0.5, 1.0, 3.0).unwrap();
        let h = 1e-5;
        let ds = (characteristic_function(&p, h, 0.0).unwrap() - characteristic_function(&p, -h, 0.0).unwrap()) / (2.0 * h);
        let di = (characteristic_function(&p, 0.0, h).unwrap() - characteristic_function(&p, 0.0, -h).unwrap()) / (2.0 * h);
        assert!((ds - Complex64::new(0.0, 3.0 * 0.4 + 2.0 * 0.5)).norm() < 1e-8);
        assert!((di - Complex64::new(0.0, 3.0 * 0.4 + 1.0 * 3.0)).norm() < 1e-8);
    }

    #[test]
    fn pole_is_reported() {
        let p = TwinBeamParams::from_values(0.0, 0.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        // 1 - i a B vanishes only for complex a; on the real line the
        // paired factor has the pole at a = -b = 1 / sqrt(B_p).
        assert!(characteristic_function(&p, 1.0, 0.0).is_ok());
        let pairs = TwinBeamParams::from_values(1.0, 0.25, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(characteristic_function(&pairs, 2.0, -2.0).is_err());
    }

    #[test]
    fn threshold_of_pure_pairs() {
        let p = TwinBeamParams::from_values(179.0, 0.055, 0.0, 0.0, 0.0, 0.0).unwrap();
        let t = ordering_threshold(&p).unwrap();
        assert!((t.s_th.unwrap() - 0.63).abs() < 0.005);
        assert_relative_eq!(t.s_th.unwrap(), OrderingContext::new(0.055, 1.0).unwrap().s_th_paired, max_relative = 1e-14);
        let vac = TwinBeamParams::from_values(5.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(ordering_threshold(&vac).is_err());
    }

    #[test]
    fn threshold_of_noise_only_field() {
        // Equal occupations make the radicand vanish: s_th = 1 + 2 B >= 1.
        let p = TwinBeamParams::from_values(0.0, 0.0, 2.0, 0.7, 3.0, 0.7).unwrap();
        let t = ordering_threshold(&p).unwrap();
        assert!(t.radicand.abs() < 1e-15);
        assert!(t.s_th.unwrap() >= 1.0);
        // Unequal occupations: Jensen makes the radicand negative.
        let p = TwinBeamParams::from_values(0.0, 0.0, 2.0, 0.7, 3.0, 1.9).unwrap();
        assert!(ordering_threshold(&p).unwrap().s_th.is_none());
    }

    #[test]
    fn paper_optimum_is_nonclassical() {
        let fm = paper().field_moments();
        let v = nonclassicality(&fm).unwrap();
        // 17.9 from the inverted moments; the rounded mode parameters give 17.72.
        assert!((v.margin - 17.9).abs() < 0.25, "{}", v.margin);
        assert!(v.nonclassical && v.mode_form_holds);
        let t = ordering_threshold(&paper()).unwrap();
        assert!(t.s_th.unwrap() < 1.0);
    }

    #[test]
    fn boundary_margin_gives_unit_threshold() {
        // 2 M_p B_p = M_s B_s^2 + M_i B_i^2
        let (mp, bp, ms, bs, bi) = (4.0, 0.5, 1.0, 1.2, 0.8);
        let mi = (2.0 * mp * bp - ms * bs * bs) / (bi * bi);
        let p = TwinBeamParams::from_values(mp, bp, ms, bs, mi, bi).unwrap();
        assert!(nonclassicality(&p.field_moments()).unwrap().margin.abs() < 1e-12);
        assert!((ordering_threshold(&p).unwrap().s_th.unwrap() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn threshold_and_margin_agree(
            mp in 0.0f64..200.0, bp in 0.0f64..3.0,
            ms in 0.0f64..5.0, bs in 0.0f64..20.0,
            mi in 0.0f64..5.0, bi in 0.0f64..20.0,
        ) {
            let p = TwinBeamParams::from_values(mp, bp, ms, bs, mi, bi).unwrap();
            let Ok(t) = ordering_threshold(&p) else { return Ok(()) };
            let verdict = nonclassicality(&p.field_moments()).unwrap();
            let below_one = t.s_th.is_some_and(|s| s < 1.0);
            prop_assume!(verdict.margin.abs() > 1e-12);
            prop_assert_eq!(verdict.nonclassical, below_one);
        }
    }

    #[test]
    fn pairs_only_grid_is_pointwise() {
        let p = TwinBeamParams::from_values(10.0, 0.3, 0.0, 0.0, 0.0, 0.0).unwrap();
        let axis = uniform_axis(default_axis_max(&p, 0.0), 80);
        let g = joint_qdii_grid(&p, 0.0, &axis, &axis).unwrap();
        let ctx = OrderingContext::new(0.3, 0.0).unwrap();
        for ((a, b), v) in g.values().indexed_iter() {
            assert_eq!(*v, paired_qdii(&ctx, 10.0, axis[a], axis[b]).unwrap());
        }
    }

    #[test]
    fn noise_only_grid_factorizes() {
        let p = TwinBeamParams::from_values(0.0, 0.0, 3.0, 0.8, 2.0, 1.2).unwrap();
        let axis = uniform_axis(25.0, 250);
        let g = joint_qdii_grid(&p, 0.0, &axis, &axis).unwrap();
        let v = g.values();
        for a in (1..250).step_by(17) {
            for b in (1..250).step_by(13) {
                assert_relative_eq!(v[[a, b]] * v[[1, 1]], v[[a, 1]] * v[[1, b]], max_relative = 1e-12);
            }
        }
        // Cell masses approach the gamma densities inside the grid.
        for (a, b) in [(20, 30), (40, 20), (60, 45)] {
            let want = thermal_qdii(3.0, 0.8, 0.0, axis[a]).unwrap() * thermal_qdii(2.0, 1.2, 0.0, axis[b]).unwrap();
            assert_relative_eq!(v[[a, b]], want, max_relative = 2e-3);
        }
        // Only the idler tail beyond the grid (about 1e-5) is missing.
        assert!((g.trapezoid_integral() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let axis = uniform_axis(1.0, 10);
        assert!(joint_qdii_grid(&paper(), 0.0, &axis, &axis).is_err());
        let bad = vec![0.0, 1.0, 3.0];
        assert!(joint_qdii_grid(&paper(), 0.0, &bad, &bad).is_err());
    }

    #[test]
    fn paper_grid_signs() {
        let p = paper();
        let smooth = {
            let axis = uniform_axis(default_axis_max(&p, 0.0), 150);
            joint_qdii_grid(&p, 0.0, &axis, &axis).unwrap()
        };
        assert!(smooth.min_value() >= -1e-9);
        let axis = uniform_axis(default_axis_max(&p, 1.0), 200);
        let normal = joint_qdii_grid(&p, 1.0, &axis, &axis).unwrap();
        assert!(normal.min_value() < 0.0);
    }

    #[test]
    fn marginal_moments_at_normal_ordering() {
        let p = TwinBeamParams::from_values(30.0, 0.5, 2.0, 0.4, 1.0, 0.9).unwrap();
        let axis = uniform_axis(default_axis_max(&p, 1.0), 400);
        let g = joint_qdii_grid(&p, 1.0, &axis, &axis).unwrap();
        let w = trapezoid_weights(&axis);
        let norm = g.trapezoid_integral();
        let (mut m1, mut m2) = (0.0, 0.0);
        for ((a, b), v) in g.values().indexed_iter() {
            let mass = w[a] * w[b] * v / norm;
            m1 += axis[a] * mass;
            m2 += axis[a] * axis[a] * mass;
        }
        let mean = 30.0 * 0.5 + 2.0 * 0.4;
        let var = 30.0 * 0.25 + 2.0 * 0.16;
        assert!(((m1 - mean) / mean).abs() < 0.01, "{m1}");
        assert!(((m2 - m1 * m1 - var) / var).abs() < 0.01, "{}", m2 - m1 * m1);
    }
}
