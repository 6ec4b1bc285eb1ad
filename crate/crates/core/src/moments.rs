//! Moment pipeline: histogram moments, dark-count correction, the
//! efficiency feasibility test, the one-parameter family of field moments
//! and the mode parameters of each component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    DetectedIntensityMoments, FieldMoments, Histogram2D, ModeComponent, PhotocountMoments,
    TwinBeamParams, Validate,
};

/// First and second moments of a joint histogram, normalized by its total.
pub fn photocount_moments(h: &Histogram2D) -> Result<PhotocountMoments> {
    h.check()?;
    let norm = h.counts().sum();
    if norm <= 0.0 {
        return Err(Error::validation("histogram", "histogram holds no counts"));
    }
    let mut m = PhotocountMoments::ZERO;
    for ((r, c), &v) in h.counts().indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let (s, i) = (r as f64, c as f64);
        m.mean_s += s * v;
        m.mean_i += i * v;
        m.mean_sq_s += s * s * v;
        m.mean_sq_i += i * i * v;
        m.cross += s * i * v;
    }
    m.mean_s /= norm;
    m.mean_i /= norm;
    m.mean_sq_s /= norm;
    m.mean_sq_i /= norm;
    m.cross /= norm;
    Ok(m)
}

/// Moments of the detected integrated intensities with the dark counts and
/// the shot-noise term removed.
///
/// A negative corrected mean is returned as is; check
/// [`DetectedIntensityMoments::has_negative_mean`].
pub fn dark_corrected_moments(
    signal_idler: &PhotocountMoments,
    dark: &PhotocountMoments,
) -> Result<DetectedIntensityMoments> {
    signal_idler.check()?;
    dark.check()?;
    let m = signal_idler;
    let d = dark;
    let var = |sq: f64, mean: f64, dsq: f64, dmean: f64| {
        sq - mean * mean - mean - dsq + dmean * dmean + dmean
    };
    DetectedIntensityMoments {
        mean_s: m.mean_s - d.mean_s,
        mean_i: m.mean_i - d.mean_i,
        var_s: var(m.mean_sq_s, m.mean_s, d.mean_sq_s, d.mean_s),
        var_i: var(m.mean_sq_i, m.mean_i, d.mean_sq_i, d.mean_i),
        cov: m.cross - m.mean_s * m.mean_i - d.cross + d.mean_s * d.mean_i,
    }
    .validate()
}

fn check_efficiency(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "detection efficiency",
            format!("must lie in (0, 1), got {eta}"),
        ))
    }
}

/// Efficiency margin of the existence condition for a non-negative field
/// decomposition: `eta_s` minus the bound it has to exceed.
///
/// A decomposition exists iff the margin is non-negative (given
/// non-negative detected variances and covariance). When the smaller scaled
/// mean is zero the bound degenerates and the margin is `+inf` or `-inf`.
pub fn feasibility(detected: &DetectedIntensityMoments, eta_s: f64, eta_i: f64) -> Result<f64> {
    detected.check()?;
    check_efficiency(eta_s)?;
    check_efficiency(eta_i)?;
    let alpha = eta_i / eta_s;
    let numerator = detected.cov / alpha - detected.var_s.min(detected.var_i / (alpha * alpha));
    let denominator = detected.mean_s.min(detected.mean_i / alpha);
    if denominator > 0.0 {
        Ok(eta_s - numerator / denominator)
    } else if denominator == 0.0 && numerator <= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(f64::NEG_INFINITY)
    }
}

/// The set of field moments compatible with the detected moments,
/// parametrized by the paired-field variance `var_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentInversionFamily {
    detected: DetectedIntensityMoments,
    eta_s: f64,
    eta_i: f64,
    var_p_max: f64,
    feasible: (f64, f64),
    margin: f64,
}

impl MomentInversionFamily {
    pub fn detected(&self) -> &DetectedIntensityMoments {
        &self.detected
    }

    pub fn efficiencies(&self) -> (f64, f64) {
        (self.eta_s, self.eta_i)
    }

    /// The nominal range `(0, var_p_max]`, bounded only by the detected
    /// variances.
    pub fn var_p_range(&self) -> (f64, f64) {
        (0.0, self.var_p_max)
    }

    /// The sub-interval `[lo, hi]` of `var_p` on which all six field moments
    /// are non-negative.
    pub fn feasible_range(&self) -> (f64, f64) {
        self.feasible
    }

    /// Efficiency margin of the existence condition.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// `cov / (eta_s eta_i)`, the fixed sum `mean_p + var_p`.
    pub fn paired_sum(&self) -> f64 {
        self.detected.cov / (self.eta_s * self.eta_i)
    }

    /// True when the feasible range reaches down to `var_p = 0`, where the
    /// paired field becomes Poissonian (`M_p -> inf`). That endpoint is only
    /// a limit and is never returned as a member of the family.
    pub fn poissonian_pair_limit(&self) -> bool {
        self.feasible.0 == 0.0
    }
}

/// Builds the one-parameter family of field moments.
pub fn inversion_family(
    detected: &DetectedIntensityMoments,
    eta_s: f64,
    eta_i: f64,
) -> Result<MomentInversionFamily> {
    let margin = feasibility(detected, eta_s, eta_i)?;
    let d = detected;
    let c = d.cov / (eta_s * eta_i);
    let var_p_max = (d.var_s / (eta_s * eta_s)).min(d.var_i / (eta_i * eta_i));
    let lo = 0f64.max(c - d.mean_s / eta_s).max(c - d.mean_i / eta_i);
    let hi = var_p_max.min(c);
    if !(hi > 0.0 && lo <= hi) {
        return Err(Error::Infeasible {
            margin,
            reason: format!(
                "no paired variance keeps all field moments non-negative (lower bound {lo:.6e}, upper bound {hi:.6e})"
            ),
        });
    }
    Ok(MomentInversionFamily {
        detected: *detected,
        eta_s,
        eta_i,
        var_p_max,
        feasible: (lo, hi),
        margin,
    })
}

/// Raw field moments for a given `var_p`; no sign checks.
fn raw_inversion(family: &MomentInversionFamily, var_p: f64) -> [f64; 6] {
    let d = &family.detected;
    let (es, ei) = (family.eta_s, family.eta_i);
    let c = family.paired_sum();
    [
        c - var_p,
        d.mean_s / es - c + var_p,
        d.mean_i / ei - c + var_p,
        var_p,
        d.var_s / (es * es) - var_p,
        d.var_i / (ei * ei) - var_p,
    ]
}

const MOMENT_NAMES: [&str; 6] = ["mean_p", "mean_s", "mean_i", "var_p", "var_s", "var_i"];

fn check_var_p(family: &MomentInversionFamily, var_p: f64) -> Result<()> {
    if var_p > 0.0 && var_p <= family.var_p_max {
        Ok(())
    } else {
        Err(Error::validation(
            "paired variance",
            format!("{var_p} lies outside (0, {}]", family.var_p_max),
        ))
    }
}

/// Field moments at a chosen `var_p`.
///
/// Negative results beyond round-off are errors: they mean `var_p` lies
/// outside the feasible range or the efficiencies are inconsistent.
pub fn invert_at(family: &MomentInversionFamily, var_p: f64) -> Result<FieldMoments> {
    check_var_p(family, var_p)?;
    let raw = raw_inversion(family, var_p);
    let scale = family.paired_sum().abs().max(family.var_p_max.abs());
    let mut out = [0.0; 6];
    for (k, v) in raw.iter().enumerate() {
        if *v >= 0.0 {
            out[k] = *v;
        } else if *v > -1e-12 * scale {
            out[k] = 0.0;
        } else {
            return Err(Error::Infeasible {
                margin: family.margin,
                reason: format!("{} = {v:.6e} is negative at var_p = {var_p}", MOMENT_NAMES[k]),
            });
        }
    }
    FieldMoments::new(out[0], out[1], out[2], out[3], out[4], out[5])
}

/// A moment that [`invert_at_within`] raised to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampedMoment {
    pub name: String,
    pub raw: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleratedInversion {
    pub moments: FieldMoments,
    pub clamped: Vec<ClampedMoment>,
}

/// Like [`invert_at`], for detected moments known only to
/// `input_resolution` (for instance, published to three decimals).
///
/// A negative output whose magnitude is within the first-order propagated
/// rounding bound is set to zero and listed in `clamped`. Anything larger
/// is still an error.
pub fn invert_at_within(
    family: &MomentInversionFamily,
    var_p: f64,
    input_resolution: f64,
) -> Result<ToleratedInversion> {
    check_var_p(family, var_p)?;
    if !(input_resolution >= 0.0) {
        return Err(Error::validation("input resolution", "must be non-negative"));
    }
    let (es, ei) = (family.eta_s, family.eta_i);
    let half = 0.5 * input_resolution;
    let cov_term = half / (es * ei);
    let bounds = [
        cov_term,
        half / es + cov_term,
        half / ei + cov_term,
        0.0,
        half / (es * es),
        half / (ei * ei),
    ];
    let raw = raw_inversion(family, var_p);
    let mut out = [0.0; 6];
    let mut clamped = Vec::new();
    for k in 0..6 {
        let v = raw[k];
        if v >= 0.0 {
            out[k] = v;
        } else if -v <= bounds[k] {
            clamped.push(ClampedMoment {
                name: MOMENT_NAMES[k].to_string(),
                raw: v,
                bound: bounds[k],
            });
        } else {
            return Err(Error::Infeasible {
                margin: family.margin,
                reason: format!(
                    "{} = {v:.6e} is negative beyond the rounding bound {:.3e}",
                    MOMENT_NAMES[k], bounds[k]
                ),
            });
        }
    }
    Ok(ToleratedInversion {
        moments: FieldMoments::new(out[0], out[1], out[2], out[3], out[4], out[5])?,
        clamped,
    })
}

/// Detected moments implied by field moments and efficiencies (the forward
/// direction of the inversion).
pub fn forward_detected(fm: &FieldMoments, eta_s: f64, eta_i: f64) -> DetectedIntensityMoments {
    DetectedIntensityMoments {
        mean_s: eta_s * (fm.mean_p + fm.mean_s),
        mean_i: eta_i * (fm.mean_p + fm.mean_i),
        var_s: eta_s * eta_s * (fm.var_p + fm.var_s),
        var_i: eta_i * eta_i * (fm.var_p + fm.var_i),
        cov: eta_s * eta_i * (fm.mean_p + fm.var_p),
    }
}

/// Mode count and occupation of one component from its mean and variance.
pub fn mode_component(what: &'static str, mean: f64, var: f64) -> Result<ModeComponent> {
    if mean == 0.0 && var == 0.0 {
        return Ok(ModeComponent::ABSENT);
    }
    if !(mean > 0.0) || !(var >= 0.0) {
        return Err(Error::validation(
            what,
            format!("mean {mean} and variance {var} do not describe a multi-thermal component"),
        ));
    }
    if var == 0.0 {
        return Err(Error::validation(
            what,
            format!("zero variance at mean {mean} is the Poissonian limit with infinitely many modes"),
        ));
    }
    ModeComponent::new(mean * mean / var, var / mean)
}

/// Mode parameters of all three components.
pub fn mode_parameters(fm: &FieldMoments) -> Result<TwinBeamParams> {
    fm.check()?;
    TwinBeamParams::new(
        mode_component("paired component", fm.mean_p, fm.var_p)?,
        mode_component("signal noise component", fm.mean_s, fm.var_s)?,
        mode_component("idler noise component", fm.mean_i, fm.var_i)?,
    )
}
