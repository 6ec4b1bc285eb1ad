//! Shared domain types for the twin-beam pipeline.
//!
//! Every type here is immutable once built and carries its own invariant
//! check. Constructors run the check, so a value obtained through the public
//! API is always valid; [`Validate::validate`] re-runs it on demand and is
//! idempotent.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Invariant check shared by all externally supplied values.
pub trait Validate: Sized {
    /// Returns `Ok(())` if every invariant of the type holds.
    fn check(&self) -> Result<()>;

    /// Returns the value back if it is valid.
    fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }
}

fn non_negative(what: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            what,
            format!("{name} must be a finite non-negative number, got {v}"),
        ))
    }
}

/// One multi-mode component of the field: `modes` equally populated modes
/// with `mean_photons` photons per mode.
///
/// Mode counts are real-valued. A component with zero modes or zero
/// occupation is absent and contributes a point mass at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeComponent {
    modes: f64,
    mean_photons: f64,
}

impl ModeComponent {
    pub const ABSENT: ModeComponent = ModeComponent {
        modes: 0.0,
        mean_photons: 0.0,
    };

    pub fn new(modes: f64, mean_photons: f64) -> Result<Self> {
        ModeComponent {
            modes,
            mean_photons,
        }
        .validate()
    }

    pub fn modes(&self) -> f64 {
        self.modes
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }

    pub fn is_absent(&self) -> bool {
        self.modes == 0.0 || self.mean_photons == 0.0
    }

    /// Mean integrated intensity `M B`.
    pub fn mean_intensity(&self) -> f64 {
        self.modes * self.mean_photons
    }

    /// Normally ordered intensity variance `M B^2`.
    pub fn intensity_variance(&self) -> f64 {
        self.modes * self.mean_photons * self.mean_photons
    }
}

impl Validate for ModeComponent {
    fn check(&self) -> Result<()> {
        non_negative("mode component", "mode count", self.modes)?;
        non_negative("mode component", "mean photons per mode", self.mean_photons)
    }
}

/// The six-parameter twin-beam state: a paired field plus independent
/// multi-thermal noise in the signal and idler arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TwinBeamParamsRepr", into = "TwinBeamParamsRepr")]
pub struct TwinBeamParams {
    paired: ModeComponent,
    signal_noise: ModeComponent,
    idler_noise: ModeComponent,
}

/// Flat serialized form with one field per parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwinBeamParamsRepr {
    pub m_pairs: f64,
    pub b_pairs: f64,
    pub m_noise_s: f64,
    pub b_noise_s: f64,
    pub m_noise_i: f64,
    pub b_noise_i: f64,
}

impl TryFrom<TwinBeamParamsRepr> for TwinBeamParams {
    type Error = Error;

    fn try_from(r: TwinBeamParamsRepr) -> Result<Self> {
        TwinBeamParams::new(
            ModeComponent::new(r.m_pairs, r.b_pairs)?,
            ModeComponent::new(r.m_noise_s, r.b_noise_s)?,
            ModeComponent::new(r.m_noise_i, r.b_noise_i)?,
        )
    }
}

impl From<TwinBeamParams> for TwinBeamParamsRepr {
    fn from(p: TwinBeamParams) -> Self {
        TwinBeamParamsRepr {
            m_pairs: p.paired.modes,
            b_pairs: p.paired.mean_photons,
            m_noise_s: p.signal_noise.modes,
            b_noise_s: p.signal_noise.mean_photons,
            m_noise_i: p.idler_noise.modes,
            b_noise_i: p.idler_noise.mean_photons,
        }
    }
}

impl TwinBeamParams {
    pub fn new(
        paired: ModeComponent,
        signal_noise: ModeComponent,
        idler_noise: ModeComponent,
    ) -> Result<Self> {
        TwinBeamParams {
            paired,
            signal_noise,
            idler_noise,
        }
        .validate()
    }

    /// Builds the state from the six raw numbers `(M_p, B_p, M_s, B_s, M_i, B_i)`.
    pub fn from_values(
        m_pairs: f64,
        b_pairs: f64,
        m_noise_s: f64,
        b_noise_s: f64,
        m_noise_i: f64,
        b_noise_i: f64,
    ) -> Result<Self> {
        TwinBeamParamsRepr {
            m_pairs,
            b_pairs,
            m_noise_s,
            b_noise_s,
            m_noise_i,
            b_noise_i,
        }
        .try_into()
    }

    pub fn paired(&self) -> ModeComponent {
        self.paired
    }

    pub fn signal_noise(&self) -> ModeComponent {
        self.signal_noise
    }

    pub fn idler_noise(&self) -> ModeComponent {
        self.idler_noise
    }

    /// Field moments implied by the parameters (`mean = M B`, `var = M B^2`).
    pub fn field_moments(&self) -> FieldMoments {
        FieldMoments {
            mean_p: self.paired.mean_intensity(),
            mean_s: self.signal_noise.mean_intensity(),
            mean_i: self.idler_noise.mean_intensity(),
            var_p: self.paired.intensity_variance(),
            var_s: self.signal_noise.intensity_variance(),
            var_i: self.idler_noise.intensity_variance(),
        }
    }
}

impl Validate for TwinBeamParams {
    fn check(&self) -> Result<()> {
        self.paired.check()?;
        self.signal_noise.check()?;
        self.idler_noise.check()?;
        if self.paired.mean_photons > 0.0 && self.paired.modes <= 0.0 {
            return Err(Error::validation(
                "twin-beam parameters",
                "paired mode count must be positive when the pair occupation is positive",
            ));
        }
        Ok(())
    }
}

/// Pixelated detector of one arm: efficiency `eta`, `pixels` binary pixels
/// and per-pixel dark-count probability `dark_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectorModelRepr", into = "DetectorModelRepr")]
pub struct DetectorModel {
    efficiency: f64,
    pixels: u32,
    dark_rate: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorModelRepr {
    pub efficiency: f64,
    pub pixels: u32,
    pub dark_rate: f64,
}

impl TryFrom<DetectorModelRepr> for DetectorModel {
    type Error = Error;

    fn try_from(r: DetectorModelRepr) -> Result<Self> {
        DetectorModel::new(r.efficiency, r.pixels, r.dark_rate)
    }
}

impl From<DetectorModel> for DetectorModelRepr {
    fn from(d: DetectorModel) -> Self {
        DetectorModelRepr {
            efficiency: d.efficiency,
            pixels: d.pixels,
            dark_rate: d.dark_rate,
        }
    }
}

impl DetectorModel {
    pub fn new(efficiency: f64, pixels: u32, dark_rate: f64) -> Result<Self> {
        DetectorModel {
            efficiency,
            pixels,
            dark_rate,
        }
        .validate()
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn pixels(&self) -> u32 {
        self.pixels
    }

    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }
}

impl Validate for DetectorModel {
    fn check(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency < 1.0) {
            return Err(Error::validation(
                "detector model",
                format!("efficiency must lie in (0, 1), got {}", self.efficiency),
            ));
        }
        if self.pixels == 0 {
            return Err(Error::validation("detector model", "pixel count must be >= 1"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate < 1.0) {
            return Err(Error::validation(
                "detector model",
                format!("dark rate must lie in [0, 1), got {}", self.dark_rate),
            ));
        }
        Ok(())
    }
}

/// Joint photocount histogram indexed by `(m_s, m_i)`.
///
/// Cells hold either raw frame tallies (summing to `total_frames`) or a
/// normalized distribution (summing to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    counts: Array2<f64>,
    total_frames: f64,
}

impl Histogram2D {
    pub fn new(counts: Array2<f64>, total_frames: f64) -> Result<Self> {
        Histogram2D {
            counts,
            total_frames,
        }
        .validate()
    }

    /// Histogram of raw tallies; the frame total is the cell sum.
    pub fn from_counts(counts: Array2<f64>) -> Result<Self> {
        let total = counts.sum();
        Self::new(counts, total)
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }

    pub fn total_frames(&self) -> f64 {
        self.total_frames
    }

    /// Number of rows (`m_s` values) and columns (`m_i` values).
    pub fn dim(&self) -> (usize, usize) {
        self.counts.dim()
    }

    pub fn is_normalized(&self) -> bool {
        (self.counts.sum() - 1.0).abs() <= 1e-9
    }

    /// Cells divided by the frame total; `total_frames` is kept.
    pub fn normalized(&self) -> Histogram2D {
        if self.is_normalized() {
            return self.clone();
        }
        Histogram2D {
            counts: &self.counts / self.total_frames,
            total_frames: self.total_frames,
        }
    }

    /// Largest indices carrying a non-zero count, `(m_s, m_i)`.
    pub fn extent(&self) -> (usize, usize) {
        let mut ext = (0, 0);
        for ((r, c), &v) in self.counts.indexed_iter() {
            if v > 0.0 {
                ext.0 = ext.0.max(r);
                ext.1 = ext.1.max(c);
            }
        }
        ext
    }
}

impl Validate for Histogram2D {
    fn check(&self) -> Result<()> {
        let (rows, cols) = self.counts.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::validation("histogram", "histogram has no cells"));
        }
        if let Some(((r, c), v)) = self
            .counts
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::validation(
                "histogram",
                format!("cell ({r}, {c}) holds {v}; cells must be non-negative"),
            ));
        }
        if !(self.total_frames.is_finite() && self.total_frames > 0.0) {
            return Err(Error::validation(
                "histogram",
                format!("total frames must be positive, got {}", self.total_frames),
            ));
        }
        let sum = self.counts.sum();
        let raw = (sum - self.total_frames).abs() <= 1e-9 * self.total_frames;
        let normalized = (sum - 1.0).abs() <= 1e-9;
        if !(raw || normalized) {
            return Err(Error::validation(
                "histogram",
                format!(
                    "cells sum to {sum}, neither the frame total {} nor 1",
                    self.total_frames
                ),
            ));
        }
        Ok(())
    }
}

/// First and second photocount moments of a joint histogram. Also used for
/// dark-count moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotocountMoments {
    pub mean_s: f64,
    pub mean_i: f64,
    pub mean_sq_s: f64,
    pub mean_sq_i: f64,
    pub cross: f64,
}

impl PhotocountMoments {
    pub const ZERO: PhotocountMoments = PhotocountMoments {
        mean_s: 0.0,
        mean_i: 0.0,
        mean_sq_s: 0.0,
        mean_sq_i: 0.0,
        cross: 0.0,
    };
}

impl Validate for PhotocountMoments {
    fn check(&self) -> Result<()> {
        const WHAT: &str = "photocount moments";
        non_negative(WHAT, "mean_s", self.mean_s)?;
        non_negative(WHAT, "mean_i", self.mean_i)?;
        if !self.cross.is_finite() {
            return Err(Error::validation(WHAT, "cross moment is not finite"));
        }
        for (name, mean, sq) in [
            ("signal", self.mean_s, self.mean_sq_s),
            ("idler", self.mean_i, self.mean_sq_i),
        ] {
            // Moments computed from a histogram can miss mean^2 by round-off.
            if !(sq.is_finite() && sq - mean * mean >= -1e-12 * sq.max(1.0)) {
                return Err(Error::validation(
                    WHAT,
                    format!("{name} second moment {sq} is below the squared mean {}", mean * mean),
                ));
            }
        }
        Ok(())
    }
}

/// Dark-count corrected moments of the detected integrated intensities.
///
/// Variances may be negative for sub-Poissonian detected light; they are
/// passed on unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedIntensityMoments {
    pub mean_s: f64,
    pub mean_i: f64,
    pub var_s: f64,
    pub var_i: f64,
    pub cov: f64,
}

impl DetectedIntensityMoments {
    /// True when dark correction pushed a mean below zero.
    pub fn has_negative_mean(&self) -> bool {
        self.mean_s < 0.0 || self.mean_i < 0.0
    }
}

impl Validate for DetectedIntensityMoments {
    fn check(&self) -> Result<()> {
        let all = [self.mean_s, self.mean_i, self.var_s, self.var_i, self.cov];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::validation(
                "detected intensity moments",
                "all moments must be finite",
            ))
        }
    }
}

/// Pre-detection means and variances of the paired (`p`), signal-noise
/// (`s`) and idler-noise (`i`) intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMoments {
    pub mean_p: f64,
    pub mean_s: f64,
    pub mean_i: f64,
    pub var_p: f64,
    pub var_s: f64,
    pub var_i: f64,
}

impl FieldMoments {
    pub fn new(
        mean_p: f64,
        mean_s: f64,
        mean_i: f64,
        var_p: f64,
        var_s: f64,
        var_i: f64,
    ) -> Result<Self> {
        FieldMoments {
            mean_p,
            mean_s,
            mean_i,
            var_p,
            var_s,
            var_i,
        }
        .validate()
    }

    /// Total mean intensity of the signal arm, paired part included.
    pub fn total_mean_s(&self) -> f64 {
        self.mean_p + self.mean_s
    }

    pub fn total_mean_i(&self) -> f64 {
        self.mean_p + self.mean_i
    }
}

impl Validate for FieldMoments {
    fn check(&self) -> Result<()> {
        const WHAT: &str = "field moments";
        non_negative(WHAT, "mean_p", self.mean_p)?;
        non_negative(WHAT, "mean_s", self.mean_s)?;
        non_negative(WHAT, "mean_i", self.mean_i)?;
        non_negative(WHAT, "var_p", self.var_p)?;
        non_negative(WHAT, "var_s", self.var_s)?;
        non_negative(WHAT, "var_i", self.var_i)
    }
}

/// Truncated joint probability table over `(n_s, n_i)` or `(m_s, m_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    probs: Array2<f64>,
    truncation_mass: f64,
}

impl JointDistribution {
    /// Wraps a table; the truncation mass is whatever the table misses.
    pub fn from_table(probs: Array2<f64>) -> Result<Self> {
        let truncation_mass = (1.0 - probs.sum()).max(0.0);
        JointDistribution {
            probs,
            truncation_mass,
        }
        .validate()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn total(&self) -> f64 {
        self.probs.sum()
    }

    /// Largest indices `(max_s, max_i)` covered by the table.
    pub fn cutoffs(&self) -> (usize, usize) {
        let (r, c) = self.probs.dim();
        (r - 1, c - 1)
    }
}

impl Validate for JointDistribution {
    fn check(&self) -> Result<()> {
        const WHAT: &str = "joint distribution";
        let (r, c) = self.probs.dim();
        if r == 0 || c == 0 {
            return Err(Error::validation(WHAT, "empty table"));
        }
        if let Some(((a, b), v)) = self
            .probs
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= -1e-12))
        {
            return Err(Error::validation(
                WHAT,
                format!("entry ({a}, {b}) = {v} is negative beyond round-off"),
            ));
        }
        let closure = self.total() + self.truncation_mass - 1.0;
        if closure.abs() > 1e-6 {
            return Err(Error::validation(
                WHAT,
                format!("total plus truncation mass misses 1 by {closure:e}"),
            ));
        }
        Ok(())
    }
}

/// Sampled s-ordered quasi-distribution of integrated intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdiiGrid {
    w_s_axis: Vec<f64>,
    w_i_axis: Vec<f64>,
    values: Array2<f64>,
    ordering: f64,
}

impl QdiiGrid {
    pub fn new(
        w_s_axis: Vec<f64>,
        w_i_axis: Vec<f64>,
        values: Array2<f64>,
        ordering: f64,
    ) -> Result<Self> {
        QdiiGrid {
            w_s_axis,
            w_i_axis,
            values,
            ordering,
        }
        .validate()
    }

    pub fn w_s_axis(&self) -> &[f64] {
        &self.w_s_axis
    }

    pub fn w_i_axis(&self) -> &[f64] {
        &self.w_i_axis
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn ordering(&self) -> f64 {
        self.ordering
    }

    /// Two-dimensional trapezoidal integral of the sampled values.
    pub fn trapezoid_integral(&self) -> f64 {
        let ws = trapezoid_weights(&self.w_s_axis);
        let wi = trapezoid_weights(&self.w_i_axis);
        self.values
            .indexed_iter()
            .map(|((a, b), v)| ws[a] * wi[b] * v)
            .sum()
    }

    /// Smallest sampled value (negative for non-classical orderings).
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Trapezoidal quadrature weights for an ascending axis.
pub fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = 0.5 * (axis[k] - axis[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

pub(crate) fn check_axis(what: &'static str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::validation(what, "axis is empty"));
    }
    if axis.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::validation(what, "axis values must be finite and non-negative"));
    }
    if axis.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::validation(what, "axis must be strictly increasing"));
    }
    Ok(())
}

impl Validate for QdiiGrid {
    fn check(&self) -> Result<()> {
        const WHAT: &str = "quasi-distribution grid";
        check_axis(WHAT, &self.w_s_axis)?;
        check_axis(WHAT, &self.w_i_axis)?;
        if self.values.dim() != (self.w_s_axis.len(), self.w_i_axis.len()) {
            return Err(Error::validation(WHAT, "value table does not match the axes"));
        }
        if !(self.ordering > -1.0 && self.ordering <= 1.0) {
            return Err(Error::validation(
                WHAT,
                format!("ordering parameter must lie in (-1, 1], got {}", self.ordering),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(WHAT, "grid holds non-finite values"));
        }
        Ok(())
    }
}
