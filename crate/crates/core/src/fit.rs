//! Least-squares selection of the state within the moment-inversion family.
//!
//! The moments fix five of the six parameters; the paired variance is chosen
//! by minimizing the Euclidean distance between the predicted photocount
//! distribution and the normalized histogram.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectorModel, FieldMoments, Histogram2D, JointDistribution, TwinBeamParams};
use crate::moments::{
    dark_corrected_moments, invert_at, inversion_family, mode_parameters, photocount_moments, MomentInversionFamily,
};
use crate::photostat::{
    default_cutoffs, joint_photon_distribution, photocount_distribution, response_table, DetectorResponseTable,
    MAX_PHOTONS,
};

/// Golden-section refinement stops at this fraction of the feasible interval.
pub const REFINE_WIDTH: f64 = 1e-4;

/// Reconstructed state at the declination minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub var_p_opt: f64,
    pub params: TwinBeamParams,
    pub field_moments: FieldMoments,
    pub declination: f64,
    /// Every evaluated `(var_p, declination)`, sorted by `var_p`.
    pub scan: Vec<(f64, f64)>,
    pub at_boundary: bool,
}

/// Euclidean distance between two tables over the union of their index
/// ranges.
fn table_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let rows = a.nrows().max(b.nrows());
    let cols = a.ncols().max(b.ncols());
    let at = |t: &Array2<f64>, r: usize, c: usize| t.get((r, c)).copied().unwrap_or(0.0);
    let mut sum = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let d = at(a, r, c) - at(b, r, c);
            sum += d * d;
        }
    }
    sum.sqrt()
}

/// `sqrt(sum (p_c - f)^2)` over all cells of either table.
pub fn declination(p_c: &JointDistribution, f: &Histogram2D) -> Result<f64> {
    if !f.is_normalized() {
        return Err(Error::validation(
            "histogram",
            format!("declination needs a normalized histogram, cells sum to {}", f.counts().sum()),
        ));
    }
    Ok(table_distance(p_c.probs(), f.counts()))
}

/// Forward model for a fixed pair of response tables.
struct ForwardModel<'a> {
    family: &'a MomentInversionFamily,
    t_s: DetectorResponseTable,
    t_i: DetectorResponseTable,
    f: &'a Histogram2D,
}

impl ForwardModel<'_> {
    fn state(&self, var_p: f64) -> Result<(FieldMoments, TwinBeamParams)> {
        let fm = invert_at(self.family, var_p)?;
        let params = mode_parameters(&fm)?;
        Ok((fm, params))
    }

    fn declination(&self, var_p: f64) -> Result<f64> {
        let (_, params) = self.state(var_p)?;
        let p = joint_photon_distribution(&params, default_cutoffs(&params))?;
        let p_c = photocount_distribution(&p, &self.t_s, &self.t_i)?;
        declination(&p_c, self.f)
    }

    /// Failed evaluations rank behind every successful one.
    fn objective(&self, var_p: f64) -> f64 {
        self.declination(var_p).unwrap_or(f64::INFINITY)
    }
}

fn count_extent(extent: usize, d: &DetectorModel) -> usize {
    (extent + (extent / 2).max(10)).min(d.pixels() as usize)
}

/// Selects `var_p` by a uniform scan of the feasible interval followed by
/// golden-section refinement of the best bracket.
pub fn reconstruct(
    f: &Histogram2D,
    dark: &Histogram2D,
    d_s: &DetectorModel,
    d_i: &DetectorModel,
    scan_points: usize,
) -> Result<ReconstructionResult> {
    if scan_points < 3 {
        return Err(Error::validation("scan points", format!("need at least 3, got {scan_points}")));
    }
    let f = f.normalized();
    let detected = dark_corrected_moments(&photocount_moments(&f)?, &photocount_moments(dark)?)?;
    let family = inversion_family(&detected, d_s.efficiency(), d_i.efficiency())?;
    let (lo, hi) = family.feasible_range();

    let (ext_s, ext_i) = f.extent();
    let (t_s, t_i) = rayon::join(
        || response_table(d_s, count_extent(ext_s, d_s), MAX_PHOTONS),
        || response_table(d_i, count_extent(ext_i, d_i), MAX_PHOTONS),
    );
    let model = ForwardModel {
        family: &family,
        t_s: t_s?,
        t_i: t_i?,
        f: &f,
    };

    let step = (hi - lo) / scan_points as f64;
    let grid: Vec<f64> = (0..scan_points).map(|k| lo + step * (k as f64 + 0.5)).collect();
    let values: Vec<f64> = grid.par_iter().map(|&v| model.objective(v)).collect();
    let best = (0..scan_points)
        .filter(|&k| values[k].is_finite())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .ok_or_else(|| {
            Error::numerical(
                "reconstruct",
                format!("forward model failed at every one of {scan_points} scan points"),
            )
        })?;
    let mut scan: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    // Bracket between the neighbours of the best grid point, or the interval
    // end beyond an edge point.
    let mut a = if best == 0 { lo } else { grid[best - 1] };
    let mut b = if best + 1 == scan_points { hi } else { grid[best + 1] };
    let width = REFINE_WIDTH * (hi - lo);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = model.objective(x1);
    let mut f2 = model.objective(x2);
    scan.push((x1, f1));
    scan.push((x2, f2));
    while b - a > width {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = model.objective(x1);
            scan.push((x1, f1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = model.objective(x2);
            scan.push((x2, f2));
        }
    }

    let (var_p_opt, decl) = scan
        .iter()
        .copied()
        .filter(|(_, d)| d.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("the best grid point is finite");
    scan.retain(|(_, d)| d.is_finite());
    scan.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (field_moments, params) = model.state(var_p_opt)?;
    Ok(ReconstructionResult {
        var_p_opt,
        params,
        field_moments,
        declination: decl,
        scan,
        at_boundary: var_p_opt - lo <= width || hi - var_p_opt <= width,
    })
}
