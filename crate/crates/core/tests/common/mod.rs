//! Quadrature shared by the integration tests.

use twinbeam::qdii::{paired_qdii, OrderingContext};

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
pub const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-point Gauss-Legendre rule with `panels` equal panels.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + h * (k as f64 + 0.5);
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * sum
}

/// Total mass of the paired quasi-distribution, integrated in
/// `u = (W_s + W_i) / 2` and `v = W_s - W_i` over the quadrant `|v| <= 2u`.
pub fn paired_mass(b_p: f64, modes: f64, s: f64) -> f64 {
    let ctx = OrderingContext::new(b_p, s).unwrap();
    let b = ctx.b_p_s;
    let sd = modes.sqrt() * b;
    let u_lo = (modes * b - 20.0 * sd).max(0.0);
    let u_hi = modes * b + 20.0 * sd + 40.0 * b;
    let outer_panels = (((u_hi - u_lo) / (0.25 * sd.min(b))).ceil() as usize).clamp(8, 4000);
    let oscillation = if ctx.k_p_s < 0.0 { (-ctx.k_p_s).sqrt() } else { f64::INFINITY };
    gauss_legendre(u_lo, u_hi, outer_panels, |u| {
        let v_max = 2.0 * u;
        let panels = ((v_max / (0.5 * oscillation.min(b))).ceil() as usize).clamp(4, 20_000);
        // Symmetric in v; integrate v >= 0 and double.
        2.0 * gauss_legendre(0.0, v_max, panels, |v| {
            let (ws, wi) = (u + 0.5 * v, u - 0.5 * v);
            paired_qdii(&ctx, modes, ws, wi.max(0.0)).unwrap_or(0.0)
        })
    })
}
