//! Monte Carlo generation of photocount histograms.
//!
//! Photon numbers are drawn as gamma-Poisson mixtures, which reproduce the
//! Mandel-Rice law for any real mode count. Detection is simulated pixel by
//! pixel rather than by sampling the response table, so the simulator stays
//! an independent check of that table.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectorModel, Histogram2D, ModeComponent, TwinBeamParams, Validate};

/// Frames generated per random substream.
const CHUNK: u64 = 1 << 14;
/// Substream offset separating dark frames from signal frames.
const DARK_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: TwinBeamParams,
    pub detector_s: DetectorModel,
    pub detector_i: DetectorModel,
    pub frames: u64,
    pub seed: u64,
}

impl Validate for SimConfig {
    fn check(&self) -> Result<()> {
        self.params.check()?;
        self.detector_s.check()?;
        self.detector_i.check()?;
        if self.frames == 0 {
            return Err(Error::validation("simulation", "frames must be >= 1"));
        }
        Ok(())
    }
}

/// Photon-number sampler for one multi-thermal component.
#[derive(Debug, Clone, Copy)]
struct ComponentSampler(Option<Gamma<f64>>);

impl ComponentSampler {
    fn new(c: &ModeComponent) -> Self {
        if c.is_absent() {
            return ComponentSampler(None);
        }
        ComponentSampler(Some(Gamma::new(c.modes(), c.mean_photons()).expect("validated component")))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let Some(gamma) = self.0 else {
            return 0;
        };
        let intensity = gamma.sample(rng);
        if intensity > 0.0 {
            Poisson::new(intensity).expect("positive mean").sample(rng) as u64
        } else {
            0
        }
    }
}

/// Reusable sampler for the frames of one configuration.
#[derive(Debug, Clone, Copy)]
pub struct FrameSampler {
    paired: ComponentSampler,
    signal: ComponentSampler,
    idler: ComponentSampler,
    detector_s: DetectorModel,
    detector_i: DetectorModel,
}

impl FrameSampler {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.check()?;
        Ok(FrameSampler {
            paired: ComponentSampler::new(&cfg.params.paired()),
            signal: ComponentSampler::new(&cfg.params.signal_noise()),
            idler: ComponentSampler::new(&cfg.params.idler_noise()),
            detector_s: cfg.detector_s,
            detector_i: cfg.detector_i,
        })
    }

    /// Incident photon numbers `(n_s, n_i)`; the paired count enters both.
    pub fn photons<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let pairs = self.paired.sample(rng);
        (pairs + self.signal.sample(rng), pairs + self.idler.sample(rng))
    }

    pub fn frame<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let (n_s, n_i) = self.photons(rng);
        (detect(&self.detector_s, n_s, rng), detect(&self.detector_i, n_i, rng))
    }

    pub fn dark_frame<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        (detect(&self.detector_s, 0, rng), detect(&self.detector_i, 0, rng))
    }
}

/// Number of fired pixels when `n` photons hit the detector: each photon is
/// detected with probability `eta` and lands on a uniformly chosen pixel, and
/// every pixel may also fire from a dark event.
pub fn detect<R: Rng + ?Sized>(d: &DetectorModel, n: u64, rng: &mut R) -> usize {
    let pixels = d.pixels();
    let mut hit: Vec<u32> = Vec::new();
    for _ in 0..n {
        if rng.gen::<f64>() >= d.efficiency() {
            continue;
        }
        let px = rng.gen_range(0..pixels);
        if let Err(pos) = hit.binary_search(&px) {
            hit.insert(pos, px);
        }
    }
    let lit = hit.len() as u64;
    let dark = if d.dark_rate() > 0.0 {
        Binomial::new(pixels as u64 - lit, d.dark_rate())
            .expect("valid dark rate")
            .sample(rng)
    } else {
        0
    };
    (lit + dark) as usize
}

/// One frame of photocounts `(m_s, m_i)`.
pub fn sample_frame<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(usize, usize)> {
    Ok(FrameSampler::new(cfg)?.frame(rng))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn tally<F>(cfg: &SimConfig, stream_base: u64, draw: F) -> Result<Histogram2D>
where
    F: Fn(&mut ChaCha8Rng) -> (usize, usize) + Sync,
{
    let chunks = cfg.frames.div_ceil(CHUNK);
    let merged = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, stream_base + c);
            let n = CHUNK.min(cfg.frames - c * CHUNK);
            let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
            for _ in 0..n {
                *cells.entry(draw(&mut rng)).or_default() += 1;
            }
            cells
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    let rows = merged.keys().map(|k| k.0).max().unwrap_or(0) + 1;
    let cols = merged.keys().map(|k| k.1).max().unwrap_or(0) + 1;
    let mut counts = Array2::zeros((rows, cols));
    for ((r, c), v) in merged {
        counts[[r, c]] = v as f64;
    }
    Histogram2D::new(counts, cfg.frames as f64)
}

/// Signal-idler histogram and a dark histogram of the same frame count.
pub fn simulate_histogram(cfg: &SimConfig) -> Result<(Histogram2D, Histogram2D)> {
    let sampler = FrameSampler::new(cfg)?;
    let signal = tally(cfg, 0, |rng| sampler.frame(rng))?;
    let dark = tally(cfg, DARK_STREAM, |rng| sampler.dark_frame(rng))?;
    Ok((signal, dark))
}
