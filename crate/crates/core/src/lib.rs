//! Reconstruction of multimode twin-beam states from joint photocount
//! histograms.
//!
//! The crate is organised as a pipeline: [`moments`] turns histograms into
//! field moments, [`photostat`] models photon and photocount statistics,
//! [`fit`] selects the state by least squares, [`qdii`] evaluates s-ordered
//! quasi-distributions and [`simgen`] produces synthetic data.

pub mod error;
pub mod fit;
pub mod model;
pub mod moments;
pub mod photostat;
pub mod qdii;
pub mod simgen;
pub mod specfun;

pub use error::{Error, Result};
