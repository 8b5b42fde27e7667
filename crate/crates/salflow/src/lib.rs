//! Dynamic saliency from spatio-temporal optical flow.
//!
//! The pipeline: complement video frames with a static-saliency channel,
//! estimate optical flow for the whole sequence by minimizing a
//! contrast-invariant spatio-temporal functional, and read the flow
//! magnitude as a per-frame dynamic saliency map. Evaluation utilities
//! cover data conditioning statistics, AUC/NSS fixation metrics, and
//! average angular error against ground-truth flow.

pub mod conditioning;
pub mod dynsal;
pub mod error;
pub mod eval;
pub mod flow;
pub mod frame;
pub mod grid;
pub mod io;
pub mod saliency;
pub mod solver;
pub mod synth;

pub use error::{Category, Error, Result};
