//! Whole-sequence variational optical flow.
//!
//! The estimator minimizes, over all frame transitions jointly, a data term
//! that weights each channel's constancy residual by a contrast weight
//! (saliency over local gradient magnitude, floored by ξ), plus α times a
//! robust penalty of the spatio-temporal flow gradient (∂x, ∂y, λ∂t). The
//! minimization runs semi-implicit fixed-point sweeps inside a coarse-to-
//! fine pyramid; long sequences can be processed in overlapping temporal
//! windows, and a window of two frames with the temporal smoothness terms
//! vanishing reproduces the classic two-frame baseline.

pub mod sweep;
pub mod terms;

pub use sweep::{diffusion_weights, fixed_point_sweep, solve_level, stationarity_residual};
pub use terms::{compute_weights, DataTerms, RobustPenalty, Volume, WeightField};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowFrame};
use crate::frame::{ComplementedSequence, Frame};
use crate::grid::{gaussian_smooth, resample_bicubic};

/// All solver knobs, defaulted to the reference parameterization.
///
/// Note on scale: the defaults suit byte-range intensity conventions; on
/// unit-normalized data the data term is ~255× weaker relative to α, so
/// quantitative runs on [0,1] inputs typically want α well below 1 and a
/// larger τ. Every acceptance scenario states its configuration explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Regularization weight on the smoothness term.
    pub alpha: f64,
    /// Temporal-gradient weight inside ∇₃ = (∂x, ∂y, λ∂t).
    pub lambda: f64,
    /// Fixed-point pseudo-time step.
    pub tau: f64,
    /// Contrast-weight denominator floor.
    pub xi: f64,
    /// Robust-penalty smoothing constant ε.
    pub epsilon: f64,
    /// Relative-change stopping tolerance (both components).
    pub tol: f64,
    /// Pyramid depth.
    pub levels: usize,
    /// Per-level downsampling factor, in (0, 1).
    pub scale: f64,
    /// Safety cap on sweeps per level.
    pub max_iterations: usize,
    /// Median-filter radius applied per level after convergence (2 ⇒ 5×5);
    /// 0 disables.
    pub median_radius: usize,
    /// Gaussian presmoothing σ per level; 0 disables.
    pub presmooth_sigma: f64,
    /// Frames processed jointly; `None` = the whole sequence, `Some(2)` =
    /// the two-frame baseline.
    pub temporal_window: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 40.0,
            lambda: 1.0,
            tau: 1e-3,
            xi: 0.01,
            epsilon: 1e-6,
            tol: 0.003,
            levels: 4,
            scale: 0.5,
            max_iterations: 500,
            median_radius: 2,
            presmooth_sigma: 1.0,
            temporal_window: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig { what });
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.xi > 0.0) {
            return bad(format!("xi must be > 0, got {}", self.xi));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if !(self.scale > 0.0 && self.scale < 1.0) {
            return bad(format!("scale must be in (0,1), got {}", self.scale));
        }
        if !(self.presmooth_sigma >= 0.0) {
            return bad(format!(
                "presmooth_sigma must be >= 0, got {}",
                self.presmooth_sigma
            ));
        }
        if let Some(w) = self.temporal_window {
            if w < 2 {
                return bad(format!("temporal_window must be >= 2, got {w}"));
            }
        }
        Ok(())
    }

    /// Set one field by its name — the shared path for config files and
    /// CLI flag overrides. `temporal_window` accepts an integer or `all`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::InvalidConfig {
                what: format!("{key}: cannot parse {v:?} as a number"),
            })
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::InvalidConfig {
                what: format!("{key}: cannot parse {v:?} as an integer"),
            })
        };
        match key {
            "alpha" => self.alpha = parse_f64(value)?,
            "lambda" => self.lambda = parse_f64(value)?,
            "tau" => self.tau = parse_f64(value)?,
            "xi" => self.xi = parse_f64(value)?,
            "epsilon" => self.epsilon = parse_f64(value)?,
            "tol" => self.tol = parse_f64(value)?,
            "levels" => self.levels = parse_usize(value)?,
            "scale" => self.scale = parse_f64(value)?,
            "max_iterations" => self.max_iterations = parse_usize(value)?,
            "median_radius" => self.median_radius = parse_usize(value)?,
            "presmooth_sigma" => self.presmooth_sigma = parse_f64(value)?,
            "temporal_window" => {
                self.temporal_window = if value == "all" {
                    None
                } else {
                    Some(parse_usize(value)?)
                }
            }
            other => {
                return Err(Error::InvalidConfig {
                    what: format!("unknown solver option {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Every field as (name, rendered value), for manifests and logs.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha", self.alpha.to_string()),
            ("lambda", self.lambda.to_string()),
            ("tau", self.tau.to_string()),
            ("xi", self.xi.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("tol", self.tol.to_string()),
            ("levels", self.levels.to_string()),
            ("scale", self.scale.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("median_radius", self.median_radius.to_string()),
            ("presmooth_sigma", self.presmooth_sigma.to_string()),
            (
                "temporal_window",
                self.temporal_window
                    .map_or_else(|| "all".to_string(), |w| w.to_string()),
            ),
        ]
    }
}

/// Convergence summary of one pyramid level of one temporal chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub chunk: usize,
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub rel_change_u: f64,
    pub rel_change_v: f64,
    pub converged: bool,
}

/// Flow for the whole sequence plus per-level convergence reports.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub flow: FlowField,
    pub reports: Vec<LevelReport>,
}

/// Target dimensions per level, coarsest first:
/// round(scaleᵈᵉᵖᵗʰ⁻¹⁻ˡᵉᵛᵉˡ × original), floored at 1.
fn level_dims(w: usize, h: usize, levels: usize, scale: f64) -> Vec<(usize, usize)> {
    (0..levels)
        .map(|idx| {
            let f = scale.powi((levels - 1 - idx) as i32);
            (
                ((w as f64 * f).round() as usize).max(1),
                ((h as f64 * f).round() as usize).max(1),
            )
        })
        .collect()
}

fn resample_sequence(seq: &ComplementedSequence, w: usize, h: usize) -> Result<ComplementedSequence> {
    let frames: Result<Vec<Frame>> = seq
        .frames()
        .par_iter()
        .map(|f| {
            Frame::new(
                f.channels()
                    .iter()
                    .map(|c| resample_bicubic(c, w, h))
                    .collect(),
            )
        })
        .collect();
    ComplementedSequence::new(frames?, seq.layout())
}

/// Coarse-to-fine pyramid, coarsest first. Dimensions follow the per-level
/// formula; each coarser level is resampled from the next finer one. The
/// saliency channel travels like any other channel.
pub fn build_pyramid(
    seq: &ComplementedSequence,
    levels: usize,
    scale: f64,
) -> Result<Vec<ComplementedSequence>> {
    if levels < 1 || !(scale > 0.0 && scale < 1.0) {
        return Err(Error::InvalidConfig {
            what: format!("pyramid needs levels >= 1 and scale in (0,1), got {levels}/{scale}"),
        });
    }
    let dims = level_dims(seq.width(), seq.height(), levels, scale);
    if dims[0].0 < 8 || dims[0].1 < 8 {
        return Err(Error::SequenceTooSmall {
            what: format!(
                "coarsest level would be {}x{}, need at least 8x8 ({}x{} over {levels} level(s))",
                dims[0].0,
                dims[0].1,
                seq.width(),
                seq.height()
            ),
        });
    }
    // Finest level is the input itself; cascade down through the formula's
    // dimensions.
    let mut finest_first = vec![seq.clone()];
    for idx in (0..levels - 1).rev() {
        let (w, h) = dims[idx];
        let prev = finest_first.last().expect("nonempty");
        finest_first.push(resample_sequence(prev, w, h)?);
    }
    finest_first.reverse();
    Ok(finest_first)
}

/// Gaussian presmoothing of every channel of every frame.
pub fn presmooth(seq: &ComplementedSequence, sigma: f64) -> ComplementedSequence {
    assert!(sigma > 0.0, "presmooth requires sigma > 0");
    let frames: Vec<Frame> = seq
        .frames()
        .par_iter()
        .map(|f| {
            Frame::new(
                f.channels()
                    .iter()
                    .map(|c| gaussian_smooth(c, sigma))
                    .collect(),
            )
            .expect("smoothing preserves dimensions and finiteness")
        })
        .collect();
    ComplementedSequence::new(frames, seq.layout()).expect("dimensions unchanged")
}

/// Upsample a flow-component volume to new spatial dimensions and scale its
/// values by the inter-level size ratio (a coarse 1-pixel displacement is
/// ratio pixels at the finer level).
fn prolong_volume(vol: &Volume, new_w: usize, new_h: usize, value_scale: f64) -> Volume {
    let planes: Vec<_> = (0..vol.t())
        .map(|k| resample_bicubic(&vol.plane(k), new_w, new_h).map(|v| v * value_scale))
        .collect();
    Volume::from_planes(&planes)
}

/// Overlapping temporal chunks: consecutive windows share one frame so the
/// transition list stays gap-free. Returns (start_frame, frame_count).
fn chunk_ranges(frames: usize, window: usize) -> Vec<(usize, usize)> {
    let w = window.max(2).min(frames);
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < frames {
        let len = w.min(frames - start);
        out.push((start, len));
        start += len - 1;
    }
    out
}

fn solve_chunk(
    chunk: &ComplementedSequence,
    cfg: &SolverConfig,
    chunk_idx: usize,
) -> Result<(Vec<FlowFrame>, Vec<LevelReport>)> {
    let pyramid = build_pyramid(chunk, cfg.levels, cfg.scale)?;
    let transitions = chunk.len() - 1;
    let mut reports = Vec::with_capacity(cfg.levels);
    let mut prev: Option<(Volume, Volume)> = None;

    for (level_idx, level_seq) in pyramid.iter().enumerate() {
        let smoothed;
        let level_seq = if cfg.presmooth_sigma > 0.0 {
            smoothed = presmooth(level_seq, cfg.presmooth_sigma);
            &smoothed
        } else {
            level_seq
        };
        let terms = DataTerms::build(level_seq, cfg.xi);
        let (w, h) = (level_seq.width(), level_seq.height());
        let (u0, v0) = match prev {
            None => (
                Volume::zeros(transitions, h, w),
                Volume::zeros(transitions, h, w),
            ),
            Some((pu, pv)) => {
                let uscale = w as f64 / pu.w() as f64;
                let vscale = h as f64 / pu.h() as f64;
                (
                    prolong_volume(&pu, w, h, uscale),
                    prolong_volume(&pv, w, h, vscale),
                )
            }
        };
        let (u, v, mut report) = solve_level(&terms, u0, v0, cfg, level_idx)?;
        report.chunk = chunk_idx;
        reports.push(report);
        prev = Some((u, v));
    }

    let (u, v) = prev.expect("at least one level");
    let frames: Result<Vec<FlowFrame>> = (0..transitions)
        .map(|k| FlowFrame::new(u.plane(k), v.plane(k)))
        .collect();
    Ok((frames?, reports))
}

/// Estimate flow for every transition of the sequence.
pub fn solve_sequence(seq: &ComplementedSequence, cfg: &SolverConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    let window = cfg.temporal_window.unwrap_or(seq.len());
    let mut flow_frames = Vec::with_capacity(seq.len() - 1);
    let mut reports = Vec::new();
    for (chunk_idx, (start, len)) in chunk_ranges(seq.len(), window).into_iter().enumerate() {
        let chunk = ComplementedSequence::new(
            seq.frames()[start..start + len].to_vec(),
            seq.layout(),
        )?;
        let (frames, mut chunk_reports) = solve_chunk(&chunk, cfg, chunk_idx)?;
        flow_frames.extend(frames);
        reports.append(&mut chunk_reports);
    }
    Ok(SolveOutput {
        flow: FlowField::new(flow_frames)?,
        reports,
    })
}

/// The two-frame comparison model: identical machinery over windows of two
/// frames. Single-transition volumes have no temporal neighbors, so the
/// λ·∂t smoothness terms vanish and only the spatial regularizer is left.
pub fn two_frame_baseline(seq: &ComplementedSequence, cfg: &SolverConfig) -> Result<SolveOutput> {
    let mut cfg = cfg.clone();
    cfg.temporal_window = Some(2);
    solve_sequence(seq, &cfg)
}
