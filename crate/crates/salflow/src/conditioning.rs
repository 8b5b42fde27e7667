//! Per-pixel conditioning of the multi-channel data term.
//!
//! For a frame with σ channels, each pixel carries the σ×2 matrix of
//! spatial channel gradients. How invertible that matrix is — measured by
//! its condition number — decides whether the local data term can pin down
//! both flow components. One channel can never do it (rank ≤ 1 ⇒ condition
//! number +∞); extra channels, saliency included, can only help.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::grid::{dx_central, dy_central, Plane};

/// Per-pixel σ×2 spatial-gradient matrices, stored as one (∂/∂x, ∂/∂y)
/// plane pair per channel.
#[derive(Debug, Clone)]
pub struct JacobianField {
    dx: Vec<Plane>,
    dy: Vec<Plane>,
}

impl JacobianField {
    pub fn new(dx: Vec<Plane>, dy: Vec<Plane>) -> Result<JacobianField> {
        if dx.is_empty() || dx.len() > 4 || dx.len() != dy.len() {
            return Err(Error::ChannelMismatch {
                context: "jacobian rows".into(),
                expected: dx.len().clamp(1, 4),
                got: dy.len(),
            });
        }
        let (w, h) = (dx[0].width(), dx[0].height());
        for p in dx.iter().chain(&dy) {
            if (p.width(), p.height()) != (w, h) {
                return Err(Error::DimensionMismatch {
                    context: "jacobian planes".into(),
                    expected_w: w,
                    expected_h: h,
                    got_w: p.width(),
                    got_h: p.height(),
                });
            }
        }
        Ok(JacobianField { dx, dy })
    }

    pub fn channel_count(&self) -> usize {
        self.dx.len()
    }

    pub fn width(&self) -> usize {
        self.dx[0].width()
    }

    pub fn height(&self) -> usize {
        self.dx[0].height()
    }

    pub fn dx(&self, channel: usize) -> &Plane {
        &self.dx[channel]
    }

    pub fn dy(&self, channel: usize) -> &Plane {
        &self.dy[channel]
    }

    /// Entries of the 2×2 Gram matrix JᵀJ at a pixel: (Σdx², Σdx·dy, Σdy²).
    fn gram(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let mut g11 = 0.0;
        let mut g12 = 0.0;
        let mut g22 = 0.0;
        for c in 0..self.dx.len() {
            let a = self.dx[c].at(x, y);
            let b = self.dy[c].at(x, y);
            g11 += a * a;
            g12 += a * b;
            g22 += b * b;
        }
        (g11, g12, g22)
    }
}

/// Spatial Jacobian of every channel: central differences in the interior,
/// one-sided at borders, unit pixel spacing.
pub fn jacobian(frame: &Frame) -> JacobianField {
    let dx = frame.channels().iter().map(dx_central).collect();
    let dy = frame.channels().iter().map(dy_central).collect();
    JacobianField::new(dx, dy).expect("channels share dimensions by Frame's invariant")
}

/// Singular values (largest, smallest) of a σ×2 matrix from its Gram
/// entries, using the closed-form 2×2 eigenvalues. The smaller one comes
/// from det/λ_max to dodge the cancellation in the direct m−d form.
fn singular_values(g11: f64, g12: f64, g22: f64) -> (f64, f64) {
    let mean = 0.5 * (g11 + g22);
    let half_diff = 0.5 * (g11 - g22);
    let d = (half_diff * half_diff + g12 * g12).sqrt();
    let lam_max = (mean + d).max(0.0);
    let det = (g11 * g22 - g12 * g12).max(0.0);
    let lam_min = if lam_max > 0.0 { det / lam_max } else { 0.0 };
    (lam_max.sqrt(), lam_min.sqrt())
}

/// Per-pixel condition number of the channel-gradient matrix; +∞ where the
/// matrix has (numerical) rank ≤ 1, and everywhere for single-channel
/// frames.
pub fn condition_map(j: &JacobianField) -> Plane {
    let (w, h) = (j.width(), j.height());
    if j.channel_count() == 1 {
        return Plane::constant(w, h, f64::INFINITY);
    }
    Plane::from_fn(w, h, |x, y| {
        let (g11, g12, g22) = j.gram(x, y);
        let (smax, smin) = singular_values(g11, g12, g22);
        if smin < 1e-12 {
            f64::INFINITY
        } else {
            smax / smin
        }
    })
}

/// Per-pixel smallest singular value — the quantity channel augmentation
/// can only increase.
pub fn smallest_singular_map(j: &JacobianField) -> Plane {
    Plane::from_fn(j.width(), j.height(), |x, y| {
        let (g11, g12, g22) = j.gram(x, y);
        singular_values(g11, g12, g22).1
    })
}

/// Percentage of pixels whose condition number is finite and below the
/// threshold.
pub fn fraction_below(cond: &Plane, threshold: f64) -> f64 {
    let n = cond
        .data()
        .iter()
        .filter(|v| v.is_finite() && **v < threshold)
        .count();
    100.0 * n as f64 / cond.len() as f64
}

/// Condition statistics of one frame at a given threshold.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub cond: Plane,
    pub threshold: f64,
    pub fraction_below: f64,
}

pub fn condition_report(frame: &Frame, threshold: f64) -> ConditionReport {
    let cond = condition_map(&jacobian(frame));
    let fraction = fraction_below(&cond, threshold);
    ConditionReport {
        cond,
        threshold,
        fraction_below: fraction,
    }
}
