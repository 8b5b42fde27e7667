//! Space-time volumes, the robust regularizer, contrast weights, and the
//! per-transition data terms the fixed-point sweep consumes.

use crate::error::{Error, Result};
use crate::frame::ComplementedSequence;
use crate::grid::{dx_central, dy_central, Plane};

/// A scalar field over (time, y, x), row-major with time outermost. Flow
/// components live in volumes; one time sample per frame transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(t: usize, h: usize, w: usize) -> Volume {
        assert!(t > 0 && h > 0 && w > 0, "volume dimensions must be positive");
        Volume {
            t,
            h,
            w,
            data: vec![0.0; t * h * w],
        }
    }

    pub fn from_fn(
        t: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Volume {
        let mut v = Volume::zeros(t, h, w);
        for k in 0..t {
            for y in 0..h {
                for x in 0..w {
                    v.data[(k * h + y) * w + x] = f(k, y, x);
                }
            }
        }
        v
    }

    pub fn from_vec(t: usize, h: usize, w: usize, data: Vec<f64>) -> Volume {
        assert!(t > 0 && h > 0 && w > 0, "volume dimensions must be positive");
        assert_eq!(data.len(), t * h * w, "buffer length mismatch");
        Volume { t, h, w, data }
    }

    pub fn from_planes(planes: &[Plane]) -> Volume {
        assert!(!planes.is_empty());
        let (w, h) = (planes[0].width(), planes[0].height());
        let mut v = Volume::zeros(planes.len(), h, w);
        for (k, p) in planes.iter().enumerate() {
            assert_eq!((p.width(), p.height()), (w, h));
            v.data[k * h * w..(k + 1) * h * w].copy_from_slice(p.data());
        }
        v
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn idx(&self, k: usize, y: usize, x: usize) -> usize {
        debug_assert!(k < self.t && y < self.h && x < self.w);
        (k * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, k: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(k, y, x)]
    }

    /// Replicate (clamp) boundary access in all three axes.
    #[inline]
    pub fn at_clamped(&self, k: isize, y: isize, x: isize) -> f64 {
        let k = k.clamp(0, self.t as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[(k * self.h + y) * self.w + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copy of one time slice as a plane.
    pub fn plane(&self, k: usize) -> Plane {
        Plane::from_vec(
            self.w,
            self.h,
            self.data[k * self.h * self.w..(k + 1) * self.h * self.w].to_vec(),
        )
    }

    pub fn set_plane(&mut self, k: usize, plane: &Plane) {
        assert_eq!((plane.width(), plane.height()), (self.w, self.h));
        self.data[k * self.h * self.w..(k + 1) * self.h * self.w].copy_from_slice(plane.data());
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn diff_l2(&self, other: &Volume) -> f64 {
        assert_eq!((self.t, self.h, self.w), (other.t, other.h, other.w));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The differentiable total-variation-like penalty Ψ(r²) = √(r² + ε²) and
/// its derivative Ψ′(s) = 1/(2√(s + ε²)), shared by the regularizer's
/// energy and the lagged diffusion weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustPenalty {
    pub epsilon: f64,
}

impl RobustPenalty {
    pub fn new(epsilon: f64) -> RobustPenalty {
        assert!(epsilon > 0.0);
        RobustPenalty { epsilon }
    }

    #[inline]
    pub fn value(&self, r2: f64) -> f64 {
        (r2 + self.epsilon * self.epsilon).sqrt()
    }

    #[inline]
    pub fn slope(&self, s: f64) -> f64 {
        0.5 / (s + self.epsilon * self.epsilon).sqrt()
    }
}

/// Per-frame, per-pixel, per-channel contrast weights.
///
/// Complemented layouts: image channels get saliency/√(|∇f_i|² + ξ²) and
/// the saliency channel gets weight 1. Non-complemented layouts replace the
/// saliency factor by 1. The ξ² floor keeps every denominator positive.
#[derive(Debug, Clone)]
pub struct WeightField {
    frames: usize,
    height: usize,
    width: usize,
    sigma: usize,
    data: Vec<f64>,
}

impl WeightField {
    #[inline]
    pub fn at(&self, k: usize, y: usize, x: usize, c: usize) -> f64 {
        debug_assert!(k < self.frames && y < self.height && x < self.width && c < self.sigma);
        self.data[((k * self.height + y) * self.width + x) * self.sigma + c]
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn compute_weights(seq: &ComplementedSequence, xi: f64) -> WeightField {
    assert!(xi > 0.0);
    let (w, h, t) = (seq.width(), seq.height(), seq.len());
    let sigma = seq.layout().channel_count();
    let has_sal = seq.layout().has_saliency();
    let image_channels = seq.layout().image_channel_count();
    let mut data = vec![0.0; t * h * w * sigma];

    for (k, frame) in seq.frames().iter().enumerate() {
        let grads: Vec<(Plane, Plane)> = (0..image_channels)
            .map(|c| (dx_central(frame.channel(c)), dy_central(frame.channel(c))))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let base = ((k * h + y) * w + x) * sigma;
                // Coarse pyramid levels can ring the saliency channel
                // slightly negative; a weight must not flip sign.
                let sal = if has_sal {
                    frame.channel(sigma - 1).at(x, y).max(0.0)
                } else {
                    1.0
                };
                for (c, (gx, gy)) in grads.iter().enumerate() {
                    let g2 = gx.at(x, y) * gx.at(x, y) + gy.at(x, y) * gy.at(x, y);
                    data[base + c] = sal / (g2 + xi * xi).sqrt();
                }
                if has_sal {
                    data[base + sigma - 1] = 1.0;
                }
            }
        }
    }
    WeightField {
        frames: t,
        height: h,
        width: w,
        sigma,
        data,
    }
}

/// Everything the sweep needs at one pyramid level of one frame chunk:
/// per-transition spatial derivatives, temporal derivatives, and weights,
/// laid out `((k·h + y)·w + x)·σ + c`.
#[derive(Debug, Clone)]
pub struct DataTerms {
    transitions: usize,
    height: usize,
    width: usize,
    sigma: usize,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub ft: Vec<f64>,
    pub weight: Vec<f64>,
}

impl DataTerms {
    /// Build from a (presmoothed) sequence at one pyramid level.
    ///
    /// Transition k takes frame k's spatial derivatives and weights; the
    /// temporal derivative is forward at k=0 and central elsewhere (frame
    /// k+1 always exists because transitions stop at T−2).
    pub fn build(seq: &ComplementedSequence, xi: f64) -> DataTerms {
        let (w, h, t) = (seq.width(), seq.height(), seq.len());
        let sigma = seq.layout().channel_count();
        let transitions = t - 1;
        let weights = compute_weights(seq, xi);

        let n = transitions * h * w * sigma;
        let mut fx = vec![0.0; n];
        let mut fy = vec![0.0; n];
        let mut ft = vec![0.0; n];
        let mut weight = vec![0.0; n];

        for k in 0..transitions {
            for c in 0..sigma {
                let gx = dx_central(seq.frame(k).channel(c));
                let gy = dy_central(seq.frame(k).channel(c));
                for y in 0..h {
                    for x in 0..w {
                        let i = ((k * h + y) * w + x) * sigma + c;
                        fx[i] = gx.at(x, y);
                        fy[i] = gy.at(x, y);
                        ft[i] = if k == 0 {
                            seq.frame(1).channel(c).at(x, y) - seq.frame(0).channel(c).at(x, y)
                        } else {
                            0.5 * (seq.frame(k + 1).channel(c).at(x, y)
                                - seq.frame(k - 1).channel(c).at(x, y))
                        };
                        weight[i] = weights.at(k, y, x, c);
                    }
                }
            }
        }
        DataTerms {
            transitions,
            height: h,
            width: w,
            sigma,
            fx,
            fy,
            ft,
            weight,
        }
    }

    /// Assemble terms directly from raw per-channel buffers — the escape
    /// hatch tests use to pose closed-form situations.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        transitions: usize,
        height: usize,
        width: usize,
        sigma: usize,
        fx: Vec<f64>,
        fy: Vec<f64>,
        ft: Vec<f64>,
        weight: Vec<f64>,
    ) -> Result<DataTerms> {
        let n = transitions * height * width * sigma;
        if transitions == 0 || height == 0 || width == 0 || !(1..=4).contains(&sigma) {
            return Err(Error::InvalidConfig {
                what: "data terms need positive dimensions and 1..=4 channels".into(),
            });
        }
        if fx.len() != n || fy.len() != n || ft.len() != n || weight.len() != n {
            return Err(Error::InvalidConfig {
                what: format!("data-term buffers must hold {n} samples"),
            });
        }
        Ok(DataTerms {
            transitions,
            height,
            width,
            sigma,
            fx,
            fy,
            ft,
            weight,
        })
    }

    #[inline]
    pub fn transitions(&self) -> usize {
        self.transitions
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn sigma(&self) -> usize {
        self.sigma
    }

    #[inline]
    pub fn base(&self, k: usize, y: usize, x: usize) -> usize {
        ((k * self.height + y) * self.width + x) * self.sigma
    }
}
