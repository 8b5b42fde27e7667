//! Static saliency providers and saliency-channel complementation.
//!
//! The builtin provider is a spectral-residual detector: the frame's
//! luminance is shrunk to a small working width, the log amplitude spectrum
//! is compared against its local (3×3 box) average, and the inverse
//! transform of the whitened spectrum — squared magnitude, Gaussian
//! smoothed, resampled back up — becomes the map. The detector looks only
//! at contrast, so adding a global intensity constant to the frame leaves
//! the map unchanged (up to floating-point noise).
//!
//! An external provider returns precomputed per-frame map files verbatim,
//! after [0,1] min-max normalization.

use std::path::PathBuf;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frame::{ComplementedSequence, Frame, SaliencyMap};
use crate::grid::{gaussian_smooth, resample_bicubic, Plane};
use crate::io::load_saliency_map;

/// Parameters of the builtin spectral-residual detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResidualParams {
    /// Width of the working resolution the spectrum is computed at; the
    /// frame keeps its aspect ratio. Frames narrower than this are
    /// processed at native width.
    pub working_width: usize,
    /// Gaussian postsmoothing σ at the working resolution.
    pub smooth_sigma: f64,
}

impl Default for SpectralResidualParams {
    fn default() -> Self {
        SpectralResidualParams {
            working_width: 64,
            smooth_sigma: 3.0,
        }
    }
}

/// Where per-frame static saliency comes from.
#[derive(Debug, Clone)]
pub enum SaliencyProvider {
    /// Compute maps with the builtin spectral-residual detector.
    Builtin(SpectralResidualParams),
    /// Read one precomputed map file per frame, in frame order.
    ExternalFiles { paths: Vec<PathBuf> },
}

impl SaliencyProvider {
    pub fn builtin_default() -> SaliencyProvider {
        SaliencyProvider::Builtin(SpectralResidualParams::default())
    }
}

/// Mean of the image channels (1 or 3) as the luminance plane.
fn luminance(frame: &Frame) -> Result<Plane> {
    match frame.channel_count() {
        1 => Ok(frame.channel(0).clone()),
        3 => Ok(Plane::from_fn(frame.width(), frame.height(), |x, y| {
            (frame.channel(0).at(x, y) + frame.channel(1).at(x, y) + frame.channel(2).at(x, y))
                / 3.0
        })),
        n => Err(Error::ChannelMismatch {
            context: "static saliency input (gray or color frame)".into(),
            expected: 1,
            got: n,
        }),
    }
}

/// In-place 2-D FFT over a row-major complex buffer.
fn fft_2d(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
}

/// 3×3 box average with replicate boundaries.
fn box3(src: &Plane) -> Plane {
    Plane::from_fn(src.width(), src.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                acc += src.at_clamped(x as isize + dx, y as isize + dy);
            }
        }
        acc / 9.0
    })
}

/// Spectral-residual map for one frame, in unit-range state.
pub fn spectral_residual(frame: &Frame, params: &SpectralResidualParams) -> Result<SaliencyMap> {
    let (w, h) = (frame.width(), frame.height());
    let luma = luminance(frame)?;

    let ww = params.working_width.clamp(1, w);
    let wh = ((h as f64 * ww as f64 / w as f64).round() as usize).clamp(1, h);
    let small = resample_bicubic(&luma, ww, wh);

    // Remove the mean (and later the DC bin) so a global intensity offset
    // cannot reach the spectrum.
    let mean = small.mean();
    let mut spectrum: Vec<Complex<f64>> = small
        .data()
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    fft_2d(&mut spectrum, ww, wh, false);
    spectrum[0] = Complex::new(0.0, 0.0);

    // Whiten: damp each bin by the local average of the log amplitude, so
    // only the residual structure of the spectrum survives.
    let log_amp = Plane::from_vec(
        ww,
        wh,
        spectrum.iter().map(|c| (c.norm() + 1e-12).ln()).collect(),
    );
    let local = box3(&log_amp);
    for (c, &m) in spectrum.iter_mut().zip(local.data()) {
        *c *= (-m).exp();
    }

    fft_2d(&mut spectrum, ww, wh, true);
    let scale = 1.0 / (ww * wh) as f64;
    let energy = Plane::from_vec(
        ww,
        wh,
        spectrum.iter().map(|c| (c * scale).norm_sqr()).collect(),
    );

    let smoothed = if params.smooth_sigma > 0.0 {
        gaussian_smooth(&energy, params.smooth_sigma)
    } else {
        energy
    };
    let full = resample_bicubic(&smoothed, w, h);

    // A frame with no structure anywhere yields a numerically flat map;
    // report it as uniformly non-salient instead of stretching noise.
    Ok(SaliencyMap::raw(full).into_unit_range())
}

/// Compute (or load) the static saliency map for the frame at `index`.
pub fn compute_static_saliency(
    frame: &Frame,
    provider: &SaliencyProvider,
    index: usize,
) -> Result<SaliencyMap> {
    match provider {
        SaliencyProvider::Builtin(params) => spectral_residual(frame, params),
        SaliencyProvider::ExternalFiles { paths } => {
            let path = paths.get(index).ok_or_else(|| Error::CountMismatch {
                context: "external saliency files".into(),
                expected: index + 1,
                got: paths.len(),
            })?;
            let map = load_saliency_map(path)?;
            if (map.plane().width(), map.plane().height()) != (frame.width(), frame.height()) {
                return Err(Error::DimensionMismatch {
                    context: format!("external saliency {}", path.display()),
                    expected_w: frame.width(),
                    expected_h: frame.height(),
                    got_w: map.plane().width(),
                    got_h: map.plane().height(),
                });
            }
            Ok(map.into_unit_range())
        }
    }
}

/// One saliency map per frame of the sequence. Builtin maps are computed
/// in parallel; output order always follows frame order.
pub fn sequence_maps(
    seq: &ComplementedSequence,
    provider: &SaliencyProvider,
) -> Result<Vec<SaliencyMap>> {
    if let SaliencyProvider::ExternalFiles { paths } = provider {
        if paths.len() != seq.len() {
            return Err(Error::CountMismatch {
                context: "external saliency files vs frames".into(),
                expected: seq.len(),
                got: paths.len(),
            });
        }
    }
    seq.frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| compute_static_saliency(f, provider, i))
        .collect()
}

/// Append the saliency channel: gray → gray+saliency, color →
/// color+saliency. Existing channels are moved, not touched. Maps are
/// min-max normalized first (a no-op when already unit-range).
pub fn complement(
    seq: ComplementedSequence,
    maps: Vec<SaliencyMap>,
) -> Result<ComplementedSequence> {
    let layout = seq.layout().with_saliency()?;
    if maps.len() != seq.len() {
        return Err(Error::CountMismatch {
            context: "saliency maps vs frames".into(),
            expected: seq.len(),
            got: maps.len(),
        });
    }
    let (w, h) = (seq.width(), seq.height());
    let mut frames = Vec::with_capacity(seq.len());
    for (t, (frame, map)) in seq.into_frames().into_iter().zip(maps).enumerate() {
        let map = map.into_unit_range();
        let plane = map.into_plane();
        if (plane.width(), plane.height()) != (w, h) {
            return Err(Error::DimensionMismatch {
                context: format!("saliency map {t}"),
                expected_w: w,
                expected_h: h,
                got_w: plane.width(),
                got_h: plane.height(),
            });
        }
        let mut channels = frame.into_channels();
        channels.push(plane);
        frames.push(Frame::new(channels)?);
    }
    ComplementedSequence::new(frames, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Layout;

    fn gray_frame(plane: Plane) -> Frame {
        Frame::new(vec![plane]).unwrap()
    }

    #[test]
    fn constant_frame_yields_constant_map() {
        let f = gray_frame(Plane::constant(48, 32, 0.42));
        let m = spectral_residual(&f, &SpectralResidualParams::default()).unwrap();
        let (lo, hi) = m.plane().min_max();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn bright_blob_on_dark_background_wins_the_argmax() {
        let mut p = Plane::constant(64, 48, 0.05);
        for y in 20..23 {
            for x in 30..33 {
                p.set(x, y, 0.95);
            }
        }
        let f = gray_frame(p);
        let m = spectral_residual(&f, &SpectralResidualParams::default()).unwrap();
        let plane = m.plane();
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for y in 0..plane.height() {
            for x in 0..plane.width() {
                if plane.at(x, y) > best.2 {
                    best = (x, y, plane.at(x, y));
                }
            }
        }
        // Blob bounding box dilated by the smoothing footprint mapped back
        // to full resolution (σ=3 at width 64 ⇒ radius 9 here).
        let r = 9 + 2;
        assert!(
            (30usize.saturating_sub(r)..33 + r).contains(&best.0)
                && (20usize.saturating_sub(r)..23 + r).contains(&best.1),
            "argmax at {best:?}"
        );
    }

    #[test]
    fn global_intensity_offset_leaves_the_map_unchanged() {
        let base = Plane::from_fn(64, 40, |x, y| {
            0.3 + 0.25 * ((x as f64) * 0.31).sin() * ((y as f64) * 0.17).cos()
        });
        let shifted = base.map(|v| v + 0.2);
        let params = SpectralResidualParams::default();
        let a = spectral_residual(&gray_frame(base), &params).unwrap();
        let b = spectral_residual(&gray_frame(shifted), &params).unwrap();
        for (x, y) in a.plane().data().iter().zip(b.plane().data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn builtin_is_deterministic() {
        let p = Plane::from_fn(50, 30, |x, y| ((x * 7 + y * 13) % 29) as f64 / 29.0);
        let f = gray_frame(p);
        let params = SpectralResidualParams::default();
        let a = spectral_residual(&f, &params).unwrap();
        let b = spectral_residual(&f, &params).unwrap();
        for (x, y) in a.plane().data().iter().zip(b.plane().data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn complement_appends_without_touching_channels() {
        let mk = |v: f64| gray_frame(Plane::constant(6, 4, v));
        let seq =
            ComplementedSequence::new(vec![mk(0.2), mk(0.4), mk(0.6)], Layout::Gray).unwrap();
        let maps: Vec<SaliencyMap> = (0..3)
            .map(|i| {
                SaliencyMap::raw(Plane::from_fn(6, 4, |x, _| (x + i) as f64)).into_unit_range()
            })
            .collect();
        let original = seq.clone();
        let out = complement(seq, maps).unwrap();
        assert_eq!(out.layout(), Layout::GraySaliency);
        for (a, b) in original.frames().iter().zip(out.frames()) {
            assert_eq!(a.channel(0), b.channel(0)); // bitwise
        }
    }

    #[test]
    fn complement_rejects_count_and_dim_mismatches() {
        let mk = |v: f64| gray_frame(Plane::constant(6, 4, v));
        let seq =
            ComplementedSequence::new(vec![mk(0.2), mk(0.4), mk(0.6)], Layout::Gray).unwrap();
        let two_maps = vec![
            SaliencyMap::raw(Plane::new(6, 4)),
            SaliencyMap::raw(Plane::new(6, 4)),
        ];
        assert!(complement(seq.clone(), two_maps).is_err());
        let wrong_dims = vec![
            SaliencyMap::raw(Plane::new(5, 4)),
            SaliencyMap::raw(Plane::new(5, 4)),
            SaliencyMap::raw(Plane::new(5, 4)),
        ];
        assert!(complement(seq, wrong_dims).is_err());
    }

    #[test]
    fn external_provider_normalizes_verbatim_maps() {
        use std::fs;
        let dir = std::env::temp_dir().join(format!("salflow-sal-ext-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        // Values in [0, 0.5]: pass-through shape, scaled to [0,1].
        let plane = Plane::from_fn(6, 4, |x, y| (x + y) as f64 / 16.0);
        let path = dir.join("m0.sal");
        crate::io::save_saliency_plane(&plane, &path).unwrap();
        let provider = SaliencyProvider::ExternalFiles { paths: vec![path] };
        let f = gray_frame(Plane::constant(6, 4, 0.5));
        let m = compute_static_saliency(&f, &provider, 0).unwrap();
        let (lo, hi) = plane.min_max();
        for (got, &raw) in m.plane().data().iter().zip(plane.data()) {
            assert!((got - (raw - lo) / (hi - lo)).abs() < 1e-7);
        }
    }
}
