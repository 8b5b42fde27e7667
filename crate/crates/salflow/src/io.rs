//! Sequence and saliency-map file I/O.
//!
//! Frames travel as lossless rasters (PNG or binary PNM), one file per frame
//! with a zero-padded index in the filename, e.g. `frames/f%04d.png`.
//! Values are normalized by the container's maximum code value (255 or
//! 65535) into [0,1] on load and quantized to 16 bits on save.
//!
//! Saliency maps use a small single-band float format: 4-byte magic `SMAP`,
//! little-endian u32 width and height, then width×height little-endian f32
//! samples in row-major order. A frame's saliency sidecar is the frame file
//! with its extension swapped to `.sal`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};
use crate::frame::{ComplementedSequence, Frame, Layout, SaliencyMap};
use crate::grid::Plane;

const SMAP_MAGIC: &[u8; 4] = b"SMAP";

/// A filename pattern with a printf-style integer placeholder (`%d` or
/// `%0Nd`). Everything before/after the placeholder is literal.
#[derive(Debug, Clone)]
pub struct FramePattern {
    prefix: String,
    pad: usize,
    suffix: String,
}

impl FramePattern {
    /// Parse a pattern. Returns `None` when there is no placeholder, in
    /// which case the string names a single concrete file.
    pub fn parse(pattern: &str) -> Option<FramePattern> {
        let at = pattern.find('%')?;
        let rest = &pattern[at + 1..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let after = &rest[digits.len()..];
        if !after.starts_with('d') {
            return None;
        }
        let pad = if digits.is_empty() {
            1
        } else {
            digits.parse().ok()?
        };
        Some(FramePattern {
            prefix: pattern[..at].to_string(),
            pad,
            suffix: after[1..].to_string(),
        })
    }

    pub fn format(&self, index: usize) -> PathBuf {
        PathBuf::from(format!(
            "{}{:0pad$}{}",
            self.prefix,
            index,
            self.suffix,
            pad = self.pad
        ))
    }

    /// Try to recover the index from a filename: it must match prefix and
    /// suffix and re-format to exactly the same name (so padding agrees).
    fn match_index(&self, name: &str) -> Option<usize> {
        let mid = name.strip_prefix(&self.prefix)?.strip_suffix(&self.suffix)?;
        if mid.is_empty() || !mid.bytes().all(|b| b.is_ascii_digit()) || mid.len() > 12 {
            return None;
        }
        let index: usize = mid.parse().ok()?;
        (self.format(index).to_string_lossy() == name).then_some(index)
    }

    /// Enumerate existing files matching the pattern, sorted by index.
    /// Indices must be contiguous; the first gap is reported as a missing
    /// frame.
    pub fn expand(&self, pattern_text: &str) -> Result<Vec<(usize, PathBuf)>> {
        let probe = self.format(0);
        let dir = probe.parent().filter(|p| !p.as_os_str().is_empty());
        let dir_path = dir.unwrap_or(Path::new("."));
        let entries = fs::read_dir(dir_path).map_err(|source| Error::Io {
            path: dir_path.to_path_buf(),
            source,
        })?;
        let mut found: Vec<(usize, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| Error::Io {
                path: dir_path.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            if let Some(index) = self.match_index(&path.to_string_lossy()) {
                found.push((index, path));
            }
        }
        if found.is_empty() {
            return Err(Error::EmptySequence {
                pattern: pattern_text.to_string(),
            });
        }
        found.sort_unstable_by_key(|(i, _)| *i);
        for pair in found.windows(2) {
            if pair[1].0 != pair[0].0 + 1 {
                return Err(Error::MissingFrame {
                    pattern: pattern_text.to_string(),
                    index: pair[0].0 + 1,
                });
            }
        }
        Ok(found)
    }
}

/// The paths a pattern currently resolves to: either the expanded, gap-free
/// index list or the literal single file.
pub fn resolve_pattern(pattern: &str) -> Result<Vec<PathBuf>> {
    match FramePattern::parse(pattern) {
        Some(fp) => Ok(fp.expand(pattern)?.into_iter().map(|(_, p)| p).collect()),
        None => {
            let p = PathBuf::from(pattern);
            if p.is_file() {
                Ok(vec![p])
            } else {
                Err(Error::EmptySequence {
                    pattern: pattern.to_string(),
                })
            }
        }
    }
}

/// Sidecar path for a frame file: extension swapped to `.sal`.
pub fn sidecar_path(frame_path: &Path) -> PathBuf {
    frame_path.with_extension("sal")
}

fn decode_raster(path: &Path) -> Result<Vec<Plane>> {
    let reader = ImageReader::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let planes = |chans: usize, max: f64, data: Vec<f64>| -> Vec<Plane> {
        (0..chans)
            .map(|c| {
                Plane::from_fn(w, h, |x, y| data[(y * w + x) * chans + c] / max)
            })
            .collect()
    };
    Ok(match img {
        DynamicImage::ImageLuma8(b) => planes(1, 255.0, b.into_raw().iter().map(|&v| v as f64).collect()),
        DynamicImage::ImageLumaA8(b) => {
            let raw = b.into_raw();
            vec![Plane::from_fn(w, h, |x, y| raw[(y * w + x) * 2] as f64 / 255.0)]
        }
        DynamicImage::ImageRgb8(b) => planes(3, 255.0, b.into_raw().iter().map(|&v| v as f64).collect()),
        DynamicImage::ImageRgba8(b) => {
            let raw = b.into_raw();
            (0..3)
                .map(|c| Plane::from_fn(w, h, |x, y| raw[(y * w + x) * 4 + c] as f64 / 255.0))
                .collect()
        }
        DynamicImage::ImageLuma16(b) => planes(1, 65535.0, b.into_raw().iter().map(|&v| v as f64).collect()),
        DynamicImage::ImageLumaA16(b) => {
            let raw = b.into_raw();
            vec![Plane::from_fn(w, h, |x, y| raw[(y * w + x) * 2] as f64 / 65535.0)]
        }
        DynamicImage::ImageRgb16(b) => planes(3, 65535.0, b.into_raw().iter().map(|&v| v as f64).collect()),
        DynamicImage::ImageRgba16(b) => {
            let raw = b.into_raw();
            (0..3)
                .map(|c| Plane::from_fn(w, h, |x, y| raw[(y * w + x) * 4 + c] as f64 / 65535.0))
                .collect()
        }
        other => {
            let b = other.to_rgb16();
            let raw = b.into_raw();
            (0..3)
                .map(|c| Plane::from_fn(w, h, |x, y| raw[(y * w + x) * 3 + c] as f64 / 65535.0))
                .collect()
        }
    })
}

/// Adapt decoded raster channels to the requested image-channel count:
/// color sources average down to gray; a gray source cannot fabricate color.
fn adapt_channels(path: &Path, planes: Vec<Plane>, want: usize) -> Result<Vec<Plane>> {
    match (planes.len(), want) {
        (got, want) if got == want => Ok(planes),
        (3, 1) => {
            let avg = Plane::from_fn(planes[0].width(), planes[0].height(), |x, y| {
                (planes[0].at(x, y) + planes[1].at(x, y) + planes[2].at(x, y)) / 3.0
            });
            Ok(vec![avg])
        }
        (got, want) => Err(Error::ChannelMismatch {
            context: format!("{} (cannot adapt)", path.display()),
            expected: want,
            got,
        }),
    }
}

/// Load one frame, honoring the image channels of `layout` and pulling the
/// saliency channel from the `.sal` sidecar when the layout asks for one.
pub fn load_frame(path: &Path, layout: Layout) -> Result<Frame> {
    let mut channels = adapt_channels(path, decode_raster(path)?, layout.image_channel_count())?;
    if layout.has_saliency() {
        let sal = load_saliency_map(&sidecar_path(path))?;
        let plane = sal.into_plane();
        if (plane.width(), plane.height()) != (channels[0].width(), channels[0].height()) {
            return Err(Error::DimensionMismatch {
                context: format!("saliency sidecar for {}", path.display()),
                expected_w: channels[0].width(),
                expected_h: channels[0].height(),
                got_w: plane.width(),
                got_h: plane.height(),
            });
        }
        if plane.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig {
                what: format!(
                    "saliency sidecar for {} holds values outside [0,1]",
                    path.display()
                ),
            });
        }
        channels.push(plane);
    }
    Frame::new(channels)
}

/// Load every frame a pattern resolves to (at least one).
pub fn load_frames(pattern: &str, layout: Layout) -> Result<Vec<Frame>> {
    let paths = resolve_pattern(pattern)?;
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame = load_frame(path, layout)?;
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if (frame.width(), frame.height()) != (first.width(), first.height()) {
                return Err(Error::DimensionMismatch {
                    context: format!("{}", path.display()),
                    expected_w: first.width(),
                    expected_h: first.height(),
                    got_w: frame.width(),
                    got_h: frame.height(),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Load a sequence (two or more frames) from a pattern.
pub fn load_sequence(pattern: &str, layout: Layout) -> Result<ComplementedSequence> {
    ComplementedSequence::new(load_frames(pattern, layout)?, layout)
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Save one frame's image channels as a 16-bit raster (format chosen by
/// extension) and, when the layout carries saliency, the `.sal` sidecar.
pub fn save_frame(frame: &Frame, layout: Layout, path: &Path) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    match layout.image_channel_count() {
        1 => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_fn(w, h, |x, y| {
                    Luma([quantize16(frame.channel(0).at(x as usize, y as usize))])
                });
            buf.save(path).map_err(|source| Error::Encode {
                path: path.to_path_buf(),
                source,
            })?;
        }
        3 => {
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
                Rgb([
                    quantize16(frame.channel(0).at(x as usize, y as usize)),
                    quantize16(frame.channel(1).at(x as usize, y as usize)),
                    quantize16(frame.channel(2).at(x as usize, y as usize)),
                ])
            });
            buf.save(path).map_err(|source| Error::Encode {
                path: path.to_path_buf(),
                source,
            })?;
        }
        n => {
            return Err(Error::ChannelMismatch {
                context: format!("save_frame {}", path.display()),
                expected: 1,
                got: n,
            })
        }
    }
    if layout.has_saliency() {
        let sal = frame.channel(layout.channel_count() - 1);
        save_saliency_plane(sal, &sidecar_path(path))?;
    }
    Ok(())
}

/// Save a whole sequence under an indexed pattern, starting at index 0.
pub fn save_sequence(seq: &ComplementedSequence, pattern: &str) -> Result<()> {
    let fp = FramePattern::parse(pattern).ok_or_else(|| Error::InvalidConfig {
        what: format!("output pattern {pattern:?} needs a %d or %0Nd placeholder"),
    })?;
    for (t, frame) in seq.frames().iter().enumerate() {
        save_frame(frame, seq.layout(), &fp.format(t))?;
    }
    Ok(())
}

/// Save a saliency plane in the SMAP format (f32 payload).
pub fn save_saliency_plane(plane: &Plane, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + plane.len() * 4);
    bytes.extend_from_slice(SMAP_MAGIC);
    bytes.extend_from_slice(&(plane.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(plane.height() as u32).to_le_bytes());
    for &v in plane.data() {
        if !v.is_finite() {
            return Err(Error::InvalidConfig {
                what: format!("saliency map for {} holds non-finite values", path.display()),
            });
        }
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_saliency_map(map: &SaliencyMap, path: &Path) -> Result<()> {
    save_saliency_plane(map.plane(), path)
}

/// Load a SMAP file. The map is returned in raw state; callers decide
/// whether to renormalize.
pub fn load_saliency_map(path: &Path) -> Result<SaliencyMap> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 12 || &bytes[0..4] != SMAP_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "SMAP",
        });
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if w == 0 || h == 0 {
        return Err(Error::InvalidConfig {
            what: format!("{}: zero dimension in header", path.display()),
        });
    }
    let expected = 12 + w * h * 4;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let off = 12 + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(Error::InvalidConfig {
                what: format!("{}: non-finite saliency sample {i}", path.display()),
            });
        }
        data.push(v);
    }
    Ok(SaliencyMap::raw(Plane::from_vec(w, h, data)))
}

/// Save a plane as a 16-bit grayscale PNG after clamping to [0,1] — a
/// convenience for visualizing saliency output.
pub fn save_plane_png(plane: &Plane, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(plane.width() as u32, plane.height() as u32, |x, y| {
            Luma([quantize16(plane.at(x as usize, y as usize))])
        });
    buf.save(path).map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

/// Save a plane as an 8-bit grayscale PNG after clamping to [0,1] — the
/// compact preview format for saliency maps.
pub fn save_preview_png(plane: &Plane, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_fn(plane.width() as u32, plane.height() as u32, |x, y| {
            Luma([(plane.at(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
        });
    buf.save(path).map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    static DIR_SEQ: AtomicUsize = AtomicUsize::new(0);

    fn test_dir(tag: &str) -> PathBuf {
        let n = DIR_SEQ.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir().join(format!(
            "salflow-io-{}-{}-{}",
            std::process::id(),
            tag,
            n
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn pattern_parsing_and_formatting() {
        let fp = FramePattern::parse("frames/f%04d.png").unwrap();
        assert_eq!(fp.format(7), PathBuf::from("frames/f0007.png"));
        let fp = FramePattern::parse("f%d.png").unwrap();
        assert_eq!(fp.format(12), PathBuf::from("f12.png"));
        assert!(FramePattern::parse("plain.png").is_none());
        assert!(FramePattern::parse("odd%4x.png").is_none());
    }

    #[test]
    fn empty_pattern_is_an_error() {
        let dir = test_dir("empty");
        let pattern = dir.join("f%03d.png");
        let err = load_sequence(&pattern.to_string_lossy(), Layout::Gray).unwrap_err();
        assert!(matches!(err, Error::EmptySequence { .. }));
    }

    #[test]
    fn gap_in_indices_reports_missing_frame() {
        let dir = test_dir("gap");
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_pixel(4, 4, Luma([100]));
        img.save(dir.join("f000.png")).unwrap();
        img.save(dir.join("f002.png")).unwrap();
        let pattern = dir.join("f%03d.png");
        let err = load_sequence(&pattern.to_string_lossy(), Layout::Gray).unwrap_err();
        match err {
            Error::MissingFrame { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mid_gray_8bit_frames_load_near_half() {
        let dir = test_dir("midgray");
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_pixel(8, 8, Luma([128]));
        img.save(dir.join("g00.png")).unwrap();
        img.save(dir.join("g01.png")).unwrap();
        let pattern = dir.join("g%02d.png");
        let seq = load_sequence(&pattern.to_string_lossy(), Layout::Gray).unwrap();
        assert_eq!(seq.len(), 2);
        for &v in seq.frame(0).channel(0).data() {
            assert!((v - 0.5).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn color_saliency_sequence_round_trips_bitwise() {
        // Image values on the 16-bit grid and saliency values exactly
        // representable in f32 survive the trip untouched.
        let dir = test_dir("roundtrip");
        let mk = |seed: usize| {
            let chans: Vec<Plane> = (0..3)
                .map(|c| {
                    Plane::from_fn(6, 5, |x, y| {
                        ((seed * 911 + c * 377 + y * 31 + x * 7) % 65536) as f64 / 65535.0
                    })
                })
                .collect();
            let mut chans = chans;
            chans.push(Plane::from_fn(6, 5, |x, y| {
                ((seed + x * 13 + y * 5) % 256) as f64 / 256.0
            }));
            Frame::new(chans).unwrap()
        };
        let seq = ComplementedSequence::new(
            vec![mk(0), mk(1), mk(2)],
            Layout::ColorSaliency,
        )
        .unwrap();
        let pattern = dir.join("c%02d.png");
        save_sequence(&seq, &pattern.to_string_lossy()).unwrap();
        let back = load_sequence(&pattern.to_string_lossy(), Layout::ColorSaliency).unwrap();
        assert_eq!(back.layout(), Layout::ColorSaliency);
        assert_eq!(back.len(), 3);
        for (a, b) in seq.frames().iter().zip(back.frames()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gray_layout_averages_color_sources() {
        let dir = test_dir("avg");
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_pixel(4, 3, Rgb([30, 60, 90]));
        let path = dir.join("c.png");
        img.save(&path).unwrap();
        let frame = load_frame(&path, Layout::Gray).unwrap();
        let expected = (30.0 + 60.0 + 90.0) / (3.0 * 255.0);
        for &v in frame.channel(0).data() {
            assert!((v - expected).abs() < 1e-12);
        }
        // The reverse direction cannot be fabricated.
        assert!(load_frame(&path, Layout::Color).is_ok());
        let gray_path = dir.join("g.png");
        let gimg: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_pixel(4, 3, Luma([77]));
        gimg.save(&gray_path).unwrap();
        assert!(load_frame(&gray_path, Layout::Color).is_err());
    }

    #[test]
    fn smap_rejects_bad_magic_and_truncation() {
        let dir = test_dir("smap");
        let bad = dir.join("bad.sal");
        fs::write(&bad, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_saliency_map(&bad).unwrap_err(),
            Error::BadMagic { .. }
        ));

        let trunc = dir.join("trunc.sal");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SMAP");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // 1 of 6 samples
        fs::write(&trunc, bytes).unwrap();
        assert!(matches!(
            load_saliency_map(&trunc).unwrap_err(),
            Error::Truncated { .. }
        ));
    }

    #[test]
    fn smap_round_trips_f32_exact_values() {
        let dir = test_dir("smap-rt");
        let plane = Plane::from_fn(5, 4, |x, y| (x as f64 + 8.0 * y as f64) / 64.0);
        let path = dir.join("m.sal");
        save_saliency_plane(&plane, &path).unwrap();
        let back = load_saliency_map(&path).unwrap();
        assert_eq!(back.plane(), &plane);
    }

    #[test]
    fn sidecar_swaps_extension() {
        assert_eq!(
            sidecar_path(Path::new("seq/f0003.png")),
            PathBuf::from("seq/f0003.sal")
        );
    }
}
