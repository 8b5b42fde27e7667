//! Flow-field types and the de-facto two-band float32 flow interchange
//! format (".flo"): a magic float 202021.25 (bytes "PIEH" little-endian),
//! i32 width and height, then row-major interleaved (u, v) f32 pairs.
//! Samples with magnitude above 1e9 mark unknown pixels; they load as an
//! invalid-pixel mask rather than as values.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Plane;
use crate::io::FramePattern;

const FLO_MAGIC: f32 = 202021.25;
const SENTINEL_THRESHOLD: f32 = 1e9;
const SENTINEL_VALUE: f32 = 1e10;

/// Flow for one frame transition: horizontal component `u`, vertical
/// component `v` (pixels per frame step), and an optional validity mask for
/// fields whose ground truth leaves some pixels unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFrame {
    u: Plane,
    v: Plane,
    valid: Option<Vec<bool>>,
}

impl FlowFrame {
    pub fn new(u: Plane, v: Plane) -> Result<FlowFrame> {
        if (u.width(), u.height()) != (v.width(), v.height()) {
            return Err(Error::DimensionMismatch {
                context: "flow components".into(),
                expected_w: u.width(),
                expected_h: u.height(),
                got_w: v.width(),
                got_h: v.height(),
            });
        }
        if !u.all_finite() || !v.all_finite() {
            return Err(Error::InvalidFlow {
                what: "non-finite component values".into(),
            });
        }
        Ok(FlowFrame { u, v, valid: None })
    }

    pub fn with_valid(u: Plane, v: Plane, valid: Vec<bool>) -> Result<FlowFrame> {
        if valid.len() != u.len() {
            return Err(Error::InvalidFlow {
                what: format!(
                    "validity mask length {} does not cover {} pixels",
                    valid.len(),
                    u.len()
                ),
            });
        }
        let mut f = FlowFrame::new(u, v)?;
        f.valid = Some(valid);
        Ok(f)
    }

    pub fn zeros(width: usize, height: usize) -> FlowFrame {
        FlowFrame {
            u: Plane::new(width, height),
            v: Plane::new(width, height),
            valid: None,
        }
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    pub fn u(&self) -> &Plane {
        &self.u
    }

    pub fn v(&self) -> &Plane {
        &self.v
    }

    /// Validity of pixel index `i` (row-major); fields without a mask are
    /// valid everywhere.
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[i])
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    /// Per-pixel flow magnitude √(u² + v²).
    pub fn magnitude(&self) -> Plane {
        self.u.zip_map(&self.v, |a, b| (a * a + b * b).sqrt())
    }

    /// Per-pixel endpoint error against another field of the same size.
    pub fn endpoint_error(&self, other: &FlowFrame) -> Result<Plane> {
        if (self.width(), self.height()) != (other.width(), other.height()) {
            return Err(Error::DimensionMismatch {
                context: "endpoint error".into(),
                expected_w: self.width(),
                expected_h: self.height(),
                got_w: other.width(),
                got_h: other.height(),
            });
        }
        let du = self.u.zip_map(&other.u, |a, b| a - b);
        let dv = self.v.zip_map(&other.v, |a, b| a - b);
        Ok(du.zip_map(&dv, |a, b| (a * a + b * b).sqrt()))
    }
}

/// Flow across a whole sequence: one [`FlowFrame`] per transition t→t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    frames: Vec<FlowFrame>,
}

impl FlowField {
    pub fn new(frames: Vec<FlowFrame>) -> Result<FlowField> {
        if frames.is_empty() {
            return Err(Error::InvalidFlow {
                what: "flow field needs at least one transition".into(),
            });
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for (t, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != (w, h) {
                return Err(Error::DimensionMismatch {
                    context: format!("flow transition {t}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
        Ok(FlowField { frames })
    }

    pub fn frames(&self) -> &[FlowFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &FlowFrame {
        &self.frames[t]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires ≥ 1 transition
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

/// Save one transition. Rejects non-finite values; invalid-masked pixels
/// are written as the sentinel.
pub fn save_flow_frame(flow: &FlowFrame, path: &Path) -> Result<()> {
    let (w, h) = (flow.width(), flow.height());
    let mut bytes = Vec::with_capacity(12 + w * h * 8);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for i in 0..w * h {
        let (u, v) = if flow.is_valid(i) {
            (flow.u().data()[i], flow.v().data()[i])
        } else {
            (SENTINEL_VALUE as f64, SENTINEL_VALUE as f64)
        };
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidFlow {
                what: format!("non-finite value at pixel {i} while saving"),
            });
        }
        bytes.extend_from_slice(&(u as f32).to_le_bytes());
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load one transition; sentinel samples become an invalid-pixel mask.
pub fn load_flow_frame(path: &Path) -> Result<FlowFrame> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 12 || f32::from_le_bytes(bytes[0..4].try_into().unwrap()) != FLO_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "PIEH (202021.25)",
        });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if !(1..=100_000).contains(&w) || !(1..=100_000).contains(&h) {
        return Err(Error::InvalidFlow {
            what: format!("{}: implausible dimensions {w}x{h}", path.display()),
        });
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let mut u = Plane::new(w, h);
    let mut v = Plane::new(w, h);
    let mut valid = vec![true; w * h];
    let mut any_invalid = false;
    for i in 0..w * h {
        let off = 12 + i * 8;
        let us = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let vs = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        if !us.is_finite() || !vs.is_finite() || us.abs() > SENTINEL_THRESHOLD || vs.abs() > SENTINEL_THRESHOLD
        {
            valid[i] = false;
            any_invalid = true;
        } else {
            u.data_mut()[i] = us as f64;
            v.data_mut()[i] = vs as f64;
        }
    }
    if any_invalid {
        FlowFrame::with_valid(u, v, valid)
    } else {
        FlowFrame::new(u, v)
    }
}

/// Save a whole field under an indexed pattern (`flow_%04d.flo`), one file
/// per transition. A pattern-less path is allowed for single-transition
/// fields.
pub fn save_flow(flow: &FlowField, pattern: &str) -> Result<()> {
    match FramePattern::parse(pattern) {
        Some(fp) => {
            for (t, frame) in flow.frames().iter().enumerate() {
                save_flow_frame(frame, &fp.format(t))?;
            }
            Ok(())
        }
        None if flow.len() == 1 => save_flow_frame(flow.frame(0), Path::new(pattern)),
        None => Err(Error::InvalidConfig {
            what: format!(
                "{} transitions but output pattern {pattern:?} has no %d placeholder",
                flow.len()
            ),
        }),
    }
}

/// Load a field from an indexed pattern or a single concrete file.
pub fn load_flow(pattern: &str) -> Result<FlowField> {
    let paths: Vec<PathBuf> = match FramePattern::parse(pattern) {
        Some(fp) => fp.expand(pattern)?.into_iter().map(|(_, p)| p).collect(),
        None => vec![PathBuf::from(pattern)],
    };
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(load_flow_frame(p)?);
    }
    FlowField::new(frames)
}
