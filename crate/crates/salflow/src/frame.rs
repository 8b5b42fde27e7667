//! Frame and sequence domain types: channel layouts, multi-channel frames,
//! saliency-complemented sequences, and saliency maps with an explicit
//! normalization state.

use crate::error::{Error, Result};
use crate::grid::Plane;

/// Channel layout of a frame or sequence. The saliency channel, when
/// present, is always the last channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Gray,
    GraySaliency,
    Color,
    ColorSaliency,
}

impl Layout {
    pub fn channel_count(self) -> usize {
        match self {
            Layout::Gray => 1,
            Layout::GraySaliency => 2,
            Layout::Color => 3,
            Layout::ColorSaliency => 4,
        }
    }

    pub fn has_saliency(self) -> bool {
        matches!(self, Layout::GraySaliency | Layout::ColorSaliency)
    }

    /// Number of image (non-saliency) channels.
    pub fn image_channel_count(self) -> usize {
        self.channel_count() - usize::from(self.has_saliency())
    }

    /// The layout after appending a saliency channel. Errors when one is
    /// already present.
    pub fn with_saliency(self) -> Result<Layout> {
        match self {
            Layout::Gray => Ok(Layout::GraySaliency),
            Layout::Color => Ok(Layout::ColorSaliency),
            other => Err(Error::InvalidConfig {
                what: format!("layout {other} already carries a saliency channel"),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Layout::Gray => "gray",
            Layout::GraySaliency => "gray+saliency",
            Layout::Color => "color",
            Layout::ColorSaliency => "color+saliency",
        }
    }

    pub fn parse(s: &str) -> Result<Layout> {
        match s {
            "gray" => Ok(Layout::Gray),
            "gray+saliency" => Ok(Layout::GraySaliency),
            "color" => Ok(Layout::Color),
            "color+saliency" => Ok(Layout::ColorSaliency),
            other => Err(Error::InvalidConfig {
                what: format!(
                    "unknown layout {other:?} (expected gray, gray+saliency, color, color+saliency)"
                ),
            }),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One multi-channel image. Channels share dimensions and hold finite
/// values; loaders and generators produce values in [0,1], while internally
/// resampled frames may overshoot that range slightly (cubic kernels ring).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: Vec<Plane>,
}

impl Frame {
    pub fn new(channels: Vec<Plane>) -> Result<Frame> {
        if channels.is_empty() || channels.len() > 4 {
            return Err(Error::ChannelMismatch {
                context: "frame construction".into(),
                expected: 1,
                got: channels.len(),
            });
        }
        let (w, h) = (channels[0].width(), channels[0].height());
        for (i, c) in channels.iter().enumerate() {
            if (c.width(), c.height()) != (w, h) {
                return Err(Error::DimensionMismatch {
                    context: format!("frame channel {i}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: c.width(),
                    got_h: c.height(),
                });
            }
            if !c.all_finite() {
                return Err(Error::InvalidConfig {
                    what: format!("frame channel {i} contains non-finite values"),
                });
            }
        }
        Ok(Frame {
            width: w,
            height: h,
            channels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &Plane {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Plane] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Plane> {
        self.channels
    }
}

/// An ordered sequence of frames sharing one layout. At least two frames —
/// the temporal derivative needs a transition to look at.
#[derive(Debug, Clone)]
pub struct ComplementedSequence {
    frames: Vec<Frame>,
    layout: Layout,
}

impl ComplementedSequence {
    pub fn new(frames: Vec<Frame>, layout: Layout) -> Result<ComplementedSequence> {
        if frames.len() < 2 {
            return Err(Error::SequenceTooSmall {
                what: format!("{} frame(s), need at least 2", frames.len()),
            });
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for (t, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != (w, h) {
                return Err(Error::DimensionMismatch {
                    context: format!("sequence frame {t}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
            if f.channel_count() != layout.channel_count() {
                return Err(Error::ChannelMismatch {
                    context: format!("sequence frame {t} vs layout {layout}"),
                    expected: layout.channel_count(),
                    got: f.channel_count(),
                });
            }
        }
        Ok(ComplementedSequence { frames, layout })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires ≥ 2 frames
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

/// Normalization state a saliency map can be in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    UnitRange,
    ZScored,
}

/// A per-pixel saliency map tagged with its normalization state, so
/// renormalizing is idempotent and downstream code can assert what it gets.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    plane: Plane,
    state: Normalization,
}

impl SaliencyMap {
    pub fn raw(plane: Plane) -> SaliencyMap {
        SaliencyMap {
            plane,
            state: Normalization::Raw,
        }
    }

    /// Wrap a plane already known to lie in [0,1] (e.g. loaded from a file
    /// format that guarantees it after scaling).
    pub fn unit_range_unchecked(plane: Plane) -> SaliencyMap {
        SaliencyMap {
            plane,
            state: Normalization::UnitRange,
        }
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn into_plane(self) -> Plane {
        self.plane
    }

    pub fn state(&self) -> Normalization {
        self.state
    }

    /// Min-max normalize to [0,1]. A (numerically) constant map becomes all
    /// zeros rather than amplifying noise-level variation to full scale.
    /// Idempotent: a map already in unit-range state passes through bitwise.
    pub fn into_unit_range(self) -> SaliencyMap {
        if self.state == Normalization::UnitRange {
            return self;
        }
        let (lo, hi) = self.plane.min_max();
        let span = hi - lo;
        let plane = if span < 1e-12 {
            Plane::constant(self.plane.width(), self.plane.height(), 0.0)
        } else {
            self.plane.map(|v| (v - lo) / span)
        };
        SaliencyMap {
            plane,
            state: Normalization::UnitRange,
        }
    }

    /// Z-score (population standard deviation). Errors on constant maps,
    /// where the score is undefined.
    pub fn into_z_scored(self) -> Result<SaliencyMap> {
        if self.state == Normalization::ZScored {
            return Ok(self);
        }
        // Constancy is judged on the value span, the same criterion unit-range
        // normalization uses, because the summed standard deviation of a
        // constant map lands at rounding noise (~1e-17) rather than exactly 0.
        let (lo, hi) = self.plane.min_max();
        if hi - lo < 1e-12 {
            return Err(Error::NssUndefined);
        }
        let mean = self.plane.mean();
        let var = self
            .plane
            .data()
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.plane.len() as f64;
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Err(Error::NssUndefined);
        }
        Ok(SaliencyMap {
            plane: self.plane.map(|v| (v - mean) / sd),
            state: Normalization::ZScored,
        })
    }
}
