//! Synthetic scene generation with exact ground truth.
//!
//! Scenes are built from a static textured background, rectangular objects
//! translating at constant integer pixel velocities, and static vertical
//! occluder bars drawn over everything. Because velocities are integer and
//! textures ride with their objects, the true flow is known exactly: the
//! object velocity on visible object pixels, zero elsewhere. Each render
//! also plants a synthetic fixation stream that follows the leading object's
//! center — through occlusions — for scoring saliency models against a
//! known attention path.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{FixationRecord, FixationSet};
use crate::flow::{FlowField, FlowFrame};
use crate::frame::{ComplementedSequence, Frame, Layout};
use crate::grid::{gaussian_smooth, Plane};

/// A rectangle translating at a constant integer velocity, carrying its own
/// sharp texture so displacement is observable.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingObject {
    /// Top-left corner at frame 0, in pixels.
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    /// Pixels per frame; integer so rendered motion is an exact translation.
    pub velocity: (i64, i64),
    /// Mean intensity of the object texture.
    pub intensity: f64,
    /// Texture contrast around the mean.
    pub texture_amplitude: f64,
}

impl MovingObject {
    /// Top-left corner at frame `k` (validated to stay in bounds).
    fn corner_at(&self, k: usize) -> (i64, i64) {
        (
            self.x0 as i64 + k as i64 * self.velocity.0,
            self.y0 as i64 + k as i64 * self.velocity.1,
        )
    }

    /// Geometric center at frame `k`.
    pub fn center_at(&self, k: usize) -> (f64, f64) {
        let (x, y) = self.corner_at(k);
        (
            x as f64 + self.width as f64 / 2.0 - 0.5,
            y as f64 + self.height as f64 / 2.0 - 0.5,
        )
    }
}

/// A static, full-height vertical bar drawn over the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub x0: usize,
    pub width: usize,
    pub intensity: f64,
    pub texture_amplitude: f64,
}

impl Occluder {
    fn covers(&self, x: usize) -> bool {
        (self.x0..self.x0 + self.width).contains(&x)
    }
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Gray (single channel) or color (three correlated channels).
    pub color: bool,
    /// Per-channel gains applied to the rendered pattern in color mode.
    pub color_gains: [f64; 3],
    /// Background texture contrast around mid-gray.
    pub background_amplitude: f64,
    /// Gaussian smoothing applied to the background texture (0 = raw noise).
    pub background_smoothing: f64,
    pub objects: Vec<MovingObject>,
    pub occluders: Vec<Occluder>,
    /// Additive i.i.d. noise amplitude, applied per frame and channel.
    pub noise_amplitude: f64,
    /// Per-frame contrast factors multiplying the finished frame. Empty
    /// means 1.0 everywhere; one entry applies to every frame; otherwise one
    /// entry per frame.
    pub contrast: Vec<f64>,
    /// Frame rate used to timestamp the planted fixation stream.
    pub fixation_rate: f64,
}

impl Default for SceneSpec {
    fn default() -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 64,
            frames: 8,
            seed: 7,
            color: false,
            color_gains: [0.9, 1.0, 1.1],
            background_amplitude: 0.25,
            background_smoothing: 1.5,
            objects: Vec::new(),
            occluders: Vec::new(),
            noise_amplitude: 0.0,
            contrast: Vec::new(),
            fixation_rate: 25.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig { what });
        if self.width == 0 || self.height == 0 {
            return bad(format!("scene dimensions {}x{} are empty", self.width, self.height));
        }
        if self.frames < 2 {
            return bad(format!("a scene needs at least 2 frames, got {}", self.frames));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.width == 0 || o.height == 0 {
                return bad(format!("object {i} has empty dimensions"));
            }
            for k in 0..self.frames {
                let (x, y) = o.corner_at(k);
                if x < 0
                    || y < 0
                    || x + o.width as i64 > self.width as i64
                    || y + o.height as i64 > self.height as i64
                {
                    return bad(format!(
                        "object {i} leaves the {}x{} frame at time {k}",
                        self.width, self.height
                    ));
                }
            }
            if !(o.intensity.is_finite() && o.texture_amplitude.is_finite())
                || o.texture_amplitude < 0.0
            {
                return bad(format!("object {i} has invalid intensity or texture"));
            }
        }
        for (i, b) in self.occluders.iter().enumerate() {
            if b.width == 0 || b.x0 + b.width > self.width {
                return bad(format!("occluder {i} does not fit the frame width"));
            }
            if !(b.intensity.is_finite() && b.texture_amplitude.is_finite())
                || b.texture_amplitude < 0.0
            {
                return bad(format!("occluder {i} has invalid intensity or texture"));
            }
        }
        if !(self.background_amplitude.is_finite() && self.background_amplitude >= 0.0) {
            return bad("background amplitude must be finite and nonnegative".to_string());
        }
        if !(self.background_smoothing.is_finite() && self.background_smoothing >= 0.0) {
            return bad("background smoothing must be finite and nonnegative".to_string());
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return bad("noise amplitude must be finite and nonnegative".to_string());
        }
        if !(self.contrast.is_empty()
            || self.contrast.len() == 1
            || self.contrast.len() == self.frames)
        {
            return bad(format!(
                "contrast schedule has {} entries; expected 0, 1, or {}",
                self.contrast.len(),
                self.frames
            ));
        }
        if self.contrast.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("contrast factors must be finite and positive".to_string());
        }
        if !(self.fixation_rate.is_finite() && self.fixation_rate > 0.0) {
            return bad("fixation rate must be positive".to_string());
        }
        if self.color_gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return bad("color gains must be finite and positive".to_string());
        }
        Ok(())
    }

    /// Applies one `key = value` setting, the scene counterpart of the
    /// solver's config interface. `object` and `occluder` keys append to
    /// their lists: `object = x0 y0 w h vx vy intensity texture`,
    /// `occluder = x0 w intensity texture`. `contrast` takes a
    /// space-separated factor list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: String| Error::InvalidConfig { what };
        let parse_usize = |v: &str, key: &str| {
            v.parse::<usize>()
                .map_err(|_| bad(format!("{key}: expected a nonnegative integer, got `{v}`")))
        };
        let parse_f64 = |v: &str, key: &str| {
            v.parse::<f64>()
                .map_err(|_| bad(format!("{key}: expected a number, got `{v}`")))
        };
        match key {
            "width" => self.width = parse_usize(value, key)?,
            "height" => self.height = parse_usize(value, key)?,
            "frames" => self.frames = parse_usize(value, key)?,
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad(format!("seed: expected an integer, got `{value}`")))?
            }
            "color" => {
                self.color = value
                    .parse::<bool>()
                    .map_err(|_| bad(format!("color: expected true/false, got `{value}`")))?
            }
            "color_gains" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(bad(format!(
                        "color_gains: expected 3 numbers, got {}",
                        parts.len()
                    )));
                }
                for (slot, part) in self.color_gains.iter_mut().zip(&parts) {
                    *slot = parse_f64(part, "color_gains")?;
                }
            }
            "background_amplitude" => self.background_amplitude = parse_f64(value, key)?,
            "background_smoothing" => self.background_smoothing = parse_f64(value, key)?,
            "noise_amplitude" => self.noise_amplitude = parse_f64(value, key)?,
            "fixation_rate" => self.fixation_rate = parse_f64(value, key)?,
            "contrast" => {
                self.contrast = value
                    .split_whitespace()
                    .map(|p| parse_f64(p, "contrast"))
                    .collect::<Result<_>>()?;
            }
            "object" => {
                let p: Vec<&str> = value.split_whitespace().collect();
                if p.len() != 8 {
                    return Err(bad(format!(
                        "object: expected `x0 y0 w h vx vy intensity texture`, got {} fields",
                        p.len()
                    )));
                }
                let parse_i64 = |v: &str| {
                    v.parse::<i64>()
                        .map_err(|_| bad(format!("object: expected an integer, got `{v}`")))
                };
                self.objects.push(MovingObject {
                    x0: parse_usize(p[0], "object x0")?,
                    y0: parse_usize(p[1], "object y0")?,
                    width: parse_usize(p[2], "object w")?,
                    height: parse_usize(p[3], "object h")?,
                    velocity: (parse_i64(p[4])?, parse_i64(p[5])?),
                    intensity: parse_f64(p[6], "object intensity")?,
                    texture_amplitude: parse_f64(p[7], "object texture")?,
                });
            }
            "occluder" => {
                let p: Vec<&str> = value.split_whitespace().collect();
                if p.len() != 4 {
                    return Err(bad(format!(
                        "occluder: expected `x0 w intensity texture`, got {} fields",
                        p.len()
                    )));
                }
                self.occluders.push(Occluder {
                    x0: parse_usize(p[0], "occluder x0")?,
                    width: parse_usize(p[1], "occluder w")?,
                    intensity: parse_f64(p[2], "occluder intensity")?,
                    texture_amplitude: parse_f64(p[3], "occluder texture")?,
                });
            }
            other => {
                return Err(bad(format!("unknown scene key `{other}`")));
            }
        }
        Ok(())
    }
}

/// Everything a render produces: the sequence, the exact flow, per-frame
/// object visibility, and the planted fixation stream.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub sequence: ComplementedSequence,
    /// Ground-truth flow, one frame per transition: the object velocity on
    /// visible object pixels of the earlier frame, zero elsewhere.
    pub truth: FlowField,
    /// Per frame, row-major: `true` where an object pixel is visible (drawn
    /// and not covered by an occluder).
    pub visibility: Vec<Vec<bool>>,
    /// One viewer per object, fixating the object center every frame.
    pub fixations: FixationSet,
}

/// Uniform sample in [0, 1) from a ChaCha stream.
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// I.i.d. uniform texture in `mean ± amplitude`, keyed by `seed`.
fn value_noise(width: usize, height: usize, seed: u64, mean: f64, amplitude: f64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Plane::from_fn(width, height, |_, _| {
        mean + amplitude * (2.0 * unit_f64(&mut rng) - 1.0)
    })
}

/// Smoothed background texture, rescaled after smoothing so the requested
/// contrast survives the blur.
fn background_texture(spec: &SceneSpec) -> Plane {
    let raw = value_noise(
        spec.width,
        spec.height,
        spec.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1),
        0.5,
        spec.background_amplitude,
    );
    if spec.background_smoothing <= 0.0 || spec.background_amplitude == 0.0 {
        return raw;
    }
    let smooth = gaussian_smooth(&raw, spec.background_smoothing);
    let (lo, hi) = smooth.min_max();
    if hi - lo < 1e-12 {
        return smooth;
    }
    let scale = 2.0 * spec.background_amplitude / (hi - lo);
    smooth.map(|v| 0.5 + (v - (lo + hi) / 2.0) * scale)
}

fn object_texture(spec: &SceneSpec, index: usize, o: &MovingObject) -> Plane {
    value_noise(
        o.width,
        o.height,
        spec.seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(101 + index as u64),
        o.intensity,
        o.texture_amplitude,
    )
}

fn occluder_texture(spec: &SceneSpec, index: usize, b: &Occluder) -> Plane {
    value_noise(
        b.width,
        spec.height,
        spec.seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(5001 + index as u64),
        b.intensity,
        b.texture_amplitude,
    )
}

/// Which object (topmost, i.e. last in the list) covers pixel (x, y) at
/// frame `k`, regardless of occlusion.
fn object_at(spec: &SceneSpec, k: usize, x: usize, y: usize) -> Option<usize> {
    spec.objects.iter().enumerate().rev().find_map(|(i, o)| {
        let (ox, oy) = o.corner_at(k);
        let inside = (x as i64) >= ox
            && (x as i64) < ox + o.width as i64
            && (y as i64) >= oy
            && (y as i64) < oy + o.height as i64;
        inside.then_some(i)
    })
}

fn occluded(spec: &SceneSpec, x: usize) -> bool {
    spec.occluders.iter().any(|b| b.covers(x))
}

/// Renders the scene. Deterministic for a fixed spec, including across
/// thread counts: all randomness is keyed by the spec seed and stream
/// indices, never by execution order.
pub fn render(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let background = background_texture(spec);
    let object_textures: Vec<Plane> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| object_texture(spec, i, o))
        .collect();
    let occluder_textures: Vec<Plane> = spec
        .occluders
        .iter()
        .enumerate()
        .map(|(i, b)| occluder_texture(spec, i, b))
        .collect();

    // The clean pattern for frame k: background, then objects in list order
    // (later on top), then occluder bars over everything.
    let pattern = |k: usize| {
        Plane::from_fn(spec.width, spec.height, |x, y| {
            if let Some((bi, b)) = spec
                .occluders
                .iter()
                .enumerate()
                .rev()
                .find(|(_, b)| b.covers(x))
            {
                return occluder_textures[bi].at(x - b.x0, y);
            }
            if let Some(oi) = object_at(spec, k, x, y) {
                let (ox, oy) = spec.objects[oi].corner_at(k);
                return object_textures[oi].at((x as i64 - ox) as usize, (y as i64 - oy) as usize);
            }
            background.at(x, y)
        })
    };

    let contrast_at = |k: usize| -> f64 {
        match spec.contrast.len() {
            0 => 1.0,
            1 => spec.contrast[0],
            _ => spec.contrast[k],
        }
    };

    let channel_count = if spec.color { 3 } else { 1 };
    let frames: Vec<Frame> = (0..spec.frames)
        .into_par_iter()
        .map(|k| {
            let clean = pattern(k);
            let c = contrast_at(k);
            let channels: Vec<Plane> = (0..channel_count)
                .map(|ch| {
                    let gain = if spec.color { spec.color_gains[ch] } else { 1.0 };
                    let mut plane = clean.map(|v| c * gain * v);
                    if spec.noise_amplitude > 0.0 {
                        let noise_seed = spec
                            .seed
                            .wrapping_mul(0x9e3779b97f4a7c15)
                            .wrapping_add(900_000 + (k * channel_count + ch) as u64);
                        let noise = value_noise(
                            spec.width,
                            spec.height,
                            noise_seed,
                            0.0,
                            spec.noise_amplitude,
                        );
                        plane = plane.zip_map(&noise, |v, n| v + n);
                    }
                    plane
                })
                .collect();
            Frame::new(channels)
        })
        .collect::<Result<_>>()?;

    let visibility: Vec<Vec<bool>> = (0..spec.frames)
        .map(|k| {
            let mut mask = vec![false; spec.width * spec.height];
            for (i, m) in mask.iter_mut().enumerate() {
                let (x, y) = (i % spec.width, i / spec.width);
                *m = object_at(spec, k, x, y).is_some() && !occluded(spec, x);
            }
            mask
        })
        .collect();

    let truth_frames: Vec<FlowFrame> = (0..spec.frames - 1)
        .map(|k| {
            let mut u = Plane::new(spec.width, spec.height);
            let mut v = Plane::new(spec.width, spec.height);
            for i in 0..spec.width * spec.height {
                if !visibility[k][i] {
                    continue;
                }
                let (x, y) = (i % spec.width, i / spec.width);
                let oi = object_at(spec, k, x, y).expect("visible pixels lie on an object");
                u.data_mut()[i] = spec.objects[oi].velocity.0 as f64;
                v.data_mut()[i] = spec.objects[oi].velocity.1 as f64;
            }
            FlowFrame::new(u, v)
        })
        .collect::<Result<_>>()?;

    // One synthetic viewer per object, fixating its center each frame. The
    // quarter-to-three-quarter window timestamps each frame robustly: both
    // endpoints rasterize back to frame k under any rounding of k/rate.
    let mut records = Vec::new();
    for (i, o) in spec.objects.iter().enumerate() {
        for k in 0..spec.frames {
            let (cx, cy) = o.center_at(k);
            records.push(FixationRecord {
                viewer: format!("planted-{i}"),
                start_s: (k as f64 + 0.25) / spec.fixation_rate,
                end_s: (k as f64 + 0.75) / spec.fixation_rate,
                x: cx,
                y: cy,
            });
        }
    }

    Ok(RenderedScene {
        sequence: ComplementedSequence::new(
            frames,
            if spec.color { Layout::Color } else { Layout::Gray },
        )?,
        truth: FlowField::new(truth_frames)?,
        visibility,
        fixations: FixationSet::new(records)?,
    })
}

/// The canonical occlusion scenario: a textured 8×8 square crossing behind
/// a full-height bar wide enough to hide it completely for four frames
/// (frames 10–13 of 20). The bar pixels never move; any motion evidence
/// there must come from the temporal extent of the model. A whisper of
/// noise keeps baseline saliency maps non-constant so score curves stay
/// defined.
pub fn occlusion_demo_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        width: 64,
        height: 64,
        frames: 20,
        seed,
        objects: vec![MovingObject {
            x0: 8,
            y0: 28,
            width: 8,
            height: 8,
            velocity: (2, 0),
            intensity: 0.85,
            texture_amplitude: 0.12,
        }],
        occluders: vec![Occluder {
            x0: 28,
            width: 14,
            intensity: 0.25,
            texture_amplitude: 0.08,
        }],
        noise_amplitude: 0.005,
        ..SceneSpec::default()
    }
}

/// Frames where object `index` is entirely hidden behind occluders, by
/// interval arithmetic: every column of the object's rectangle lies inside
/// some occluder bar. Bars cover the full height, so only x matters.
pub fn fully_occluded_frames(spec: &SceneSpec, index: usize) -> Vec<usize> {
    let o = &spec.objects[index];
    (0..spec.frames)
        .filter(|&k| {
            let (ox, _) = o.corner_at(k);
            (ox..ox + o.width as i64)
                .all(|x| x >= 0 && occluded(spec, x as usize))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_spec() -> SceneSpec {
        SceneSpec {
            frames: 6,
            objects: vec![MovingObject {
                x0: 8,
                y0: 20,
                width: 10,
                height: 10,
                velocity: (2, 1),
                intensity: 0.8,
                texture_amplitude: 0.15,
            }],
            ..SceneSpec::default()
        }
    }

    #[test]
    fn truth_flow_is_velocity_on_the_square_and_zero_elsewhere() {
        let scene = render(&square_spec()).unwrap();
        assert_eq!(scene.truth.len(), 5);
        for k in 0..5 {
            let frame = scene.truth.frame(k);
            for i in 0..64 * 64 {
                let (x, y) = (i % 64, i / 64);
                if scene.visibility[k][i] {
                    assert_eq!(frame.u().at(x, y), 2.0);
                    assert_eq!(frame.v().at(x, y), 1.0);
                } else {
                    assert_eq!(frame.u().at(x, y), 0.0);
                    assert_eq!(frame.v().at(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_velocity_object_has_identically_zero_truth() {
        let mut spec = square_spec();
        spec.objects[0].velocity = (0, 0);
        let scene = render(&spec).unwrap();
        for frame in scene.truth.frames() {
            assert!(frame.u().data().iter().all(|&v| v == 0.0));
            assert!(frame.v().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = SceneSpec {
            color: true,
            noise_amplitude: 0.02,
            occluders: vec![Occluder {
                x0: 30,
                width: 6,
                intensity: 0.3,
                texture_amplitude: 0.1,
            }],
            ..square_spec()
        };
        let a = render(&spec).unwrap();
        let b = render(&spec).unwrap();
        for (fa, fb) in a.sequence.frames().iter().zip(b.sequence.frames()) {
            for (ca, cb) in fa.channels().iter().zip(fb.channels()) {
                for (x, y) in ca.data().iter().zip(cb.data()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn occluder_bars_hide_object_pixels() {
        let mut spec = square_spec();
        spec.objects[0].velocity = (2, 0);
        spec.frames = 15;
        spec.occluders = vec![Occluder {
            x0: 24,
            width: 14,
            intensity: 0.2,
            texture_amplitude: 0.05,
        }];
        let scene = render(&spec).unwrap();
        // Wherever a bar stands, visibility is false and the rendered pixel
        // equals the bar texture in every frame.
        for k in 0..spec.frames {
            for y in 0..64 {
                for x in 24..38 {
                    assert!(!scene.visibility[k][y * 64 + x]);
                    assert_eq!(
                        scene.sequence.frames()[k].channels()[0].at(x, y),
                        scene.sequence.frames()[0].channels()[0].at(x, y),
                        "bar pixels are static"
                    );
                }
            }
        }
    }

    #[test]
    fn full_occlusion_matches_the_interval_oracle() {
        // Unit-width object, bar of width 3, speed 1: hidden exactly while
        // the object column lies inside the bar — 3 consecutive frames.
        let spec = SceneSpec {
            frames: 12,
            objects: vec![MovingObject {
                x0: 1,
                y0: 30,
                width: 1,
                height: 3,
                velocity: (1, 0),
                intensity: 0.9,
                texture_amplitude: 0.05,
            }],
            occluders: vec![Occluder {
                x0: 5,
                width: 3,
                intensity: 0.2,
                texture_amplitude: 0.0,
            }],
            ..SceneSpec::default()
        };
        let hidden = fully_occluded_frames(&spec, 0);
        assert_eq!(hidden, vec![4, 5, 6]);
        // The render agrees frame by frame: no visible object pixel exactly
        // on the predicted frames.
        let scene = render(&spec).unwrap();
        for k in 0..spec.frames {
            let any_visible = scene.visibility[k].iter().any(|&m| m);
            assert_eq!(any_visible, !hidden.contains(&k), "frame {k}");
        }
    }

    #[test]
    fn occlusion_demo_hides_the_square_for_four_frames() {
        let spec = occlusion_demo_spec(3);
        assert_eq!(fully_occluded_frames(&spec, 0), vec![10, 11, 12, 13]);
        assert!(render(&spec).is_ok());
    }

    #[test]
    fn wider_objects_shrink_the_fully_hidden_window() {
        // Width-2 object, bar width 4, speed 1: containment allows
        // 4 - 2 + 1 = 3 starting columns.
        let spec = SceneSpec {
            frames: 14,
            objects: vec![MovingObject {
                x0: 0,
                y0: 10,
                width: 2,
                height: 2,
                velocity: (1, 0),
                intensity: 0.9,
                texture_amplitude: 0.05,
            }],
            occluders: vec![Occluder {
                x0: 6,
                width: 4,
                intensity: 0.2,
                texture_amplitude: 0.0,
            }],
            ..SceneSpec::default()
        };
        assert_eq!(fully_occluded_frames(&spec, 0), vec![6, 7, 8]);
    }

    #[test]
    fn patch_matching_recovers_the_spec_velocity() {
        // Exhaustive integer search over displacements: on occlusion-free
        // transitions the object patch must match exactly at the spec
        // velocity and nowhere else (sharp texture, no noise).
        let spec = square_spec();
        let scene = render(&spec).unwrap();
        let o = &spec.objects[0];
        for k in 0..spec.frames - 1 {
            let now = &scene.sequence.frames()[k].channels()[0];
            let next = &scene.sequence.frames()[k + 1].channels()[0];
            let (ox, oy) = o.corner_at(k);
            let mut best = (i64::MAX, i64::MAX);
            let mut best_ssd = f64::INFINITY;
            for dy in -3i64..=3 {
                for dx in -3i64..=3 {
                    let mut ssd = 0.0;
                    for py in 0..o.height as i64 {
                        for px in 0..o.width as i64 {
                            let a = now.at((ox + px) as usize, (oy + py) as usize);
                            let b = next.at((ox + px + dx) as usize, (oy + py + dy) as usize);
                            ssd += (a - b) * (a - b);
                        }
                    }
                    if ssd < best_ssd {
                        best_ssd = ssd;
                        best = (dx, dy);
                    }
                }
            }
            assert_eq!(best, o.velocity, "transition {k}");
            assert_eq!(best_ssd, 0.0, "exact translation");
        }
    }

    #[test]
    fn planted_fixations_follow_the_object_center() {
        let spec = square_spec();
        let scene = render(&spec).unwrap();
        assert_eq!(scene.fixations.len(), spec.frames);
        let matrix = crate::eval::rasterize_fixations(
            &scene.fixations,
            spec.fixation_rate,
            spec.width,
            spec.height,
            spec.frames,
        )
        .unwrap();
        for k in 0..spec.frames {
            assert_eq!(matrix.count_in(k), 1, "one fixation per frame");
            let (cx, cy) = spec.objects[0].center_at(k);
            let want = (cx.floor() as usize, cy.floor() as usize);
            assert_eq!(matrix.positions(k), vec![want]);
        }
    }

    #[test]
    fn contrast_schedule_scales_frames() {
        let mut spec = square_spec();
        spec.contrast = vec![2.0];
        let doubled = render(&spec).unwrap();
        spec.contrast = Vec::new();
        let plain = render(&spec).unwrap();
        for (a, b) in doubled.sequence.frames().iter().zip(plain.sequence.frames()) {
            for (ca, cb) in a.channels().iter().zip(b.channels()) {
                for (x, y) in ca.data().iter().zip(cb.data()) {
                    assert!((x - 2.0 * y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn color_channels_are_correlated_scalings() {
        let mut spec = square_spec();
        spec.color = true;
        let scene = render(&spec).unwrap();
        let f = &scene.sequence.frames()[0];
        assert_eq!(f.channels().len(), 3);
        for (x, y) in f.channels()[0].data().iter().zip(f.channels()[1].data()) {
            assert!((x / 0.9 - y).abs() < 1e-12);
        }
    }

    #[test]
    fn specs_reject_paths_that_leave_the_frame() {
        let mut spec = square_spec();
        spec.objects[0].velocity = (12, 0);
        assert!(matches!(render(&spec), Err(Error::InvalidConfig { .. })));
        spec.objects[0].velocity = (0, -9);
        assert!(matches!(render(&spec), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn key_value_settings_build_a_scene() {
        let mut spec = SceneSpec::default();
        spec.set("width", "48").unwrap();
        spec.set("height", "32").unwrap();
        spec.set("frames", "5").unwrap();
        spec.set("seed", "99").unwrap();
        spec.set("color", "true").unwrap();
        spec.set("object", "4 4 6 6 1 0 0.8 0.1").unwrap();
        spec.set("occluder", "20 5 0.3 0.05").unwrap();
        spec.set("contrast", "0.5 1 1 2 1").unwrap();
        spec.set("noise_amplitude", "0.01").unwrap();
        assert_eq!(spec.objects.len(), 1);
        assert_eq!(spec.occluders.len(), 1);
        assert_eq!(spec.contrast.len(), 5);
        assert!(render(&spec).is_ok());
        assert!(spec.set("no_such_key", "1").is_err());
        assert!(spec.set("object", "1 2 3").is_err());
    }
}
