//! Fixation ingestion and the scoring metrics: AUC, NSS, and average
//! angular error.
//!
//! Fixations arrive as CSV records (`viewer,start_s,end_s,x,y`), are
//! rasterized into a per-frame boolean matrix, and saliency maps are scored
//! against that matrix. Flow fields are compared to ground truth with the
//! space-time unit-vector angular error.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowFrame};
use crate::frame::SaliencyMap;
use crate::grid::Plane;

/// Required header line of the fixation interchange CSV.
pub const FIXATION_CSV_HEADER: &str = "viewer,start_s,end_s,x,y";

/// One fixation event: a viewer held gaze at (x, y) from `start_s` to
/// `end_s`, both in seconds, coordinates in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub viewer: String,
    pub start_s: f64,
    pub end_s: f64,
    pub x: f64,
    pub y: f64,
}

/// A validated collection of fixation records. Time ordering inside the set
/// is not required; viewers may overlap freely.
#[derive(Debug, Clone, Default)]
pub struct FixationSet {
    records: Vec<FixationRecord>,
}

impl FixationSet {
    /// Validates per-record invariants: finite fields and `0 ≤ start < end`.
    /// Coordinate bounds are checked later, at rasterization, when the frame
    /// geometry is known.
    pub fn new(records: Vec<FixationRecord>) -> Result<FixationSet> {
        for (index, r) in records.iter().enumerate() {
            validate_record(index, r)?;
        }
        Ok(FixationSet { records })
    }

    pub fn records(&self) -> &[FixationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parses the interchange CSV. The header must match
    /// [`FIXATION_CSV_HEADER`] exactly; blank lines are ignored. Viewer ids
    /// must not contain commas — fields are never quoted.
    pub fn from_csv_str(text: &str) -> Result<FixationSet> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == FIXATION_CSV_HEADER => {}
            other => {
                return Err(Error::FixationRecord {
                    index: 0,
                    what: format!(
                        "expected header `{FIXATION_CSV_HEADER}`, found `{}`",
                        other.unwrap_or("").trim()
                    ),
                })
            }
        }
        let mut records = Vec::new();
        for (index, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::FixationRecord {
                    index,
                    what: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let num = |name: &str, s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::FixationRecord {
                    index,
                    what: format!("{name} is not a number: `{s}`"),
                })
            };
            let record = FixationRecord {
                viewer: fields[0].to_string(),
                start_s: num("start_s", fields[1])?,
                end_s: num("end_s", fields[2])?,
                x: num("x", fields[3])?,
                y: num("y", fields[4])?,
            };
            validate_record(index, &record)?;
            records.push(record);
        }
        Ok(FixationSet { records })
    }

    pub fn from_csv_path(path: &Path) -> Result<FixationSet> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        FixationSet::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(FIXATION_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.viewer, r.start_s, r.end_s, r.x, r.y)
                .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn validate_record(index: usize, r: &FixationRecord) -> Result<()> {
    let bad = |what: String| Error::FixationRecord { index, what };
    if !(r.start_s.is_finite() && r.end_s.is_finite() && r.x.is_finite() && r.y.is_finite()) {
        return Err(bad("non-finite field".to_string()));
    }
    if r.start_s < 0.0 {
        return Err(bad(format!("start_s = {} is negative", r.start_s)));
    }
    if r.start_s >= r.end_s {
        return Err(bad(format!(
            "start_s = {} is not before end_s = {}",
            r.start_s, r.end_s
        )));
    }
    if r.x < 0.0 || r.y < 0.0 {
        return Err(bad(format!("coordinates ({}, {}) are negative", r.x, r.y)));
    }
    Ok(())
}

/// Per-frame boolean fixation raster: `true` where some viewer fixated.
#[derive(Debug, Clone)]
pub struct FixationMatrix {
    width: usize,
    height: usize,
    frame_count: usize,
    rate: f64,
    data: Vec<bool>,
}

impl FixationMatrix {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Frames per second the matrix was rasterized at.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Row-major mask for frame `k`.
    pub fn frame(&self, k: usize) -> &[bool] {
        let n = self.width * self.height;
        &self.data[k * n..(k + 1) * n]
    }

    /// Fixated (x, y) positions in frame `k`, row-major order.
    pub fn positions(&self, k: usize) -> Vec<(usize, usize)> {
        self.frame(k)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// Number of fixated pixels in frame `k`.
    pub fn count_in(&self, k: usize) -> usize {
        self.frame(k).iter().filter(|&&m| m).count()
    }
}

/// Converts fixation events into the per-frame boolean matrix.
///
/// A record spanning `[t0, t1]` seconds marks frames
/// `floor(t0·rate) ..= floor(t1·rate)`, zero-based — the frames displayed
/// while the gaze was held. The end frame is clamped to the last frame so a
/// fixation running to the exact end of the video stays in range; a record
/// starting at or beyond the video end is rejected, as are coordinates
/// outside the frame, both identified by record index. Viewers combine by
/// logical OR.
pub fn rasterize_fixations(
    set: &FixationSet,
    rate: f64,
    width: usize,
    height: usize,
    frame_count: usize,
) -> Result<FixationMatrix> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidConfig {
            what: format!("frame rate must be positive, got {rate}"),
        });
    }
    if width == 0 || height == 0 || frame_count == 0 {
        return Err(Error::InvalidConfig {
            what: format!("fixation matrix dimensions {width}x{height}x{frame_count} are empty"),
        });
    }
    let mut data = vec![false; width * height * frame_count];
    for (index, r) in set.records().iter().enumerate() {
        let bad = |what: String| Error::FixationRecord { index, what };
        let px = r.x.floor();
        let py = r.y.floor();
        if px >= width as f64 || py >= height as f64 {
            return Err(bad(format!(
                "({}, {}) is outside the {width}x{height} frame",
                r.x, r.y
            )));
        }
        let first = (r.start_s * rate).floor() as usize;
        if first >= frame_count {
            return Err(bad(format!(
                "starts at frame {first}, beyond the last frame {}",
                frame_count - 1
            )));
        }
        let last = ((r.end_s * rate).floor() as usize).min(frame_count - 1);
        let pixel = py as usize * width + px as usize;
        for k in first..=last {
            data[k * width * height + pixel] = true;
        }
    }
    Ok(FixationMatrix {
        width,
        height,
        frame_count,
        rate,
        data,
    })
}

/// Area under the ROC curve by 100-threshold sweep.
///
/// Thresholds are spaced uniformly over the map's value range; at each, the
/// true-positive rate is the fraction of fixated pixels at or above the
/// threshold, likewise false positives over the rest. The (FP, TP) points
/// plus the (0,0) and (1,1) endpoints integrate by the trapezoid rule. The
/// granularity keeps it within 0.02 of [`exact_auc`].
pub fn auc(map: &SaliencyMap, fixated: &[bool]) -> Result<f64> {
    let plane = map.plane();
    check_mask(plane, fixated)?;
    let n_pos = fixated.iter().filter(|&&m| m).count();
    if n_pos == 0 {
        return Err(Error::UndefinedClassifier { kind: "all false" });
    }
    if n_pos == fixated.len() {
        return Err(Error::UndefinedClassifier { kind: "all true" });
    }
    let n_neg = fixated.len() - n_pos;
    let (lo, hi) = plane.min_max();

    const STEPS: usize = 100;
    let mut points = Vec::with_capacity(STEPS + 2);
    points.push((0.0f64, 0.0f64));
    points.push((1.0, 1.0));
    for i in 0..STEPS {
        let threshold = if STEPS == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (STEPS - 1) as f64
        };
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&value, &fix) in plane.data().iter().zip(fixated) {
            if value >= threshold {
                if fix {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    let area = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area)
}

/// Exact ROC area via the Mann–Whitney statistic with midranks for ties.
/// This is the threshold-free reference the sweep in [`auc`] approximates.
pub fn exact_auc(map: &SaliencyMap, fixated: &[bool]) -> Result<f64> {
    let plane = map.plane();
    check_mask(plane, fixated)?;
    let n_pos = fixated.iter().filter(|&&m| m).count();
    if n_pos == 0 {
        return Err(Error::UndefinedClassifier { kind: "all false" });
    }
    if n_pos == fixated.len() {
        return Err(Error::UndefinedClassifier { kind: "all true" });
    }
    let n_neg = fixated.len() - n_pos;

    let mut order: Vec<usize> = (0..plane.len()).collect();
    order.sort_by(|&a, &b| plane.data()[a].total_cmp(&plane.data()[b]));
    // Midranks: tied values all receive the mean of the ranks they span.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && plane.data()[order[j]] == plane.data()[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j average to (i + j + 1) / 2.
        let midrank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            if fixated[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

fn check_mask(plane: &Plane, fixated: &[bool]) -> Result<()> {
    if fixated.len() != plane.len() {
        return Err(Error::CountMismatch {
            context: "fixation mask pixels".to_string(),
            expected: plane.len(),
            got: fixated.len(),
        });
    }
    Ok(())
}

/// Normalized scanpath saliency: the map is z-scored (population standard
/// deviation) and the scores at the fixated positions are averaged. Errors
/// on constant maps, where the z-score is undefined, and on an empty
/// position list.
pub fn nss(map: &SaliencyMap, fixations: &[(usize, usize)]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let z = map.clone().into_z_scored()?;
    let plane = z.plane();
    let mut sum = 0.0;
    for &(x, y) in fixations {
        if x >= plane.width() || y >= plane.height() {
            return Err(Error::InvalidConfig {
                what: format!(
                    "fixation position ({x}, {y}) outside the {}x{} map",
                    plane.width(),
                    plane.height()
                ),
            });
        }
        sum += plane.at(x, y);
    }
    Ok(sum / fixations.len() as f64)
}

/// Mean angular error plus per-frame detail.
#[derive(Debug, Clone)]
pub struct AngularError {
    /// Mean over every valid pixel of the whole field, in degrees.
    pub mean_degrees: f64,
    /// Per-frame means; `None` where a frame has no valid pixels.
    pub per_frame_mean: Vec<Option<f64>>,
    /// Per-pixel error maps in degrees, zero at invalid pixels.
    pub per_frame_map: Vec<Plane>,
}

/// Average angular error between a flow field and ground truth, in degrees.
///
/// Each flow vector (u1, u2) extends to the space-time direction
/// (u1, u2, 1), and the error is the angle between the two directions:
/// `arccos((u·v + 1) / (√(|u|²+1)·√(|v|²+1)))`. Zero flow against zero
/// truth is a perfect 0°. Pixels invalid in either field are excluded; a
/// field with no mutually valid pixels is an error.
///
/// The angle is evaluated as `atan2(‖a×b‖, a·b)` — the same quantity as the
/// arccos form, but exact at 0° where arccos would amplify rounding in the
/// normalized dot product to ~1e-6 degrees.
pub fn average_angular_error(flow: &FlowField, truth: &FlowField) -> Result<AngularError> {
    if flow.len() != truth.len() {
        return Err(Error::CountMismatch {
            context: "angular error flow frames".to_string(),
            expected: truth.len(),
            got: flow.len(),
        });
    }
    let mut per_frame_mean = Vec::with_capacity(flow.len());
    let mut per_frame_map = Vec::with_capacity(flow.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in flow.frames().iter().zip(truth.frames()) {
        let (map, sum, n) = angular_error_frame(a, b)?;
        per_frame_mean.push(if n > 0 { Some(sum / n as f64) } else { None });
        per_frame_map.push(map);
        total += sum;
        count += n;
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(AngularError {
        mean_degrees: total / count as f64,
        per_frame_mean,
        per_frame_map,
    })
}

fn angular_error_frame(flow: &FlowFrame, truth: &FlowFrame) -> Result<(Plane, f64, usize)> {
    if flow.width() != truth.width() || flow.height() != truth.height() {
        return Err(Error::DimensionMismatch {
            context: "angular error flow frames".to_string(),
            expected_w: truth.width(),
            expected_h: truth.height(),
            got_w: flow.width(),
            got_h: flow.height(),
        });
    }
    let (w, h) = (flow.width(), flow.height());
    let mut map = Plane::new(w, h);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..w * h {
        if !(flow.is_valid(i) && truth.is_valid(i)) {
            continue;
        }
        let (u1, u2) = (flow.u().data()[i], flow.v().data()[i]);
        let (v1, v2) = (truth.u().data()[i], truth.v().data()[i]);
        // Cross and dot of the space-time directions (u1, u2, 1), (v1, v2, 1).
        let cx = u2 - v2;
        let cy = v1 - u1;
        let cz = u1 * v2 - u2 * v1;
        let cross = (cx * cx + cy * cy + cz * cz).sqrt();
        let dot = u1 * v1 + u2 * v2 + 1.0;
        let degrees = cross.atan2(dot).to_degrees();
        map.data_mut()[i] = degrees;
        sum += degrees;
        count += 1;
    }
    Ok((map, sum, count))
}

/// Per-frame metric curves for one model, with degenerate frames skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCurve {
    /// AUC per frame; `None` where the fixation mask was all true or all
    /// false.
    pub auc: Vec<Option<f64>>,
    /// NSS per frame; `None` where the map was constant or nothing was
    /// fixated.
    pub nss: Vec<Option<f64>>,
    /// Means over the scored (non-`None`) frames.
    pub mean_auc: Option<f64>,
    pub mean_nss: Option<f64>,
    pub skipped_auc: usize,
    pub skipped_nss: usize,
}

/// Scores one model's per-frame saliency maps against the fixation matrix.
/// Map `k` is scored against matrix frame `k`; counts must agree.
pub fn score_model(maps: &[SaliencyMap], matrix: &FixationMatrix) -> Result<ScoreCurve> {
    if maps.len() != matrix.frame_count() {
        return Err(Error::CountMismatch {
            context: "score frames".to_string(),
            expected: matrix.frame_count(),
            got: maps.len(),
        });
    }
    for map in maps {
        if map.plane().width() != matrix.width() || map.plane().height() != matrix.height() {
            return Err(Error::DimensionMismatch {
                context: "score maps".to_string(),
                expected_w: matrix.width(),
                expected_h: matrix.height(),
                got_w: map.plane().width(),
                got_h: map.plane().height(),
            });
        }
    }
    let scored: Vec<(Option<f64>, Option<f64>)> = maps
        .par_iter()
        .enumerate()
        .map(|(k, map)| -> Result<(Option<f64>, Option<f64>)> {
            let mask = matrix.frame(k);
            let frame_auc = match auc(map, mask) {
                Ok(a) => Some(a),
                Err(Error::UndefinedClassifier { .. }) => None,
                Err(e) => return Err(e),
            };
            let positions = matrix.positions(k);
            let frame_nss = if positions.is_empty() {
                None
            } else {
                match nss(map, &positions) {
                    Ok(s) => Some(s),
                    Err(Error::NssUndefined) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok((frame_auc, frame_nss))
        })
        .collect::<Result<_>>()?;

    let auc_curve: Vec<Option<f64>> = scored.iter().map(|s| s.0).collect();
    let nss_curve: Vec<Option<f64>> = scored.iter().map(|s| s.1).collect();
    let mean = |curve: &[Option<f64>]| {
        let values: Vec<f64> = curve.iter().flatten().copied().collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    Ok(ScoreCurve {
        mean_auc: mean(&auc_curve),
        mean_nss: mean(&nss_curve),
        skipped_auc: auc_curve.iter().filter(|v| v.is_none()).count(),
        skipped_nss: nss_curve.iter().filter(|v| v.is_none()).count(),
        auc: auc_curve,
        nss: nss_curve,
    })
}

/// Scores several named models against one fixation matrix.
pub fn score_models(
    models: &[(&str, &[SaliencyMap])],
    matrix: &FixationMatrix,
) -> Result<Vec<(String, ScoreCurve)>> {
    models
        .iter()
        .map(|(name, maps)| Ok((name.to_string(), score_model(maps, matrix)?)))
        .collect()
}
