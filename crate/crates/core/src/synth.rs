//! Synthetic classrooms with known ground truth.
//!
//! A session seats students in a fixed layout, sways the scene slightly to
//! mimic head motion, lets the teacher dwell on one student at a time, and
//! emits the same artifacts a real recording would produce downstream of the
//! neural models: gaze samples, frame timestamps, planted face detections and
//! identity-conditioned embeddings. Every random draw comes from a seeded
//! stream, and draws are made whether or not they end up used, so changing
//! one knob (say, occlusion) leaves all other randomness untouched.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionRecord, Status};
use crate::classify::StudentId;
use crate::error::{Error, Result};
use crate::config::SessionConfig;
use crate::eval::{write_truth, TruthRow};
use crate::face::{AlignmentTemplate, BBox, EmbeddingVector, FaceObservation, ObservationEmbedder, Point, EMBEDDING_DIM, PLANTS_FILE, TIMESTAMPS_FILE};
use crate::gaze::{default_tolerance_us, sync_to_frames, write_frame_timestamps, write_gaze_file, EyeSample, FrameSize, GazeSample};
use crate::labels::{CropIndex, LabelRecord};
use crate::rng;

pub const SPEC_FILE: &str = "synthetic.toml";
pub const MICROS_PER_MINUTE: i64 = 60_000_000;

const EYE_HALF_DISPARITY_PX: f64 = 1.0;
const JITTER_PX: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Conventional rows facing the front.
    Rows,
    /// Desks along three sides of the room.
    UShape,
    /// A handful of students close to the teacher.
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClassroomSpec {
    #[serde(default = "default_classroom")]
    pub classroom_id: String,
    pub n_students: usize,
    #[serde(default = "default_layout")]
    pub layout: Layout,
    /// Probability that a face goes undetected in a given frame.
    #[serde(default)]
    pub occlusion_rate: f64,
    /// Standard deviation of the gaze error, per axis.
    #[serde(default)]
    pub gaze_noise_px: f64,
    /// Norm of the identity component of each embedding.
    #[serde(default = "default_separation")]
    pub embedding_cluster_separation: f64,
    /// Expected norm of the per-crop noise component.
    #[serde(default = "one")]
    pub embedding_noise: f64,
    #[serde(default = "default_frames")]
    pub n_frames: usize,
    #[serde(default = "default_interval")]
    pub frame_interval_us: i64,
    #[serde(default = "default_hz")]
    pub gaze_hz: u32,
    /// Probability that a gaze sample loses both eyes; the same rate again loses one eye.
    #[serde(default = "default_dropout")]
    pub gaze_dropout_rate: f64,
    /// Zero-based indices of students who are never detected.
    #[serde(default)]
    pub always_occluded: Vec<usize>,
    /// Inclusive range of frames the teacher dwells on one student.
    #[serde(default = "default_dwell")]
    pub dwell_frames: [usize; 2],
    #[serde(default)]
    pub seed: u64,
}

fn default_classroom() -> String {
    "synthetic".into()
}

fn default_layout() -> Layout {
    Layout::Rows
}

fn default_separation() -> f64 {
    4.0
}

fn one() -> f64 {
    1.0
}

fn default_frames() -> usize {
    1500
}

fn default_interval() -> i64 {
    80_000
}

fn default_hz() -> u32 {
    50
}

fn default_dropout() -> f64 {
    0.02
}

fn default_dwell() -> [usize; 2] {
    [5, 40]
}

impl SynthClassroomSpec {
    pub fn new(n_students: usize, seed: u64) -> Self {
        let mut s: Self = toml::from_str(&format!("n_students = {n_students}")).expect("defaults parse");
        s.seed = seed;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_students < 2 {
            return bad(format!("need at least 2 students, got {}", self.n_students));
        }
        for (name, v) in [("occlusion_rate", self.occlusion_rate), ("gaze_dropout_rate", self.gaze_dropout_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.gaze_noise_px >= 0.0 && self.gaze_noise_px.is_finite()) {
            return bad(format!("gaze_noise_px must be non-negative, got {}", self.gaze_noise_px));
        }
        if !(self.embedding_cluster_separation > 0.0 && self.embedding_cluster_separation.is_finite()) {
            return bad("embedding_cluster_separation must be positive".into());
        }
        if !(self.embedding_noise >= 0.0 && self.embedding_noise.is_finite()) {
            return bad("embedding_noise must be non-negative".into());
        }
        if self.n_frames == 0 || self.frame_interval_us <= 0 || self.gaze_hz == 0 {
            return bad("n_frames, frame_interval_us and gaze_hz must be positive".into());
        }
        if let Some(s) = self.always_occluded.iter().find(|&&s| s >= self.n_students) {
            return bad(format!("always_occluded student {s} out of range"));
        }
        let [lo, hi] = self.dwell_frames;
        if lo == 0 || lo > hi {
            return bad(format!("dwell_frames {lo}..{hi} is not a valid range"));
        }
        Ok(())
    }

    pub fn roster(&self) -> Vec<StudentId> {
        (0..self.n_students).map(student_id).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s: Self = toml::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        s.validate()?;
        Ok(s)
    }
}

pub fn student_id(index: usize) -> StudentId {
    StudentId::new(format!("S{:02}", index + 1))
}

/// A planted detection together with who it is.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFace {
    pub obs: FaceObservation,
    pub identity: StudentId,
}

#[derive(Serialize, Deserialize)]
struct PlantLine {
    frame_index: usize,
    #[serde(rename = "box")]
    bbox: BBox,
    landmarks: [Point; 5],
    score: f64,
    identity: StudentId,
}

pub fn write_plants(path: impl AsRef<Path>, plants: &[PlantedFace]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for p in plants {
        serde_json::to_writer(
            &mut out,
            &PlantLine {
                frame_index: p.obs.frame_index,
                bbox: p.obs.bbox,
                landmarks: p.obs.landmarks,
                score: p.obs.score,
                identity: p.identity.clone(),
            },
        )?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_plants(path: impl AsRef<Path>) -> Result<Vec<PlantedFace>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            message,
        };
        let p: PlantLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obs = FaceObservation::new(p.frame_index, p.bbox, p.landmarks, p.score).map_err(|e| parse_err(e.to_string()))?;
        out.push(PlantedFace { obs, identity: p.identity });
    }
    Ok(out)
}

/// Seat centers and face heights in pixels.
fn seats(layout: Layout, n: usize) -> Vec<(f64, f64, f64)> {
    let spread = |k: usize, lo: f64, hi: f64| -> Vec<f64> {
        if k == 1 {
            vec![(lo + hi) / 2.0]
        } else {
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        }
    };
    match layout {
        Layout::Rows => {
            let rows = n.div_ceil(6);
            let cols = n.div_ceil(rows);
            let ys = spread(rows, 220.0, 860.0);
            let xs = spread(cols, 260.0, 1660.0);
            let cap = if rows > 1 { 0.8 * 640.0 / (rows - 1) as f64 } else { f64::INFINITY };
            (0..n)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    let depth = if rows == 1 { 1.0 } else { r as f64 / (rows - 1) as f64 };
                    (xs[c], ys[r], (60.0 + 50.0 * depth).min(cap))
                })
                .collect()
        }
        Layout::UShape => {
            let arm = n / 3;
            let base = n - 2 * arm;
            let h_arm = if arm > 1 { (0.8 * 600.0 / (arm - 1) as f64).min(80.0) } else { 80.0 };
            let h_base = if base > 1 { (0.8 * 960.0 / (base - 1) as f64).min(90.0) } else { 90.0 };
            let mut out = Vec::with_capacity(n);
            out.extend(spread(arm, 150.0, 750.0).into_iter().take(arm).map(|y| (240.0, y, h_arm)));
            out.extend(spread(base, 480.0, 1440.0).into_iter().map(|x| (x, 880.0, h_base)));
            out.extend(spread(arm, 750.0, 150.0).into_iter().take(arm).map(|y| (1680.0, y, h_arm)));
            out
        }
        Layout::Small => {
            let rows = if n <= 6 { 1 } else { 2 };
            let cols = n.div_ceil(rows);
            let ys = spread(rows, 420.0, 720.0);
            let xs = spread(cols, 400.0, 1520.0);
            let h = if cols > 1 { (0.8 * 1120.0 / (cols - 1) as f64).min(140.0) } else { 140.0 };
            (0..n).map(|i| (xs[i % cols], ys[i / cols], h)).collect()
        }
    }
}

fn face_at(frame: usize, cx: f64, cy: f64, h: f64, score: f64, template: &AlignmentTemplate) -> FaceObservation {
    let w = 0.8 * h;
    let bbox = BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0).expect("positive box");
    let size = template.crop_size as f64;
    let landmarks = template.points.map(|[px, py]| [bbox.x1 + px / size * w, bbox.y1 + py / size * h]);
    FaceObservation::new(frame, bbox, landmarks, score).expect("score in range")
}

#[derive(Debug, Clone)]
pub struct SynthSession {
    pub spec: SynthClassroomSpec,
    pub frame_timestamps: Vec<i64>,
    pub gaze: Vec<GazeSample>,
    /// Detections per frame, in student order.
    pub plants: Vec<PlantedFace>,
    /// Student the teacher looks at in each frame, visible or not.
    pub attended: Vec<usize>,
    /// Per-frame ground truth: the student under the frame's gaze point, or
    /// nobody when the frame has no gaze or that student went undetected.
    pub truth: Vec<TruthRow>,
}

pub fn generate_session(spec: &SynthClassroomSpec) -> Result<SynthSession> {
    spec.validate()?;
    let n = spec.n_students;
    let seed = spec.seed;
    let frame_ts: Vec<i64> = (0..spec.n_frames).map(|f| f as i64 * spec.frame_interval_us).collect();
    let template = AlignmentTemplate::default();
    let layout = seats(spec.layout, n);

    // Scene sway and per-face jitter.
    let mut r_jit = rng::stream(rng::derive(seed, 1));
    let mut r_score = rng::stream(rng::derive(seed, 7));
    let faces: Vec<Vec<FaceObservation>> = frame_ts
        .iter()
        .enumerate()
        .map(|(f, &t)| {
            let secs = t as f64 / 1e6;
            let dx = 60.0 * (TAU * secs / 17.0).sin();
            let dy = 25.0 * (TAU * secs / 11.0).sin();
            layout
                .iter()
                .map(|&(x, y, h)| {
                    let jx = r_jit.random_range(-JITTER_PX..=JITTER_PX);
                    let jy = r_jit.random_range(-JITTER_PX..=JITTER_PX);
                    let score = 0.6 + 0.39 * r_score.random::<f64>();
                    face_at(f, x + dx + jx, y + dy + jy, h, score, &template)
                })
                .collect()
        })
        .collect();

    // Teacher scan: dwell on one student, then move to a different one.
    let mut r_scan = rng::stream(rng::derive(seed, 2));
    let [lo, hi] = spec.dwell_frames;
    let mut attended = Vec::with_capacity(spec.n_frames);
    let mut cur = r_scan.random_range(0..n);
    let mut left = r_scan.random_range(lo..=hi);
    for _ in 0..spec.n_frames {
        if left == 0 {
            cur = (cur + r_scan.random_range(1..n)) % n;
            left = r_scan.random_range(lo..=hi);
        }
        attended.push(cur);
        left -= 1;
    }

    let mut r_occ = rng::stream(rng::derive(seed, 4));
    let visible: Vec<Vec<bool>> = (0..spec.n_frames)
        .map(|_| {
            (0..n)
                .map(|s| {
                    let u: f64 = r_occ.random();
                    !spec.always_occluded.contains(&s) && u >= spec.occlusion_rate
                })
                .collect()
        })
        .collect();

    let plants: Vec<PlantedFace> = faces
        .iter()
        .enumerate()
        .flat_map(|(f, row)| {
            let vis = &visible[f];
            row.iter().enumerate().filter(move |(s, _)| vis[*s]).map(|(s, obs)| PlantedFace {
                obs: obs.clone(),
                identity: student_id(s),
            })
        })
        .collect();

    // Gaze stream over the whole recording.
    let mut r_gaze = rng::stream(rng::derive(seed, 3));
    let step = 1_000_000 / spec.gaze_hz as i64;
    let duration = spec.n_frames as i64 * spec.frame_interval_us;
    let frame_of = |t: i64| (((t + spec.frame_interval_us / 2) / spec.frame_interval_us) as usize).min(spec.n_frames - 1);
    let mut gaze = Vec::new();
    let mut t = 0;
    while t < duration {
        let f = frame_of(t);
        let [cx, cy] = faces[f][attended[f]].bbox.center();
        let nx: f64 = r_gaze.sample(StandardNormal);
        let ny: f64 = r_gaze.sample(StandardNormal);
        let (gx, gy) = (cx + spec.gaze_noise_px * nx, cy + spec.gaze_noise_px * ny);
        let u: f64 = r_gaze.random();
        let side: bool = r_gaze.random();
        let left = EyeSample::valid(gx - EYE_HALF_DISPARITY_PX, gy);
        let right = EyeSample::valid(gx + EYE_HALF_DISPARITY_PX, gy);
        let d = spec.gaze_dropout_rate;
        let (l, r) = if u < d {
            (EyeSample::invalid(), EyeSample::invalid())
        } else if u < 2.0 * d {
            if side {
                (left, EyeSample::invalid())
            } else {
                (EyeSample::invalid(), right)
            }
        } else {
            (left, right)
        };
        gaze.push(GazeSample {
            timestamp_us: t,
            left: Some(l),
            right: Some(r),
        });
        t += step;
    }

    // Ground truth as an annotator would see it: the gaze dot drawn on the
    // frame, and whether a detected face sits under it.
    let tol = default_tolerance_us(&frame_ts, spec.frame_interval_us / 2);
    let sync = sync_to_frames(&gaze, &frame_ts, tol, FrameSize::default());
    let truth = sync
        .bindings
        .iter()
        .map(|b| {
            let student = b.sample_timestamp_us.and_then(|ts| {
                let s = attended[frame_of(ts)];
                visible[b.frame_index][s].then(|| student_id(s))
            });
            TruthRow {
                frame_index: b.frame_index,
                student,
            }
        })
        .collect();

    Ok(SynthSession {
        spec: spec.clone(),
        frame_timestamps: frame_ts,
        gaze,
        plants,
        attended,
        truth,
    })
}

/// Frames whose timestamp falls in the given one-based minute.
pub fn minute_frames(frame_timestamps: &[i64], minute: u32) -> Vec<usize> {
    let lo = (minute as i64 - 1) * MICROS_PER_MINUTE;
    let hi = minute as i64 * MICROS_PER_MINUTE;
    (0..frame_timestamps.len())
        .filter(|&i| (lo..hi).contains(&frame_timestamps[i]))
        .collect()
}

impl SynthSession {
    pub fn roster(&self) -> Vec<StudentId> {
        self.spec.roster()
    }

    pub fn detections(&self) -> Vec<FaceObservation> {
        self.plants.iter().map(|p| p.obs.clone()).collect()
    }

    pub fn embedder(&self) -> PlantedEmbedder {
        PlantedEmbedder::new(&self.spec, &self.plants)
    }

    pub fn truth_for_minute(&self, minute: u32) -> Vec<TruthRow> {
        let frames = minute_frames(&self.frame_timestamps, minute);
        frames.into_iter().map(|f| self.truth[f].clone()).collect()
    }

    /// `timestamps.txt`, `plants.jsonl` and the generating spec.
    pub fn write_frames_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_frame_timestamps(dir.join(TIMESTAMPS_FILE), &self.frame_timestamps)?;
        write_plants(dir.join(PLANTS_FILE), &self.plants)?;
        let spec_path = dir.join(SPEC_FILE);
        fs::write(&spec_path, self.spec.to_toml()).map_err(|e| Error::io(&spec_path, e))
    }
}

/// Config file written next to a generated session.
pub const SESSION_FILE: &str = "session.toml";

impl SynthSession {
    /// Lay out a complete session under `out`: frames directory, gaze file,
    /// second-minute ground truth and a session config pointing at them.
    pub fn write_session(&self, out: impl AsRef<Path>) -> Result<SessionConfig> {
        let out = out.as_ref();
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut cfg = SessionConfig {
            classroom_id: self.spec.classroom_id.clone(),
            roster: self.roster(),
            gaze_hz: self.spec.gaze_hz,
            ..SessionConfig::default()
        };
        cfg.training.seed = self.spec.seed;
        cfg.detector.seed = self.spec.seed;
        cfg.embedder.seed = self.spec.seed;
        cfg.embedder.model_id = "planted".into();
        self.write_frames_dir(out.join(&cfg.paths.frames))?;
        write_gaze_file(out.join(&cfg.paths.gaze), &self.gaze)?;
        write_truth(out.join(&cfg.paths.truth), &self.truth_for_minute(2))?;
        let p = out.join(SESSION_FILE);
        fs::write(&p, cfg.to_toml()).map_err(|e| Error::io(&p, e))?;
        cfg.resolve_paths(out);
        Ok(cfg)
    }
}

/// Embeddings for planted faces: the student's unit-norm cluster center
/// scaled by the separation, plus Gaussian noise of the configured expected
/// norm. Identity is recovered from the exact box of the plant.
#[derive(Debug, Clone)]
pub struct PlantedEmbedder {
    centers: Vec<Vec<f64>>,
    separation: f64,
    noise: f64,
    seed: u64,
    identity: HashMap<(usize, [u64; 4]), usize>,
}

fn box_key(obs: &FaceObservation) -> (usize, [u64; 4]) {
    let b = obs.bbox;
    (obs.frame_index, [b.x1.to_bits(), b.y1.to_bits(), b.x2.to_bits(), b.y2.to_bits()])
}

impl PlantedEmbedder {
    pub fn new(spec: &SynthClassroomSpec, plants: &[PlantedFace]) -> Self {
        let mut r = rng::stream(rng::derive(spec.seed, 5));
        let centers = (0..spec.n_students)
            .map(|_| {
                let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| r.sample(StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let roster = spec.roster();
        let identity = plants
            .iter()
            .filter_map(|p| roster.iter().position(|s| *s == p.identity).map(|s| (box_key(&p.obs), s)))
            .collect();
        Self {
            centers,
            separation: spec.embedding_cluster_separation,
            noise: spec.embedding_noise,
            seed: rng::derive(spec.seed, 6),
            identity,
        }
    }

    /// Rebuild from a frames directory written by [`SynthSession::write_frames_dir`].
    pub fn from_frames_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec = SynthClassroomSpec::load(dir.join(SPEC_FILE))?;
        let plants = read_plants(dir.join(PLANTS_FILE))?;
        Ok(Self::new(&spec, &plants))
    }

    pub fn embedding(&self, frame: usize, student: usize) -> Vec<f64> {
        let mut r = rng::stream(rng::derive(self.seed, ((frame as u64) << 16) | student as u64));
        let scale = self.noise / (EMBEDDING_DIM as f64).sqrt();
        self.centers[student]
            .iter()
            .map(|c| {
                let z: f64 = r.sample(StandardNormal);
                self.separation * c + scale * z
            })
            .collect()
    }
}

impl ObservationEmbedder for PlantedEmbedder {
    fn id(&self) -> &str {
        "planted"
    }

    fn embed_observation(&self, obs: &FaceObservation) -> Result<EmbeddingVector> {
        let s = self
            .identity
            .get(&box_key(obs))
            .ok_or_else(|| Error::Backend(format!("no planted face at {:?} in frame {}", obs.bbox, obs.frame_index)))?;
        EmbeddingVector::new(self.embedding(obs.frame_index, *s))
    }
}

/// Stand-in for a human annotator: label up to `per_student` randomly chosen
/// crops of each student among detections in the given minute.
pub fn scripted_labels(
    plants: &[PlantedFace],
    detections: &[FaceObservation],
    frame_timestamps: &[i64],
    minute: u32,
    per_student: usize,
    annotator: &str,
    seed: u64,
) -> Vec<LabelRecord> {
    let who: HashMap<(usize, [u64; 4]), &StudentId> = plants.iter().map(|p| (box_key(&p.obs), &p.identity)).collect();
    let frames: std::collections::BTreeSet<usize> = minute_frames(frame_timestamps, minute).into_iter().collect();
    let crops = CropIndex::new(detections);
    let mut by_student: BTreeMap<&StudentId, Vec<&crate::labels::Crop>> = BTreeMap::new();
    for c in crops.iter().filter(|c| frames.contains(&c.face.frame_index)) {
        if let Some(s) = who.get(&box_key(&c.face)) {
            by_student.entry(s).or_default().push(c);
        }
    }
    let mut r = rng::stream(seed);
    let mut out = Vec::new();
    for (s, mut cs) in by_student {
        cs.shuffle(&mut r);
        out.extend(cs.into_iter().take(per_student).map(|c| LabelRecord::new(c, s.clone(), annotator, 0)));
    }
    out.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));
    out
}

/// Fraction of mapped frames with a known attended student that were
/// predicted correctly. Every truth frame must have a record.
pub fn oracle_accuracy(truth: &[TruthRow], records: &[AttentionRecord]) -> Result<f64> {
    let by_frame: BTreeMap<usize, &AttentionRecord> = records.iter().map(|r| (r.frame_index, r)).collect();
    let mut total = 0usize;
    let mut correct = 0usize;
    for t in truth {
        let rec = by_frame
            .get(&t.frame_index)
            .ok_or_else(|| Error::Session(format!("truth frame {} has no attention record", t.frame_index)))?;
        let Some(s) = &t.student else { continue };
        if rec.status != Status::Mapped {
            continue;
        }
        total += 1;
        if rec.predicted.as_ref() == Some(s) {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::Contract("no mapped frames with a known attended student".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::nearest_face;
    use crate::face::group_by_frame;
    use crate::gaze::resolve_gaze;

    fn small(seed: u64) -> SynthClassroomSpec {
        let mut s = SynthClassroomSpec::new(6, seed);
        s.n_frames = 400;
        s
    }

    #[test]
    fn spec_defaults_and_validation() {
        let s = SynthClassroomSpec::new(8, 1);
        assert_eq!(s.n_frames, 1500);
        assert_eq!(s.frame_interval_us, 80_000);
        s.validate().unwrap();
        let mut bad = s.clone();
        bad.occlusion_rate = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.always_occluded = vec![8];
        assert!(bad.validate().is_err());
        assert!(SynthClassroomSpec::new(1, 0).validate().is_err());
        let back: SynthClassroomSpec = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn seats_stay_in_frame_and_apart() {
        for layout in [Layout::Rows, Layout::UShape, Layout::Small] {
            for n in 2..=30 {
                let ss = seats(layout, n);
                assert_eq!(ss.len(), n);
                for &(x, y, h) in &ss {
                    assert!(x - h > 0.0 && x + h < 1920.0 && y - h > 0.0 && y + h < 1080.0, "{layout:?} {n}");
                }
                for i in 0..n {
                    for j in 0..i {
                        let d = (ss[i].0 - ss[j].0).hypot(ss[i].1 - ss[j].1);
                        let h = ss[i].2.max(ss[j].2);
                        assert!(d > 1.2 * h, "{layout:?} n={n}: seats {i},{j} are {d}px apart");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_noise_nearest_face_is_truth() {
        let s = small(3);
        let sess = generate_session(&s).unwrap();
        let by_frame = group_by_frame(&sess.detections());
        let tol = default_tolerance_us(&sess.frame_timestamps, 40_000);
        let sync = sync_to_frames(&sess.gaze, &sess.frame_timestamps, tol, FrameSize::default());
        let mut checked = 0;
        for b in &sync.bindings {
            let truth = &sess.truth[b.frame_index];
            let (Some(g), Some(want)) = (b.gaze, &truth.student) else { continue };
            let faces = &by_frame[&b.frame_index];
            let (i, _) = nearest_face(&g, faces).unwrap();
            let got = sess.plants.iter().find(|p| p.obs == faces[i]).unwrap();
            assert_eq!(&got.identity, want);
            checked += 1;
        }
        assert!(checked > 350);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_session(&small(5)).unwrap();
        let b = generate_session(&small(5)).unwrap();
        assert_eq!(a.gaze, b.gaze);
        assert_eq!(a.plants, b.plants);
        assert_eq!(a.truth, b.truth);
        let c = generate_session(&small(6)).unwrap();
        assert_ne!(a.gaze, c.gaze);
    }

    #[test]
    fn fully_occluded_student_never_planted() {
        let mut s = small(2);
        s.always_occluded = vec![3];
        let sess = generate_session(&s).unwrap();
        assert!(sess.plants.iter().all(|p| p.identity != student_id(3)));
        assert!(sess.truth.iter().all(|t| t.student != Some(student_id(3))));
        assert!(sess.attended.contains(&3));
    }

    #[test]
    fn occlusion_rate_thins_detections() {
        let mut s = small(4);
        s.occlusion_rate = 0.25;
        let sess = generate_session(&s).unwrap();
        let frac = sess.plants.len() as f64 / (6.0 * 400.0);
        assert!((frac - 0.75).abs() < 0.05, "{frac}");
    }

    #[test]
    fn gaze_resolves_near_attended_face() {
        let mut s = small(8);
        s.gaze_dropout_rate = 0.0;
        let sess = generate_session(&s).unwrap();
        assert_eq!(sess.gaze.len(), 400 * 4);
        let g = resolve_gaze(&sess.gaze[8]).unwrap();
        let f = 2;
        let faces = &group_by_frame(&sess.detections())[&f];
        let target = faces.iter().find(|o| sess.plants.iter().any(|p| p.obs == **o && p.identity == student_id(sess.attended[f]))).unwrap();
        let [cx, cy] = target.bbox.center();
        assert!((g.x - cx).abs() < 1e-9 && (g.y - cy).abs() < 1e-9);
    }

    #[test]
    fn embeddings_cluster_by_identity() {
        let sess = generate_session(&small(9)).unwrap();
        let emb = sess.embedder();
        let a0 = emb.embedding(10, 0);
        let a1 = emb.embedding(11, 0);
        let b0 = emb.embedding(10, 1);
        let cos = |x: &[f64], y: &[f64]| {
            let d: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            d / (x.iter().map(|a| a * a).sum::<f64>().sqrt() * y.iter().map(|a| a * a).sum::<f64>().sqrt())
        };
        assert!(cos(&a0, &a1) > 0.85);
        assert!(cos(&a0, &b0) < 0.3);
        let p = &sess.plants[0];
        let v = emb.embed_observation(&p.obs).unwrap();
        assert_eq!(v.as_slice().len(), EMBEDDING_DIM);
    }

    #[test]
    fn frames_dir_round_trip() {
        let sess = generate_session(&small(10)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        sess.write_frames_dir(dir.path()).unwrap();
        assert_eq!(read_plants(dir.path().join(PLANTS_FILE)).unwrap(), sess.plants);
        let emb = PlantedEmbedder::from_frames_dir(dir.path()).unwrap();
        let p = &sess.plants[17];
        assert_eq!(emb.embed_observation(&p.obs).unwrap(), sess.embedder().embed_observation(&p.obs).unwrap());
    }

    #[test]
    fn scripted_labels_pick_minute_one() {
        let mut s = SynthClassroomSpec::new(4, 11);
        s.n_frames = 900;
        let sess = generate_session(&s).unwrap();
        let labels = scripted_labels(&sess.plants, &sess.detections(), &sess.frame_timestamps, 1, 30, "script", 1);
        assert_eq!(labels.len(), 120);
        assert!(labels.iter().all(|l| l.frame_index < 750));
        let again = scripted_labels(&sess.plants, &sess.detections(), &sess.frame_timestamps, 1, 30, "script", 1);
        assert_eq!(labels, again);
    }

    #[test]
    fn oracle_accuracy_cases() {
        let truth: Vec<TruthRow> = (0..10).map(|f| TruthRow { frame_index: f, student: Some(student_id(0)) }).collect();
        let rec = |f: usize, s: usize| AttentionRecord {
            frame_index: f,
            status: Status::Mapped,
            gaze: None,
            chosen_face: None,
            distance_px: Some(0.0),
            predicted: Some(student_id(s)),
            error: None,
        };
        let right: Vec<_> = (0..10).map(|f| rec(f, 0)).collect();
        let wrong: Vec<_> = (0..10).map(|f| rec(f, 1)).collect();
        let half: Vec<_> = (0..10).map(|f| rec(f, f % 2)).collect();
        assert_eq!(oracle_accuracy(&truth, &right).unwrap(), 1.0);
        assert_eq!(oracle_accuracy(&truth, &wrong).unwrap(), 0.0);
        assert_eq!(oracle_accuracy(&truth, &half).unwrap(), 0.5);
        assert!(oracle_accuracy(&truth, &right[..5]).is_err());
    }
}
