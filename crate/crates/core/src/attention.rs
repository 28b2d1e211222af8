//! Attributes each frame's gaze point to the nearest detected face and
//! classifies that face.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{StudentId, TrainedModel};
use crate::error::{Error, Result};
use crate::face::{face_center, observation_features, FaceObservation, ObservationEmbedder};
use crate::gaze::{FrameGazeBinding, GazePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Mapped,
    SkippedNoGaze,
    SkippedNoFace,
    SkippedThreshold,
    /// Embedding or classification failed for this frame.
    Error,
}

impl Status {
    pub const ALL: [Status; 5] = [
        Status::Mapped,
        Status::SkippedNoGaze,
        Status::SkippedNoFace,
        Status::SkippedThreshold,
        Status::Error,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Status::Mapped => "mapped",
            Status::SkippedNoGaze => "skipped-no-gaze",
            Status::SkippedNoFace => "skipped-no-face",
            Status::SkippedThreshold => "skipped-threshold",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub frame_index: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<GazePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_face: Option<FaceObservation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<StudentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AttentionRecord {
    fn skipped(frame_index: usize, status: Status, gaze: Option<GazePoint>) -> Self {
        Self {
            frame_index,
            status,
            gaze,
            chosen_face: None,
            distance_px: None,
            predicted: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    /// Gaze farther than this from every face center maps to nobody. `None` never skips.
    pub max_distance_px: Option<f64>,
    pub normalize: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            max_distance_px: None,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub n_frames: usize,
    pub by_status: BTreeMap<Status, usize>,
    pub by_student: BTreeMap<StudentId, usize>,
}

/// Index and distance of the face whose center is closest to `gaze`; the
/// lowest index wins ties. `None` for an empty slice.
pub fn nearest_face(gaze: &GazePoint, faces: &[FaceObservation]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in faces.iter().enumerate() {
        let [cx, cy] = face_center(f);
        let d = (gaze.x - cx).hypot(gaze.y - cy);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

pub fn map_frame(
    binding: &FrameGazeBinding,
    faces: &[FaceObservation],
    model: &TrainedModel,
    embedder: &dyn ObservationEmbedder,
    opts: &MapOptions,
) -> AttentionRecord {
    let frame = binding.frame_index;
    let Some(gaze) = binding.gaze else {
        return AttentionRecord::skipped(frame, Status::SkippedNoGaze, None);
    };
    let Some((i, d)) = nearest_face(&gaze, faces) else {
        return AttentionRecord::skipped(frame, Status::SkippedNoFace, Some(gaze));
    };
    let face = faces[i].clone();
    if opts.max_distance_px.is_some_and(|m| d > m) {
        let mut r = AttentionRecord::skipped(frame, Status::SkippedThreshold, Some(gaze));
        r.chosen_face = Some(face);
        r.distance_px = Some(d);
        return r;
    }
    let predicted = observation_features(embedder, &face, opts.normalize).and_then(|v| model.predict(&v));
    let (status, predicted, error) = match predicted {
        Ok(p) => (Status::Mapped, Some(p), None),
        Err(e) => (Status::Error, None, Some(e.to_string())),
    };
    AttentionRecord {
        frame_index: frame,
        status,
        gaze: Some(gaze),
        chosen_face: Some(face),
        distance_px: Some(d),
        predicted,
        error,
    }
}

/// Map every bound frame, in frame order. Detections for frames without a
/// binding are a session error raised before any mapping.
pub fn map_session(
    bindings: &[FrameGazeBinding],
    detections: &BTreeMap<usize, Vec<FaceObservation>>,
    model: &TrainedModel,
    embedder: &dyn ObservationEmbedder,
    opts: &MapOptions,
) -> Result<(Vec<AttentionRecord>, SessionSummary)> {
    let frames: BTreeSet<usize> = bindings.iter().map(|b| b.frame_index).collect();
    if frames.len() != bindings.len() {
        return Err(Error::Session("duplicate frame in gaze bindings".into()));
    }
    if let Some(f) = detections.keys().find(|f| !frames.contains(f)) {
        return Err(Error::Session(format!("detections reference frame {f}, which has no gaze binding")));
    }
    let mut order: Vec<&FrameGazeBinding> = bindings.iter().collect();
    order.sort_by_key(|b| b.frame_index);
    let records: Vec<AttentionRecord> = order
        .par_iter()
        .map(|b| {
            let faces = detections.get(&b.frame_index).map(Vec::as_slice).unwrap_or(&[]);
            map_frame(b, faces, model, embedder, opts)
        })
        .collect();
    let summary = summarize(&records);
    Ok((records, summary))
}

pub fn summarize(records: &[AttentionRecord]) -> SessionSummary {
    let mut by_status: BTreeMap<Status, usize> = Status::ALL.iter().map(|&s| (s, 0)).collect();
    let mut by_student = BTreeMap::new();
    for r in records {
        *by_status.entry(r.status).or_default() += 1;
        if let Some(p) = &r.predicted {
            *by_student.entry(p.clone()).or_default() += 1;
        }
    }
    SessionSummary {
        n_frames: records.len(),
        by_status,
        by_student,
    }
}

pub fn write_attention(path: impl AsRef<Path>, records: &[AttentionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_attention(path: impl AsRef<Path>) -> Result<Vec<AttentionRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_summary(path: impl AsRef<Path>, summary: &SessionSummary) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
