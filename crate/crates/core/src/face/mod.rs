//! Face detection, alignment and embedding.
//!
//! Detectors and embedders are pluggable backends. A deterministic synthetic
//! pair ships in-crate. Neural models plug in by implementing
//! [`DetectorBackend`] and [`EmbedderBackend`].

mod align;
mod cache;
mod detect;
mod embed;
mod frames;
mod nms;

pub use align::{align_face, estimate_similarity_transform, warp_similarity, AlignmentTemplate, SimilarityTransform};
pub use cache::{read_detections, write_detections, group_by_frame};
pub use detect::{detect_faces, BackendConfig, BackendKind, DetectorBackend, Frame, SyntheticDetector};
pub use embed::{
    embed_face, l2_normalize, observation_features, EmbedderBackend, EmbeddingVector, ImageEmbedder, ObservationEmbedder, SyntheticEmbedder,
    EMBEDDING_DIM,
};
pub use frames::{FrameStore, PLANTS_FILE, TIMESTAMPS_FILE};
pub use nms::{iou, nms};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned box `(x1, y1, x2, y2)` in pixels with `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::Contract(format!("box corners out of order: ({x1}, {y1}, {x2}, {y2})")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// One detected face. Landmarks are ordered left eye, right eye, nose tip,
/// left mouth corner, right mouth corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObservation")]
pub struct FaceObservation {
    pub frame_index: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub landmarks: [Point; 5],
    pub score: f64,
}

#[derive(Deserialize)]
struct RawObservation {
    frame_index: usize,
    #[serde(rename = "box")]
    bbox: BBox,
    landmarks: [Point; 5],
    score: f64,
}

impl TryFrom<RawObservation> for FaceObservation {
    type Error = Error;

    fn try_from(r: RawObservation) -> Result<Self> {
        FaceObservation::new(r.frame_index, r.bbox, r.landmarks, r.score)
    }
}

impl FaceObservation {
    pub fn new(frame_index: usize, bbox: BBox, landmarks: [Point; 5], score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Contract(format!("detection score {score} outside [0, 1]")));
        }
        Ok(Self {
            frame_index,
            bbox,
            landmarks,
            score,
        })
    }
}

/// Midpoint of the detection box; the anchor used for gaze assignment.
pub fn face_center(obs: &FaceObservation) -> Point {
    obs.bbox.center()
}
