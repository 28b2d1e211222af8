//! Eye-tracker gaze ingest.
//!
//! Gaze arrives as binocular samples in scene-camera pixel coordinates. Each
//! sample is reduced to a single point: the mean of both eyes when both are
//! valid, the single valid eye otherwise, and nothing when neither eye is
//! valid. Points are then bound to video frames by nearest timestamp.

mod parse;
mod sync;

pub use parse::{parse_frame_timestamps, parse_gaze_file, parse_gaze_str, write_frame_timestamps, write_gaze_file};
pub use sync::{default_tolerance_us, sync_to_frames, FrameGazeBinding, SyncOutput};

use serde::{Deserialize, Serialize};

/// Nominal sampling rate of the head-mounted tracker.
pub const DEFAULT_GAZE_HZ: u32 = 50;
/// Scene camera resolution.
pub const DEFAULT_FRAME_WIDTH: u32 = 1920;
pub const DEFAULT_FRAME_HEIGHT: u32 = 1080;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeSample {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "v")]
    pub valid: bool,
}

impl EyeSample {
    pub fn valid(x: f64, y: f64) -> Self {
        Self { x, y, valid: true }
    }

    pub fn invalid() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            valid: false,
        }
    }
}

/// One binocular sample. Both eyes may be absent or invalid; the timestamp is always present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    #[serde(rename = "t")]
    pub timestamp_us: i64,
    #[serde(rename = "l")]
    pub left: Option<EyeSample>,
    #[serde(rename = "r")]
    pub right: Option<EyeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BothEyesAveraged,
    LeftOnly,
    RightOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: f64,
    pub y: f64,
    pub provenance: Provenance,
}

impl GazePoint {
    pub fn is_within(&self, frame: FrameSize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < frame.width as f64 && self.y < frame.height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl Default for FrameSize {
    fn default() -> Self {
        Self {
            width: DEFAULT_FRAME_WIDTH,
            height: DEFAULT_FRAME_HEIGHT,
        }
    }
}

fn valid_eye(eye: Option<EyeSample>) -> Option<EyeSample> {
    eye.filter(|e| e.valid)
}

/// Reduce a binocular sample to a single scene point.
///
/// Out-of-frame points are returned unchanged; callers check
/// [`GazePoint::is_within`] and count them.
pub fn resolve_gaze(sample: &GazeSample) -> Option<GazePoint> {
    match (valid_eye(sample.left), valid_eye(sample.right)) {
        (Some(l), Some(r)) => Some(GazePoint {
            x: (l.x + r.x) / 2.0,
            y: (l.y + r.y) / 2.0,
            provenance: Provenance::BothEyesAveraged,
        }),
        (Some(l), None) => Some(GazePoint {
            x: l.x,
            y: l.y,
            provenance: Provenance::LeftOnly,
        }),
        (None, Some(r)) => Some(GazePoint {
            x: r.x,
            y: r.y,
            provenance: Provenance::RightOnly,
        }),
        (None, None) => None,
    }
}
