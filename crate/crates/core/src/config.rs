//! Per-session configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::StudentId;
use crate::error::{Error, Result};
use crate::face::BackendConfig;
use crate::gaze::{FrameSize, DEFAULT_FRAME_HEIGHT, DEFAULT_FRAME_WIDTH, DEFAULT_GAZE_HZ};

/// Artifact locations. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionPaths {
    pub frames: PathBuf,
    pub gaze: PathBuf,
    pub detections: PathBuf,
    pub labels: PathBuf,
    pub truth: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for SessionPaths {
    fn default() -> Self {
        Self {
            frames: "frames".into(),
            gaze: "gaze.jsonl".into(),
            detections: "detections.jsonl".into(),
            labels: "labels.csv".into(),
            truth: "truth.csv".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// `"default"` or a path to a grid TOML file.
    pub grid: String,
    pub folds: usize,
    pub seed: u64,
    /// Labels are drawn from this minute of the recording.
    pub label_minute: u32,
    pub labels_per_student: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            grid: "default".into(),
            folds: 5,
            seed: 0,
            label_minute: 1,
            labels_per_student: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub classroom_id: String,
    pub roster: Vec<StudentId>,
    pub frame_width: u32,
    pub frame_height: u32,
    pub gaze_hz: u32,
    /// Maximum gaze/frame timestamp gap; half the frame interval when unset.
    pub sync_tolerance_us: Option<i64>,
    /// L2-normalize embeddings before classification.
    pub normalize: bool,
    pub max_distance_px: Option<f64>,
    pub paths: SessionPaths,
    pub detector: BackendConfig,
    pub embedder: BackendConfig,
    pub training: TrainingConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            classroom_id: "classroom".into(),
            roster: Vec::new(),
            frame_width: DEFAULT_FRAME_WIDTH,
            frame_height: DEFAULT_FRAME_HEIGHT,
            gaze_hz: DEFAULT_GAZE_HZ,
            sync_tolerance_us: None,
            normalize: true,
            max_distance_px: None,
            paths: SessionPaths::default(),
            detector: BackendConfig::default(),
            embedder: BackendConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Load and resolve relative paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for f in [
            &mut p.frames,
            &mut p.gaze,
            &mut p.detections,
            &mut p.labels,
            &mut p.truth,
            &mut p.models,
            &mut p.reports,
        ] {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_width == 0 || self.frame_height == 0 || self.gaze_hz == 0 {
            return Err(Error::Config("frame size and gaze_hz must be positive".into()));
        }
        if let Some(m) = self.max_distance_px {
            if m.is_nan() || m < 0.0 {
                return Err(Error::Config(format!("max_distance_px {m} must be non-negative")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.roster.iter().find(|s| !seen.insert(*s)) {
            return Err(Error::Config(format!("student {dup} listed twice in roster")));
        }
        if self.training.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.training.folds)));
        }
        self.detector.validate()?;
        self.embedder.validate()
    }

    pub fn frame_size(&self) -> FrameSize {
        FrameSize {
            width: self.frame_width,
            height: self.frame_height,
        }
    }
}
