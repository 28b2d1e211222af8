use std::collections::BTreeMap;
use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{nms, read_detections, FaceObservation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Neural,
    Synthetic,
}

/// Detector or embedder backend settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend_kind: BackendKind,
    /// Reported in evaluation output, e.g. `ResNet50@WebFace600K`.
    pub model_id: String,
    pub model_path: Option<PathBuf>,
    pub score_threshold: f64,
    pub nms_iou: f64,
    /// Square detector input edge; frames are letterboxed to it.
    pub input_size: u32,
    pub crop_size: u32,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            backend_kind: BackendKind::Synthetic,
            model_id: "synthetic".into(),
            model_path: None,
            score_threshold: 0.5,
            nms_iou: 0.4,
            input_size: 640,
            crop_size: 112,
            seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!("score_threshold {} outside [0, 1]", self.score_threshold)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::Config(format!("nms_iou {} outside (0, 1)", self.nms_iou)));
        }
        if self.input_size == 0 || self.crop_size == 0 {
            return Err(Error::Config("input_size and crop_size must be positive".into()));
        }
        if self.backend_kind == BackendKind::Neural && self.model_path.is_none() {
            return Err(Error::Config("neural backend needs model_path".into()));
        }
        Ok(())
    }
}

/// A decoded video frame. Synthetic detectors need only the index.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub image: Option<RgbImage>,
}

pub trait DetectorBackend: Send + Sync {
    fn config(&self) -> &BackendConfig;

    /// Raw candidates for one frame, before score filtering and suppression.
    fn candidates(&self, frame: &Frame) -> Result<Vec<FaceObservation>>;
}

/// Run a detector on one frame: drop low-confidence candidates, suppress
/// overlaps, and return the survivors by descending score.
pub fn detect_faces(backend: &dyn DetectorBackend, frame: &Frame) -> Result<Vec<FaceObservation>> {
    if let Some(img) = &frame.image {
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::Contract(format!("frame {} is empty", frame.index)));
        }
    }
    let cfg = backend.config();
    let candidates: Vec<FaceObservation> = backend
        .candidates(frame)?
        .into_iter()
        .filter(|c| c.score >= cfg.score_threshold)
        .collect();
    if let Some(c) = candidates.iter().find(|c| c.frame_index != frame.index) {
        return Err(Error::Backend(format!(
            "detector returned a face for frame {} while processing frame {}",
            c.frame_index, frame.index
        )));
    }
    Ok(nms(&candidates, cfg.nms_iou))
}

/// Echoes faces planted per frame.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    config: BackendConfig,
    plants: BTreeMap<usize, Vec<FaceObservation>>,
}

impl SyntheticDetector {
    pub fn new(config: BackendConfig, plants: impl IntoIterator<Item = FaceObservation>) -> Self {
        let mut map: BTreeMap<usize, Vec<FaceObservation>> = BTreeMap::new();
        for p in plants {
            map.entry(p.frame_index).or_default().push(p);
        }
        Self { config, plants: map }
    }

    /// Load plants from a line-delimited observation file; extra fields are ignored.
    pub fn from_file(config: BackendConfig, path: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self::new(config, read_detections(path.into())?))
    }
}

impl DetectorBackend for SyntheticDetector {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn candidates(&self, frame: &Frame) -> Result<Vec<FaceObservation>> {
        Ok(self.plants.get(&frame.index).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::BBox;

    fn plant(frame: usize, b: [f64; 4], score: f64) -> FaceObservation {
        FaceObservation::new(frame, BBox::try_from(b).unwrap(), [[0.0; 2]; 5], score).unwrap()
    }

    fn frame(index: usize) -> Frame {
        Frame { index, image: None }
    }

    #[test]
    fn echoes_a_single_plant() {
        let p = plant(3, [100.0, 100.0, 160.0, 180.0], 0.9);
        let det = SyntheticDetector::new(BackendConfig::default(), [p.clone()]);
        assert_eq!(detect_faces(&det, &frame(3)).unwrap(), vec![p]);
        assert!(detect_faces(&det, &frame(4)).unwrap().is_empty());
    }

    #[test]
    fn sorted_by_descending_score() {
        let det = SyntheticDetector::new(
            BackendConfig::default(),
            [plant(0, [0.0, 0.0, 10.0, 10.0], 0.8), plant(0, [50.0, 50.0, 60.0, 60.0], 0.95)],
        );
        let scores: Vec<f64> = detect_faces(&det, &frame(0)).unwrap().iter().map(|o| o.score).collect();
        assert_eq!(scores, vec![0.95, 0.8]);
    }

    #[test]
    fn below_threshold_is_dropped() {
        let det = SyntheticDetector::new(BackendConfig::default(), [plant(0, [0.0, 0.0, 10.0, 10.0], 0.3)]);
        assert!(detect_faces(&det, &frame(0)).unwrap().is_empty());
    }

    #[test]
    fn empty_frame_is_rejected() {
        let det = SyntheticDetector::new(BackendConfig::default(), []);
        let f = Frame {
            index: 0,
            image: Some(RgbImage::new(0, 0)),
        };
        assert!(detect_faces(&det, &f).is_err());
    }

    #[test]
    fn neural_config_requires_model() {
        let cfg = BackendConfig {
            backend_kind: BackendKind::Neural,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        BackendConfig::default().validate().unwrap();
    }
}
