use image::RgbImage;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{align_face, AlignmentTemplate, FaceObservation, FrameStore};
use crate::error::{Error, Result};
use crate::rng;

pub const EMBEDDING_DIM: usize = 512;

/// A 512-component face descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != EMBEDDING_DIM {
            return Err(Error::Contract(format!(
                "embedding has {} components, expected {EMBEDDING_DIM}",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate("cannot normalize a zero-length embedding".into()));
    }
    Ok(EmbeddingVector(v.0.iter().map(|x| x / n).collect()))
}

pub trait EmbedderBackend: Send + Sync {
    fn id(&self) -> &str;
    fn crop_size(&self) -> u32;
    fn embed(&self, crop: &RgbImage) -> Result<EmbeddingVector>;
}

/// Embed an aligned crop, checking it matches the backend's expected size.
pub fn embed_face(backend: &dyn EmbedderBackend, crop: &RgbImage) -> Result<EmbeddingVector> {
    let size = backend.crop_size();
    if crop.width() != size || crop.height() != size {
        return Err(Error::Contract(format!(
            "crop is {}x{}, backend {} expects {size}x{size}",
            crop.width(),
            crop.height(),
            backend.id()
        )));
    }
    let v = backend.embed(crop)?;
    if v.as_slice().len() != EMBEDDING_DIM {
        return Err(Error::Backend(format!("{} returned a malformed embedding", backend.id())));
    }
    Ok(v)
}

/// Deterministic stand-in for a neural embedder: a standard Gaussian vector
/// whose seed is the crop's mean intensity mixed with the backend seed.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    pub seed: u64,
    pub crop_size: u32,
}

impl SyntheticEmbedder {
    pub fn new(seed: u64, crop_size: u32) -> Self {
        Self { seed, crop_size }
    }
}

impl EmbedderBackend for SyntheticEmbedder {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn crop_size(&self) -> u32 {
        self.crop_size
    }

    fn embed(&self, crop: &RgbImage) -> Result<EmbeddingVector> {
        let raw = crop.as_raw();
        let mean = if raw.is_empty() {
            0.0
        } else {
            raw.iter().map(|&b| b as u64).sum::<u64>() as f64 / raw.len() as f64
        };
        let mut r = rng::stream(rng::derive(self.seed, mean.to_bits()));
        EmbeddingVector::new((0..EMBEDDING_DIM).map(|_| r.sample(StandardNormal)).collect())
    }
}

/// Produces the embedding for a detected face, however the pipeline obtains it.
pub trait ObservationEmbedder: Sync {
    fn id(&self) -> &str;
    fn embed_observation(&self, obs: &FaceObservation) -> Result<EmbeddingVector>;
}

/// Classifier input for one observation: the embedding, optionally L2-normalized.
pub fn observation_features(embedder: &dyn ObservationEmbedder, obs: &FaceObservation, normalize: bool) -> Result<Vec<f64>> {
    let v = embedder.embed_observation(obs)?;
    Ok(if normalize { l2_normalize(&v)? } else { v }.into_inner())
}

/// Frame image → aligned crop → backend embedding.
pub struct ImageEmbedder<'a> {
    pub frames: &'a FrameStore,
    pub template: AlignmentTemplate,
    pub backend: &'a dyn EmbedderBackend,
}

impl ObservationEmbedder for ImageEmbedder<'_> {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn embed_observation(&self, obs: &FaceObservation) -> Result<EmbeddingVector> {
        let frame = self
            .frames
            .image(obs.frame_index)?
            .ok_or_else(|| Error::Contract(format!("no image for frame {}", obs.frame_index)))?;
        let crop = align_face(&frame, obs, &self.template)?;
        embed_face(self.backend, &crop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn e(mut head: Vec<f64>) -> EmbeddingVector {
        head.resize(EMBEDDING_DIM, 0.0);
        EmbeddingVector::new(head).unwrap()
    }

    #[test]
    fn three_four_five() {
        let n = l2_normalize(&e(vec![3.0, 4.0])).unwrap();
        assert!((n.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((n.as_slice()[1] - 0.8).abs() < 1e-15);
        assert!(n.as_slice()[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_vector_is_unchanged() {
        let v = e(vec![0.0, 1.0]);
        let n = l2_normalize(&v).unwrap();
        for (a, b) in n.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(l2_normalize(&e(vec![])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        assert!(EmbeddingVector::new(vec![1.0; 511]).is_err());
    }

    #[test]
    fn synthetic_embedder_is_deterministic() {
        let backend = SyntheticEmbedder::new(11, 112);
        let crop = RgbImage::from_fn(112, 112, |x, y| Rgb([x as u8, y as u8, 9]));
        let a = embed_face(&backend, &crop).unwrap();
        let b = embed_face(&backend, &crop.clone()).unwrap();
        assert_eq!(a, b);
        let other = RgbImage::from_pixel(112, 112, Rgb([1, 2, 3]));
        assert_ne!(a, embed_face(&backend, &other).unwrap());
    }

    #[test]
    fn crop_size_mismatch_is_a_contract_error() {
        let backend = SyntheticEmbedder::new(0, 112);
        let crop = RgbImage::new(100, 100);
        assert!(matches!(embed_face(&backend, &crop), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn normalization_is_unit_and_idempotent(head in proptest::collection::vec(-50.0f64..50.0, 1..EMBEDDING_DIM)) {
            prop_assume!(head.iter().any(|v| v.abs() > 1e-3));
            let n1 = l2_normalize(&e(head)).unwrap();
            prop_assert!((n1.norm() - 1.0).abs() < 1e-6);
            let n2 = l2_normalize(&n1).unwrap();
            for (a, b) in n1.as_slice().iter().zip(n2.as_slice()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
