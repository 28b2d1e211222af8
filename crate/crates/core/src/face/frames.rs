use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::gaze::parse_frame_timestamps;

/// A directory of decoded frames.
///
/// `timestamps.txt` lists one microsecond timestamp per frame. Frame images,
/// when present, are named by zero-padded index (`000042.png` or `.jpg`).
/// Synthetic sessions carry `plants.jsonl` instead of images.
#[derive(Debug, Clone)]
pub struct FrameStore {
    dir: PathBuf,
    timestamps: Vec<i64>,
}

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";
pub const PLANTS_FILE: &str = "plants.jsonl";

impl FrameStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "frames directory not found"),
            ));
        }
        let timestamps = parse_frame_timestamps(dir.join(TIMESTAMPS_FILE))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            timestamps,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn plants_path(&self) -> PathBuf {
        self.dir.join(PLANTS_FILE)
    }

    fn image_path(&self, index: usize) -> Option<PathBuf> {
        ["png", "jpg", "jpeg"]
            .iter()
            .map(|ext| self.dir.join(format!("{index:06}.{ext}")))
            .find(|p| p.is_file())
    }

    pub fn image(&self, index: usize) -> Result<Option<RgbImage>> {
        match self.image_path(index) {
            Some(p) => Ok(Some(image::open(&p)?.to_rgb8())),
            None => Ok(None),
        }
    }
}
