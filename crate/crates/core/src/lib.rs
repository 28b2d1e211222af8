//! Maps a teacher's mobile eye-tracker gaze onto individual students.
//!
//! The pipeline resolves one gaze point per video frame, detects and embeds
//! student faces, classifies embeddings with a classifier trained on a small
//! labeled set, and attributes each frame's gaze to the nearest face.

pub mod attention;
pub mod classify;
pub mod config;
pub mod error;
pub mod eval;
pub mod face;
pub mod gaze;
pub mod labels;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
