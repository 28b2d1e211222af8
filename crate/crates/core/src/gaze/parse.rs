use std::fs;
use std::io::Write;
use std::path::Path;

use super::GazeSample;
use crate::error::{Error, Result};

/// Parse a line-delimited JSON gaze export. Blank lines are ignored.
pub fn parse_gaze_file(path: impl AsRef<Path>) -> Result<Vec<GazeSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gaze_str(&text, path)
}

pub fn parse_gaze_str(text: &str, origin: &Path) -> Result<Vec<GazeSample>> {
    let mut samples: Vec<GazeSample> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: GazeSample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if sample.timestamp_us < 0 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("negative timestamp {}", sample.timestamp_us),
            });
        }
        if let Some(prev) = samples.last() {
            if sample.timestamp_us <= prev.timestamp_us {
                return Err(Error::Ordering {
                    path: origin.to_path_buf(),
                    line: line_no,
                    previous: prev.timestamp_us,
                    got: sample.timestamp_us,
                });
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_gaze_file(path: impl AsRef<Path>, samples: &[GazeSample]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(samples.len() * 64);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One integer microsecond timestamp per line, strictly increasing.
pub fn parse_frame_timestamps(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<i64> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let t: i64 = line.parse().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad timestamp {line:?}: {e}"),
        })?;
        if let Some(&prev) = out.last() {
            if t <= prev {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line: i + 1,
                    previous: prev,
                    got: t,
                });
            }
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_frame_timestamps(path: impl AsRef<Path>, timestamps: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::with_capacity(timestamps.len() * 10);
    for t in timestamps {
        buf.push_str(&t.to_string());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}
