use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::FaceObservation;
use crate::error::{Error, Result};

/// Write one observation per line. Floats use shortest round-trip formatting,
/// so reading the file back reproduces every value bit for bit.
pub fn write_detections(path: impl AsRef<Path>, detections: &[FaceObservation]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in detections {
        serde_json::to_writer(&mut out, d)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<FaceObservation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Detections keyed by frame, preserving file order within a frame.
pub fn group_by_frame(detections: &[FaceObservation]) -> BTreeMap<usize, Vec<FaceObservation>> {
    let mut map: BTreeMap<usize, Vec<FaceObservation>> = BTreeMap::new();
    for d in detections {
        map.entry(d.frame_index).or_default().push(d.clone());
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::BBox;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cache_round_trip_is_bit_exact(
            raw in proptest::collection::vec((0usize..100, -1e4f64..1e4, -1e4f64..1e4, 1e-6f64..1e3, 1e-6f64..1e3, 0.0f64..=1.0, proptest::array::uniform10(-1e4f64..1e4)), 0..20)
        ) {
            let dets: Vec<FaceObservation> = raw.into_iter().map(|(f, x, y, w, h, s, lm)| {
                let landmarks = [[lm[0], lm[1]], [lm[2], lm[3]], [lm[4], lm[5]], [lm[6], lm[7]], [lm[8], lm[9]]];
                FaceObservation::new(f, BBox::new(x, y, x + w, y + h).unwrap(), landmarks, s).unwrap()
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.jsonl");
            write_detections(&p, &dets).unwrap();
            let back = read_detections(&p).unwrap();
            prop_assert_eq!(back.len(), dets.len());
            for (a, b) in back.iter().zip(&dets) {
                prop_assert_eq!(a.bbox.x1.to_bits(), b.bbox.x1.to_bits());
                prop_assert_eq!(a.bbox.y2.to_bits(), b.bbox.y2.to_bits());
                prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
                prop_assert_eq!(a, b);
            }
        }
    }
}
