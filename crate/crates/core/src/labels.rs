//! Face-crop identity labels and the training set they define.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{LabeledDataset, StudentId};
use crate::error::{Error, Result};
use crate::face::{observation_features, BBox, FaceObservation, ObservationEmbedder};

/// One annotator's identity label for one detected face crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub crop_id: String,
    pub frame_index: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub student_id: StudentId,
    pub annotator_id: String,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
}

impl LabelRecord {
    pub fn new(crop: &Crop, student_id: StudentId, annotator_id: impl Into<String>, ts: u64) -> Self {
        let b = crop.face.bbox;
        Self {
            crop_id: crop.id.clone(),
            frame_index: crop.face.frame_index,
            x1: b.x1,
            y1: b.y1,
            x2: b.x2,
            y2: b.y2,
            student_id,
            annotator_id: annotator_id.into(),
            ts,
        }
    }

    pub fn bbox(&self) -> Result<BBox> {
        BBox::new(self.x1, self.y1, self.x2, self.y2)
    }
}

/// `f000123-02`: the third detection of frame 123.
pub fn crop_id(frame_index: usize, position: usize) -> String {
    format!("f{frame_index:06}-{position:02}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crop {
    pub id: String,
    pub face: FaceObservation,
}

/// Every detection, addressable by crop id. Positions follow the order of
/// the detections file within each frame.
#[derive(Debug, Clone, Default)]
pub struct CropIndex {
    crops: BTreeMap<String, Crop>,
}

impl CropIndex {
    pub fn new(detections: &[FaceObservation]) -> Self {
        let mut crops = BTreeMap::new();
        let mut pos: BTreeMap<usize, usize> = BTreeMap::new();
        for d in detections {
            let p = pos.entry(d.frame_index).or_default();
            let id = crop_id(d.frame_index, *p);
            *p += 1;
            crops.insert(id.clone(), Crop { id, face: d.clone() });
        }
        Self { crops }
    }

    pub fn get(&self, id: &str) -> Option<&Crop> {
        self.crops.get(id)
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    /// Crops in id order, which is frame order.
    pub fn iter(&self) -> impl Iterator<Item = &Crop> {
        self.crops.values()
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn labels_csv(records: &[LabelRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["crop_id", "frame_index", "x1", "y1", "x2", "y2", "student_id", "annotator_id", "ts"])
        .map_err(|e| Error::Contract(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Contract(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Contract(e.to_string()))
}

/// Write `bytes` to a sibling temp file and rename it over `path`, so readers
/// only ever see a complete file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, records: &[LabelRecord]) -> Result<()> {
    write_atomic(path, &labels_csv(records)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSelection {
    pub examples: Vec<(FaceObservation, StudentId)>,
    /// Crops whose annotators disagree; left out of training.
    pub conflicts: Vec<String>,
}

/// Resolve labels to detections. Every label must name a known crop and a
/// rostered student (when a roster is given).
pub fn select_training(labels: &[LabelRecord], crops: &CropIndex, roster: Option<&[StudentId]>) -> Result<TrainingSelection> {
    let mut by_crop: BTreeMap<&str, Vec<&LabelRecord>> = BTreeMap::new();
    for l in labels {
        if crops.get(&l.crop_id).is_none() {
            return Err(Error::Dataset(format!("label references unknown crop {}", l.crop_id)));
        }
        if let Some(r) = roster {
            if !r.contains(&l.student_id) {
                return Err(Error::Dataset(format!("label for crop {} names unknown student {}", l.crop_id, l.student_id)));
            }
        }
        by_crop.entry(&l.crop_id).or_default().push(l);
    }
    let mut examples = Vec::new();
    let mut conflicts = Vec::new();
    for (id, ls) in by_crop {
        if ls.iter().all(|l| l.student_id == ls[0].student_id) {
            examples.push((crops.get(id).unwrap().face.clone(), ls[0].student_id.clone()));
        } else {
            conflicts.push(id.to_string());
        }
    }
    Ok(TrainingSelection { examples, conflicts })
}

/// Embed each labeled face and assemble the classifier training set.
pub fn build_dataset(
    examples: &[(FaceObservation, StudentId)],
    embedder: &dyn ObservationEmbedder,
    normalize: bool,
) -> Result<LabeledDataset> {
    let rows: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|(obs, _)| observation_features(embedder, obs, normalize))
        .collect::<Result<_>>()?;
    LabeledDataset::new(rows.into_iter().zip(examples.iter().map(|(_, s)| s.clone())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn face(frame: usize, x: f64) -> FaceObservation {
        FaceObservation::new(frame, BBox::new(x, 10.0, x + 20.0, 30.0).unwrap(), [[x + 10.0, 20.0]; 5], 0.9).unwrap()
    }

    fn index() -> CropIndex {
        CropIndex::new(&[face(0, 0.0), face(0, 100.0), face(3, 50.0)])
    }

    fn label(crop: &str, student: &str, annotator: &str) -> LabelRecord {
        let c = index().get(crop).unwrap().clone();
        LabelRecord::new(&c, student.into(), annotator, 7)
    }

    #[test]
    fn crop_ids_follow_frame_position() {
        let idx = index();
        let ids: Vec<&str> = idx.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["f000000-00", "f000000-01", "f000003-00"]);
        assert_eq!(idx.get("f000000-01").unwrap().face.bbox.x1, 100.0);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let ls = vec![label("f000000-00", "S01", "ann1"), label("f000003-00", "S02", "ann2")];
        write_labels(&p, &ls).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("crop_id,frame_index,x1,y1,x2,y2,student_id,annotator_id,ts\n"));
        assert_eq!(read_labels(&p).unwrap(), ls);
        write_labels(&p, &[]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![]);
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn disagreeing_annotators_are_excluded() {
        let ls = vec![
            label("f000000-00", "S01", "a"),
            label("f000000-00", "S01", "b"),
            label("f000000-01", "S01", "a"),
            label("f000000-01", "S02", "b"),
        ];
        let sel = select_training(&ls, &index(), None).unwrap();
        assert_eq!(sel.examples.len(), 1);
        assert_eq!(sel.conflicts, vec!["f000000-01".to_string()]);
    }

    #[test]
    fn unknown_crop_or_student_rejected() {
        let mut l = label("f000000-00", "S01", "a");
        l.crop_id = "f999999-00".into();
        assert!(select_training(&[l], &index(), None).is_err());
        let roster = [StudentId::from("S02")];
        assert!(select_training(&[label("f000000-00", "S01", "a")], &index(), Some(&roster)).is_err());
    }
}
