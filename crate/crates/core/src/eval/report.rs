use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion_matrix, metrics_with, per_class, Averaging, ClassMetrics, ConfusionMatrix};
use crate::attention::{AttentionRecord, Status};
use crate::classify::{Family, StudentId};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Written in place of a student id for frames where the teacher looked at nobody.
pub const NO_STUDENT: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub classroom_id: String,
    pub classifier: Family,
    pub embedding_backend: String,
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "markdown-table" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub const MARKDOWN_HEADER: &str = "| Classroom ID | Classifier | Facial Feature Embeddings | Accuracy | Precision | Recall | F1 score |\n\
                                   |---|---|---|---|---|---|---|\n";

impl EvaluationReport {
    pub fn build(
        classroom_id: impl Into<String>,
        classifier: Family,
        embedding_backend: impl Into<String>,
        confusion: ConfusionMatrix,
        averaging: Averaging,
        n_train: usize,
    ) -> Result<Self> {
        let m = metrics_with(&confusion, averaging)?;
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            classroom_id: classroom_id.into(),
            classifier,
            embedding_backend: embedding_backend.into(),
            averaging,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            per_class: per_class(&confusion),
            n_test: confusion.total() as usize,
            confusion,
            n_train,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    /// Confusion matrix with a header of predicted classes; each row starts with the true class.
    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["truth".to_string()];
        header.extend(self.confusion.class_set.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (s, row) in self.confusion.class_set.iter().zip(&self.confusion.counts) {
            let mut rec = vec![s.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// One results-table row: classroom, classifier, embeddings, then the four metrics.
    pub fn markdown_row(&self) -> String {
        format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            self.classroom_id,
            self.classifier.display_name(),
            self.embedding_backend,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1
        )
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.confusion_csv(),
            ReportFormat::Markdown => Ok(format!("{MARKDOWN_HEADER}{}", self.markdown_row())),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render(format)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Contract(format!("csv: {e}"))
}

/// One ground-truth row. `student` is `None` when the annotator marked the frame as attending nobody.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TruthRow {
    pub frame_index: usize,
    pub student: Option<StudentId>,
}

#[derive(Deserialize, Serialize)]
struct RawTruth {
    frame_index: usize,
    student_id: String,
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("{other:?}"),
        },
    })?;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.deserialize::<RawTruth>().enumerate() {
        let line = i + 2;
        let raw = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.frame_index) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("frame {} annotated twice", raw.frame_index),
            });
        }
        let id = raw.student_id.trim();
        rows.push(TruthRow {
            frame_index: raw.frame_index,
            student: (!id.is_empty() && id != NO_STUDENT).then(|| StudentId::new(id)),
        });
    }
    rows.sort();
    Ok(rows)
}

pub fn write_truth(path: impl AsRef<Path>, rows: &[TruthRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(RawTruth {
            frame_index: r.frame_index,
            student_id: r.student.as_ref().map_or(NO_STUDENT.to_string(), |s| s.to_string()),
        })
        .map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(["frame_index", "student_id"]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Paired labels for scoring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scored {
    pub frames: Vec<usize>,
    pub truth: Vec<StudentId>,
    pub pred: Vec<StudentId>,
}

/// Pair annotated frames with mapped predictions. Frames annotated as
/// attending nobody and frames the mapper skipped are left out; a truth frame
/// with no attention record at all is an error naming the first such frame.
pub fn pair_with_truth(records: &[AttentionRecord], truth: &[TruthRow]) -> Result<Scored> {
    let by_frame: BTreeMap<usize, &AttentionRecord> = records.iter().map(|r| (r.frame_index, r)).collect();
    let mut out = Scored::default();
    for t in truth {
        let Some(rec) = by_frame.get(&t.frame_index) else {
            return Err(Error::Session(format!("truth frame {} has no attention record", t.frame_index)));
        };
        let Some(student) = &t.student else { continue };
        if rec.status != Status::Mapped {
            continue;
        }
        let pred = rec.predicted.clone().expect("mapped records carry a prediction");
        out.frames.push(t.frame_index);
        out.truth.push(student.clone());
        out.pred.push(pred);
    }
    Ok(out)
}

/// Sorted union of the labels appearing on either side plus any extra classes.
pub fn class_union<'a>(
    truth: &'a [StudentId],
    pred: &'a [StudentId],
    extra: impl IntoIterator<Item = &'a StudentId>,
) -> Vec<StudentId> {
    let set: BTreeSet<&StudentId> = truth.iter().chain(pred).chain(extra).collect();
    set.into_iter().cloned().collect()
}

pub fn score(scored: &Scored, extra_classes: &[StudentId]) -> Result<ConfusionMatrix> {
    let cs = class_union(&scored.truth, &scored.pred, extra_classes);
    confusion_matrix(&scored.truth, &scored.pred, &cs)
}

/// Agreement between two annotation passes over the frames both annotated.
/// "Nobody" counts as a label of its own.
pub fn truth_agreement(a: &[TruthRow], b: &[TruthRow]) -> Result<(usize, f64)> {
    let bm: BTreeMap<usize, &Option<StudentId>> = b.iter().map(|r| (r.frame_index, &r.student)).collect();
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    for r in a {
        if let Some(other) = bm.get(&r.frame_index) {
            r1.push(r.student.clone());
            r2.push((*other).clone());
        }
    }
    let k = super::metrics::cohen_kappa(&r1, &r2)?;
    Ok((r1.len(), k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::confusion_matrix;
    use crate::gaze::{GazePoint, Provenance};

    fn ids(s: &str) -> Vec<StudentId> {
        s.chars().map(|c| StudentId::new(c.to_string())).collect()
    }

    fn report() -> EvaluationReport {
        let cm = confusion_matrix(&ids("AABB"), &ids("ABBB"), &ids("AB")).unwrap();
        EvaluationReport::build("4", Family::Knn, "synthetic", cm, Averaging::Weighted, 60).unwrap()
    }

    fn rec(frame: usize, status: Status, pred: Option<&str>) -> AttentionRecord {
        AttentionRecord {
            frame_index: frame,
            status,
            gaze: Some(GazePoint {
                x: 1.0,
                y: 2.0,
                provenance: Provenance::LeftOnly,
            }),
            chosen_face: None,
            distance_px: None,
            predicted: pred.map(StudentId::from),
            error: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        assert_eq!(EvaluationReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert_eq!(r.n_test, 4);
    }

    #[test]
    fn confusion_csv_shape() {
        let csv = report().confusion_csv().unwrap();
        assert_eq!(csv, "truth,A,B\nA,1,1\nB,0,2\n");
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn markdown_row_order() {
        let md = report().render(ReportFormat::Markdown).unwrap();
        assert!(md.starts_with("| Classroom ID | Classifier | Facial Feature Embeddings | Accuracy | Precision | Recall | F1 score |"));
        assert!(md.ends_with("| 4 | k-Nearest Neighbor | synthetic | 0.75 | 0.83 | 0.75 | 0.73 |\n"));
    }

    #[test]
    fn schema_version_checked() {
        let mut r = report();
        r.schema_version = 99;
        let s = serde_json::to_string(&r).unwrap();
        assert!(matches!(EvaluationReport::from_json(&s), Err(Error::Config(_))));
    }

    #[test]
    fn pairing_skips_unmapped_and_none() {
        let records = vec![
            rec(0, Status::Mapped, Some("A")),
            rec(1, Status::SkippedNoGaze, None),
            rec(2, Status::Mapped, Some("B")),
            rec(3, Status::Mapped, Some("B")),
        ];
        let truth = vec![
            TruthRow { frame_index: 0, student: Some("A".into()) },
            TruthRow { frame_index: 1, student: Some("A".into()) },
            TruthRow { frame_index: 2, student: None },
            TruthRow { frame_index: 3, student: Some("A".into()) },
        ];
        let s = pair_with_truth(&records, &truth).unwrap();
        assert_eq!(s.frames, vec![0, 3]);
        assert_eq!(s.pred, ids("AB"));
        let missing = [TruthRow { frame_index: 7, student: None }, TruthRow { frame_index: 9, student: None }];
        let err = pair_with_truth(&records, &missing).unwrap_err();
        assert!(err.to_string().contains("frame 7"));
    }

    #[test]
    fn truth_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        let rows = vec![
            TruthRow { frame_index: 3, student: Some("S01".into()) },
            TruthRow { frame_index: 5, student: None },
        ];
        write_truth(&p, &rows).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "frame_index,student_id\n3,S01\n5,none\n");
        assert_eq!(read_truth(&p).unwrap(), rows);
        fs::write(&p, "frame_index,student_id\n1,A\n1,B\n").unwrap();
        assert!(matches!(read_truth(&p), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn agreement_over_overlap() {
        let a = vec![
            TruthRow { frame_index: 0, student: Some("A".into()) },
            TruthRow { frame_index: 1, student: Some("A".into()) },
            TruthRow { frame_index: 2, student: Some("B".into()) },
            TruthRow { frame_index: 3, student: Some("B".into()) },
            TruthRow { frame_index: 4, student: None },
        ];
        let b = vec![
            TruthRow { frame_index: 0, student: Some("A".into()) },
            TruthRow { frame_index: 1, student: Some("B".into()) },
            TruthRow { frame_index: 2, student: Some("B".into()) },
            TruthRow { frame_index: 3, student: Some("B".into()) },
        ];
        assert_eq!(truth_agreement(&a, &b).unwrap(), (4, 0.5));
    }

    #[test]
    fn missing_identity_columns_present() {
        let scored = Scored {
            frames: vec![0, 1, 2],
            truth: ids("ABC"),
            pred: ids("ABB"),
        };
        let cm = score(&scored, &[]).unwrap();
        assert_eq!(cm.class_set, ids("ABC"));
        assert_eq!(cm.predicted()[2], 0);
    }
}
