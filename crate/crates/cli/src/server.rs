//! HTTP API behind the annotation UI.
//!
//! Identity labels and truth annotations are kept in memory and rewritten
//! atomically on every change. A later label from the same annotator for the
//! same crop (or frame) replaces the earlier one.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gazemap_core::classify::StudentId;
use gazemap_core::config::SessionConfig;
use gazemap_core::eval::NO_STUDENT;
use gazemap_core::face::{align_face, read_detections, AlignmentTemplate, BBox, FrameStore, Point};
use gazemap_core::gaze::GazePoint;
use gazemap_core::labels::{read_labels, write_atomic, write_labels, CropIndex, LabelRecord};
use gazemap_core::rng;
use gazemap_core::synth::minute_frames;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::commands::{bind_gaze, open_frames};

/// Labeled crops wanted per student.
pub const LABEL_TARGET: usize = 30;
pub const TRUTH_ANNOTATIONS_FILE: &str = "truth_annotations.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthAnnotation {
    pub frame_index: usize,
    /// A rostered student or `none`.
    pub student_id: String,
    pub annotator_id: String,
    pub ts: u64,
}

struct Store {
    labels: Vec<LabelRecord>,
    truth: Vec<TruthAnnotation>,
}

pub struct AnnotationState {
    roster: Vec<StudentId>,
    crops: CropIndex,
    frames: FrameStore,
    gaze: Vec<Option<GazePoint>>,
    crops_by_frame: BTreeMap<usize, Vec<String>>,
    labels_path: PathBuf,
    truth_dir: PathBuf,
    store: Mutex<Store>,
}

impl AnnotationState {
    /// Load detections, frame timestamps, gaze and any labels already on disk.
    pub fn load(cfg: &SessionConfig) -> Result<Self> {
        let frames = open_frames(cfg)?;
        if !cfg.paths.detections.is_file() {
            return Err(crate::commands::MissingInput {
                what: "detections file",
                path: cfg.paths.detections.clone(),
            }
            .into());
        }
        let crops = CropIndex::new(&read_detections(&cfg.paths.detections)?);
        let gaze = if cfg.paths.gaze.is_file() {
            bind_gaze(cfg, &cfg.paths.gaze, &frames)?.into_iter().map(|b| b.gaze).collect()
        } else {
            vec![None; frames.len()]
        };
        let labels = if cfg.paths.labels.is_file() {
            read_labels(&cfg.paths.labels)?
        } else {
            Vec::new()
        };
        let truth_dir = cfg
            .paths
            .labels
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        let truth_path = truth_dir.join(TRUTH_ANNOTATIONS_FILE);
        let truth = if truth_path.is_file() {
            let mut rdr = csv::Reader::from_path(&truth_path)?;
            rdr.deserialize().collect::<std::result::Result<Vec<TruthAnnotation>, _>>()?
        } else {
            Vec::new()
        };
        let mut crops_by_frame: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for c in crops.iter() {
            crops_by_frame.entry(c.face.frame_index).or_default().push(c.id.clone());
        }
        Ok(Self {
            roster: cfg.roster.clone(),
            crops,
            frames,
            gaze,
            crops_by_frame,
            labels_path: cfg.paths.labels.clone(),
            truth_dir,
            store: Mutex::new(Store { labels, truth }),
        })
    }

    fn known(&self, student: &StudentId) -> bool {
        self.roster.is_empty() || self.roster.contains(student)
    }
}

pub fn router(state: Arc<AnnotationState>) -> Router {
    Router::new()
        .route("/api/roster", get(roster))
        .route("/api/crops", get(crops))
        .route("/api/crops/{id}/image", get(crop_image))
        .route("/api/labels", post(post_label))
        .route("/api/progress", get(progress))
        .route("/api/truth-frames", get(truth_frames))
        .route("/api/truth", post(post_truth))
        .with_state(state)
}

/// Bind first so a busy port fails before anything is served.
pub async fn serve(cfg: &SessionConfig, addr: SocketAddr) -> Result<()> {
    let state = Arc::new(AnnotationState::load(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))?;
    tracing::info!(%addr, crops = state.crops.len(), "annotation API listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn valid_annotator(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn roster(State(st): State<Arc<AnnotationState>>) -> Json<Vec<StudentId>> {
    Json(st.roster.clone())
}

#[derive(Debug, Deserialize)]
pub struct CropsQuery {
    pub minute: Option<u32>,
    #[serde(default)]
    pub unlabeled: bool,
    /// With `unlabeled`, only crops this annotator has not labeled.
    pub annotator: Option<String>,
    /// Return a seeded random sample of this many crops.
    pub sample: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelView {
    pub student_id: StudentId,
    pub annotator_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CropView {
    pub crop_id: String,
    pub frame_index: usize,
    pub timestamp_us: i64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub landmarks: [Point; 5],
    pub score: f64,
    pub labels: Vec<LabelView>,
}

async fn crops(State(st): State<Arc<AnnotationState>>, Query(q): Query<CropsQuery>) -> ApiResult<Json<Vec<CropView>>> {
    let ts = st.frames.timestamps();
    let in_minute: Option<BTreeSet<usize>> = q.minute.map(|m| minute_frames(ts, m).into_iter().collect());
    let store = st.store.lock().map_err(ApiError::internal)?;
    let mut by_crop: BTreeMap<&str, Vec<&LabelRecord>> = BTreeMap::new();
    for l in &store.labels {
        by_crop.entry(l.crop_id.as_str()).or_default().push(l);
    }
    let mut out: Vec<CropView> = st
        .crops
        .iter()
        .filter(|c| in_minute.as_ref().is_none_or(|f| f.contains(&c.face.frame_index)))
        .filter(|c| {
            if !q.unlabeled {
                return true;
            }
            let ls = by_crop.get(c.id.as_str()).map(Vec::as_slice).unwrap_or_default();
            match &q.annotator {
                Some(a) => !ls.iter().any(|l| &l.annotator_id == a),
                None => ls.is_empty(),
            }
        })
        .map(|c| CropView {
            crop_id: c.id.clone(),
            frame_index: c.face.frame_index,
            timestamp_us: ts.get(c.face.frame_index).copied().unwrap_or_default(),
            bbox: c.face.bbox,
            landmarks: c.face.landmarks,
            score: c.face.score,
            labels: by_crop
                .get(c.id.as_str())
                .into_iter()
                .flatten()
                .map(|l| LabelView {
                    student_id: l.student_id.clone(),
                    annotator_id: l.annotator_id.clone(),
                })
                .collect(),
        })
        .collect();
    if let Some(n) = q.sample {
        let mut r = rng::stream(q.seed);
        out.shuffle(&mut r);
        out.truncate(n);
        out.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));
    }
    Ok(Json(out))
}

async fn crop_image(State(st): State<Arc<AnnotationState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let crop = st.crops.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown crop {id}")))?;
    let frame = st
        .frames
        .image(crop.face.frame_index)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::not_found(format!("no image for frame {}", crop.face.frame_index)))?;
    let aligned = align_face(&frame, &crop.face, &AlignmentTemplate::default()).map_err(ApiError::internal)?;
    let mut png = Vec::new();
    aligned
        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub crop_id: String,
    pub student_id: StudentId,
    pub annotator_id: String,
}

async fn post_label(State(st): State<Arc<AnnotationState>>, Json(req): Json<LabelRequest>) -> ApiResult<Json<LabelRecord>> {
    let crop = st
        .crops
        .get(&req.crop_id)
        .ok_or_else(|| ApiError::bad_request(format!("unknown crop {}", req.crop_id)))?;
    if !st.known(&req.student_id) {
        return Err(ApiError::bad_request(format!("student {} is not on the roster", req.student_id)));
    }
    if !valid_annotator(&req.annotator_id) {
        return Err(ApiError::bad_request("annotator_id must be 1-64 letters, digits, '-' or '_'"));
    }
    let rec = LabelRecord::new(crop, req.student_id, req.annotator_id, now_ms());
    let mut store = st.store.lock().map_err(ApiError::internal)?;
    let mut next = store.labels.clone();
    match next
        .iter_mut()
        .find(|l| l.crop_id == rec.crop_id && l.annotator_id == rec.annotator_id)
    {
        Some(old) => *old = rec.clone(),
        None => next.push(rec.clone()),
    }
    write_labels(&st.labels_path, &next).map_err(ApiError::internal)?;
    store.labels = next;
    Ok(Json(rec))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudentProgress {
    pub student_id: StudentId,
    pub labeled: usize,
    pub complete: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Progress {
    pub target: usize,
    pub students: Vec<StudentProgress>,
}

/// Distinct crops labeled per student, over all annotators.
async fn progress(State(st): State<Arc<AnnotationState>>) -> ApiResult<Json<Progress>> {
    let store = st.store.lock().map_err(ApiError::internal)?;
    let mut per: BTreeMap<&StudentId, BTreeSet<&str>> = st.roster.iter().map(|s| (s, BTreeSet::new())).collect();
    for l in &store.labels {
        per.entry(&l.student_id).or_default().insert(&l.crop_id);
    }
    let students = per
        .into_iter()
        .map(|(s, c)| StudentProgress {
            student_id: s.clone(),
            labeled: c.len(),
            complete: c.len() >= LABEL_TARGET,
        })
        .collect();
    Ok(Json(Progress {
        target: LABEL_TARGET,
        students,
    }))
}

#[derive(Debug, Deserialize)]
pub struct MinuteQuery {
    pub minute: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFrameView {
    pub frame_index: usize,
    pub timestamp_us: i64,
    pub gaze: Option<GazePoint>,
    pub crops: Vec<String>,
}

async fn truth_frames(State(st): State<Arc<AnnotationState>>, Query(q): Query<MinuteQuery>) -> Json<Vec<TruthFrameView>> {
    let ts = st.frames.timestamps();
    let frames = minute_frames(ts, q.minute.unwrap_or(2));
    Json(
        frames
            .into_iter()
            .map(|i| TruthFrameView {
                frame_index: i,
                timestamp_us: ts[i],
                gaze: st.gaze.get(i).copied().flatten(),
                crops: st.crops_by_frame.get(&i).cloned().unwrap_or_default(),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthRequest {
    pub frame_index: usize,
    pub student_id: String,
    pub annotator_id: String,
}

async fn post_truth(State(st): State<Arc<AnnotationState>>, Json(req): Json<TruthRequest>) -> ApiResult<Json<TruthAnnotation>> {
    if req.frame_index >= st.frames.len() {
        return Err(ApiError::bad_request(format!("unknown frame {}", req.frame_index)));
    }
    if req.student_id != NO_STUDENT && !st.known(&StudentId::from(req.student_id.as_str())) {
        return Err(ApiError::bad_request(format!("student {} is not on the roster", req.student_id)));
    }
    if !valid_annotator(&req.annotator_id) {
        return Err(ApiError::bad_request("annotator_id must be 1-64 letters, digits, '-' or '_'"));
    }
    let rec = TruthAnnotation {
        frame_index: req.frame_index,
        student_id: req.student_id,
        annotator_id: req.annotator_id,
        ts: now_ms(),
    };
    let mut store = st.store.lock().map_err(ApiError::internal)?;
    let mut next = store.truth.clone();
    match next
        .iter_mut()
        .find(|t| t.frame_index == rec.frame_index && t.annotator_id == rec.annotator_id)
    {
        Some(old) => *old = rec.clone(),
        None => next.push(rec.clone()),
    }
    persist_truth(&st, &next, &rec.annotator_id).map_err(ApiError::internal)?;
    store.truth = next;
    Ok(Json(rec))
}

/// All annotations, plus this annotator's pass in the format `evaluate` reads.
fn persist_truth(st: &AnnotationState, all: &[TruthAnnotation], annotator: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in all {
        w.serialize(t)?;
    }
    write_atomic(st.truth_dir.join(TRUTH_ANNOTATIONS_FILE), &w.into_inner()?)?;

    let mut mine: Vec<&TruthAnnotation> = all.iter().filter(|t| t.annotator_id == annotator).collect();
    mine.sort_by_key(|t| t.frame_index);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["frame_index", "student_id"])?;
    for t in mine {
        w.write_record([t.frame_index.to_string(), t.student_id.clone()])?;
    }
    write_atomic(st.truth_dir.join(format!("truth_{annotator}.csv")), &w.into_inner()?)?;
    Ok(())
}
