use std::fs;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use gazemap_cli::commands::{cmd_detect, cmd_synth};
use gazemap_cli::server::{router, AnnotationState, CropView, Progress, TruthFrameView};
use gazemap_core::config::SessionConfig;
use gazemap_core::eval::read_truth;
use gazemap_core::face::{write_detections, BBox, FaceObservation, TIMESTAMPS_FILE};
use gazemap_core::labels::read_labels;
use gazemap_core::synth::SynthClassroomSpec;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn session(dir: &Path) -> SessionConfig {
    let spec = dir.join("spec.toml");
    fs::write(&spec, SynthClassroomSpec::new(3, 5).to_toml()).unwrap();
    let cfg = cmd_synth(&spec, &dir.join("s"), false).unwrap();
    cmd_detect(&cfg).unwrap();
    cfg
}

fn app(cfg: &SessionConfig) -> Router {
    router(Arc::new(AnnotationState::load(cfg).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json<T: serde::de::DeserializeOwned>(app: &Router, uri: &str) -> T {
    let (st, body) = call(app, "GET", uri, None).await;
    assert_eq!(st, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn roster_and_minute_filtered_crops() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session(dir.path());
    let app = app(&cfg);
    let roster: Vec<String> = get_json(&app, "/api/roster").await;
    assert_eq!(roster, vec!["S01", "S02", "S03"]);
    let all: Vec<CropView> = get_json(&app, "/api/crops").await;
    let m1: Vec<CropView> = get_json(&app, "/api/crops?minute=1").await;
    assert!(!m1.is_empty() && m1.len() < all.len());
    assert!(m1.iter().all(|c| c.timestamp_us < 60_000_000));
    let sample: Vec<CropView> = get_json(&app, "/api/crops?minute=1&sample=10&seed=3").await;
    let again: Vec<CropView> = get_json(&app, "/api/crops?minute=1&sample=10&seed=3").await;
    assert_eq!(sample.len(), 10);
    let ids = |v: &[CropView]| v.iter().map(|c| c.crop_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&sample), ids(&again));
}

#[tokio::test]
async fn labels_validate_persist_and_last_writer_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session(dir.path());
    let app = app(&cfg);
    let crops: Vec<CropView> = get_json(&app, "/api/crops?minute=1").await;
    let crop = &crops[0].crop_id;

    let (st, _) = call(&app, "POST", "/api/labels", Some(json!({"crop_id": crop, "student_id": "S99", "annotator_id": "a"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/api/labels", Some(json!({"crop_id": "f999999-00", "student_id": "S01", "annotator_id": "a"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/api/labels", Some(json!({"crop_id": crop, "student_id": "S01", "annotator_id": "../x"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert!(!cfg.paths.labels.exists());

    for student in ["S01", "S02"] {
        let (st, _) = call(&app, "POST", "/api/labels", Some(json!({"crop_id": crop, "student_id": student, "annotator_id": "a"}))).await;
        assert_eq!(st, StatusCode::OK);
    }
    let (st, _) = call(&app, "POST", "/api/labels", Some(json!({"crop_id": crop, "student_id": "S03", "annotator_id": "b"}))).await;
    assert_eq!(st, StatusCode::OK);

    let on_disk = read_labels(&cfg.paths.labels).unwrap();
    assert_eq!(on_disk.len(), 2);
    let a = on_disk.iter().find(|l| l.annotator_id == "a").unwrap();
    assert_eq!(a.student_id.to_string(), "S02");
    assert_eq!(&a.crop_id, crop);

    let unlabeled: Vec<CropView> = get_json(&app, "/api/crops?minute=1&unlabeled=true").await;
    assert_eq!(unlabeled.len(), crops.len() - 1);
    let for_c: Vec<CropView> = get_json(&app, "/api/crops?minute=1&unlabeled=true&annotator=c").await;
    assert_eq!(for_c.len(), crops.len());

    let progress: Progress = get_json(&app, "/api/progress").await;
    assert_eq!(progress.target, 30);
    let counts: Vec<(String, usize)> = progress.students.iter().map(|s| (s.student_id.to_string(), s.labeled)).collect();
    assert_eq!(counts, vec![("S01".into(), 0), ("S02".into(), 1), ("S03".into(), 1)]);

    // a restarted server picks up the saved labels
    let app2 = self::app(&cfg);
    let progress: Progress = get_json(&app2, "/api/progress").await;
    assert_eq!(progress.students[1].labeled, 1);
}

#[tokio::test]
async fn truth_annotation_round_trips_to_evaluation_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session(dir.path());
    let app = app(&cfg);
    let frames: Vec<TruthFrameView> = get_json(&app, "/api/truth-frames?minute=2").await;
    assert_eq!(frames.len(), 750);
    assert_eq!(frames[0].frame_index, 750);
    assert!(frames.iter().filter(|f| f.gaze.is_some()).count() > 700);

    let post = |f: usize, s: &str| json!({"frame_index": f, "student_id": s, "annotator_id": "r1"});
    assert_eq!(call(&app, "POST", "/api/truth", Some(post(750, "S02"))).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", "/api/truth", Some(post(751, "none"))).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", "/api/truth", Some(post(750, "S03"))).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", "/api/truth", Some(post(99_999, "S01"))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", "/api/truth", Some(post(752, "S42"))).await.0, StatusCode::BAD_REQUEST);

    let rows = read_truth(cfg.paths.labels.parent().unwrap().join("truth_r1.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].student.as_ref().unwrap().to_string(), "S03");
    assert_eq!(rows[1].student, None);
}

#[tokio::test]
async fn crop_image_is_png_or_404() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session(dir.path());
    let app = app(&cfg);
    // synthetic frames carry no pixels
    let (st, _) = call(&app, "GET", "/api/crops/f000000-00/image", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/api/crops/nope/image", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let root = dir.path().join("real");
    let frames = root.join("frames");
    fs::create_dir_all(&frames).unwrap();
    fs::write(frames.join(TIMESTAMPS_FILE), "0\n").unwrap();
    image::RgbImage::from_pixel(200, 200, image::Rgb([90, 120, 150]))
        .save(frames.join("000000.png"))
        .unwrap();
    let face = FaceObservation::new(
        0,
        BBox::new(60.0, 50.0, 140.0, 150.0).unwrap(),
        [[85.0, 90.0], [115.0, 90.0], [100.0, 110.0], [88.0, 130.0], [112.0, 130.0]],
        0.99,
    )
    .unwrap();
    let mut real = SessionConfig::default();
    real.resolve_paths(&root);
    write_detections(&real.paths.detections, &[face]).unwrap();
    let app = self::app(&real);
    let (st, body) = call(&app, "GET", "/api/crops/f000000-00/image", None).await;
    assert_eq!(st, StatusCode::OK);
    let img = image::load_from_memory(&body).unwrap();
    assert_eq!((img.width(), img.height()), (112, 112));
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = session(dir.path());
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    let err = gazemap_cli::server::serve(&cfg, addr).await.unwrap_err();
    assert!(err.to_string().contains(&addr.to_string()), "{err}");
}
