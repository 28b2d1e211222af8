use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gazemap_core::attention::{map_session, write_attention, write_summary, MapOptions, SessionSummary};
use gazemap_core::classify::{Family, TrainedModel};
use gazemap_core::eval::{
    pair_with_truth, read_truth, score, truth_agreement, Averaging, EvaluationReport, ReportFormat, MARKDOWN_HEADER,
};
use gazemap_core::face::{
    detect_faces, group_by_frame, read_detections, write_detections, AlignmentTemplate, BackendKind, EmbeddingVector,
    FaceObservation, Frame, FrameStore, ImageEmbedder, ObservationEmbedder, SyntheticDetector, SyntheticEmbedder,
};
use gazemap_core::gaze::{default_tolerance_us, parse_gaze_file, sync_to_frames, FrameGazeBinding};
use gazemap_core::labels::{build_dataset, read_labels, select_training, write_labels, CropIndex};
use gazemap_core::selection::{grid_search, refit_best, write_cv_report, GridConfig};
use gazemap_core::synth::{generate_session, scripted_labels, read_plants, PlantedEmbedder, SynthClassroomSpec, SPEC_FILE};
use gazemap_core::config::SessionConfig;

/// A required input that does not exist. Reported with exit status 2.
#[derive(Debug)]
pub struct MissingInput {
    pub what: &'static str,
    pub path: PathBuf,
}

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} not found: {}", self.what, self.path.display())
    }
}

impl std::error::Error for MissingInput {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<MissingInput>().is_some() {
        2
    } else {
        1
    }
}

fn require(path: &Path, what: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingInput {
            what,
            path: path.to_path_buf(),
        }
        .into())
    }
}

pub fn open_frames(cfg: &SessionConfig) -> Result<FrameStore> {
    let dir = &cfg.paths.frames;
    if !dir.is_dir() {
        return Err(MissingInput {
            what: "frames directory",
            path: dir.clone(),
        }
        .into());
    }
    Ok(FrameStore::open(dir)?)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Run the detector over every frame and write the detections cache.
pub fn cmd_detect(cfg: &SessionConfig) -> Result<Vec<FaceObservation>> {
    let frames = open_frames(cfg)?;
    let detector = match cfg.detector.backend_kind {
        BackendKind::Synthetic => {
            let plants = frames.plants_path();
            require(&plants, "synthetic plants file")?;
            SyntheticDetector::from_file(cfg.detector.clone(), plants)?
        }
        BackendKind::Neural => bail!(neural_unavailable("detector")),
    };
    let mut all = Vec::new();
    for index in 0..frames.len() {
        let frame = Frame {
            index,
            image: frames.image(index)?,
        };
        all.extend(detect_faces(&detector, &frame).with_context(|| format!("frame {index}"))?);
    }
    if let Some(parent) = cfg.paths.detections.parent() {
        ensure_dir(parent)?;
    }
    write_detections(&cfg.paths.detections, &all)?;
    tracing::info!(frames = frames.len(), faces = all.len(), "detections written");
    Ok(all)
}

fn neural_unavailable(role: &str) -> String {
    format!(
        "the neural {role} backend is not compiled into this build; \
         provide a DetectorBackend/EmbedderBackend implementation or use backend_kind = \"synthetic\""
    )
}

/// Owns what an [`ImageEmbedder`] borrows.
struct FrameImageEmbedder {
    frames: FrameStore,
    backend: SyntheticEmbedder,
}

impl ObservationEmbedder for FrameImageEmbedder {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn embed_observation(&self, obs: &FaceObservation) -> gazemap_core::Result<EmbeddingVector> {
        ImageEmbedder {
            frames: &self.frames,
            template: AlignmentTemplate::default(),
            backend: &self.backend,
        }
        .embed_observation(obs)
    }
}

/// Synthetic sessions carry their generating spec and embed planted faces;
/// otherwise the synthetic embedder runs on aligned frame crops.
pub fn make_embedder(cfg: &SessionConfig) -> Result<Box<dyn ObservationEmbedder>> {
    match cfg.embedder.backend_kind {
        BackendKind::Neural => bail!(neural_unavailable("embedder")),
        BackendKind::Synthetic => {
            let frames = open_frames(cfg)?;
            if frames.dir().join(SPEC_FILE).is_file() {
                Ok(Box::new(PlantedEmbedder::from_frames_dir(frames.dir())?))
            } else {
                Ok(Box::new(FrameImageEmbedder {
                    backend: SyntheticEmbedder::new(cfg.embedder.seed, cfg.embedder.crop_size),
                    frames,
                }))
            }
        }
    }
}

fn load_detections(cfg: &SessionConfig) -> Result<Vec<FaceObservation>> {
    require(&cfg.paths.detections, "detections file")?;
    Ok(read_detections(&cfg.paths.detections)?)
}

/// Label crops the way a careful annotator would, using the planted identities.
pub fn cmd_script_labels(cfg: &SessionConfig, annotator: &str, seed: u64) -> Result<usize> {
    let frames = open_frames(cfg)?;
    let plants_path = frames.plants_path();
    require(&plants_path, "synthetic plants file")?;
    let plants = read_plants(plants_path)?;
    let detections = load_detections(cfg)?;
    let labels = scripted_labels(
        &plants,
        &detections,
        frames.timestamps(),
        cfg.training.label_minute,
        cfg.training.labels_per_student,
        annotator,
        seed,
    );
    write_labels(&cfg.paths.labels, &labels)?;
    Ok(labels.len())
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub families: Vec<Family>,
    pub grid: String,
    pub folds: usize,
    pub seed: u64,
}

impl TrainOptions {
    pub fn from_config(cfg: &SessionConfig, families: Vec<Family>) -> Self {
        Self {
            families,
            grid: cfg.training.grid.clone(),
            folds: cfg.training.folds,
            seed: cfg.training.seed,
        }
    }
}

pub fn model_path(cfg: &SessionConfig, family: Family) -> PathBuf {
    cfg.paths.models.join(format!("{}.json", family.key()))
}

pub fn cv_report_path(cfg: &SessionConfig, family: Family) -> PathBuf {
    cfg.paths.reports.join(format!("cv_{}.json", family.key()))
}

/// Grid search, refit and persist one model per family.
pub fn cmd_train(cfg: &SessionConfig, opts: &TrainOptions) -> Result<Vec<(Family, TrainedModel)>> {
    require(&cfg.paths.labels, "labels file")?;
    let labels = read_labels(&cfg.paths.labels)?;
    let crops = CropIndex::new(&load_detections(cfg)?);
    let roster = (!cfg.roster.is_empty()).then_some(cfg.roster.as_slice());
    let sel = select_training(&labels, &crops, roster)?;
    if !sel.conflicts.is_empty() {
        tracing::warn!(crops = sel.conflicts.len(), "annotators disagree; crops left out of training");
    }
    let students: std::collections::BTreeSet<_> = sel.examples.iter().map(|(_, s)| s).collect();
    if students.len() < 2 {
        bail!(
            "insufficient labels: {} labeled crop(s) covering {} student(s); label crops of at least two students first",
            sel.examples.len(),
            students.len()
        );
    }
    let embedder = make_embedder(cfg)?;
    let dataset = build_dataset(&sel.examples, embedder.as_ref(), cfg.normalize)?;
    let grid = GridConfig::resolve(&opts.grid).with_context(|| format!("loading grid {}", opts.grid))?;
    ensure_dir(&cfg.paths.models)?;
    ensure_dir(&cfg.paths.reports)?;
    let mut out = Vec::new();
    for &family in &opts.families {
        let search = grid_search(family, &grid, &dataset, opts.folds, opts.seed)
            .with_context(|| format!("grid search for {family}"))?;
        write_cv_report(cv_report_path(cfg, family), &search.results)?;
        let model = refit_best(&search.best, &dataset)?;
        model.save(model_path(cfg, family))?;
        tracing::info!(%family, specs = search.results.len(), "model trained");
        out.push((family, model));
    }
    Ok(out)
}

pub fn bind_gaze(cfg: &SessionConfig, gaze_path: &Path, frames: &FrameStore) -> Result<Vec<FrameGazeBinding>> {
    require(gaze_path, "gaze file")?;
    let samples = parse_gaze_file(gaze_path)?;
    let ts = frames.timestamps();
    let fallback = 500_000 / cfg.gaze_hz as i64;
    let tol = cfg.sync_tolerance_us.unwrap_or_else(|| default_tolerance_us(ts, fallback));
    let sync = sync_to_frames(&samples, ts, tol, cfg.frame_size());
    if sync.out_of_bounds > 0 {
        tracing::info!(samples = sync.out_of_bounds, "gaze samples outside the frame ignored");
    }
    Ok(sync.bindings)
}

#[derive(Debug, Clone)]
pub struct MapPaths {
    pub model: PathBuf,
    pub gaze: PathBuf,
    pub detections: PathBuf,
    pub out: PathBuf,
    pub summary: PathBuf,
}

impl MapPaths {
    pub fn defaults(cfg: &SessionConfig, family: Family) -> Self {
        Self {
            model: model_path(cfg, family),
            gaze: cfg.paths.gaze.clone(),
            detections: cfg.paths.detections.clone(),
            out: cfg.paths.reports.join(format!("attention_{}.jsonl", family.key())),
            summary: cfg.paths.reports.join(format!("attention_{}_summary.json", family.key())),
        }
    }
}

pub fn cmd_map(cfg: &SessionConfig, paths: &MapPaths, max_distance_px: Option<f64>) -> Result<SessionSummary> {
    require(&paths.model, "model file")?;
    require(&paths.detections, "detections file")?;
    let model = TrainedModel::load(&paths.model)?;
    let frames = open_frames(cfg)?;
    let bindings = bind_gaze(cfg, &paths.gaze, &frames)?;
    let detections = group_by_frame(&read_detections(&paths.detections)?);
    let embedder = make_embedder(cfg)?;
    let opts = MapOptions {
        max_distance_px: max_distance_px.or(cfg.max_distance_px),
        normalize: cfg.normalize,
    };
    let (records, summary) = map_session(&bindings, &detections, &model, embedder.as_ref(), &opts)?;
    for p in [&paths.out, &paths.summary] {
        if let Some(parent) = p.parent() {
            ensure_dir(parent)?;
        }
    }
    write_attention(&paths.out, &records)?;
    write_summary(&paths.summary, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub averaging: Averaging,
    /// Second annotation pass for agreement.
    pub truth2: Option<PathBuf>,
}

/// Score attention records against annotated truth. Writes the JSON report
/// plus markdown and confusion CSV renderings next to it.
pub fn cmd_evaluate(cfg: &SessionConfig, args: &EvaluateArgs) -> Result<EvaluationReport> {
    require(&args.pred, "attention records")?;
    require(&args.truth, "ground-truth file")?;
    require(&args.model, "model file")?;
    let records = gazemap_core::attention::read_attention(&args.pred)?;
    let truth = read_truth(&args.truth)?;
    let model = TrainedModel::load(&args.model)?;
    let scored = pair_with_truth(&records, &truth)?;
    let cm = score(&scored, &[])?;
    let report = EvaluationReport::build(
        cfg.classroom_id.clone(),
        model.spec().family(),
        cfg.embedder.model_id.clone(),
        cm,
        args.averaging,
        model.n_train(),
    )?;
    if let Some(parent) = args.out.parent() {
        ensure_dir(parent)?;
    }
    report.write(&args.out, ReportFormat::Json)?;
    report.write(args.out.with_extension("md"), ReportFormat::Markdown)?;
    report.write(args.out.with_extension("csv"), ReportFormat::Csv)?;
    if let Some(t2) = &args.truth2 {
        require(t2, "second ground-truth file")?;
        let (n, kappa) = truth_agreement(&truth, &read_truth(t2)?)?;
        let p = args.out.with_extension("kappa.json");
        fs::write(&p, serde_json::to_string_pretty(&serde_json::json!({ "frames": n, "kappa": kappa }))? + "\n")?;
    }
    Ok(report)
}

/// Results table over several evaluation reports, ordered by classroom and classifier.
pub fn cmd_report(inputs: &[PathBuf]) -> Result<String> {
    let mut reports = Vec::new();
    for p in inputs {
        require(p, "report")?;
        reports.push(EvaluationReport::load(p).with_context(|| format!("reading {}", p.display()))?);
    }
    reports.sort_by(|a, b| (&a.classroom_id, a.classifier).cmp(&(&b.classroom_id, b.classifier)));
    let mut out = String::from(MARKDOWN_HEADER);
    for r in &reports {
        out.push_str(&r.markdown_row());
    }
    Ok(out)
}

/// Generate a synthetic session. With `script_labels`, also detect and
/// label it so it is ready for training.
pub fn cmd_synth(spec_path: &Path, out: &Path, script_labels: bool) -> Result<SessionConfig> {
    require(spec_path, "synthetic spec")?;
    let spec = SynthClassroomSpec::load(spec_path)?;
    let session = generate_session(&spec)?;
    let cfg = session.write_session(out)?;
    if script_labels {
        cmd_detect(&cfg)?;
        cmd_script_labels(&cfg, "script", spec.seed)?;
    }
    Ok(cfg)
}
