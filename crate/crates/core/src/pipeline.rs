//! Config-driven orchestration of the whole chain, shared by the
//! command-line tool: synthesize or load a scene, group it, caption the
//! groups, then answer and score a query set. Every stage writes its
//! artifact under the output directory with a fixed file name.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{
    Captioner, ChatModel, ClientError, MockCaptioner, MockChat, RemoteCaptioner, RemoteChat, RemoteConfig,
};
use crate::eval::{evaluate_queries, load_query_set, save_query_set, EvalError, EvalReport, QueryItem, QuerySetEntry};
use crate::grouping::{load_grouping, run_grouping, store_grouping, GroupingConfig, GroupingError};
use crate::image::{InstanceMask, RasterError};
use crate::query::{QueryError, QueryOptions};
use crate::scene::{
    load_cameras, load_scene, render_group_mask, save_cameras, save_scene, CameraError, CameraView, OvxError,
    RenderError, VoxelScene,
};
use crate::scene_map::{build_scene_map, save_scene_map, SceneMap, SceneMapConfig, SceneMapError};
use crate::segmenter::{NoiseConfig, OracleSegmenter, RemoteSegmenter, SegmentError, Segmenter};
use crate::synth::{
    generate_orbit, generate_scene, load_records, save_records, ObjectRecord, OrbitSpec, SceneSpec, SynthError,
    GROUND_GT_ID,
};

pub const SCENE_FILE: &str = "scene.ovx";
pub const CAMERAS_FILE: &str = "cameras.json";
pub const OBJECTS_FILE: &str = "objects.json";
pub const SCENE_MAP_FILE: &str = "scene_map.json";
pub const QUERIES_FILE: &str = "queries.json";
pub const MASKS_DIR: &str = "masks";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Ovx(#[from] OvxError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("segmenter: {0}")]
    Segment(#[from] SegmentError),
    #[error("grouping: {0}")]
    Grouping(#[from] GroupingError),
    #[error("scene map: {0}")]
    SceneMap(#[from] SceneMapError),
    #[error("query: {0}")]
    Query(#[from] QueryError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// True when the failure came from talking to a model service.
    pub fn is_transport(&self) -> bool {
        match self {
            PipelineError::Segment(SegmentError::Transport(_)) => true,
            PipelineError::Grouping(GroupingError::Segment(SegmentError::Transport(_))) => true,
            PipelineError::SceneMap(SceneMapError::Client(ClientError::Transport(_))) => true,
            PipelineError::Query(QueryError::Client(ClientError::Transport(_))) => true,
            PipelineError::Eval(EvalError::Transport(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneSource {
    Synth(SceneSpec),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraSource {
    Orbit(OrbitSpec),
    Path(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    #[default]
    Mock,
    Remote,
}

impl std::str::FromStr for ClientMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ClientMode::Mock),
            "remote" => Ok(ClientMode::Remote),
            other => Err(format!("unknown client mode {other:?} (expected mock or remote)")),
        }
    }
}

/// Which model implementations to use. The endpoint falls back to
/// `OPENVOXEL_MODEL_ENDPOINT`, then the built-in default, in remote mode only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub mode: ClientMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
}

impl ClientConfig {
    pub fn remote_config(&self) -> RemoteConfig {
        let mut cfg = RemoteConfig::from_env();
        if let Some(e) = &self.endpoint {
            cfg.endpoint = e.clone();
        }
        if let Some(t) = self.timeout_s {
            cfg.timeout_s = t;
        }
        if let Some(r) = self.retries {
            cfg.retries = r;
        }
        cfg
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_queries() -> usize {
    10
}

/// Everything one pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scene: SceneSource,
    pub cameras: CameraSource,
    #[serde(default)]
    pub grouping: GroupingConfig,
    /// Oracle noise, mock mode only.
    #[serde(default)]
    pub segmenter: NoiseConfig,
    #[serde(default)]
    pub scene_map: SceneMapConfig,
    #[serde(default)]
    pub query: QueryOptions,
    #[serde(default)]
    pub clients: ClientConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Overrides the seeds of the scene spec, the oracle and the grouping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Object sidecar for a scene loaded from disk; defaults to the
    /// `objects.json` next to the scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<PathBuf>,
    /// Query-set file; generated from the object records when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_set: Option<PathBuf>,
    /// Number of generated queries.
    #[serde(default = "default_queries")]
    pub queries: usize,
}

/// Command-line values that win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub clients: Option<ClientMode>,
    pub endpoint: Option<String>,
    pub merge_every: Option<usize>,
    pub iou_threshold: Option<f64>,
    pub max_views: Option<usize>,
}

impl PipelineConfig {
    /// A synthetic scene on the default orbit with mock models.
    pub fn synthetic(spec: SceneSpec) -> Self {
        Self {
            scene: SceneSource::Synth(spec),
            cameras: CameraSource::Orbit(OrbitSpec::default()),
            grouping: GroupingConfig::default(),
            segmenter: NoiseConfig::default(),
            scene_map: SceneMapConfig::default(),
            query: QueryOptions::default(),
            clients: ClientConfig::default(),
            out: default_out(),
            seed: None,
            objects: None,
            query_set: None,
            queries: default_queries(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths inside the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let SceneSource::Path(p) = &mut cfg.scene {
            rebase(p);
        }
        if let CameraSource::Path(p) = &mut cfg.cameras {
            rebase(p);
        }
        if let Some(p) = cfg.objects.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.query_set.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.scene {
            self.scene = SceneSource::Path(p.clone());
        }
        if let Some(p) = &o.cameras {
            self.cameras = CameraSource::Path(p.clone());
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(m) = o.clients {
            self.clients.mode = m;
        }
        if o.endpoint.is_some() {
            self.clients.endpoint = o.endpoint.clone();
        }
        if let Some(k) = o.merge_every {
            self.grouping.merge_every = k;
        }
        if let Some(t) = o.iou_threshold {
            self.grouping.iou_match_threshold = t;
        }
        if let Some(m) = o.max_views {
            self.grouping.max_views = m;
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let SceneSource::Synth(spec) = &self.scene {
            spec.validate()?;
        }
        self.grouping.validate()?;
        if self.queries == 0 && self.query_set.is_none() {
            return Err(PipelineError::Config("queries must be at least 1".into()));
        }
        if !(self.scene_map.tau_mask > 0.0 && self.scene_map.tau_mask <= 1.0) {
            return Err(PipelineError::Config("scene_map.tau_mask must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// The config with `seed` pushed into every seeded component.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        if let Some(seed) = self.seed {
            if let SceneSource::Synth(spec) = &mut cfg.scene {
                spec.seed = seed;
            }
            cfg.segmenter.seed = seed;
            cfg.grouping.seed = seed;
        }
        cfg
    }
}

/// A scene with its cameras and, for synthetic or sidecar-backed scenes,
/// the object records.
pub struct LoadedScene {
    pub name: String,
    pub scene: VoxelScene,
    pub views: Vec<CameraView>,
    pub records: Option<Vec<ObjectRecord>>,
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

/// Generates a synthetic scene and its orbit and writes `scene.ovx`,
/// `cameras.json` and `objects.json` into `out`.
pub fn run_synth(spec: &SceneSpec, orbit: &OrbitSpec, out: &Path) -> Result<LoadedScene, PipelineError> {
    let (scene, records) = generate_scene(spec)?;
    let views = generate_orbit(&scene, orbit)?;
    std::fs::create_dir_all(out)?;
    save_scene(&scene, out.join(SCENE_FILE))?;
    save_cameras(&views, out.join(CAMERAS_FILE))?;
    save_records(&records, out.join(OBJECTS_FILE))?;
    Ok(LoadedScene { name: format!("synth-{}", spec.seed), scene, views, records: Some(records) })
}

/// Loads a scene file plus cameras (default: `cameras.json` beside the
/// scene) and an optional object sidecar (default: `objects.json` beside it).
pub fn load_inputs(
    scene_path: &Path,
    cameras: Option<&Path>,
    objects: Option<&Path>,
) -> Result<LoadedScene, PipelineError> {
    let scene = load_scene(scene_path)?;
    let cam_path = cameras.map(Path::to_path_buf).unwrap_or_else(|| sibling(scene_path, CAMERAS_FILE));
    let views = load_cameras(&cam_path)?;
    let obj_path = objects.map(Path::to_path_buf).unwrap_or_else(|| sibling(scene_path, OBJECTS_FILE));
    let records = if objects.is_some() || obj_path.exists() { Some(load_records(&obj_path)?) } else { None };
    let name = scene_path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene").to_string();
    Ok(LoadedScene { name, scene, views, records })
}

fn resolve_inputs(cfg: &PipelineConfig) -> Result<LoadedScene, PipelineError> {
    match (&cfg.scene, &cfg.cameras) {
        (SceneSource::Synth(spec), CameraSource::Orbit(orbit)) => run_synth(spec, orbit, &cfg.out),
        (SceneSource::Synth(spec), CameraSource::Path(p)) => {
            let (scene, records) = generate_scene(spec)?;
            let views = load_cameras(p)?;
            std::fs::create_dir_all(&cfg.out)?;
            save_scene(&scene, cfg.out.join(SCENE_FILE))?;
            save_cameras(&views, cfg.out.join(CAMERAS_FILE))?;
            save_records(&records, cfg.out.join(OBJECTS_FILE))?;
            Ok(LoadedScene { name: format!("synth-{}", spec.seed), scene, views, records: Some(records) })
        }
        (SceneSource::Path(p), cams) => {
            let loaded = match cams {
                CameraSource::Path(c) => load_inputs(p, Some(c), cfg.objects.as_deref())?,
                CameraSource::Orbit(orbit) => {
                    let scene = load_scene(p)?;
                    let views = generate_orbit(&scene, orbit)?;
                    let obj = cfg.objects.clone().unwrap_or_else(|| sibling(p, OBJECTS_FILE));
                    let records = if obj.exists() { Some(load_records(&obj)?) } else { None };
                    let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scene").to_string();
                    LoadedScene { name, scene, views, records }
                }
            };
            std::fs::create_dir_all(&cfg.out)?;
            save_cameras(&loaded.views, cfg.out.join(CAMERAS_FILE))?;
            if let Some(r) = &loaded.records {
                save_records(r, cfg.out.join(OBJECTS_FILE))?;
            }
            Ok(loaded)
        }
    }
}

fn mock_needs_gt(what: &str) -> PipelineError {
    PipelineError::Config(format!("mock {what} needs a scene with ground-truth labels"))
}

pub fn make_segmenter(
    clients: &ClientConfig,
    noise: &NoiseConfig,
    loaded: &LoadedScene,
    tau_bg: f64,
) -> Result<Box<dyn Segmenter>, PipelineError> {
    match clients.mode {
        ClientMode::Remote => Ok(Box::new(RemoteSegmenter::new(&clients.remote_config()))),
        ClientMode::Mock => {
            if loaded.scene.gt_labels.is_none() {
                return Err(mock_needs_gt("segmenter"));
            }
            Ok(Box::new(OracleSegmenter::new(&loaded.scene, &loaded.views, noise.clone(), tau_bg)?))
        }
    }
}

pub fn make_captioner(
    clients: &ClientConfig,
    loaded: &LoadedScene,
    tau_bg: f64,
) -> Result<Box<dyn Captioner>, PipelineError> {
    match clients.mode {
        ClientMode::Remote => Ok(Box::new(RemoteCaptioner::new(&clients.remote_config()))),
        ClientMode::Mock => {
            let records = loaded.records.as_ref().ok_or_else(|| {
                PipelineError::Config(format!("mock captioner needs object records ({OBJECTS_FILE})"))
            })?;
            if loaded.scene.gt_labels.is_none() {
                return Err(mock_needs_gt("captioner"));
            }
            Ok(Box::new(MockCaptioner::from_scene(&loaded.scene, &loaded.views, records, tau_bg)?))
        }
    }
}

pub fn make_chat(clients: &ClientConfig) -> Box<dyn ChatModel> {
    match clients.mode {
        ClientMode::Remote => Box::new(RemoteChat::new(&clients.remote_config())),
        ClientMode::Mock => Box::new(MockChat),
    }
}

/// Groups the scene and stores the result in it.
pub fn run_group_stage(
    loaded: &mut LoadedScene,
    segmenter: &dyn Segmenter,
    config: &GroupingConfig,
) -> Result<(), PipelineError> {
    let result = run_grouping(&loaded.scene, &loaded.views, segmenter, config)?;
    log::info!(
        "grouping: {} groups over {} views, {} merges",
        result.dictionary.len(),
        result.views_used.len(),
        result.merges.len()
    );
    store_grouping(&mut loaded.scene, &result)?;
    Ok(())
}

/// Captions the groups of an already grouped scene.
pub fn run_caption_stage(
    loaded: &LoadedScene,
    captioner: &dyn Captioner,
    chat: &dyn ChatModel,
    config: &SceneMapConfig,
) -> Result<SceneMap, PipelineError> {
    let (ids, dictionary) = load_grouping(&loaded.scene)?;
    Ok(build_scene_map(&loaded.name, &loaded.scene, &dictionary, &ids, &loaded.views, captioner, chat, config)?)
}

/// Renders the full silhouette of one gt instance, ignoring occluders.
pub fn gt_instance_mask(
    scene: &VoxelScene,
    view: &CameraView,
    gt_id: u32,
    tau_mask: f64,
) -> Result<InstanceMask, PipelineError> {
    let gt = scene.gt_ids().ok_or(SynthError::MissingGt)?;
    Ok(render_group_mask(scene, view, &BTreeSet::from([gt_id]), &gt, tau_mask)?)
}

/// Builds `n` queries over the non-ground objects, cycling through them
/// and through each object's views in decreasing silhouette area. Even
/// queries spell out color, category and placement; odd ones only color
/// and category.
pub fn generate_queries(
    scene: &VoxelScene,
    views: &[CameraView],
    records: &[ObjectRecord],
    n: usize,
    tau_mask: f64,
) -> Result<Vec<QueryItem>, PipelineError> {
    let objects: Vec<&ObjectRecord> = records.iter().filter(|r| r.gt_id != GROUND_GT_ID).collect();
    if objects.is_empty() {
        return Err(PipelineError::Config("no objects to query".into()));
    }
    let mut ranked: Vec<Vec<(usize, InstanceMask)>> = Vec::with_capacity(objects.len());
    for r in &objects {
        let mut masks = views
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((i, gt_instance_mask(scene, v, r.gt_id, tau_mask)?)))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        masks.retain(|(_, m)| m.foreground_count() > 0);
        masks.sort_by(|a, b| b.1.foreground_count().cmp(&a.1.foreground_count()).then(a.0.cmp(&b.0)));
        ranked.push(masks);
    }
    let mut items = Vec::with_capacity(n);
    for q in 0..n {
        let k = q % objects.len();
        let Some(choices) = ranked.get(k).filter(|c| !c.is_empty()) else { continue };
        let (view, mask) = &choices[(q / objects.len()) % choices.len()];
        let r = objects[k];
        let query = if q % 2 == 0 {
            format!("{} {} {}", r.color_name, r.category, r.placement)
        } else {
            format!("the {} {}", r.color_name, r.category)
        };
        items.push(QueryItem { query, view: views[*view].clone(), gt_mask: mask.clone() });
    }
    Ok(items)
}

/// Writes `queries.json` and its masks under `out`.
pub fn write_query_set(items: &[QueryItem], out: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(out.join(MASKS_DIR))?;
    let mut entries = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let rel = PathBuf::from(MASKS_DIR).join(format!("q{i:03}.png"));
        item.gt_mask.save_png16(out.join(&rel))?;
        entries.push(QuerySetEntry { query: item.query.clone(), view: item.view.name.clone(), gt_mask: rel });
    }
    save_query_set(&entries, out.join(QUERIES_FILE))?;
    Ok(())
}

pub fn write_report(report: &EvalReport, out: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(REPORT_FILE), report.to_json())?;
    std::fs::write(out.join(REPORT_TEXT_FILE), report.to_text_table())?;
    Ok(())
}

/// Paths and headline numbers of a finished run.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub out: PathBuf,
    pub groups: usize,
    pub report: EvalReport,
}

/// synth or load, group, caption, evaluate.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let cfg = config.resolved();
    let out = cfg.out.clone();
    let mut loaded = resolve_inputs(&cfg)?;

    let segmenter = make_segmenter(&cfg.clients, &cfg.segmenter, &loaded, cfg.grouping.tau_bg)?;
    run_group_stage(&mut loaded, segmenter.as_ref(), &cfg.grouping)?;
    save_scene(&loaded.scene, out.join(SCENE_FILE))?;

    let captioner = make_captioner(&cfg.clients, &loaded, cfg.grouping.tau_bg)?;
    let chat = make_chat(&cfg.clients);
    let map = run_caption_stage(&loaded, captioner.as_ref(), chat.as_ref(), &cfg.scene_map)?;
    save_scene_map(&map, out.join(SCENE_MAP_FILE))?;

    let items = match &cfg.query_set {
        Some(path) => load_query_set(path, &loaded.views)?,
        None => {
            let records = loaded.records.as_ref().ok_or_else(|| {
                PipelineError::Config("generated queries need object records; give a query_set instead".into())
            })?;
            let items = generate_queries(&loaded.scene, &loaded.views, records, cfg.queries, cfg.query.tau_mask)?;
            write_query_set(&items, &out)?;
            items
        }
    };
    let (ids, _) = load_grouping(&loaded.scene)?;
    let report = evaluate_queries(&loaded.scene, &ids, &map, &items, chat.as_ref(), &cfg.query)?;
    write_report(&report, &out)?;
    Ok(PipelineSummary { out, groups: map.entries.len(), report })
}
