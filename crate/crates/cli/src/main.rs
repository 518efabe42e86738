use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use openvoxel::eval::{evaluate_queries, load_query_set};
use openvoxel::grouping::load_grouping;
use openvoxel::pipeline::{
    load_inputs, make_captioner, make_chat, make_segmenter, run_caption_stage, run_group_stage, run_pipeline,
    run_synth, write_report, CameraSource, ClientMode, LoadedScene, Overrides, PipelineConfig, PipelineError,
    SceneSource, CAMERAS_FILE, OBJECTS_FILE, SCENE_FILE, SCENE_MAP_FILE,
};
use openvoxel::query::{answer_query, write_answer, QueryRequest};
use openvoxel::scene::{render_color, save_cameras, save_scene};
use openvoxel::scene_map::{load_scene_map, save_scene_map};
use openvoxel::synth::{save_records, OrbitSpec, SceneSpec};

#[derive(Parser)]
#[command(name = "openvoxel", version, about = "Open-vocabulary grouping and referring segmentation over voxel scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic scene, its camera orbit and object sidecar.
    Synth(Common),
    /// Group a scene's voxels into instances and store the result in the scene.
    Group(Common),
    /// Caption every group and write the scene map.
    Caption(Common),
    /// Answer one referring query in one view.
    Query(QueryArgs),
    /// Answer and score a query set.
    Eval(EvalArgs),
    /// Run synth or load, group, caption and eval end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Pipeline config file; flags win over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// mock or remote.
    #[arg(long)]
    clients: Option<ClientMode>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    merge_every: Option<usize>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    max_views: Option<usize>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    text: String,
    /// Camera frame name.
    #[arg(long)]
    view: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    map: Option<PathBuf>,
    /// Query-set file.
    #[arg(long)]
    queries: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
}

fn config_for(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &c.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::synthetic(SceneSpec::default()),
    };
    cfg.apply(&Overrides {
        scene: c.scene.clone(),
        cameras: c.cameras.clone(),
        out: c.out.clone(),
        seed: c.seed,
        clients: c.clients,
        endpoint: c.endpoint.clone(),
        merge_every: c.merge_every,
        iou_threshold: c.iou_threshold,
        max_views: c.max_views,
    });
    cfg.validate()?;
    Ok(cfg.resolved())
}

fn scene_input(cfg: &PipelineConfig) -> Result<LoadedScene, PipelineError> {
    let SceneSource::Path(scene) = &cfg.scene else {
        return Err(PipelineError::Config("this command needs --scene".into()));
    };
    let cameras = match &cfg.cameras {
        CameraSource::Path(p) => Some(p.as_path()),
        CameraSource::Orbit(_) => None,
    };
    load_inputs(scene, cameras, cfg.objects.as_deref())
}

fn map_path(map: &Option<PathBuf>, scene: &Path) -> PathBuf {
    map.clone().unwrap_or_else(|| scene.parent().unwrap_or(Path::new(".")).join(SCENE_MAP_FILE))
}

fn slug(text: &str) -> String {
    let mut s: String = text
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.truncate(40);
    let s = s.trim_matches('_').to_string();
    if s.is_empty() { "query".into() } else { s }
}

fn synth(c: &Common) -> Result<(), PipelineError> {
    let cfg = config_for(c)?;
    let SceneSource::Synth(spec) = &cfg.scene else {
        return Err(PipelineError::Config("synth needs a synthetic scene spec, not --scene".into()));
    };
    let orbit = match &cfg.cameras {
        CameraSource::Orbit(o) => o.clone(),
        CameraSource::Path(_) => OrbitSpec::default(),
    };
    let loaded = run_synth(spec, &orbit, &cfg.out)?;
    println!(
        "wrote {} voxels, {} views, {} objects to {}",
        loaded.scene.len(),
        loaded.views.len(),
        loaded.records.as_ref().map_or(0, Vec::len),
        cfg.out.display()
    );
    Ok(())
}

fn group(c: &Common) -> Result<(), PipelineError> {
    let cfg = config_for(c)?;
    let mut loaded = scene_input(&cfg)?;
    let segmenter = make_segmenter(&cfg.clients, &cfg.segmenter, &loaded, cfg.grouping.tau_bg)?;
    run_group_stage(&mut loaded, segmenter.as_ref(), &cfg.grouping)?;
    std::fs::create_dir_all(&cfg.out)?;
    save_scene(&loaded.scene, cfg.out.join(SCENE_FILE))?;
    save_cameras(&loaded.views, cfg.out.join(CAMERAS_FILE))?;
    if let Some(r) = &loaded.records {
        save_records(r, cfg.out.join(OBJECTS_FILE))?;
    }
    let (_, dict) = load_grouping(&loaded.scene)?;
    println!("{} groups; wrote {}", dict.len(), cfg.out.join(SCENE_FILE).display());
    Ok(())
}

fn caption(c: &Common) -> Result<(), PipelineError> {
    let cfg = config_for(c)?;
    let loaded = scene_input(&cfg)?;
    let captioner = make_captioner(&cfg.clients, &loaded, cfg.grouping.tau_bg)?;
    let chat = make_chat(&cfg.clients);
    let map = run_caption_stage(&loaded, captioner.as_ref(), chat.as_ref(), &cfg.scene_map)?;
    std::fs::create_dir_all(&cfg.out)?;
    save_scene_map(&map, cfg.out.join(SCENE_MAP_FILE))?;
    let flagged = map.entries.iter().filter(|e| e.flagged).count();
    println!("{} groups captioned ({flagged} flagged); wrote {}", map.entries.len(), cfg.out.join(SCENE_MAP_FILE).display());
    Ok(())
}

fn query(a: &QueryArgs) -> Result<(), PipelineError> {
    let cfg = config_for(&a.common)?;
    let loaded = scene_input(&cfg)?;
    let SceneSource::Path(scene_path) = &cfg.scene else { unreachable!("scene_input checked the source") };
    let map = load_scene_map(map_path(&a.map, scene_path))?;
    let (ids, _) = load_grouping(&loaded.scene)?;
    let view = loaded
        .views
        .iter()
        .find(|v| v.name == a.view)
        .ok_or_else(|| PipelineError::Config(format!("unknown view {:?}", a.view)))?;
    let chat = make_chat(&cfg.clients);
    let req = QueryRequest::new(a.text.clone(), view.clone())?;
    let answer = answer_query(&loaded.scene, &ids, &map, &req, chat.as_ref(), &cfg.query)?;
    let stem = slug(&a.text);
    write_answer(&answer, &render_color(&loaded.scene, view), &cfg.out, &stem)?;
    println!(
        "{:?} -> ids {:?} ({} px); wrote {}",
        answer.canonical_query,
        answer.ids,
        answer.mask.foreground_count(),
        cfg.out.join(format!("{stem}_mask.png")).display()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), PipelineError> {
    let cfg = config_for(&a.common)?;
    let loaded = scene_input(&cfg)?;
    let SceneSource::Path(scene_path) = &cfg.scene else { unreachable!("scene_input checked the source") };
    let map = load_scene_map(map_path(&a.map, scene_path))?;
    let (ids, _) = load_grouping(&loaded.scene)?;
    let items = load_query_set(&a.queries, &loaded.views)?;
    let chat = make_chat(&cfg.clients);
    let report = evaluate_queries(&loaded.scene, &ids, &map, &items, chat.as_ref(), &cfg.query)?;
    write_report(&report, &cfg.out)?;
    print!("{}", report.to_text_table());
    Ok(())
}

fn pipeline(a: &PipelineArgs) -> Result<(), PipelineError> {
    if a.common.config.is_none() {
        return Err(PipelineError::Config("pipeline needs --config".into()));
    }
    let cfg = config_for(&a.common)?;
    let summary = run_pipeline(&cfg)?;
    print!("{}", summary.report.to_text_table());
    println!("{} groups; outputs in {}", summary.groups, summary.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Group(c) => group(c),
        Command::Caption(c) => caption(c),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_transport() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
