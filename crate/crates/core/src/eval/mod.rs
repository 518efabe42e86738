//! Metrics and the query benchmark harness.

mod knn;
mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ChatModel, ClientError};
use crate::image::InstanceMask;
use crate::query::{answer_query, QueryError, QueryOptions, QueryRequest};
use crate::scene::{CameraView, VoxelScene};
use crate::scene_map::SceneMap;

pub use knn::{semseg_transfer, KdTree, TransferProtocol};
pub use metrics::{adjusted_rand_index, boundary_band, boundary_iou, default_boundary_width, iou};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("masks differ in shape")]
    ShapeMismatch,
    #[error("label arrays differ in length ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no positions where both labelings are non-zero")]
    EmptyEvaluationSet,
    #[error("voxel set is empty")]
    EmptyVoxelSet,
    #[error("k must be at least 1")]
    BadK,
    #[error("query set is empty")]
    EmptyQuerySet,
    #[error("unknown view {0:?}")]
    UnknownView(String),
    #[error("query set: {0}")]
    QuerySet(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One benchmark query with its ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryItem {
    pub query: String,
    pub view: CameraView,
    pub gt_mask: InstanceMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: usize,
    pub query: String,
    pub view: String,
    pub iou: f64,
    pub biou: f64,
    pub ids: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical_query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: u32,
    pub iou: f64,
    pub accuracy: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_query: Vec<QueryScore>,
    pub miou: f64,
    pub mbiou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<ClassScore>>,
}

impl EvalReport {
    pub fn from_scores(per_query: Vec<QueryScore>) -> Result<Self, EvalError> {
        if per_query.is_empty() {
            return Err(EvalError::EmptyQuerySet);
        }
        let n = per_query.len() as f64;
        let miou = per_query.iter().map(|s| s.iou).sum::<f64>() / n;
        let mbiou = per_query.iter().map(|s| s.biou).sum::<f64>() / n;
        Ok(Self { per_query, miou, mbiou, per_class: None })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_text_table(&self) -> String {
        let width = self.per_query.iter().map(|s| s.query.len()).max().unwrap_or(5).clamp(5, 48);
        let mut out = format!("{:>3}  {:<width$}  {:>6}  {:>6}  ids\n", "#", "query", "iou", "biou");
        for s in &self.per_query {
            let mut q = s.query.clone();
            if q.len() > width {
                q.truncate(q.floor_char_boundary(width - 1));
                q.push('~');
            }
            let ids = match &s.error {
                Some(e) => format!("error: {e}"),
                None => format!("{:?}", s.ids),
            };
            let _ = writeln!(out, "{:>3}  {:<width$}  {:>6.3}  {:>6.3}  {ids}", s.query_id, q, s.iou, s.biou);
        }
        let _ = writeln!(out, "mIoU {:.4}  mBIoU {:.4}  ({} queries)", self.miou, self.mbiou, self.per_query.len());
        if let Some(classes) = &self.per_class {
            let _ = writeln!(out, "\nclass     iou     acc  support");
            for c in classes {
                let _ = writeln!(out, "{:>5}  {:>6.3}  {:>6.3}  {:>7}", c.class, c.iou, c.accuracy, c.support);
            }
        }
        out
    }
}

/// Per-class IoU and accuracy of a dense semantic labeling.
pub fn semantic_scores(pred: &[u32], gt: &[u32]) -> Result<Vec<ClassScore>, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    let mut stats: BTreeMap<u32, (usize, usize, usize)> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        stats.entry(g).or_default().0 += 1;
        if p == g {
            stats.entry(g).or_default().1 += 1;
        } else {
            stats.entry(p).or_default().2 += 1;
        }
    }
    Ok(stats
        .into_iter()
        .filter(|(_, (support, _, _))| *support > 0)
        .map(|(class, (support, hit, false_pos))| ClassScore {
            class,
            iou: hit as f64 / (support + false_pos) as f64,
            accuracy: hit as f64 / support as f64,
            support,
        })
        .collect())
}

/// Answers every query and scores it against its ground truth. Failures
/// score 0 and keep the error message.
pub fn evaluate_queries(
    scene: &VoxelScene,
    voxel_ids: &[u32],
    map: &SceneMap,
    items: &[QueryItem],
    chat: &dyn ChatModel,
    options: &QueryOptions,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyQuerySet);
    }
    let scores = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let mut score = QueryScore {
                query_id: i,
                query: item.query.clone(),
                view: item.view.name.clone(),
                iou: 0.0,
                biou: 0.0,
                ids: Vec::new(),
                canonical_query: None,
                error: None,
            };
            let d = default_boundary_width(item.view.width, item.view.height);
            let answer = QueryRequest::new(item.query.clone(), item.view.clone())
                .and_then(|req| answer_query(scene, voxel_ids, map, &req, chat, options));
            let outcome = match answer {
                Err(QueryError::Client(ClientError::Transport(e))) => return Err(EvalError::Transport(e)),
                Err(e) => Err(e.to_string()),
                Ok(ans) => (|| {
                    let i = iou(&ans.mask, &item.gt_mask).map_err(|e| e.to_string())?;
                    let b = boundary_iou(&ans.mask, &item.gt_mask, d).map_err(|e| e.to_string())?;
                    Ok((ans, i, b))
                })(),
            };
            match outcome {
                Ok((ans, i, b)) => {
                    score.iou = i;
                    score.biou = b;
                    score.ids = ans.ids;
                    score.canonical_query = Some(ans.canonical_query);
                }
                Err(e) => {
                    log::warn!("query {i} ({:?}) failed: {e}", item.query);
                    score.error = Some(e);
                }
            }
            Ok(score)
        })
        .collect::<Result<Vec<_>, _>>()?;
    EvalReport::from_scores(scores)
}

/// One line of a query-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySetEntry {
    pub query: String,
    /// Camera frame name.
    pub view: String,
    /// Ground-truth mask PNG, relative to the query-set file.
    pub gt_mask: PathBuf,
}

pub fn save_query_set(entries: &[QuerySetEntry], path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(entries).map_err(|e| EvalError::QuerySet(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a query-set file and loads its masks, resolving views by name.
pub fn load_query_set(path: impl AsRef<Path>, views: &[CameraView]) -> Result<Vec<QueryItem>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<QuerySetEntry> = serde_json::from_str(&text).map_err(|e| EvalError::QuerySet(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let view = views.iter().find(|v| v.name == e.view).ok_or_else(|| EvalError::UnknownView(e.view.clone()))?;
            let gt_mask = InstanceMask::load_png(base.join(&e.gt_mask))
                .map_err(|err| EvalError::QuerySet(format!("{}: {err}", e.gt_mask.display())))?;
            if gt_mask.width != view.width || gt_mask.height != view.height {
                return Err(EvalError::QuerySet(format!("{}: size differs from view", e.gt_mask.display())));
            }
            Ok(QueryItem { query: e.query, view: view.clone(), gt_mask })
        })
        .collect()
}
