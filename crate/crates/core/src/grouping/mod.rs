//! Training-free voxel grouping.
//!
//! Each processed view contributes per-instance centroids (masked means of
//! the point map) that are splatted onto the voxels along every labeled
//! ray. A voxel's group is the dictionary centroid nearest to its weighted
//! mean vote. Views after the first are matched against the current
//! grouping rendered into that view, and every few views the projected
//! groups are re-prompted to merge fragments of one object.

mod dictionary;
mod field;
mod matching;
mod merge;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{InstanceMask, RasterError};
use crate::scene::{render_color, render_group_ids, render_point_map, CameraView, RenderError, VoxelScene};
use crate::segmenter::{SegmentError, Segmenter};

pub use dictionary::{DictEntry, GroupDictionary};
pub use field::{assign_voxel_ids, compute_instance_centroids, lift_masks, GroupField, InstanceCentroid};
pub use matching::{match_masks, MaskMatch};
pub use merge::{build_prompts, propose_merges};

/// Key under which the dictionary is stored in the scene metadata.
pub const DICTIONARY_META_KEY: &str = "group_dictionary";

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("no views to process")]
    NoViews,
    #[error("no instances in first view")]
    NoInstancesInFirstView,
    #[error("group dictionary is empty")]
    EmptyDictionary,
    #[error("group field has {got} voxels, scene has {expected}")]
    FieldLength { got: usize, expected: usize },
    #[error("invalid grouping config: {0}")]
    Config(String),
    #[error("scene has no stored grouping")]
    NotGrouped,
    #[error("stored grouping is malformed: {0}")]
    Stored(String),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub iou_match_threshold: f64,
    pub containment_merge_threshold: f64,
    pub merge_every: usize,
    /// Turns the re-prompting merge step off entirely.
    pub merging: bool,
    pub max_views: usize,
    pub tau_bg: f64,
    pub min_instance_pixels: usize,
    pub positive_prompts: usize,
    pub negative_prompts: usize,
    /// Seed for prompt sampling.
    pub seed: u64,
    /// Where to write each view's relabeled mask, if anywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debug_mask_dir: Option<PathBuf>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            iou_match_threshold: 0.3,
            containment_merge_threshold: 0.9,
            merge_every: 3,
            merging: true,
            max_views: 150,
            tau_bg: 0.5,
            min_instance_pixels: 16,
            positive_prompts: 5,
            negative_prompts: 8,
            seed: 0,
            debug_mask_dir: None,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<(), GroupingError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(GroupingError::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("iou_match_threshold", self.iou_match_threshold)?;
        unit("containment_merge_threshold", self.containment_merge_threshold)?;
        if !(self.tau_bg > 0.0 && self.tau_bg <= 1.0) {
            return Err(GroupingError::Config(format!("tau_bg must be in (0, 1], got {}", self.tau_bg)));
        }
        if self.merge_every == 0 {
            return Err(GroupingError::Config("merge_every must be at least 1".into()));
        }
        if self.max_views == 0 {
            return Err(GroupingError::Config("max_views must be at least 1".into()));
        }
        if self.positive_prompts == 0 {
            return Err(GroupingError::Config("positive_prompts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Indices of the views kept by uniform subsampling with stride
/// `ceil(K / max_views)`.
pub fn subsample_views(n_views: usize, max_views: usize) -> Vec<usize> {
    if n_views == 0 {
        return Vec::new();
    }
    let stride = n_views.div_ceil(max_views.max(1));
    (0..n_views).step_by(stride).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingResult {
    pub field: GroupField,
    pub dictionary: GroupDictionary,
    pub voxel_ids: Vec<u32>,
    /// Original indices of the processed views.
    pub views_used: Vec<usize>,
    /// Merges applied, in order, as `(from, into)`.
    pub merges: Vec<(u32, u32)>,
}

/// Renders the current grouping into `view` and re-prompts the segmenter
/// for every visible group; returns the proposed `(from, into)` merges.
pub fn merge_step(
    scene: &VoxelScene,
    view: &CameraView,
    view_index: usize,
    voxel_ids: &[u32],
    segmenter: &dyn Segmenter,
    config: &GroupingConfig,
) -> Result<Vec<(u32, u32)>, GroupingError> {
    let m_proj = render_group_ids(scene, view, voxel_ids, config.tau_bg)?;
    let image = render_color(scene, view);
    Ok(propose_merges(&m_proj, &image, view_index, segmenter, config)?)
}

fn dump_mask(config: &GroupingConfig, view_index: usize, mask: &InstanceMask) {
    let Some(dir) = &config.debug_mask_dir else { return };
    let path = dir.join(format!("view_{view_index:04}.png"));
    if let Err(e) = std::fs::create_dir_all(dir).map_err(RasterError::from).and_then(|_| mask.save_png16(&path)) {
        log::warn!("could not write {}: {e}", path.display());
    }
}

/// Runs the progressive grouping over (a uniform subsample of) `views`.
/// The segmenter is called with the original view indices.
pub fn run_grouping(
    scene: &VoxelScene,
    views: &[CameraView],
    segmenter: &dyn Segmenter,
    config: &GroupingConfig,
) -> Result<GroupingResult, GroupingError> {
    config.validate()?;
    let views_used = subsample_views(views.len(), config.max_views);
    let (&first, rest) = views_used.split_first().ok_or(GroupingError::NoViews)?;

    let mut field = GroupField::zeros(scene.len());
    let mut dictionary = GroupDictionary::default();
    let mut merges = Vec::new();

    let view = &views[first];
    let mask = segmenter.segment(&render_color(scene, view), first)?;
    let pmap = render_point_map(scene, view, config.tau_bg);
    let raw = compute_instance_centroids(&mask, &pmap, config.min_instance_pixels)?;
    if raw.is_empty() {
        return Err(GroupingError::NoInstancesInFirstView);
    }
    let mut centroids = std::collections::BTreeMap::new();
    let mut mapping = std::collections::BTreeMap::new();
    for (label, c) in raw {
        let id = dictionary.allocate();
        dictionary.insert(id, c.position, c.pixels as f64);
        mapping.insert(label, id);
        centroids.insert(id, c);
    }
    let relabeled = relabel(&mask, &mapping);
    dump_mask(config, first, &relabeled);
    lift_masks(scene, view, &relabeled, &centroids, &mut field)?;
    log::debug!("view {first}: {} groups", dictionary.len());

    for (step, &t) in rest.iter().enumerate() {
        let view = &views[t];
        let voxel_ids = assign_voxel_ids(&field, &dictionary)?;
        let m_proj = render_group_ids(scene, view, &voxel_ids, config.tau_bg)?;
        let image = render_color(scene, view);
        let m_new = segmenter.segment(&image, t)?;
        let pmap = render_point_map(scene, view, config.tau_bg);

        // instances too small to yield a centroid are dropped as noise
        let raw = compute_instance_centroids(&m_new, &pmap, config.min_instance_pixels)?;
        let kept: InstanceMask = InstanceMask {
            width: m_new.width,
            height: m_new.height,
            labels: m_new.labels.iter().map(|l| if raw.contains_key(l) { *l } else { 0 }).collect(),
        };
        let matched = match_masks(&m_proj, &kept, config.iou_match_threshold, dictionary.next_id)?;
        let mut centroids = std::collections::BTreeMap::new();
        for (label, c) in &raw {
            let id = matched.mapping[label];
            if matched.fresh.contains(label) {
                dictionary.insert(id, c.position, c.pixels as f64);
            } else {
                dictionary.observe(id, c.position, c.pixels as f64);
            }
            centroids.insert(id, *c);
        }
        dictionary.next_id = dictionary.next_id.max(matched.next_id);

        if config.merging && (step + 1) % config.merge_every == 0 {
            match propose_merges(&m_proj, &image, t, segmenter, config) {
                Ok(proposed) => {
                    for &(from, into) in &proposed {
                        log::debug!("view {t}: merging group {from} into {into}");
                        dictionary.merge(from, into);
                    }
                    merges.extend(proposed);
                }
                Err(e) => log::warn!("view {t}: merge step skipped: {e}"),
            }
        }

        dump_mask(config, t, &matched.relabeled);
        lift_masks(scene, view, &matched.relabeled, &centroids, &mut field)?;
    }

    let voxel_ids = assign_voxel_ids(&field, &dictionary)?;
    Ok(GroupingResult { field, dictionary, voxel_ids, views_used, merges })
}

fn relabel(mask: &InstanceMask, mapping: &std::collections::BTreeMap<u32, u32>) -> InstanceMask {
    InstanceMask {
        width: mask.width,
        height: mask.height,
        labels: mask.labels.iter().map(|l| mapping.get(l).copied().unwrap_or(0)).collect(),
    }
}

/// Writes `F`, `W`, the final ids and the dictionary into the scene's
/// optional sections and metadata.
pub fn store_grouping(scene: &mut VoxelScene, result: &GroupingResult) -> Result<(), GroupingError> {
    if result.field.len() != scene.len() || result.voxel_ids.len() != scene.len() {
        return Err(GroupingError::FieldLength { got: result.field.len(), expected: scene.len() });
    }
    scene.grouping.field_f = Some(result.field.f.iter().map(|f| f.map(|x| x as f32)).collect());
    scene.grouping.field_w = Some(result.field.w.iter().map(|&w| w as f32).collect());
    scene.grouping.ids = Some(
        result
            .voxel_ids
            .iter()
            .map(|&id| i32::try_from(id).map_err(|_| GroupingError::Stored(format!("id {id} too large"))))
            .collect::<Result<_, _>>()?,
    );
    let dict = serde_json::to_value(&result.dictionary).map_err(|e| GroupingError::Stored(e.to_string()))?;
    scene.meta.insert(DICTIONARY_META_KEY.into(), dict);
    Ok(())
}

/// Stored voxel ids and dictionary of a grouped scene.
pub fn load_grouping(scene: &VoxelScene) -> Result<(Vec<u32>, GroupDictionary), GroupingError> {
    let ids = scene.grouping.ids.as_ref().ok_or(GroupingError::NotGrouped)?;
    let ids = ids
        .iter()
        .map(|&i| u32::try_from(i).map_err(|_| GroupingError::Stored(format!("negative id {i}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let dict = scene.meta.get(DICTIONARY_META_KEY).ok_or(GroupingError::NotGrouped)?;
    let dict: GroupDictionary =
        serde_json::from_value(dict.clone()).map_err(|e| GroupingError::Stored(e.to_string()))?;
    Ok((ids, dict))
}
