//! Per-group captions and the persisted scene map.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::clients::{
    parse_caption_line, tokenize, validate_canonical_phrase, CaptionFrame, CaptionRequest, Captioner, ChatModel,
    ChatPart, ChatRequest, ClientError, CANONICALIZE_PROMPT, CAPTION_FRAMES, FORBIDDEN_SUBJECTS,
};
use crate::grouping::GroupDictionary;
use crate::image::{InstanceMask, RgbImage};
use crate::scene::{render_color, render_group_mask, CameraView, RenderError, VoxelScene};

/// Caption stored for groups whose caption chain failed.
pub const FAILED_CAPTION: &str = "unknown, caption unavailable";

#[derive(Debug, Error)]
pub enum SceneMapError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate group id {0}")]
    DuplicateId(u32),
    #[error("group {0} has a non-finite center")]
    NonFiniteCenter(u32),
    #[error("group {0} is not visible in any view")]
    InvisibleGroup(u32),
    #[error("mask is empty")]
    EmptyMask,
    #[error("image and mask sizes differ")]
    SizeMismatch,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMapEntry {
    pub id: u32,
    pub center: [f64; 3],
    pub caption: String,
    pub voxel_count: usize,
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMap {
    pub scene_name: String,
    #[serde(rename = "groups")]
    pub entries: Vec<SceneMapEntry>,
}

impl SceneMap {
    pub fn get(&self, id: u32) -> Option<&SceneMapEntry> {
        self.entries.binary_search_by_key(&id, |e| e.id).ok().map(|i| &self.entries[i])
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.id).collect()
    }

    /// Sorts entries by id and checks ids and centers. Captions that break
    /// the canonical template are only logged.
    pub fn validate(&mut self) -> Result<(), SceneMapError> {
        self.entries.sort_by_key(|e| e.id);
        for pair in self.entries.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(SceneMapError::DuplicateId(pair[0].id));
            }
        }
        for e in &self.entries {
            if e.center.iter().any(|c| !c.is_finite()) {
                return Err(SceneMapError::NonFiniteCenter(e.id));
            }
            if let Err(err) = validate_canonical_phrase(&e.caption) {
                log::warn!("group {} caption {:?}: {err}", e.id, e.caption);
            }
        }
        Ok(())
    }

    /// The compact JSON list handed to the chat model.
    pub fn prompt_json(&self) -> String {
        let items: Vec<_> = self
            .entries
            .iter()
            .map(|e| json!({ "id": e.id, "center": e.center, "caption": e.caption }))
            .collect();
        serde_json::Value::Array(items).to_string()
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scene map serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, SceneMapError> {
        let mut map: SceneMap = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }
}

pub fn save_scene_map(map: &SceneMap, path: impl AsRef<Path>) -> Result<(), SceneMapError> {
    std::fs::write(path, map.to_json())?;
    Ok(())
}

pub fn load_scene_map(path: impl AsRef<Path>) -> Result<SceneMap, SceneMapError> {
    SceneMap::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneMapConfig {
    pub frames: usize,
    pub tau_mask: f64,
    pub min_instance_pixels: usize,
    /// Brightness factor outside the mask in visual prompts.
    pub darken: f32,
    /// Red dot radius as a fraction of the image diagonal (at least 2 px).
    pub dot_fraction: f64,
    /// Rewrite raw captions into the canonical template.
    pub canonical_captions: bool,
}

impl Default for SceneMapConfig {
    fn default() -> Self {
        Self {
            frames: CAPTION_FRAMES,
            tau_mask: 0.5,
            min_instance_pixels: 16,
            darken: 0.3,
            dot_fraction: 0.01,
            canonical_captions: true,
        }
    }
}

/// Per-view binary masks of one group.
fn group_masks(
    group: u32,
    scene: &VoxelScene,
    views: &[CameraView],
    voxel_ids: &[u32],
    tau_mask: f64,
) -> Result<Vec<InstanceMask>, RenderError> {
    let selected = BTreeSet::from([group]);
    views.iter().map(|v| render_group_mask(scene, v, &selected, voxel_ids, tau_mask)).collect()
}

/// Indices of up to `k` views with the largest non-empty masks, ties to
/// the earlier view, in descending area order.
fn top_views(masks: &[InstanceMask], k: usize) -> Vec<usize> {
    let mut order: Vec<(usize, usize)> =
        masks.iter().enumerate().map(|(i, m)| (m.foreground_count(), i)).filter(|(a, _)| *a > 0).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Picks up to `k` frames where the group's rendered mask is largest and
/// pads the request to the captioner's frame count.
pub fn sample_caption_frames(
    group_id: u32,
    scene: &VoxelScene,
    views: &[CameraView],
    images: &[RgbImage],
    voxel_ids: &[u32],
    k: usize,
    tau_mask: f64,
) -> Result<CaptionRequest, SceneMapError> {
    let masks = group_masks(group_id, scene, views, voxel_ids, tau_mask)?;
    frames_from_masks(group_id, masks, images, k)
}

fn frames_from_masks(
    group_id: u32,
    masks: Vec<InstanceMask>,
    images: &[RgbImage],
    k: usize,
) -> Result<CaptionRequest, SceneMapError> {
    let chosen = top_views(&masks, k.clamp(1, CAPTION_FRAMES));
    if chosen.is_empty() {
        return Err(SceneMapError::InvisibleGroup(group_id));
    }
    let frames = chosen
        .into_iter()
        .map(|i| CaptionFrame { view_index: i, image: images[i].clone(), mask: masks[i].clone() })
        .collect();
    Ok(CaptionRequest::new(frames)?)
}

/// Darkens everything outside the mask and draws a red disc at the mask's
/// pixel centroid (or the mask pixel nearest to it).
pub fn build_visual_prompt(
    image: &RgbImage,
    mask: &InstanceMask,
    darken: f32,
    dot_fraction: f64,
) -> Result<RgbImage, SceneMapError> {
    if image.width != mask.width || image.height != mask.height {
        return Err(SceneMapError::SizeMismatch);
    }
    if mask.is_empty() {
        return Err(SceneMapError::EmptyMask);
    }
    let w = mask.width;
    let inside: Vec<usize> = (0..mask.len()).filter(|&p| mask.labels[p] != 0).collect();
    let n = inside.len() as f64;
    let (cu, cv) = inside.iter().fold((0.0, 0.0), |(a, b), &p| (a + (p % w) as f64 / n, b + (p / w) as f64 / n));
    let (ru, rv) = (cu.round() as usize, cv.round() as usize);
    let center = if ru < w && rv < mask.height && mask.get(ru, rv) != 0 {
        (ru as f64, rv as f64)
    } else {
        let dist = |p: usize| ((p % w) as f64 - cu).powi(2) + ((p / w) as f64 - cv).powi(2);
        let p = *inside.iter().min_by(|&&a, &&b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b))).expect("non-empty");
        ((p % w) as f64, (p / w) as f64)
    };
    let diag = ((w * w + mask.height * mask.height) as f64).sqrt();
    let radius = (dot_fraction * diag).max(2.0);

    let mut out = image.clone();
    for (p, px) in out.pixels.iter_mut().enumerate() {
        let (u, v) = ((p % w) as f64, (p / w) as f64);
        if (u - center.0).powi(2) + (v - center.1).powi(2) <= radius * radius {
            *px = [1.0, 0.0, 0.0];
        } else if mask.labels[p] == 0 {
            *px = px.map(|c| c * darken);
        }
    }
    Ok(out)
}

/// A canonical caption; `flagged` marks mechanically repaired captions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCaption {
    pub text: String,
    pub flagged: bool,
}

const REPAIR_STOPWORDS: [&str; 14] =
    ["a", "an", "the", "of", "on", "in", "with", "and", "to", "at", "possibly", "placed", "next", "background"];

/// Most frequent usable word of the raw caption, ties to the latest one.
fn repair_noun(raw: &str) -> Option<String> {
    let tokens = tokenize(raw);
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (pos, t) in tokens.iter().enumerate() {
        let t = t.as_str();
        if REPAIR_STOPWORDS.contains(&t) || FORBIDDEN_SUBJECTS.contains(&t) || !t.chars().all(char::is_alphabetic) {
            continue;
        }
        let slot = counts.entry(t).or_insert((0, pos));
        slot.0 += 1;
        slot.1 = pos;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1)).map(|(t, _)| t.to_string())
}

/// Replaces the subject of `reply` (or of `raw` if the reply is unusable).
fn repair(raw: &str, reply: &str) -> String {
    let base = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or(raw);
    let noun = repair_noun(raw).unwrap_or_else(|| "unknown".into());
    let candidate = match base.split_once(',') {
        Some((_, rest)) => format!("{noun}, {}", rest.trim()),
        None => noun.clone(),
    };
    validate_canonical_phrase(candidate.trim_end_matches('.')).unwrap_or(noun)
}

/// Asks the chat model to rewrite a raw caption, retrying once on an
/// invalid reply before repairing it mechanically.
pub fn canonicalize_caption(
    raw_caption: &str,
    prompted_frames: &[RgbImage],
    chat: &dyn ChatModel,
) -> Result<CanonicalCaption, SceneMapError> {
    if raw_caption.trim().is_empty() {
        return Err(ClientError::InvalidRequest("raw caption is empty".into()).into());
    }
    let mut parts = vec![ChatPart::Text(format!("caption: {}", raw_caption.trim()))];
    parts.extend(prompted_frames.iter().cloned().map(ChatPart::Image));
    let req = ChatRequest::new(CANONICALIZE_PROMPT, parts)?;
    let mut last = String::new();
    for attempt in 0..2 {
        last = chat.chat(&req)?;
        match parse_caption_line(&last) {
            Ok(text) => return Ok(CanonicalCaption { text, flagged: false }),
            Err(e) => log::warn!("canonical caption attempt {} rejected: {e}: {last:?}", attempt + 1),
        }
    }
    Ok(CanonicalCaption { text: repair(raw_caption, &last), flagged: true })
}

/// Runs frame sampling, captioning and canonicalization for every live
/// group. Failures become flagged entries rather than aborting the map.
#[allow(clippy::too_many_arguments)]
pub fn build_scene_map(
    scene_name: &str,
    scene: &VoxelScene,
    dictionary: &GroupDictionary,
    voxel_ids: &[u32],
    views: &[CameraView],
    captioner: &dyn Captioner,
    chat: &dyn ChatModel,
    config: &SceneMapConfig,
) -> Result<SceneMap, SceneMapError> {
    if voxel_ids.len() != scene.len() {
        return Err(RenderError::IdLength { got: voxel_ids.len(), expected: scene.len() }.into());
    }
    let mut voxel_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &id in voxel_ids.iter().filter(|&&id| id != 0) {
        *voxel_counts.entry(id).or_default() += 1;
    }
    let images: Vec<RgbImage> = views.iter().map(|v| render_color(scene, v)).collect();

    // an unreachable model aborts the map; anything else only flags the group
    let entries: Vec<Option<SceneMapEntry>> = voxel_counts
        .par_iter()
        .map(|(&id, &voxel_count)| {
            let center = dictionary.centroid(id).map(|c| c.into()).unwrap_or([f64::NAN; 3]);
            let masks = match group_masks(id, scene, views, voxel_ids, config.tau_mask) {
                Ok(m) => m,
                Err(e) => return Ok(Some(failed(id, center, voxel_count, &e.to_string()))),
            };
            let support: usize = masks.iter().map(InstanceMask::foreground_count).sum();
            if support < config.min_instance_pixels {
                log::debug!("group {id}: projected support {support} too small, skipped");
                return Ok(None);
            }
            match caption_group(id, masks, &images, captioner, chat, config) {
                Ok(c) => Ok(Some(SceneMapEntry { id, center, caption: c.text, voxel_count, flagged: c.flagged })),
                Err(e @ SceneMapError::Client(ClientError::Transport(_))) => Err(e),
                Err(e) => Ok(Some(failed(id, center, voxel_count, &e.to_string()))),
            }
        })
        .collect::<Result<_, _>>()?;
    let mut map = SceneMap { scene_name: scene_name.to_string(), entries: entries.into_iter().flatten().collect() };
    map.validate()?;
    Ok(map)
}

fn failed(id: u32, center: [f64; 3], voxel_count: usize, why: &str) -> SceneMapEntry {
    log::warn!("group {id}: caption failed: {why}");
    SceneMapEntry { id, center, caption: FAILED_CAPTION.into(), voxel_count, flagged: true }
}

fn caption_group(
    id: u32,
    masks: Vec<InstanceMask>,
    images: &[RgbImage],
    captioner: &dyn Captioner,
    chat: &dyn ChatModel,
    config: &SceneMapConfig,
) -> Result<CanonicalCaption, SceneMapError> {
    let req = frames_from_masks(id, masks, images, config.frames)?;
    let raw = captioner.caption(&req)?;
    if !config.canonical_captions {
        return Ok(CanonicalCaption { text: raw, flagged: false });
    }
    let prompted = req
        .frames()
        .iter()
        .map(|f| build_visual_prompt(&f.image, &f.mask, config.darken, config.dot_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    canonicalize_caption(&raw, &prompted, chat)
}
