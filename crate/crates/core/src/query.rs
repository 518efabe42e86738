//! Referring-query inference: refine the query, retrieve groups from the
//! scene map, render their mask.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{
    parse_canonical, parse_retrieval, ChatModel, ChatPart, ChatRequest, ClientError, ContractError,
    RetrievalResult, REFINE_PROMPT, RETRIEVE_PROMPT,
};
use crate::image::{InstanceMask, RasterError, RgbImage};
use crate::scene::{render_color, render_group_mask, CameraView, RenderError, VoxelScene};
use crate::scene_map::SceneMap;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("scene map is empty")]
    EmptyMap,
    #[error("could not canonicalize the query ({source}); reply: {reply:?}")]
    Refine { reply: String, source: ContractError },
    #[error("invalid retrieval reply ({source}); reply: {reply:?}")]
    Retrieve { reply: String, source: ContractError },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub text: String,
    pub target_view: CameraView,
    pub query_image: Option<RgbImage>,
}

impl QueryRequest {
    pub fn new(text: impl Into<String>, target_view: CameraView) -> Result<Self, QueryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        Ok(Self { text, target_view, query_image: None })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAnswer {
    pub mask: InstanceMask,
    pub ids: Vec<u32>,
    pub captions: Vec<String>,
    pub canonical_query: String,
    /// Borderline ids reported by the model; never part of the mask.
    pub candidates: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryOptions {
    pub tau_mask: f64,
    /// Render the target view as the query image when none is given.
    pub render_query_image: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { tau_mask: 0.5, render_query_image: true }
    }
}

fn with_image(mut parts: Vec<ChatPart>, image: Option<&RgbImage>) -> Vec<ChatPart> {
    parts.extend(image.cloned().map(ChatPart::Image));
    parts
}

/// Rewrites a free-form query into a canonical phrase, retrying once.
pub fn refine_query(
    text: &str,
    query_image: Option<&RgbImage>,
    map: &SceneMap,
    chat: &dyn ChatModel,
) -> Result<String, QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let parts = vec![
        ChatPart::Text(format!("scene_map: {}", map.prompt_json())),
        ChatPart::Text(format!("query: {}", text.trim())),
    ];
    let req = ChatRequest::new(REFINE_PROMPT, with_image(parts, query_image))?;
    let mut failure = None;
    for _ in 0..2 {
        let reply = chat.chat(&req)?;
        match parse_canonical(&reply) {
            Ok(phrase) => return Ok(phrase),
            Err(source) => {
                log::warn!("query refinement rejected: {source}: {reply:?}");
                failure = Some(QueryError::Refine { reply, source });
            }
        }
    }
    Err(failure.expect("two attempts made"))
}

/// Asks the model which scene-map entries match `canonical`.
pub fn retrieve(
    map: &SceneMap,
    canonical: &str,
    query_image: Option<&RgbImage>,
    chat: &dyn ChatModel,
) -> Result<RetrievalResult, QueryError> {
    if map.entries.is_empty() {
        return Err(QueryError::EmptyMap);
    }
    let parts = vec![
        ChatPart::Text(format!("scene_map: {}", map.prompt_json())),
        ChatPart::Text(format!("canonical: {canonical}")),
    ];
    let req = ChatRequest::new(RETRIEVE_PROMPT, with_image(parts, query_image))?;
    let reply = chat.chat(&req)?;
    parse_retrieval(&reply, map).map_err(|source| QueryError::Retrieve { reply, source })
}

/// Refine, retrieve, and render the union of the retrieved groups in the
/// target view. A target hidden in that view yields an empty mask.
pub fn answer_query(
    scene: &VoxelScene,
    voxel_ids: &[u32],
    map: &SceneMap,
    req: &QueryRequest,
    chat: &dyn ChatModel,
    options: &QueryOptions,
) -> Result<QueryAnswer, QueryError> {
    let rendered;
    let image = match (&req.query_image, options.render_query_image) {
        (Some(img), _) => Some(img),
        (None, true) => {
            rendered = render_color(scene, &req.target_view);
            Some(&rendered)
        }
        (None, false) => None,
    };
    let canonical_query = refine_query(&req.text, image, map, chat)?;
    let result = retrieve(map, &canonical_query, image, chat)?;
    let selected: BTreeSet<u32> = result.ids.iter().copied().collect();
    let mask = render_group_mask(scene, &req.target_view, &selected, voxel_ids, options.tau_mask)?;
    if mask.is_empty() {
        log::warn!("query {:?}: groups {:?} are not visible in view {}", req.text, result.ids, req.target_view.name);
    }
    Ok(QueryAnswer {
        mask,
        ids: result.ids,
        captions: result.captions,
        canonical_query,
        candidates: result.candidates.unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSidecar {
    pub canonical_query: String,
    pub ids: Vec<u32>,
    pub captions: Vec<String>,
}

/// Alpha-blends the mask (red) over the image at 0.5.
pub fn overlay(image: &RgbImage, mask: &InstanceMask) -> Result<RgbImage, QueryError> {
    if image.width != mask.width || image.height != mask.height {
        return Err(RasterError::DimensionMismatch(image.width, image.height, mask.width, mask.height).into());
    }
    let mut out = image.clone();
    for (px, &l) in out.pixels.iter_mut().zip(&mask.labels) {
        if l != 0 {
            *px = [0.5 * px[0] + 0.5, 0.5 * px[1], 0.5 * px[2]];
        }
    }
    Ok(out)
}

/// Writes `<stem>_mask.png` (0/255), `<stem>_overlay.png` and `<stem>.json`.
pub fn write_answer(
    answer: &QueryAnswer,
    image: &RgbImage,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<(), QueryError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}_mask.png")), answer.mask.to_png8_binary()?)?;
    overlay(image, &answer.mask)?.save_png(dir.join(format!("{stem}_overlay.png")))?;
    let sidecar = AnswerSidecar {
        canonical_query: answer.canonical_query.clone(),
        ids: answer.ids.clone(),
        captions: answer.captions.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), text)?;
    Ok(())
}
