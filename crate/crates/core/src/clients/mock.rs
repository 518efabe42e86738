//! Rule-based stand-ins for the captioning and chat models.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::contract::{format_retrieval, leading_noun, tokenize, validate_canonical_phrase, RetrievalResult};
use super::{CaptionRequest, Captioner, ChatModel, ChatRequest, ClientError};
use super::{CANONICALIZE_PROMPT, REFINE_PROMPT, RETRIEVE_PROMPT};
use crate::image::InstanceMask;
use crate::scene::{CameraView, VoxelScene};
use crate::synth::{render_gt_masks, ObjectRecord};

/// Caption for masks that cover no labeled geometry.
pub const UNIDENTIFIED_CAPTION: &str = "A small unidentified object";

/// Describes the ground-truth object owning most of the masked pixels,
/// always with "object" as the subject.
pub struct MockCaptioner {
    gt_masks: Vec<InstanceMask>,
    records: BTreeMap<u32, ObjectRecord>,
}

impl MockCaptioner {
    pub fn new(gt_masks: Vec<InstanceMask>, records: &[ObjectRecord]) -> Self {
        Self { gt_masks, records: records.iter().map(|r| (r.gt_id, r.clone())).collect() }
    }

    pub fn from_scene(
        scene: &VoxelScene,
        views: &[CameraView],
        records: &[ObjectRecord],
        tau_bg: f64,
    ) -> Result<Self, crate::synth::SynthError> {
        Ok(Self::new(render_gt_masks(scene, views, tau_bg)?, records))
    }
}

/// The mock caption for one record.
pub fn caption_for(record: &ObjectRecord) -> String {
    format!(
        "A {} {} object, possibly a {}, placed {}",
        record.color_name, record.shape, record.category, record.placement
    )
}

impl Captioner for MockCaptioner {
    fn caption(&self, req: &CaptionRequest) -> Result<String, ClientError> {
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for frame in req.frames() {
            let gt = self
                .gt_masks
                .get(frame.view_index)
                .ok_or_else(|| ClientError::InvalidRequest(format!("unknown view {}", frame.view_index)))?;
            if !gt.same_shape(&frame.mask) {
                return Err(ClientError::InvalidRequest(format!("mask size differs in view {}", frame.view_index)));
            }
            for (&m, &g) in frame.mask.labels.iter().zip(&gt.labels) {
                if m != 0 && g != 0 {
                    *votes.entry(g).or_default() += 1;
                }
            }
        }
        let owner = votes.iter().max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0))).map(|(&g, _)| g);
        Ok(match owner.and_then(|g| self.records.get(&g)) {
            Some(r) => caption_for(r),
            None => UNIDENTIFIED_CAPTION.to_string(),
        })
    }
}

/// Chat model that recognizes the three packaged system prompts and
/// answers each with a fixed grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockChat;

const STOPWORDS: [&str; 20] = [
    "a", "an", "the", "of", "with", "that", "is", "this", "it", "its", "and", "to", "some", "which",
    "what", "can", "be", "used", "for", "looks",
];
const ARTICLES: [&str; 3] = ["a", "an", "the"];
const PREPOSITIONS: [&str; 11] =
    ["on", "in", "inside", "under", "beneath", "near", "next", "beside", "against", "between", "at"];

fn synonym(token: &str) -> &str {
    match token {
        "ball" | "round" => "sphere",
        "cube" | "block" => "box",
        "egg" | "oval" => "ellipsoid",
        other => other,
    }
}

#[derive(Deserialize)]
struct PromptEntry {
    id: u32,
    caption: String,
}

fn prompt_entries(req: &ChatRequest) -> Result<Vec<PromptEntry>, ClientError> {
    let text = req.field("scene_map").ok_or_else(|| ClientError::Protocol("missing scene_map part".into()))?;
    let mut entries: Vec<PromptEntry> =
        serde_json::from_str(text).map_err(|e| ClientError::Protocol(format!("scene_map part: {e}")))?;
    entries.sort_by_key(|e| e.id);
    Ok(entries)
}

fn required<'a>(req: &'a ChatRequest, key: &str) -> Result<&'a str, ClientError> {
    req.field(key).ok_or_else(|| ClientError::Protocol(format!("missing {key} part")))
}

/// "A <color> <shape> object, possibly a <category>, placed <placement>"
/// → (color, shape, category, placement).
fn parse_mock_caption(raw: &str) -> Option<(String, String, String, String)> {
    let rest = raw.trim().strip_prefix("A ")?;
    let (look, rest) = rest.split_once(" object, possibly a ")?;
    let (category, placement) = rest.split_once(", placed ")?;
    let (color, shape) = look.split_once(' ')?;
    Some((color.into(), shape.into(), category.into(), placement.trim_end_matches('.').into()))
}

fn canonicalize(raw: &str) -> String {
    if let Some((color, shape, category, placement)) = parse_mock_caption(raw) {
        let lead = if shape == "plane" { format!("background: {category}") } else { category };
        return format!("{lead}, {color} {shape}, {placement}").to_lowercase();
    }
    if let Ok(phrase) = validate_canonical_phrase(raw.trim().trim_end_matches('.')) {
        return phrase;
    }
    // keeps the generic subject, which the caller has to repair
    let words: Vec<String> = tokenize(raw)
        .into_iter()
        .filter(|w| !ARTICLES.contains(&w.as_str()) && w != "object")
        .collect();
    if words.is_empty() {
        "object".into()
    } else {
        format!("object, {}", words.join(" "))
    }
}

fn refine(query: &str, entries: &[PromptEntry]) -> String {
    let tokens = tokenize(query);
    let content: Vec<&str> = tokens.iter().map(String::as_str).filter(|t| !STOPWORDS.contains(t)).collect();
    if content.len() == 1 {
        return content[0].to_string();
    }
    let split = tokens.iter().position(|t| PREPOSITIONS.contains(&t.as_str())).unwrap_or(tokens.len());
    let placement: Vec<&str> =
        tokens[split..].iter().map(String::as_str).filter(|t| !ARTICLES.contains(t)).collect();
    let placement = (placement.len() > 1).then(|| placement.join(" "));
    let described: Vec<&str> = tokens[..split]
        .iter()
        .map(String::as_str)
        .filter(|t| !STOPWORDS.contains(t))
        .map(synonym)
        .collect();
    let query_set: BTreeSet<&str> =
        described.iter().copied().chain(tokens[split..].iter().map(String::as_str)).collect();

    let mut best: Option<(usize, &PromptEntry)> = None;
    for e in entries {
        let caption_tokens = tokenize(&e.caption);
        let caption_set: BTreeSet<&str> = caption_tokens.iter().map(String::as_str).collect();
        let noun = leading_noun(&e.caption);
        let noun_hit = noun.split_whitespace().all(|w| described.contains(&w));
        let score = query_set.intersection(&caption_set).count() + 2 * usize::from(noun_hit);
        if score > 0 && best.map_or(true, |(s, _)| score > s) {
            best = Some((score, e));
        }
    }
    let mut parts: Vec<String> = match best {
        Some((_, e)) => {
            let mut p = vec![leading_noun(&e.caption)];
            if let Some(look) = e.caption.split(',').nth(1) {
                p.push(look.trim().to_lowercase());
            }
            p
        }
        None => match described.split_last() {
            Some((noun, rest)) if !rest.is_empty() => vec![noun.to_string(), rest.join(" ")],
            Some((noun, _)) => vec![noun.to_string()],
            None => vec![tokens.join(" ")],
        },
    };
    parts.extend(placement);
    parts.join(", ")
}

fn retrieve(canonical: &str, entries: &[PromptEntry]) -> Result<RetrievalResult, ClientError> {
    let query: BTreeSet<String> = tokenize(canonical).into_iter().collect();
    let query_noun = leading_noun(canonical);
    let mut best: Option<(usize, &PromptEntry)> = None;
    for e in entries {
        let tokens: BTreeSet<String> = tokenize(&e.caption).into_iter().collect();
        let score = query.intersection(&tokens).count() + 2 * usize::from(leading_noun(&e.caption) == query_noun);
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, e));
        }
    }
    let (_, e) = best.ok_or_else(|| ClientError::Protocol("scene map is empty".into()))?;
    Ok(RetrievalResult { ids: vec![e.id], captions: vec![e.caption.clone()], candidates: None })
}

impl ChatModel for MockChat {
    fn chat(&self, req: &ChatRequest) -> Result<String, ClientError> {
        if req.system_prompt.trim().is_empty() {
            return Err(ClientError::EmptySystemPrompt);
        }
        if req.system_prompt == CANONICALIZE_PROMPT {
            Ok(canonicalize(required(req, "caption")?))
        } else if req.system_prompt == REFINE_PROMPT {
            let query = required(req, "query")?;
            let entries = prompt_entries(req)?;
            let canonical = refine(query, &entries);
            Ok(serde_json::json!({ "canonical": canonical }).to_string())
        } else if req.system_prompt == RETRIEVE_PROMPT {
            let canonical = required(req, "canonical")?;
            let entries = prompt_entries(req)?;
            Ok(format_retrieval(&retrieve(canonical, &entries)?))
        } else {
            Err(ClientError::NoMockRule)
        }
    }
}
