//! Captioning and chat-model clients.
//!
//! Both client kinds come as deterministic mocks (rule-based, driven by the
//! synthetic ground truth) and as HTTP clients. The reply contracts of the
//! chat prompts are validated in [`contract`].

pub mod contract;
mod mock;
mod remote;
pub mod transport;

use thiserror::Error;

use crate::image::{InstanceMask, RgbImage};

pub use contract::{
    format_retrieval, leading_noun, parse_canonical, parse_caption_line, parse_retrieval, tokenize,
    validate_canonical_phrase, ContractError, RetrievalResult, FORBIDDEN_SUBJECTS,
};
pub use mock::{caption_for, MockCaptioner, MockChat, UNIDENTIFIED_CAPTION};
pub use remote::{RemoteCaptioner, RemoteChat};
pub use transport::{RemoteConfig, ENDPOINT_ENV};

/// System prompt for rewriting a raw caption into the canonical template.
pub const CANONICALIZE_PROMPT: &str = include_str!("prompts/canonicalize.txt");
/// System prompt for rewriting a user query into a canonical phrase.
pub const REFINE_PROMPT: &str = include_str!("prompts/refine.txt");
/// System prompt for picking scene-map entries that match a canonical phrase.
pub const RETRIEVE_PROMPT: &str = include_str!("prompts/retrieve.txt");

/// Frames sent to the captioner per group.
pub const CAPTION_FRAMES: usize = 8;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("system prompt is empty")]
    EmptySystemPrompt,
    #[error("mock has no rule for this prompt")]
    NoMockRule,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// One (image, binary mask) pair from a known view.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionFrame {
    pub view_index: usize,
    pub image: RgbImage,
    pub mask: InstanceMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRequest {
    frames: Vec<CaptionFrame>,
}

impl CaptionRequest {
    /// Validates 1 to 8 frames with non-empty masks and pads to exactly 8 by
    /// repeating the last pair.
    pub fn new(mut frames: Vec<CaptionFrame>) -> Result<Self, ClientError> {
        if frames.is_empty() || frames.len() > CAPTION_FRAMES {
            return Err(ClientError::InvalidRequest(format!(
                "caption request needs 1 to {CAPTION_FRAMES} frames, got {}",
                frames.len()
            )));
        }
        if let Some(f) = frames.iter().find(|f| f.mask.is_empty()) {
            return Err(ClientError::InvalidRequest(format!("empty mask for view {}", f.view_index)));
        }
        if let Some(f) = frames.iter().find(|f| !same_size(&f.image, &f.mask)) {
            return Err(ClientError::InvalidRequest(format!("image/mask size differ in view {}", f.view_index)));
        }
        let last = frames[frames.len() - 1].clone();
        frames.resize(CAPTION_FRAMES, last);
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[CaptionFrame] {
        &self.frames
    }
}

fn same_size(image: &RgbImage, mask: &InstanceMask) -> bool {
    image.width == mask.width && image.height == mask.height
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChatPart {
    Text(String),
    Image(RgbImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_parts: Vec<ChatPart>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_parts: Vec<ChatPart>) -> Result<Self, ClientError> {
        let system_prompt = system_prompt.into();
        if system_prompt.trim().is_empty() {
            return Err(ClientError::EmptySystemPrompt);
        }
        Ok(Self { system_prompt, user_parts })
    }

    /// Text of the first part starting with `key: `.
    pub fn field(&self, key: &str) -> Option<&str> {
        let prefix = format!("{key}: ");
        self.user_parts.iter().find_map(|p| match p {
            ChatPart::Text(t) => t.strip_prefix(&prefix),
            ChatPart::Image(_) => None,
        })
    }
}

pub trait Captioner: Send + Sync {
    fn caption(&self, req: &CaptionRequest) -> Result<String, ClientError>;
}

pub trait ChatModel: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, ClientError>;
}
