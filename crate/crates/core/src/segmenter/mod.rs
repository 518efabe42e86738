//! Per-view instance segmentation.
//!
//! [`Segmenter`] covers whole-image segmentation and prompted
//! re-segmentation. [`OracleSegmenter`] derives masks from ground-truth
//! labels with configurable noise; [`RemoteSegmenter`] forwards to an HTTP
//! service.

mod oracle;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{InstanceMask, RasterError, RgbImage};

pub use oracle::{NoiseConfig, OracleSegmenter};
pub use remote::{
    decode_mask_prompt, encode_mask_prompt, PointPayload, RemoteSegmenter, SegmentPromptedRequest,
    SegmentRequest, SegmentResponse,
};

/// Mask-prompt value for the region of interest.
pub const MASK_POSITIVE: i8 = 20;
/// Mask-prompt value for other known groups.
pub const MASK_NEGATIVE: i8 = -20;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("view {0} is unknown to this segmenter")]
    UnknownView(usize),
    #[error("segmenter has no ground truth")]
    NoGroundTruth,
    #[error("at least one positive point prompt is required")]
    NoPositivePrompt,
    #[error("prompt pixel ({u}, {v}) outside {width}x{height} image")]
    PromptOutOfBounds { u: usize, v: usize, width: usize, height: usize },
    #[error("mask prompt value {0} is not one of 20, -20, 0")]
    BadMaskValue(i8),
    #[error("mask prompt is {got} values, expected {expected}")]
    MaskPromptSize { got: usize, expected: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointPrompt {
    pub u: usize,
    pub v: usize,
    pub label: PromptLabel,
}

/// Dense mask prompt restricted to `{+20, -20, 0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPrompt {
    pub width: usize,
    pub height: usize,
    pub values: Vec<i8>,
}

impl MaskPrompt {
    pub fn new(width: usize, height: usize, values: Vec<i8>) -> Result<Self, SegmentError> {
        let p = Self { width, height, values };
        p.validate()?;
        Ok(p)
    }

    pub fn unknown(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0; width * height] }
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        let expected = self.width * self.height;
        if self.values.len() != expected {
            return Err(SegmentError::MaskPromptSize { got: self.values.len(), expected });
        }
        match self.values.iter().find(|v| ![0, MASK_POSITIVE, MASK_NEGATIVE].contains(v)) {
            Some(&v) => Err(SegmentError::BadMaskValue(v)),
            None => Ok(()),
        }
    }
}

/// Binary result of a prompted call; `no_object` marks an empty answer.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptedMask {
    pub mask: InstanceMask,
    pub no_object: bool,
}

pub trait Segmenter: Send + Sync {
    /// Labels dense in `1..=m`, 0 for background. Ids carry no meaning
    /// across views.
    fn segment(&self, image: &RgbImage, view_index: usize) -> Result<InstanceMask, SegmentError>;

    fn segment_prompted(
        &self,
        image: &RgbImage,
        view_index: usize,
        points: &[PointPrompt],
        mask_prompt: &MaskPrompt,
    ) -> Result<PromptedMask, SegmentError>;
}

pub(crate) fn check_prompts(
    width: usize,
    height: usize,
    points: &[PointPrompt],
    mask_prompt: &MaskPrompt,
) -> Result<(), SegmentError> {
    if !points.iter().any(|p| p.label == PromptLabel::Positive) {
        return Err(SegmentError::NoPositivePrompt);
    }
    if let Some(p) = points.iter().find(|p| p.u >= width || p.v >= height) {
        return Err(SegmentError::PromptOutOfBounds { u: p.u, v: p.v, width, height });
    }
    mask_prompt.validate()?;
    if mask_prompt.width != width || mask_prompt.height != height {
        return Err(SegmentError::MaskPromptSize {
            got: mask_prompt.values.len(),
            expected: width * height,
        });
    }
    Ok(())
}

/// Relabels a mask so labels are `1..=m` in order of first appearance.
pub fn compact_labels(mask: &InstanceMask) -> InstanceMask {
    let mut map = std::collections::HashMap::new();
    let labels = mask
        .labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                let next = map.len() as u32 + 1;
                *map.entry(l).or_insert(next)
            }
        })
        .collect();
    InstanceMask { width: mask.width, height: mask.height, labels }
}
