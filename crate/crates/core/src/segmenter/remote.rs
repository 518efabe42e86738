use serde::{Deserialize, Serialize};

use super::{check_prompts, compact_labels, MaskPrompt, PointPrompt, PromptLabel, PromptedMask};
use super::{SegmentError, Segmenter};
use crate::clients::transport::{b64_decode, b64_encode, JsonTransport, PostError, RemoteConfig};
use crate::image::{InstanceMask, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointPayload {
    pub u: usize,
    pub v: usize,
    pub label: PromptLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPromptedRequest {
    pub image: String,
    pub points: Vec<PointPayload>,
    pub mask_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: String,
}

/// Base64 of the raw i8 values, row-major.
pub fn encode_mask_prompt(prompt: &MaskPrompt) -> String {
    let bytes: Vec<u8> = prompt.values.iter().map(|&v| v as u8).collect();
    b64_encode(&bytes)
}

pub fn decode_mask_prompt(text: &str, width: usize, height: usize) -> Result<MaskPrompt, SegmentError> {
    let bytes = b64_decode(text).map_err(SegmentError::Protocol)?;
    MaskPrompt::new(width, height, bytes.into_iter().map(|b| b as i8).collect())
}

fn post_error(e: PostError) -> SegmentError {
    match e {
        PostError::Unreachable(m) => SegmentError::Transport(m),
        PostError::BadBody(m) => SegmentError::Protocol(m),
    }
}

fn encode_image(image: &RgbImage) -> Result<String, SegmentError> {
    Ok(b64_encode(&image.to_png()?))
}

fn decode_mask(resp: &SegmentResponse, image: &RgbImage) -> Result<InstanceMask, SegmentError> {
    let bytes = b64_decode(&resp.mask).map_err(SegmentError::Protocol)?;
    let mask = InstanceMask::from_png(&bytes)?;
    if mask.width != image.width || mask.height != image.height {
        return Err(SegmentError::Protocol(format!(
            "reply mask is {}x{}, image is {}x{}",
            mask.width, mask.height, image.width, image.height
        )));
    }
    Ok(mask)
}

/// Forwards segmentation calls to an HTTP model service.
pub struct RemoteSegmenter {
    transport: JsonTransport,
}

impl RemoteSegmenter {
    pub fn new(cfg: &RemoteConfig) -> Self {
        Self { transport: JsonTransport::new(cfg) }
    }
}

impl Segmenter for RemoteSegmenter {
    fn segment(&self, image: &RgbImage, _view_index: usize) -> Result<InstanceMask, SegmentError> {
        let req = SegmentRequest { image: encode_image(image)? };
        let resp: SegmentResponse =
            self.transport.post("/v1/segment", &req).map_err(post_error)?;
        Ok(compact_labels(&decode_mask(&resp, image)?))
    }

    fn segment_prompted(
        &self,
        image: &RgbImage,
        _view_index: usize,
        points: &[PointPrompt],
        mask_prompt: &MaskPrompt,
    ) -> Result<PromptedMask, SegmentError> {
        check_prompts(image.width, image.height, points, mask_prompt)?;
        let req = SegmentPromptedRequest {
            image: encode_image(image)?,
            points: points.iter().map(|p| PointPayload { u: p.u, v: p.v, label: p.label }).collect(),
            mask_prompt: encode_mask_prompt(mask_prompt),
        };
        let resp: SegmentResponse =
            self.transport.post("/v1/segment_prompted", &req).map_err(post_error)?;
        let mask = decode_mask(&resp, image)?.foreground();
        let no_object = mask.is_empty();
        Ok(PromptedMask { mask, no_object })
    }
}
