use serde::{Deserialize, Serialize};

use super::transport::{b64_encode, JsonTransport, PostError, RemoteConfig};
use super::{CaptionRequest, Captioner, ChatModel, ChatPart, ChatRequest, ClientError};

#[derive(Serialize)]
struct FramePayload {
    image: String,
    mask: String,
}

#[derive(Serialize)]
struct CaptionBody {
    frames: Vec<FramePayload>,
}

#[derive(Deserialize)]
struct CaptionReply {
    caption: String,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum PartPayload {
    Text { text: String },
    Image { image: String },
}

#[derive(Serialize)]
struct ChatBody {
    system: String,
    parts: Vec<PartPayload>,
    enable_thinking: bool,
}

#[derive(Deserialize)]
struct ChatReply {
    text: String,
}

fn post_error(e: PostError) -> ClientError {
    match e {
        PostError::Unreachable(m) => ClientError::Transport(m),
        PostError::BadBody(m) => ClientError::Protocol(m),
    }
}

fn raster(e: crate::image::RasterError) -> ClientError {
    ClientError::InvalidRequest(e.to_string())
}

pub struct RemoteCaptioner {
    transport: JsonTransport,
}

impl RemoteCaptioner {
    pub fn new(cfg: &RemoteConfig) -> Self {
        Self { transport: JsonTransport::new(cfg) }
    }
}

impl Captioner for RemoteCaptioner {
    fn caption(&self, req: &CaptionRequest) -> Result<String, ClientError> {
        let frames = req
            .frames()
            .iter()
            .map(|f| {
                Ok(FramePayload {
                    image: b64_encode(&f.image.to_png().map_err(raster)?),
                    mask: b64_encode(&f.mask.to_png8_binary().map_err(raster)?),
                })
            })
            .collect::<Result<Vec<_>, ClientError>>()?;
        let reply: CaptionReply =
            self.transport.post("/v1/caption", &CaptionBody { frames }).map_err(post_error)?;
        if reply.caption.trim().is_empty() {
            return Err(ClientError::Protocol("empty caption".into()));
        }
        Ok(reply.caption)
    }
}

/// Chat client; requests go out with reasoning traces disabled.
pub struct RemoteChat {
    transport: JsonTransport,
}

impl RemoteChat {
    pub fn new(cfg: &RemoteConfig) -> Self {
        Self { transport: JsonTransport::new(cfg) }
    }
}

impl ChatModel for RemoteChat {
    fn chat(&self, req: &ChatRequest) -> Result<String, ClientError> {
        if req.system_prompt.trim().is_empty() {
            return Err(ClientError::EmptySystemPrompt);
        }
        let parts = req
            .user_parts
            .iter()
            .map(|p| {
                Ok(match p {
                    ChatPart::Text(text) => PartPayload::Text { text: text.clone() },
                    ChatPart::Image(img) => PartPayload::Image { image: b64_encode(&img.to_png().map_err(raster)?) },
                })
            })
            .collect::<Result<Vec<_>, ClientError>>()?;
        let body = ChatBody { system: req.system_prompt.clone(), parts, enable_thinking: false };
        let reply: ChatReply = self.transport.post("/v1/chat", &body).map_err(post_error)?;
        Ok(reply.text)
    }
}
