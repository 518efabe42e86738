//! OVX scene container.
//!
//! Layout:
//!
//! | bytes            | content                                         |
//! |------------------|-------------------------------------------------|
//! | 0..4             | magic `OVX1`                                    |
//! | 4..12            | header length `L`, u64 little-endian            |
//! | 12..12+L         | UTF-8 JSON header                               |
//! | 12+L..           | raw little-endian sections, offsets relative here |
//!
//! The header is `{"n_voxels", "sections": [{"name","dtype","shape","offset","byte_len"}], "meta"}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{SceneError, StoredGrouping, VoxelScene};

pub const MAGIC: &[u8; 4] = b"OVX1";

#[derive(Debug, Error)]
pub enum OvxError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not an OVX1 file")]
    BadMagic,
    #[error("truncated {0}")]
    Truncated(String),
    #[error("header: {0}")]
    Header(String),
    #[error("section {name}: {reason}")]
    Section { name: String, reason: String },
    #[error("missing required section {0}")]
    MissingSection(&'static str),
    #[error("invalid scene: {0}")]
    Invalid(#[from] SceneError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n_voxels: u64,
    sections: Vec<SectionEntry>,
    #[serde(default)]
    meta: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectionEntry {
    name: String,
    dtype: String,
    shape: Vec<u64>,
    offset: u64,
    byte_len: u64,
}

#[derive(Clone, Copy)]
enum Dtype {
    F32,
    I32,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::I32 => "i32",
        }
    }
}

/// Known sections with their dtype and column count.
const LAYOUT: [(&str, Dtype, u64, bool); 8] = [
    ("centers", Dtype::F32, 3, true),
    ("sizes", Dtype::F32, 1, true),
    ("densities", Dtype::F32, 1, true),
    ("colors", Dtype::F32, 3, true),
    ("gt_labels", Dtype::I32, 1, false),
    ("group_F", Dtype::F32, 3, false),
    ("group_W", Dtype::F32, 1, false),
    ("group_ids", Dtype::I32, 1, false),
];

struct SectionWriter {
    entries: Vec<SectionEntry>,
    data: Vec<u8>,
    n: u64,
}

impl SectionWriter {
    fn push(&mut self, name: &str, dtype: Dtype, cols: u64, words: impl Iterator<Item = [u8; 4]>) {
        let offset = self.data.len() as u64;
        for w in words {
            self.data.extend_from_slice(&w);
        }
        let shape = if cols == 1 { vec![self.n] } else { vec![self.n, cols] };
        self.entries.push(SectionEntry {
            name: name.to_string(),
            dtype: dtype.name().to_string(),
            shape,
            offset,
            byte_len: self.data.len() as u64 - offset,
        });
    }
}

/// Serializes a scene; identical scenes give identical bytes.
pub fn encode_scene(scene: &VoxelScene) -> Vec<u8> {
    let n = scene.len() as u64;
    let mut w = SectionWriter { entries: Vec::new(), data: Vec::new(), n };
    w.push("centers", Dtype::F32, 3, scene.centers.iter().flatten().map(|v| v.to_le_bytes()));
    w.push("sizes", Dtype::F32, 1, scene.sizes.iter().map(|v| v.to_le_bytes()));
    w.push("densities", Dtype::F32, 1, scene.densities.iter().map(|v| v.to_le_bytes()));
    w.push("colors", Dtype::F32, 3, scene.colors.iter().flatten().map(|v| v.to_le_bytes()));
    if let Some(labels) = &scene.gt_labels {
        w.push("gt_labels", Dtype::I32, 1, labels.iter().map(|v| v.to_le_bytes()));
    }
    if let Some(f) = &scene.grouping.field_f {
        w.push("group_F", Dtype::F32, 3, f.iter().flatten().map(|v| v.to_le_bytes()));
    }
    if let Some(wt) = &scene.grouping.field_w {
        w.push("group_W", Dtype::F32, 1, wt.iter().map(|v| v.to_le_bytes()));
    }
    if let Some(ids) = &scene.grouping.ids {
        w.push("group_ids", Dtype::I32, 1, ids.iter().map(|v| v.to_le_bytes()));
    }
    let header = Header { n_voxels: n, sections: w.entries, meta: scene.meta.clone() };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header_bytes.len() + w.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&w.data);
    out
}

pub fn save_scene(scene: &VoxelScene, path: impl AsRef<Path>) -> Result<(), OvxError> {
    std::fs::write(path, encode_scene(scene))?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<VoxelScene, OvxError> {
    decode_scene(&std::fs::read(path)?)
}

fn words(bytes: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]])
}

fn read_f32(bytes: &[u8]) -> Vec<f32> {
    words(bytes).map(f32::from_le_bytes).collect()
}

fn read_f32x3(bytes: &[u8]) -> Vec<[f32; 3]> {
    read_f32(bytes).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn read_i32(bytes: &[u8]) -> Vec<i32> {
    words(bytes).map(i32::from_le_bytes).collect()
}

/// Parses an OVX byte buffer and validates every scene invariant.
pub fn decode_scene(bytes: &[u8]) -> Result<VoxelScene, OvxError> {
    if bytes.len() < 4 {
        return Err(OvxError::Truncated("magic".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(OvxError::BadMagic);
    }
    let len_bytes: [u8; 8] = bytes
        .get(4..12)
        .ok_or_else(|| OvxError::Truncated("header length".into()))?
        .try_into()
        .expect("slice of 8");
    let header_len = u64::from_le_bytes(len_bytes);
    let body = &bytes[12..];
    if header_len > body.len() as u64 {
        return Err(OvxError::Truncated("header".into()));
    }
    let (header_bytes, data) = body.split_at(header_len as usize);
    let header_text =
        std::str::from_utf8(header_bytes).map_err(|e| OvxError::Header(e.to_string()))?;
    let header: Header =
        serde_json::from_str(header_text).map_err(|e| OvxError::Header(e.to_string()))?;
    let n = header.n_voxels;
    if n == 0 {
        return Err(OvxError::Invalid(SceneError::Empty));
    }

    let mut found: [Option<&[u8]>; LAYOUT.len()] = [None; LAYOUT.len()];
    for entry in &header.sections {
        let section_err = |reason: String| OvxError::Section { name: entry.name.clone(), reason };
        let Some(slot) = LAYOUT.iter().position(|(name, ..)| *name == entry.name) else {
            return Err(section_err("unknown section".into()));
        };
        if found[slot].is_some() {
            return Err(section_err("duplicate section".into()));
        }
        let (_, dtype, cols, _) = LAYOUT[slot];
        if entry.dtype != dtype.name() {
            return Err(section_err(format!("dtype {} (expected {})", entry.dtype, dtype.name())));
        }
        let expected_shape = if cols == 1 { vec![n] } else { vec![n, cols] };
        if entry.shape != expected_shape {
            return Err(section_err(format!(
                "shape {:?} (expected {:?})",
                entry.shape, expected_shape
            )));
        }
        let expected_len = n
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| section_err("size overflow".into()))?;
        if entry.byte_len != expected_len {
            return Err(section_err(format!(
                "byte_len {} (expected {expected_len})",
                entry.byte_len
            )));
        }
        let end = entry
            .offset
            .checked_add(entry.byte_len)
            .ok_or_else(|| section_err("offset overflow".into()))?;
        if end > data.len() as u64 {
            return Err(OvxError::Truncated(format!("section {}", entry.name)));
        }
        found[slot] = Some(&data[entry.offset as usize..end as usize]);
    }
    for (slot, (name, _, _, required)) in LAYOUT.iter().enumerate() {
        if *required && found[slot].is_none() {
            return Err(OvxError::MissingSection(name));
        }
    }

    let req = |i: usize| found[i].expect("required section checked");
    let scene = VoxelScene {
        centers: read_f32x3(req(0)),
        sizes: read_f32(req(1)),
        densities: read_f32(req(2)),
        colors: read_f32x3(req(3)),
        gt_labels: found[4].map(read_i32),
        grouping: StoredGrouping {
            field_f: found[5].map(read_f32x3),
            field_w: found[6].map(read_f32),
            ids: found[7].map(read_i32),
        },
        meta: header.meta,
        grid: Default::default(),
    };
    scene.validate()?;
    Ok(scene)
}
