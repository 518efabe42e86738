//! Per-pixel renderers. Every pixel is composited independently, front to
//! back, so rows can be rendered in parallel without changing any bit of
//! the output.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use super::trace::trace;
use super::{CameraView, VoxelScene};
use crate::image::{InstanceMask, RgbImage};

/// Default accumulated-weight threshold separating foreground from background.
pub const DEFAULT_TAU_BG: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("voxel id array has {got} entries, scene has {expected} voxels")]
    IdLength { got: usize, expected: usize },
    #[error("selection is empty")]
    EmptySelection,
    #[error("unknown group ids: {0:?}")]
    UnknownIds(Vec<u32>),
}

/// Per-pixel expected ray-hit positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    pub width: usize,
    pub height: usize,
    pub positions: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

fn render_rows<T, F>(view: &CameraView, pixel: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    (0..view.height)
        .into_par_iter()
        .map(|v| (0..view.width).map(|u| pixel(u, v)).collect::<Vec<T>>())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Color image; pixels with no contribution stay black.
pub fn render_color(scene: &VoxelScene, view: &CameraView) -> RgbImage {
    let pixels = render_rows(view, |u, v| {
        let (o, d) = view.ray(u, v);
        let mut rgb = [0.0f64; 3];
        trace(scene, o, d, |_| true, |h| {
            let c = scene.colors[h.voxel];
            for k in 0..3 {
                rgb[k] += h.weight * f64::from(c[k]);
            }
        });
        rgb.map(|c| c as f32)
    });
    RgbImage { width: view.width, height: view.height, pixels }
}

/// Weight-normalized mean of hit voxel centers; valid where the accumulated
/// weight reaches `tau_bg`.
pub fn render_point_map(scene: &VoxelScene, view: &CameraView, tau_bg: f64) -> PointMap {
    let cells = render_rows(view, |u, v| {
        let (o, d) = view.ray(u, v);
        let mut sum = [0.0f64; 3];
        let total = trace(scene, o, d, |_| true, |h| {
            let c = scene.centers()[h.voxel];
            for k in 0..3 {
                sum[k] += h.weight * f64::from(c[k]);
            }
        });
        if total > 0.0 {
            (sum.map(|s| s / total), total >= tau_bg)
        } else {
            ([0.0; 3], false)
        }
    });
    let (positions, valid) = cells.into_iter().unzip();
    PointMap { width: view.width, height: view.height, positions, valid }
}

fn check_ids(scene: &VoxelScene, voxel_ids: &[u32]) -> Result<(), RenderError> {
    if voxel_ids.len() != scene.len() {
        return Err(RenderError::IdLength { got: voxel_ids.len(), expected: scene.len() });
    }
    Ok(())
}

/// Instance-id image: each pixel takes the non-zero group with the largest
/// accumulated weight along its ray (ties to the smaller id), or 0 when the
/// ray's total weight is below `tau_bg`.
pub fn render_group_ids(
    scene: &VoxelScene,
    view: &CameraView,
    voxel_ids: &[u32],
    tau_bg: f64,
) -> Result<InstanceMask, RenderError> {
    check_ids(scene, voxel_ids)?;
    let labels = render_rows(view, |u, v| {
        let (o, d) = view.ray(u, v);
        let mut acc: Vec<(u32, f64)> = Vec::new();
        let total = trace(scene, o, d, |_| true, |h| {
            let id = voxel_ids[h.voxel];
            if id == 0 {
                return;
            }
            match acc.iter_mut().find(|(g, _)| *g == id) {
                Some(slot) => slot.1 += h.weight,
                None => acc.push((id, h.weight)),
            }
        });
        if total < tau_bg {
            return 0;
        }
        acc.iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map_or(0, |(id, _)| id)
    });
    Ok(InstanceMask { width: view.width, height: view.height, labels })
}

/// Binary mask from rasterizing only the voxels whose id is selected.
pub fn render_group_mask(
    scene: &VoxelScene,
    view: &CameraView,
    selected: &BTreeSet<u32>,
    voxel_ids: &[u32],
    tau_mask: f64,
) -> Result<InstanceMask, RenderError> {
    check_ids(scene, voxel_ids)?;
    if selected.is_empty() {
        return Err(RenderError::EmptySelection);
    }
    let present: BTreeSet<u32> = voxel_ids.iter().copied().collect();
    let unknown: Vec<u32> = selected.iter().copied().filter(|id| !present.contains(id) || *id == 0).collect();
    if !unknown.is_empty() {
        return Err(RenderError::UnknownIds(unknown));
    }
    let labels = render_rows(view, |u, v| {
        let (o, d) = view.ray(u, v);
        let total = trace(scene, o, d, |i| selected.contains(&voxel_ids[i]), |_| {});
        u32::from(total >= tau_mask)
    });
    Ok(InstanceMask { width: view.width, height: view.height, labels })
}
