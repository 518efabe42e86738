use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{GroupDictionary, GroupingError};
use crate::image::{InstanceMask, RasterError};
use crate::scene::trace::trace;
use crate::scene::{CameraView, PointMap, VoxelScene};
use crate::Vec3;

/// Per-voxel accumulated centroid votes `F` and their weights `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupField {
    pub f: Vec<[f64; 3]>,
    pub w: Vec<f64>,
}

impl GroupField {
    pub fn zeros(n: usize) -> Self {
        Self { f: vec![[0.0; 3]; n], w: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `F / W`, or `None` for unvoted voxels.
    pub fn embedding(&self, i: usize) -> Option<Vec3> {
        (self.w[i] > 0.0).then(|| Vec3::from(self.f[i]) / self.w[i])
    }
}

/// Masked mean of a point map for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceCentroid {
    pub position: Vec3,
    /// Number of valid pixels averaged.
    pub pixels: usize,
}

/// Mean point-map position per instance label over valid pixels. Labels
/// with fewer than `min_pixels` valid pixels (or none) are left out.
pub fn compute_instance_centroids(
    mask: &InstanceMask,
    pmap: &PointMap,
    min_pixels: usize,
) -> Result<BTreeMap<u32, InstanceCentroid>, GroupingError> {
    if mask.width != pmap.width || mask.height != pmap.height {
        return Err(RasterError::DimensionMismatch(mask.width, mask.height, pmap.width, pmap.height).into());
    }
    let mut sums: BTreeMap<u32, (Vec3, usize)> = BTreeMap::new();
    for (p, &label) in mask.labels.iter().enumerate() {
        if label == 0 || !pmap.valid[p] {
            continue;
        }
        let slot = sums.entry(label).or_insert((Vec3::zeros(), 0));
        slot.0 += Vec3::from(pmap.positions[p]);
        slot.1 += 1;
    }
    Ok(sums
        .into_iter()
        .filter(|(_, (_, n))| *n > 0 && *n >= min_pixels)
        .map(|(l, (s, n))| (l, InstanceCentroid { position: s / n as f64, pixels: n }))
        .collect())
}

/// Adds every labeled pixel's centroid vote to the voxels along its ray,
/// weighted by their blending weights. Rays are traced in parallel; the
/// contributions are then summed in pixel order, so the result does not
/// depend on scheduling.
pub fn lift_masks(
    scene: &VoxelScene,
    view: &CameraView,
    mask: &InstanceMask,
    centroids: &BTreeMap<u32, InstanceCentroid>,
    field: &mut GroupField,
) -> Result<(), GroupingError> {
    if mask.width != view.width || mask.height != view.height {
        return Err(RasterError::DimensionMismatch(mask.width, mask.height, view.width, view.height).into());
    }
    if field.len() != scene.len() {
        return Err(GroupingError::FieldLength { got: field.len(), expected: scene.len() });
    }
    let rows: Vec<Vec<(u32, f64, Vec3)>> = (0..view.height)
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            for u in 0..view.width {
                let Some(c) = centroids.get(&mask.get(u, v)) else { continue };
                let (o, d) = view.ray(u, v);
                trace(scene, o, d, |_| true, |h| out.push((h.voxel as u32, h.weight, c.position)));
            }
            out
        })
        .collect();
    for (voxel, w, c) in rows.into_iter().flatten() {
        let i = voxel as usize;
        for k in 0..3 {
            field.f[i][k] += w * c[k];
        }
        field.w[i] += w;
    }
    Ok(())
}

/// Nearest dictionary centroid to each voxel's `F / W` (ties to the smaller
/// id), resolved through the alias table; 0 where `W = 0`.
pub fn assign_voxel_ids(field: &GroupField, dictionary: &GroupDictionary) -> Result<Vec<u32>, GroupingError> {
    if dictionary.is_empty() {
        return Err(GroupingError::EmptyDictionary);
    }
    let entries: Vec<(u32, Vec3, u32)> = dictionary
        .entries
        .iter()
        .map(|(&id, e)| (id, Vec3::from(e.centroid), dictionary.resolve(id)))
        .collect();
    Ok((0..field.len())
        .into_par_iter()
        .map(|i| {
            let Some(x) = field.embedding(i) else { return 0 };
            let mut best = (f64::INFINITY, 0u32);
            // entries are in ascending id order, so strict < keeps the smaller id
            for &(_, c, root) in &entries {
                let d = (x - c).norm_squared();
                if d < best.0 {
                    best = (d, root);
                }
            }
            best.1
        })
        .collect())
}
