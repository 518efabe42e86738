//! Sparse voxel scenes: storage, file format, cameras, traversal and rendering.

mod camera;
mod ovx;
mod render;
pub(crate) mod trace;

use std::sync::OnceLock;

use serde_json::{Map, Value};
use thiserror::Error;

pub use camera::{load_cameras, save_cameras, CameraError, CameraRig, CameraView};
pub use ovx::{decode_scene, encode_scene, load_scene, save_scene, OvxError};
pub use render::{
    render_color, render_group_ids, render_group_mask, render_point_map, PointMap, RenderError,
    DEFAULT_TAU_BG,
};
pub use trace::{traverse_ray, RayHit, RayHits, EARLY_STOP_TRANSMITTANCE};

use trace::VoxelGrid;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene must contain at least one voxel")]
    Empty,
    #[error("{section} has {got} entries, expected {expected}")]
    Length { section: &'static str, got: usize, expected: usize },
    #[error("sizes must be positive (voxel {0})")]
    NonPositiveSize(usize),
    #[error("densities must be non-negative (voxel {0})")]
    NegativeDensity(usize),
    #[error("{section} must be finite (voxel {index})")]
    NonFinite { section: &'static str, index: usize },
    #[error("colors must lie in [0, 1] (voxel {0})")]
    ColorRange(usize),
    #[error("group_W must be non-negative (voxel {0})")]
    NegativeGroupWeight(usize),
    #[error("{section} must be non-negative (voxel {index})")]
    NegativeLabel { section: &'static str, index: usize },
}

/// Group-field sections persisted alongside a scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoredGrouping {
    pub field_f: Option<Vec<[f32; 3]>>,
    pub field_w: Option<Vec<f32>>,
    pub ids: Option<Vec<i32>>,
}

impl StoredGrouping {
    pub fn is_empty(&self) -> bool {
        self.field_f.is_none() && self.field_w.is_none() && self.ids.is_none()
    }
}

/// Ordered list of axis-aligned voxel cubes.
///
/// Geometry (`centers`, `sizes`) is immutable after construction because the
/// traversal grid is cached from it; appearance and labels are public.
#[derive(Debug)]
pub struct VoxelScene {
    centers: Vec<[f32; 3]>,
    sizes: Vec<f32>,
    pub densities: Vec<f32>,
    pub colors: Vec<[f32; 3]>,
    pub gt_labels: Option<Vec<i32>>,
    pub grouping: StoredGrouping,
    pub meta: Map<String, Value>,
    grid: OnceLock<VoxelGrid>,
}

impl Clone for VoxelScene {
    fn clone(&self) -> Self {
        Self {
            centers: self.centers.clone(),
            sizes: self.sizes.clone(),
            densities: self.densities.clone(),
            colors: self.colors.clone(),
            gt_labels: self.gt_labels.clone(),
            grouping: self.grouping.clone(),
            meta: self.meta.clone(),
            grid: OnceLock::new(),
        }
    }
}

impl PartialEq for VoxelScene {
    fn eq(&self, other: &Self) -> bool {
        self.centers == other.centers
            && self.sizes == other.sizes
            && self.densities == other.densities
            && self.colors == other.colors
            && self.gt_labels == other.gt_labels
            && self.grouping == other.grouping
            && self.meta == other.meta
    }
}

impl VoxelScene {
    pub fn new(
        centers: Vec<[f32; 3]>,
        sizes: Vec<f32>,
        densities: Vec<f32>,
        colors: Vec<[f32; 3]>,
    ) -> Result<Self, SceneError> {
        let scene = Self {
            centers,
            sizes,
            densities,
            colors,
            gt_labels: None,
            grouping: StoredGrouping::default(),
            meta: Map::new(),
            grid: OnceLock::new(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_gt_labels(mut self, labels: Vec<i32>) -> Result<Self, SceneError> {
        self.gt_labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[[f32; 3]] {
        &self.centers
    }

    pub fn sizes(&self) -> &[f32] {
        &self.sizes
    }

    pub fn center(&self, i: usize) -> crate::Vec3 {
        let c = self.centers[i];
        crate::Vec3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2]))
    }

    /// Ground-truth labels as unsigned ids, if present.
    pub fn gt_ids(&self) -> Option<Vec<u32>> {
        self.gt_labels
            .as_ref()
            .map(|l| l.iter().map(|&v| v.max(0) as u32).collect())
    }

    /// Mean of all voxel centers.
    pub fn centroid(&self) -> crate::Vec3 {
        let sum = (0..self.len()).fold(crate::Vec3::zeros(), |acc, i| acc + self.center(i));
        sum / self.len() as f64
    }

    pub(crate) fn grid(&self) -> &VoxelGrid {
        self.grid.get_or_init(|| VoxelGrid::build(&self.centers, &self.sizes))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.centers.len();
        if n == 0 {
            return Err(SceneError::Empty);
        }
        let check_len = |section: &'static str, got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(SceneError::Length { section, got, expected: n })
            }
        };
        check_len("sizes", self.sizes.len())?;
        check_len("densities", self.densities.len())?;
        check_len("colors", self.colors.len())?;
        for (i, c) in self.centers.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFinite { section: "centers", index: i });
            }
        }
        for (i, &s) in self.sizes.iter().enumerate() {
            if !s.is_finite() {
                return Err(SceneError::NonFinite { section: "sizes", index: i });
            }
            if s <= 0.0 {
                return Err(SceneError::NonPositiveSize(i));
            }
        }
        for (i, &d) in self.densities.iter().enumerate() {
            if !d.is_finite() {
                return Err(SceneError::NonFinite { section: "densities", index: i });
            }
            if d < 0.0 {
                return Err(SceneError::NegativeDensity(i));
            }
        }
        for (i, c) in self.colors.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFinite { section: "colors", index: i });
            }
            if !c.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(SceneError::ColorRange(i));
            }
        }
        if let Some(labels) = &self.gt_labels {
            check_len("gt_labels", labels.len())?;
            if let Some(i) = labels.iter().position(|&l| l < 0) {
                return Err(SceneError::NegativeLabel { section: "gt_labels", index: i });
            }
        }
        if let Some(f) = &self.grouping.field_f {
            check_len("group_F", f.len())?;
            if let Some(i) = f.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
                return Err(SceneError::NonFinite { section: "group_F", index: i });
            }
        }
        if let Some(w) = &self.grouping.field_w {
            check_len("group_W", w.len())?;
            for (i, &v) in w.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SceneError::NonFinite { section: "group_W", index: i });
                }
                if v < 0.0 {
                    return Err(SceneError::NegativeGroupWeight(i));
                }
            }
        }
        if let Some(ids) = &self.grouping.ids {
            check_len("group_ids", ids.len())?;
            if let Some(i) = ids.iter().position(|&l| l < 0) {
                return Err(SceneError::NegativeLabel { section: "group_ids", index: i });
            }
        }
        Ok(())
    }
}
