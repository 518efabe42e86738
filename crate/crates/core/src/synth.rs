//! Procedural labeled scenes and camera orbits.
//!
//! A scene is a one-voxel-thick ground slab (its own instance, gt id 1) with
//! solid voxelized primitives resting on it (gt ids 2..). Every object gets
//! an [`ObjectRecord`] that the mock captioner reads back.

use std::path::Path;

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::InstanceMask;
use crate::rng::stream;
use crate::scene::{render_group_ids, CameraView, SceneError, VoxelScene};
use crate::Vec3;

pub const GROUND_GT_ID: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("could not place object {index} after {tries} tries; use a larger surface or fewer objects")]
    Placement { index: usize, tries: usize },
    #[error("object {gt_id} is not visible from any view of the orbit")]
    Hidden { gt_id: u32 },
    #[error("scene has no gt_labels")]
    MissingGt,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Sphere,
    Ell,
}

impl Shape {
    pub fn word(self) -> &'static str {
        match self {
            Shape::Box => "box",
            Shape::Sphere => "sphere",
            Shape::Ell => "ellipsoid",
        }
    }
}

/// Generator parameters. Lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_objects: usize,
    pub shape_palette: Vec<Shape>,
    pub color_names: Vec<(String, [f32; 3])>,
    pub categories: Vec<String>,
    /// Side length of the square ground slab.
    pub surface: f64,
    pub surface_name: String,
    pub surface_color: (String, [f32; 3]),
    pub voxel_size: f64,
    pub density_solid: f64,
    /// Range of the primitives' bounding radius.
    pub radius_range: [f64; 2],
}

impl Default for SceneSpec {
    fn default() -> Self {
        let colors: [(&str, [f32; 3]); 8] = [
            ("red", [0.85, 0.1, 0.1]),
            ("green", [0.15, 0.75, 0.2]),
            ("blue", [0.15, 0.25, 0.85]),
            ("yellow", [0.9, 0.85, 0.1]),
            ("purple", [0.55, 0.2, 0.7]),
            ("white", [0.95, 0.95, 0.95]),
            ("black", [0.05, 0.05, 0.05]),
            ("pink", [0.95, 0.5, 0.7]),
        ];
        let categories = [
            "apple", "mug", "toy", "book", "bottle", "lamp", "vase", "shoe", "camera", "bowl",
            "candle", "clock",
        ];
        Self {
            seed: 0,
            n_objects: 5,
            shape_palette: vec![Shape::Box, Shape::Sphere, Shape::Ell],
            color_names: colors.iter().map(|(n, c)| (n.to_string(), *c)).collect(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
            surface: 1.6,
            surface_name: "table".into(),
            surface_color: ("brown".into(), [0.55, 0.38, 0.22]),
            voxel_size: 0.014,
            density_solid: 500.0,
            radius_range: [0.12, 0.2],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Spec(m.to_string()));
        if self.n_objects == 0 {
            return bad("n_objects must be at least 1");
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad("voxel_size must be positive");
        }
        if !(self.surface > 0.0 && self.surface.is_finite()) {
            return bad("surface must be positive");
        }
        if !(self.density_solid >= 0.0 && self.density_solid.is_finite()) {
            return bad("density_solid must be non-negative");
        }
        if self.shape_palette.is_empty() {
            return bad("shape_palette is empty");
        }
        if self.color_names.is_empty() {
            return bad("color_names is empty");
        }
        let mut names: Vec<&str> = self.color_names.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("color names must be unique");
        }
        if self.categories.len() < self.n_objects {
            return bad("need at least one distinct category per object");
        }
        if self.categories.iter().any(|c| c.trim().is_empty()) {
            return bad("categories must be non-empty");
        }
        let [lo, hi] = self.radius_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("radius_range must satisfy 0 < lo <= hi");
        }
        let rgb_ok = |c: &[f32; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !self.color_names.iter().all(|(_, c)| rgb_ok(c)) || !rgb_ok(&self.surface_color.1) {
            return bad("colors must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub gt_id: u32,
    pub category: String,
    pub color_name: String,
    pub shape: String,
    pub placement: String,
    pub center: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    objects: Vec<ObjectRecord>,
}

pub fn save_records(records: &[ObjectRecord], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let text = serde_json::to_string_pretty(&Sidecar { objects: records.to_vec() })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<ObjectRecord>, SynthError> {
    let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(side.objects)
}

struct Placed {
    shape: Shape,
    semi: Vec3,
    center: Vec3,
    footprint: f64,
}

impl Placed {
    fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        match self.shape {
            Shape::Box => (0..3).all(|k| d[k].abs() <= self.semi[k]),
            Shape::Sphere | Shape::Ell => {
                (0..3).map(|k| (d[k] / self.semi[k]).powi(2)).sum::<f64>() <= 1.0
            }
        }
    }
}

const PLACEMENT_TRIES: usize = 500;

/// Builds a labeled scene; deterministic in `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<(VoxelScene, Vec<ObjectRecord>), SynthError> {
    spec.validate()?;
    let h = spec.voxel_size;
    let n_side = ((spec.surface / h).round() as i64).max(1);
    let half = n_side as f64 * h / 2.0;
    let lattice = |i: i64| -half + (i as f64 + 0.5) * h;

    let mut shape_rng = stream(spec.seed, "synth/shape");
    let mut place_rng = stream(spec.seed, "synth/placement");
    let mut color_rng = stream(spec.seed, "synth/color");
    let mut category_rng = stream(spec.seed, "synth/category");
    let mut relation_rng = stream(spec.seed, "synth/relation");

    let mut placed: Vec<Placed> = Vec::with_capacity(spec.n_objects);
    for index in 0..spec.n_objects {
        let shape = *spec.shape_palette.choose(&mut shape_rng).expect("non-empty palette");
        let [lo, hi] = spec.radius_range;
        let r = if hi > lo { shape_rng.gen_range(lo..=hi) } else { lo };
        let semi = match shape {
            Shape::Sphere => Vec3::repeat(r),
            Shape::Box | Shape::Ell => Vec3::from_fn(|_, _| r * shape_rng.gen_range(0.6..=1.0)),
        };
        let footprint = match shape {
            Shape::Box => semi.x.hypot(semi.y),
            _ => semi.x.max(semi.y),
        };
        let inner = 0.2 * spec.surface;
        let outer = half - footprint - 2.0 * h;
        let mut ok = None;
        for _ in 0..PLACEMENT_TRIES {
            if outer <= 0.0 {
                break;
            }
            let x = place_rng.gen_range(-outer..=outer);
            let y = place_rng.gen_range(-outer..=outer);
            if x.hypot(y) < inner && spec.n_objects > 1 {
                continue;
            }
            let free = placed.iter().all(|p| {
                (p.center.x - x).hypot(p.center.y - y) > p.footprint + footprint + 2.0 * h
            });
            if free {
                ok = Some(Vec3::new(x, y, semi.z));
                break;
            }
        }
        let center = ok.ok_or(SynthError::Placement { index, tries: PLACEMENT_TRIES })?;
        placed.push(Placed { shape, semi, center, footprint });
    }

    let mut centers: Vec<[f32; 3]> = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut labels: Vec<i32> = Vec::new();
    for j in 0..n_side {
        for i in 0..n_side {
            centers.push([lattice(i) as f32, lattice(j) as f32, (-h / 2.0) as f32]);
            colors.push(spec.surface_color.1);
            labels.push(GROUND_GT_ID as i32);
        }
    }

    let mut categories = spec.categories.clone();
    categories.shuffle(&mut category_rng);
    let color_picks: Vec<usize> = (0..spec.n_objects)
        .map(|_| color_rng.gen_range(0..spec.color_names.len()))
        .collect();

    let mut object_voxels: Vec<std::ops::Range<usize>> = Vec::new();
    for (k, obj) in placed.iter().enumerate() {
        let gt = GROUND_GT_ID as i32 + 1 + k as i32;
        let rgb = spec.color_names[color_picks[k]].1;
        let start = centers.len();
        let lo = obj.center - obj.semi;
        let hi = obj.center + obj.semi;
        let i0 = ((lo.x + half) / h).floor() as i64 - 1;
        let i1 = ((hi.x + half) / h).ceil() as i64 + 1;
        let j0 = ((lo.y + half) / h).floor() as i64 - 1;
        let j1 = ((hi.y + half) / h).ceil() as i64 + 1;
        let k1 = (hi.z / h).ceil() as i64 + 1;
        for kz in 0..=k1 {
            let z = (kz as f64 + 0.5) * h;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = Vec3::new(lattice(i), lattice(j), z);
                    if obj.contains(&p) {
                        centers.push([p.x as f32, p.y as f32, p.z as f32]);
                        colors.push(rgb);
                        labels.push(gt);
                    }
                }
            }
        }
        if centers.len() == start {
            return Err(SynthError::Spec(format!(
                "object {k} is smaller than one voxel; increase radius_range or reduce voxel_size"
            )));
        }
        object_voxels.push(start..centers.len());
    }

    let mean_of = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        let sum = range.fold([0.0f64; 3], |mut acc, i| {
            for k in 0..3 {
                acc[k] += f64::from(centers[i][k]);
            }
            acc
        });
        sum.map(|s| s / n)
    };

    let mut records = Vec::with_capacity(spec.n_objects + 1);
    records.push(ObjectRecord {
        gt_id: GROUND_GT_ID,
        category: spec.surface_name.clone(),
        color_name: spec.surface_color.0.clone(),
        shape: "plane".into(),
        placement: "beneath all objects".into(),
        center: mean_of(0..(n_side * n_side) as usize),
    });
    for (k, obj) in placed.iter().enumerate() {
        let nearest = (0..placed.len())
            .filter(|&o| o != k)
            .min_by(|&a, &b| {
                let da = (placed[a].center - obj.center).norm();
                let db = (placed[b].center - obj.center).norm();
                da.total_cmp(&db)
            });
        let placement = match nearest {
            Some(o) if relation_rng.gen_bool(0.5) => format!("next to {}", categories[o]),
            _ => format!("on {}", spec.surface_name),
        };
        records.push(ObjectRecord {
            gt_id: GROUND_GT_ID + 1 + k as u32,
            category: categories[k].clone(),
            color_name: spec.color_names[color_picks[k]].0.clone(),
            shape: obj.shape.word().into(),
            placement,
            center: mean_of(object_voxels[k].clone()),
        });
    }

    let n = centers.len();
    let mut scene = VoxelScene::new(
        centers,
        vec![h as f32; n],
        vec![spec.density_solid as f32; n],
        colors,
    )?
    .with_gt_labels(labels)?;
    scene.meta.insert("generator".into(), "synth".into());
    scene.meta.insert("seed".into(), spec.seed.into());
    scene.meta.insert("n_objects".into(), spec.n_objects.into());
    Ok((scene, records))
}

/// Orbit parameters; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub n_views: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self { n_views: 24, radius: 5.0, elevation_deg: 40.0, width: 64, height: 64, fov_deg: 24.0 }
    }
}

/// Camera-to-world rotation looking from `eye` at `target` with world +z up.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Matrix3<f64> {
    let forward = (target - eye).normalize();
    let up = if forward.cross(&Vec3::z()).norm() < 1e-9 { Vec3::y() } else { Vec3::z() };
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}

/// Cameras on a horizontal circle around the scene centroid. Fails if any
/// gt instance is invisible from every view.
pub fn generate_orbit(scene: &VoxelScene, orbit: &OrbitSpec) -> Result<Vec<CameraView>, SynthError> {
    if orbit.n_views == 0 {
        return Err(SynthError::Spec("n_views must be at least 1".into()));
    }
    if orbit.width == 0 || orbit.height == 0 || !(orbit.fov_deg > 0.0 && orbit.fov_deg < 180.0) {
        return Err(SynthError::Spec("invalid image size or field of view".into()));
    }
    if !(orbit.radius > 0.0) {
        return Err(SynthError::Spec("radius must be positive".into()));
    }
    let target = scene.centroid();
    let elev = orbit.elevation_deg.to_radians();
    let f = orbit.width as f64 / 2.0 / (orbit.fov_deg.to_radians() / 2.0).tan();
    let views: Vec<CameraView> = (0..orbit.n_views)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / orbit.n_views as f64;
            let eye = target
                + orbit.radius * Vec3::new(theta.cos() * elev.cos(), theta.sin() * elev.cos(), elev.sin());
            CameraView {
                name: format!("v{i}"),
                width: orbit.width,
                height: orbit.height,
                fx: f,
                fy: f,
                cx: orbit.width as f64 / 2.0,
                cy: orbit.height as f64 / 2.0,
                rotation: look_at(&eye, &target),
                translation: eye,
            }
        })
        .collect();
    if let Some(gt) = scene.gt_ids() {
        let masks = render_gt_masks(scene, &views, crate::scene::DEFAULT_TAU_BG)?;
        let seen: std::collections::BTreeSet<u32> =
            masks.iter().flat_map(|m| m.label_set()).collect();
        let mut all: Vec<u32> = gt.into_iter().filter(|&g| g != 0).collect();
        all.sort_unstable();
        all.dedup();
        if let Some(&gt_id) = all.iter().find(|g| !seen.contains(g)) {
            return Err(SynthError::Hidden { gt_id });
        }
    }
    Ok(views)
}

/// Ground-truth instance masks for each view.
pub fn render_gt_masks(
    scene: &VoxelScene,
    views: &[CameraView],
    tau_bg: f64,
) -> Result<Vec<InstanceMask>, SynthError> {
    let gt = scene.gt_ids().ok_or(SynthError::MissingGt)?;
    Ok(views
        .iter()
        .map(|v| render_group_ids(scene, v, &gt, tau_bg).expect("gt labels sized to scene"))
        .collect())
}
