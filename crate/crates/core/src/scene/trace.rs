//! Front-to-back ray traversal over axis-aligned voxel cubes.
//!
//! A uniform acceleration grid (CSR cell lists) is walked with a 3D DDA.
//! Candidates are exact slab intersections kept in a min-heap on entry
//! depth; a hit is emitted once the walk has passed its entry depth, so the
//! output order equals a full sort over every intersected voxel.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::Vec3;

use super::VoxelScene;

/// Traversal stops once the remaining transmittance drops below this.
pub const EARLY_STOP_TRANSMITTANCE: f64 = 1e-4;

const MAX_CELLS: f64 = (1u64 << 22) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub voxel: usize,
    /// Ray parameter where the segment starts (clamped to the origin).
    pub t_entry: f64,
    pub segment_length: f64,
    pub alpha: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayHits {
    pub hits: Vec<RayHit>,
    pub total_weight: f64,
}

#[derive(Debug)]
pub(crate) struct VoxelGrid {
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

fn voxel_bounds(center: &[f32; 3], size: f32) -> (Vec3, Vec3) {
    let h = f64::from(size) * 0.5;
    let c = Vec3::new(f64::from(center[0]), f64::from(center[1]), f64::from(center[2]));
    (c - Vec3::repeat(h), c + Vec3::repeat(h))
}

/// Slab test against a closed box. Returns `(t_near, t_far)` of the line.
#[inline]
fn slab(lo: &Vec3, hi: &Vec3, origin: &Vec3, inv_dir: &Vec3) -> (f64, f64) {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        if inv_dir[k].is_infinite() {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return (f64::INFINITY, f64::NEG_INFINITY);
            }
            continue;
        }
        let a = (lo[k] - origin[k]) * inv_dir[k];
        let b = (hi[k] - origin[k]) * inv_dir[k];
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        t_near = t_near.max(a);
        t_far = t_far.min(b);
    }
    (t_near, t_far)
}

impl VoxelGrid {
    pub(crate) fn build(centers: &[[f32; 3]], sizes: &[f32]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for (c, &s) in centers.iter().zip(sizes) {
            let (a, b) = voxel_bounds(c, s);
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        let mut sorted: Vec<f32> = sizes.to_vec();
        sorted.sort_by(f32::total_cmp);
        let median = f64::from(sorted[sorted.len() / 2]);
        let extent = (hi - lo).map(|e| e.max(median));
        let volume = extent.x * extent.y * extent.z;
        let cell = median.max((volume / MAX_CELLS).cbrt());
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).ceil() as usize).max(1));
        let n_cells = dims[0] * dims[1] * dims[2];

        let eps = cell * 1e-6;
        let cell_range = |c: &[f32; 3], s: f32| {
            let (a, b) = voxel_bounds(c, s);
            let idx = |v: f64, k: usize| {
                (((v - lo[k]) / cell).floor().max(0.0) as usize).min(dims[k] - 1)
            };
            let i0 = [0, 1, 2].map(|k| idx(a[k] - eps, k));
            let i1 = [0, 1, 2].map(|k| idx(b[k] + eps, k));
            (i0, i1)
        };
        let flat = |x: usize, y: usize, z: usize| (z * dims[1] + y) * dims[0] + x;

        let mut counts = vec![0u32; n_cells + 1];
        for (c, &s) in centers.iter().zip(sizes) {
            let (i0, i1) = cell_range(c, s);
            for z in i0[2]..=i1[2] {
                for y in i0[1]..=i1[1] {
                    for x in i0[0]..=i1[0] {
                        counts[flat(x, y, z) + 1] += 1;
                    }
                }
            }
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts;
        let mut fill = starts.clone();
        let mut items = vec![0u32; starts[n_cells] as usize];
        for (v, (c, &s)) in centers.iter().zip(sizes).enumerate() {
            let (i0, i1) = cell_range(c, s);
            for z in i0[2]..=i1[2] {
                for y in i0[1]..=i1[1] {
                    for x in i0[0]..=i1[0] {
                        let f = flat(x, y, z);
                        items[fill[f] as usize] = v as u32;
                        fill[f] += 1;
                    }
                }
            }
        }
        Self { lo, cell, dims, starts, items }
    }

    fn cell_items(&self, idx: [usize; 3]) -> &[u32] {
        let f = (idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0];
        &self.items[self.starts[f] as usize..self.starts[f + 1] as usize]
    }

    fn upper(&self) -> Vec3 {
        self.lo + Vec3::new(
            self.dims[0] as f64 * self.cell,
            self.dims[1] as f64 * self.cell,
            self.dims[2] as f64 * self.cell,
        )
    }
}

#[derive(Clone, Copy)]
struct Pending {
    t_entry: f64,
    length: f64,
    voxel: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t_entry
            .total_cmp(&self.t_entry)
            .then_with(|| other.voxel.cmp(&self.voxel))
    }
}

struct Compositor<'a, V> {
    densities: &'a [f32],
    transmittance: f64,
    total: f64,
    visit: V,
}

impl<V: FnMut(&RayHit)> Compositor<'_, V> {
    /// Returns false once the ray is saturated.
    fn emit(&mut self, p: Pending) -> bool {
        let alpha = 1.0 - (-f64::from(self.densities[p.voxel]) * p.length).exp();
        let weight = alpha * self.transmittance;
        self.transmittance *= 1.0 - alpha;
        self.total += weight;
        (self.visit)(&RayHit {
            voxel: p.voxel,
            t_entry: p.t_entry,
            segment_length: p.length,
            alpha,
            weight,
        });
        self.transmittance >= EARLY_STOP_TRANSMITTANCE
    }
}

/// Walks the ray front to back over voxels accepted by `include`, calling
/// `visit` with each composited hit. Returns the accumulated weight.
pub(crate) fn trace<F, V>(scene: &VoxelScene, origin: Vec3, direction: Vec3, include: F, visit: V) -> f64
where
    F: Fn(usize) -> bool,
    V: FnMut(&RayHit),
{
    let grid = scene.grid();
    let mut comp = Compositor { densities: &scene.densities, transmittance: 1.0, total: 0.0, visit };
    let inv_dir = direction.map(|v| 1.0 / v);
    let (t_in, t_out) = slab(&grid.lo, &grid.upper(), &origin, &inv_dir);
    let t_in = t_in.max(0.0);
    if !(t_in <= t_out) {
        return 0.0;
    }

    let p = origin + direction * t_in;
    let mut idx = [0usize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for k in 0..3 {
        let rel = ((p[k] - grid.lo[k]) / grid.cell).floor();
        idx[k] = (rel.max(0.0) as usize).min(grid.dims[k] - 1);
        if direction[k] > 0.0 {
            step[k] = 1;
            let boundary = grid.lo[k] + (idx[k] + 1) as f64 * grid.cell;
            t_max[k] = (boundary - origin[k]) * inv_dir[k];
            t_delta[k] = grid.cell * inv_dir[k];
        } else if direction[k] < 0.0 {
            step[k] = -1;
            let boundary = grid.lo[k] + idx[k] as f64 * grid.cell;
            t_max[k] = (boundary - origin[k]) * inv_dir[k];
            t_delta[k] = -grid.cell * inv_dir[k];
        }
    }

    let mut seen: HashSet<u32> = HashSet::new();
    let mut pending: BinaryHeap<Pending> = BinaryHeap::new();
    loop {
        for &v in grid.cell_items(idx) {
            if !seen.insert(v) {
                continue;
            }
            let vi = v as usize;
            let (lo, hi) = voxel_bounds(&scene.centers()[vi], scene.sizes()[vi]);
            let (t0, t1) = slab(&lo, &hi, &origin, &inv_dir);
            let t0 = t0.max(0.0);
            let length = t1 - t0;
            if length > 0.0 && include(vi) {
                pending.push(Pending { t_entry: t0, length, voxel: vi });
            }
        }
        let axis = (0..3)
            .min_by(|&a, &b| t_max[a].total_cmp(&t_max[b]))
            .expect("three axes");
        let cell_exit = t_max[axis];
        while let Some(top) = pending.peek() {
            if top.t_entry >= cell_exit {
                break;
            }
            let top = pending.pop().expect("peeked");
            if !comp.emit(top) {
                return comp.total;
            }
        }
        if cell_exit.is_infinite() || cell_exit > t_out {
            break;
        }
        let next = idx[axis] as isize + step[axis];
        if next < 0 || next >= grid.dims[axis] as isize {
            break;
        }
        idx[axis] = next as usize;
        t_max[axis] += t_delta[axis];
    }
    while let Some(top) = pending.pop() {
        if !comp.emit(top) {
            break;
        }
    }
    comp.total
}

/// All voxels intersected by the ray with positive segment length, in
/// front-to-back order, composited with the volume-rendering weights.
///
/// The direction need not be normalized; segment lengths are in units of the
/// ray parameter, so pass a unit direction to get meters.
pub fn traverse_ray(scene: &VoxelScene, origin: Vec3, direction: Vec3) -> RayHits {
    let mut hits = Vec::new();
    let total_weight = trace(scene, origin, direction, |_| true, |h| hits.push(*h));
    RayHits { hits, total_weight }
}
