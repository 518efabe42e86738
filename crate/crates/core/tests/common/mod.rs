//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use openvoxel::scene::EARLY_STOP_TRANSMITTANCE;
use openvoxel::synth::look_at;
use openvoxel::{CameraView, VoxelScene, Vec3};
use rand::Rng;

/// Scalar hit record: (voxel, entry t, segment length, alpha, weight).
pub type Hit = (usize, f64, f64, f64, f64);

pub fn random_scene<R: Rng>(rng: &mut R, n: usize, extent: f32) -> VoxelScene {
    let centers = (0..n)
        .map(|_| [0, 1, 2].map(|_| rng.gen_range(-extent..extent)))
        .collect();
    let sizes = (0..n).map(|_| rng.gen_range(0.05..0.6)).collect();
    let densities = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.1..12.0) }).collect();
    let colors = (0..n).map(|_| [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()]).collect();
    VoxelScene::new(centers, sizes, densities, colors).unwrap()
}

/// Every voxel tested against the ray, sorted by entry then index, then
/// composited one by one.
pub fn oracle_hits(scene: &VoxelScene, origin: Vec3, dir: Vec3) -> (Vec<Hit>, f64) {
    let mut cand = Vec::new();
    for i in 0..scene.len() {
        let c = scene.centers()[i];
        let h = scene.sizes()[i] as f64 / 2.0;
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut miss = false;
        for k in 0..3 {
            let lo = c[k] as f64 - h;
            let hi = c[k] as f64 + h;
            if dir[k] == 0.0 {
                if origin[k] < lo || origin[k] > hi {
                    miss = true;
                }
                continue;
            }
            let a = (lo - origin[k]) / dir[k];
            let b = (hi - origin[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if miss {
            continue;
        }
        let t0 = t0.max(0.0);
        if t1 - t0 > 0.0 {
            cand.push((t0, i, t1 - t0));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::new();
    let mut t = 1.0;
    let mut total = 0.0;
    for (t0, i, len) in cand {
        let alpha = 1.0 - (-(scene.densities[i] as f64) * len).exp();
        let w = alpha * t;
        t *= 1.0 - alpha;
        total += w;
        out.push((i, t0, len, alpha, w));
        if t < EARLY_STOP_TRANSMITTANCE {
            break;
        }
    }
    (out, total)
}

pub fn oracle_color(scene: &VoxelScene, origin: Vec3, dir: Vec3) -> [f64; 3] {
    let (hits, _) = oracle_hits(scene, origin, dir);
    let mut c = [0.0; 3];
    for (i, _, _, _, w) in hits {
        for k in 0..3 {
            c[k] += w * scene.colors[i][k] as f64;
        }
    }
    c
}

pub fn oracle_group_id(scene: &VoxelScene, origin: Vec3, dir: Vec3, ids: &[u32], tau: f64) -> u32 {
    let (hits, total) = oracle_hits(scene, origin, dir);
    if total < tau {
        return 0;
    }
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for (i, _, _, _, w) in hits {
        if ids[i] != 0 {
            *acc.entry(ids[i]).or_default() += w;
        }
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (id, w) in acc {
        if w > best.1 {
            best = (id, w);
        }
    }
    best.0
}

/// Pinhole view at `eye` looking at `target`.
pub fn view_at(name: &str, w: usize, h: usize, f: f64, eye: Vec3, target: Vec3) -> CameraView {
    CameraView {
        name: name.into(),
        width: w,
        height: h,
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        rotation: look_at(&eye, &target),
        translation: eye,
    }
}

/// Co-membership matrix equality: two labelings induce the same partition.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut ab: BTreeMap<u32, u32> = BTreeMap::new();
    let mut ba: BTreeMap<u32, u32> = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}
