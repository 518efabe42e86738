mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{oracle_hits, random_scene, same_partition, view_at};
use openvoxel::grouping::{
    assign_voxel_ids, compute_instance_centroids, lift_masks, load_grouping, match_masks, propose_merges,
    run_grouping, store_grouping, GroupDictionary, GroupField, GroupingConfig, InstanceCentroid,
};
use openvoxel::scene::{render_point_map, DEFAULT_TAU_BG};
use openvoxel::segmenter::{
    MaskPrompt, NoiseConfig, OracleSegmenter, PointPrompt, PromptedMask, SegmentError, Segmenter,
};
use openvoxel::synth::{generate_orbit, generate_scene, OrbitSpec, SceneSpec};
use openvoxel::{InstanceMask, RgbImage, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, labels: u32) -> InstanceMask {
    // blocky masks so that regions overlap meaningfully
    let bw = 3;
    let blocks: Vec<u32> = (0..w.div_ceil(bw) * h.div_ceil(bw)).map(|_| rng.gen_range(0..=labels)).collect();
    let cols = w.div_ceil(bw);
    let labels = (0..w * h).map(|p| blocks[(p / w / bw) * cols + (p % w) / bw]).collect();
    InstanceMask::from_labels(w, h, labels)
}

#[test]
fn lifting_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scene = random_scene(&mut rng, 120, 1.0);
    let view = view_at("v", 16, 12, 14.0, Vec3::new(0.2, 0.1, -4.0), Vec3::zeros());
    let mask = random_mask(&mut rng, 16, 12, 4);
    let centroids: BTreeMap<u32, InstanceCentroid> = (1..=3)
        .map(|l| {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (l, InstanceCentroid { position: p, pixels: 20 })
        })
        .collect();
    let mut field = GroupField::zeros(scene.len());
    lift_masks(&scene, &view, &mask, &centroids, &mut field).unwrap();

    let mut f = vec![[0.0f64; 3]; scene.len()];
    let mut w = vec![0.0f64; scene.len()];
    for v in 0..view.height {
        for u in 0..view.width {
            // label 4 has no centroid and must not vote
            let Some(c) = centroids.get(&mask.get(u, v)) else { continue };
            let (o, d) = view.ray(u, v);
            for (i, _, _, _, wt) in oracle_hits(&scene, o, d).0 {
                for k in 0..3 {
                    f[i][k] += wt * c.position[k];
                }
                w[i] += wt;
            }
        }
    }
    for i in 0..scene.len() {
        assert!((field.w[i] - w[i]).abs() < 1e-6, "W differs at {i}");
        for k in 0..3 {
            assert!((field.f[i][k] - f[i][k]).abs() < 1e-6);
        }
    }
}

#[test]
fn centroids_are_masked_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scene = random_scene(&mut rng, 200, 1.0);
    let view = view_at("v", 20, 20, 16.0, Vec3::new(0.0, 0.0, -4.0), Vec3::zeros());
    let pmap = render_point_map(&scene, &view, DEFAULT_TAU_BG);
    let mask = random_mask(&mut rng, 20, 20, 3);
    let got = compute_instance_centroids(&mask, &pmap, 5).unwrap();
    for l in 1..=3u32 {
        let px: Vec<usize> = (0..400).filter(|&p| mask.labels[p] == l && pmap.valid[p]).collect();
        if px.len() < 5 {
            assert!(!got.contains_key(&l));
            continue;
        }
        let c = &got[&l];
        assert_eq!(c.pixels, px.len());
        for k in 0..3 {
            let mean = px.iter().map(|&p| pmap.positions[p][k]).sum::<f64>() / px.len() as f64;
            assert!((c.position[k] - mean).abs() < 1e-9);
        }
    }
}

fn brute_match(proj: &InstanceMask, new: &InstanceMask, thr: f64, next: u32) -> BTreeMap<u32, u32> {
    let count = |m: &InstanceMask, l: u32| m.labels.iter().filter(|&&x| x == l).count();
    let both = |e: u32, n: u32| proj.labels.iter().zip(&new.labels).filter(|&(&a, &b)| a == e && b == n).count();
    let mut order: Vec<u32> = proj.label_set().into_iter().filter(|&l| l != 0).collect();
    order.sort_by_key(|&e| (std::cmp::Reverse(count(proj, e)), e));
    let new_labels: Vec<u32> = new.label_set().into_iter().filter(|&l| l != 0).collect();
    let mut mapping = BTreeMap::new();
    for e in order {
        let mut best: Option<(f64, u32)> = None;
        for &n in &new_labels {
            let inter = both(e, n);
            if inter == 0 || mapping.contains_key(&n) {
                continue;
            }
            let iou = inter as f64 / (count(proj, e) + count(new, n) - inter) as f64;
            if best.map_or(true, |(b, _)| iou > b) {
                best = Some((iou, n));
            }
        }
        if let Some((_, n)) = best.filter(|(iou, _)| *iou >= thr) {
            mapping.insert(n, e);
        }
    }
    let mut id = next;
    for n in new_labels {
        mapping.entry(n).or_insert_with(|| {
            id += 1;
            id - 1
        });
    }
    mapping
}

fn brute_assign(field: &GroupField, dict: &GroupDictionary) -> Vec<u32> {
    (0..field.len())
        .map(|i| {
            if field.w[i] <= 0.0 {
                return 0;
            }
            let x = Vec3::from(field.f[i]) / field.w[i];
            let mut all: Vec<(f64, u32)> =
                dict.entries.iter().map(|(&id, e)| ((x - Vec3::from(e.centroid)).norm_squared(), id)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dict.resolve(all[0].1)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matching_agrees_with_brute_force(seed in any::<u64>(), thr in 0.0f64..1.0, next in 1u32..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = random_mask(&mut rng, 12, 9, 4);
        let new = random_mask(&mut rng, 12, 9, 5);
        let m = match_masks(&proj, &new, thr, next).unwrap();
        prop_assert_eq!(&m.mapping, &brute_match(&proj, &new, thr, next));
        // matched targets are distinct, fresh ids are fresh
        let matched: Vec<u32> = m.mapping.iter().filter(|(n, _)| !m.fresh.contains(n)).map(|(_, &e)| e).collect();
        let distinct: BTreeSet<u32> = matched.iter().copied().collect();
        prop_assert_eq!(distinct.len(), matched.len());
        for n in &m.fresh {
            prop_assert!(m.mapping[n] >= next && m.mapping[n] < m.next_id);
        }
        for (p, &l) in new.labels.iter().enumerate() {
            prop_assert_eq!(m.relabeled.labels[p], if l == 0 { 0 } else { m.mapping[&l] });
        }
    }

    #[test]
    fn assignment_is_exhaustive_argmin(seed in any::<u64>(), n in 1usize..80, k in 1u32..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dict = GroupDictionary::default();
        for _ in 0..k {
            let id = dict.allocate();
            // a coarse lattice makes exact distance ties common
            let c = Vec3::new(rng.gen_range(-2..3) as f64, rng.gen_range(-2..3) as f64, 0.0);
            dict.insert(id, c, 1.0);
        }
        for _ in 0..rng.gen_range(0..k) {
            let a = rng.gen_range(1..=k);
            let b = rng.gen_range(1..=k);
            dict.merge(a, b);
        }
        let mut field = GroupField::zeros(n);
        for i in 0..n {
            if rng.gen_bool(0.8) {
                let w = rng.gen_range(0.1..3.0);
                field.w[i] = w;
                field.f[i] = [rng.gen_range(-2..3) as f64 * w, rng.gen_range(-2..3) as f64 * w * 0.5, 0.0];
            }
        }
        let got = assign_voxel_ids(&field, &dict).unwrap();
        prop_assert_eq!(&got, &brute_assign(&field, &dict));
        let live: BTreeSet<u32> = dict.live_ids().into_iter().collect();
        prop_assert!(got.iter().all(|id| *id == 0 || live.contains(id)));
    }

    #[test]
    fn lifting_only_adds_weight(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&mut rng, 60, 1.0);
        let view = view_at("v", 10, 10, 9.0, Vec3::new(0.0, 0.3, -4.0), Vec3::zeros());
        let mut field = GroupField::zeros(scene.len());
        let centroids: BTreeMap<u32, InstanceCentroid> =
            (1..=3).map(|l| (l, InstanceCentroid { position: Vec3::repeat(l as f64), pixels: 1 })).collect();
        for _ in 0..3 {
            let before = field.clone();
            let mask = random_mask(&mut rng, 10, 10, 3);
            lift_masks(&scene, &view, &mask, &centroids, &mut field).unwrap();
            for i in 0..scene.len() {
                prop_assert!(field.w[i] >= before.w[i]);
                if let Some(e) = field.embedding(i) {
                    // every vote lies in the cube [1, 3]^3, so the mean does too
                    prop_assert!(e.iter().all(|x| (1.0 - 1e-9..=3.0 + 1e-9).contains(x)));
                }
            }
        }
    }

    #[test]
    fn dictionary_merges_resolve_to_live_ids(ops in proptest::collection::vec((1u32..10, 1u32..10), 0..20)) {
        let mut dict = GroupDictionary::default();
        for i in 0..9 {
            let id = dict.allocate();
            dict.insert(id, Vec3::repeat(i as f64), 1.0 + i as f64);
        }
        let total: f64 = dict.entries.values().map(|e| e.support).sum();
        for (a, b) in ops {
            dict.merge(a, b);
        }
        let live = dict.live_ids();
        for id in 1..10 {
            prop_assert!(live.contains(&dict.resolve(id)));
        }
        let live_support: f64 = live.iter().map(|id| dict.entries[id].support).sum();
        prop_assert!((live_support - total).abs() < 1e-9);
    }
}

/// Returns canned prompted masks keyed by the positive pixel under them.
struct Scripted {
    answers: Vec<InstanceMask>,
}

impl Segmenter for Scripted {
    fn segment(&self, _: &RgbImage, _: usize) -> Result<InstanceMask, SegmentError> {
        unreachable!()
    }

    fn segment_prompted(
        &self,
        _: &RgbImage,
        _: usize,
        points: &[PointPrompt],
        mp: &MaskPrompt,
    ) -> Result<PromptedMask, SegmentError> {
        let p = points[0].v * mp.width + points[0].u;
        let hit = self.answers.iter().find(|m| m.labels[p] != 0);
        Ok(match hit {
            Some(m) => PromptedMask { mask: m.clone(), no_object: false },
            None => PromptedMask { mask: InstanceMask::new(mp.width, mp.height), no_object: true },
        })
    }
}

#[test]
fn merges_match_containment_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = GroupingConfig { positive_prompts: 1, ..Default::default() };
    for _ in 0..40 {
        let proj = random_mask(&mut rng, 15, 12, 5);
        // prompted answers are unions of projected regions
        let ids: Vec<u32> = proj.label_set().into_iter().filter(|&l| l != 0).collect();
        let mut answers = Vec::new();
        let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
        let mut pool = ids.clone();
        while !pool.is_empty() {
            let take = rng.gen_range(1..=pool.len().min(3));
            let members: Vec<u32> = pool.drain(..take).collect();
            let labels = proj.labels.iter().map(|l| u32::from(members.contains(l))).collect();
            for m in &members {
                owner.insert(*m, answers.len());
            }
            answers.push(InstanceMask::from_labels(15, 12, labels));
        }
        let seg = Scripted { answers: answers.clone() };
        let image = RgbImage::new(15, 12);
        let got = propose_merges(&proj, &image, 0, &seg, &cfg).unwrap();

        // every group is answered with its block's union, so groups sharing a block form one component
        let size = |l: u32| proj.count(l);
        let mut want = Vec::new();
        for (b, _) in answers.iter().enumerate() {
            let members: Vec<u32> = ids.iter().copied().filter(|i| owner[i] == b).collect();
            if members.len() < 2 {
                continue;
            }
            let survivor = *members.iter().max_by_key(|&&m| (size(m), std::cmp::Reverse(m))).unwrap();
            want.extend(members.iter().filter(|&&m| m != survivor).map(|&m| (m, survivor)));
        }
        let mut got_sorted = got.clone();
        got_sorted.sort();
        want.sort();
        assert_eq!(got_sorted, want);
    }
}

fn small_scene(seed: u64) -> (openvoxel::VoxelScene, Vec<openvoxel::CameraView>) {
    let spec = SceneSpec { seed, n_objects: 4, ..Default::default() };
    let (scene, _) = generate_scene(&spec).unwrap();
    let orbit = OrbitSpec { n_views: 8, width: 48, height: 48, ..Default::default() };
    let views = generate_orbit(&scene, &orbit).unwrap();
    (scene, views)
}

#[test]
fn grouping_is_deterministic_and_label_invariant() {
    let (scene, views) = small_scene(2);
    let cfg = GroupingConfig { merging: false, ..Default::default() };
    let run = |permute: bool, noise_seed: u64| {
        let noise = NoiseConfig { permute_ids: permute, seed: noise_seed, ..NoiseConfig::default() };
        let seg = OracleSegmenter::new(&scene, &views, noise, cfg.tau_bg).unwrap();
        run_grouping(&scene, &views, &seg, &cfg).unwrap()
    };
    let a = run(false, 0);
    let b = run(false, 0);
    assert_eq!(a, b);
    for s in [1, 2, 3] {
        let c = run(true, s);
        assert!(same_partition(&a.voxel_ids, &c.voxel_ids), "relabeling views changed the grouping (seed {s})");
    }
}

#[test]
fn grouping_round_trips_through_the_scene() {
    let (mut scene, views) = small_scene(4);
    let cfg = GroupingConfig::default();
    let seg = OracleSegmenter::new(&scene, &views, NoiseConfig::default(), cfg.tau_bg).unwrap();
    let result = run_grouping(&scene, &views, &seg, &cfg).unwrap();
    store_grouping(&mut scene, &result).unwrap();
    let bytes = openvoxel::scene::encode_scene(&scene);
    let back = openvoxel::scene::decode_scene(&bytes).unwrap();
    let (ids, dict) = load_grouping(&back).unwrap();
    assert_eq!(ids, result.voxel_ids);
    assert_eq!(dict, result.dictionary);
    let live: BTreeSet<u32> = dict.live_ids().into_iter().collect();
    assert!(ids.iter().all(|i| *i == 0 || live.contains(i)));
    // unvoted voxels and only those get id 0
    for (i, &id) in ids.iter().enumerate() {
        assert_eq!(id == 0, result.field.w[i] == 0.0);
    }
}

#[test]
fn clean_masks_recover_the_objects() {
    let (scene, views) = small_scene(6);
    let cfg = GroupingConfig::default();
    let seg = OracleSegmenter::new(&scene, &views, NoiseConfig::clean(), cfg.tau_bg).unwrap();
    let result = run_grouping(&scene, &views, &seg, &cfg).unwrap();
    let gt = scene.gt_ids().unwrap();
    let (p, g): (Vec<u32>, Vec<u32>) =
        result.voxel_ids.iter().zip(&gt).filter(|(p, g)| **p != 0 && **g != 0).map(|(p, g)| (*p, *g)).unzip();
    let ari = openvoxel::eval::adjusted_rand_index(&p, &g).unwrap();
    assert!(ari > 0.9, "ARI {ari}");
}
