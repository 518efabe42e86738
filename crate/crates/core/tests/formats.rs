mod common;

use common::random_scene;
use openvoxel::eval::{load_query_set, save_query_set, QuerySetEntry};
use openvoxel::scene::{decode_scene, encode_scene, load_cameras, save_cameras, CameraRig, OvxError};
use openvoxel::scene_map::{load_scene_map, save_scene_map, SceneMap, SceneMapEntry};
use openvoxel::synth::{generate_orbit, generate_scene, load_records, save_records, OrbitSpec, SceneSpec};
use openvoxel::{InstanceMask, RgbImage, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// A one-voxel file written out by hand, sections in a non-canonical order.
fn hand_written() -> Vec<u8> {
    let mut data = Vec::new();
    data.extend(le(&[0.25]));
    data.extend(le(&[1.0, 2.0, 3.0]));
    data.extend(le(&[0.1, 0.2, 0.3]));
    data.extend(le(&[4.5]));
    data.extend(7i32.to_le_bytes());
    let header = r#"{"n_voxels":1,"sections":[
        {"name":"sizes","dtype":"f32","shape":[1],"offset":0,"byte_len":4},
        {"name":"centers","dtype":"f32","shape":[1,3],"offset":4,"byte_len":12},
        {"name":"colors","dtype":"f32","shape":[1,3],"offset":16,"byte_len":12},
        {"name":"densities","dtype":"f32","shape":[1],"offset":28,"byte_len":4},
        {"name":"gt_labels","dtype":"i32","shape":[1],"offset":32,"byte_len":4}
    ],"meta":{"source":"hand"}}"#;
    let mut out = b"OVX1".to_vec();
    out.extend((header.len() as u64).to_le_bytes());
    out.extend(header.as_bytes());
    out.extend(data);
    out
}

#[test]
fn hand_written_file_decodes() {
    let s = decode_scene(&hand_written()).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s.centers(), &[[1.0, 2.0, 3.0]]);
    assert_eq!(s.sizes(), &[0.25]);
    assert_eq!(s.densities, vec![4.5]);
    assert_eq!(s.colors, vec![[0.1, 0.2, 0.3]]);
    assert_eq!(s.gt_labels, Some(vec![7]));
    assert_eq!(s.meta["source"], "hand");
    // re-encoding canonicalizes the layout but keeps the content
    assert_eq!(decode_scene(&encode_scene(&s)).unwrap(), s);
}

#[test]
fn hand_written_file_corruptions() {
    let good = hand_written();
    let header_len = u64::from_le_bytes(good[4..12].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&good[12..12 + header_len]).unwrap().to_string();
    let with_header = |h: &str| {
        let mut out = b"OVX1".to_vec();
        out.extend((h.len() as u64).to_le_bytes());
        out.extend(h.as_bytes());
        out.extend(&good[12 + header_len..]);
        out
    };
    let section = |bytes: &[u8]| match decode_scene(bytes) {
        Err(OvxError::Section { name, reason }) => format!("{name}: {reason}"),
        other => panic!("expected a section error, got {other:?}"),
    };
    assert!(section(&with_header(&header.replace(r#""dtype":"i32""#, r#""dtype":"f32""#))).starts_with("gt_labels: dtype"));
    assert!(matches!(
        decode_scene(&with_header(&header.replace(r#""offset":32"#, r#""offset":33"#))),
        Err(OvxError::Truncated(what)) if what.contains("gt_labels")
    ));
    assert!(section(&with_header(&header.replace(r#""shape":[1,3],"offset":4"#, r#""shape":[3],"offset":4"#))).starts_with("centers: shape"));
    assert!(section(&with_header(&header.replace("gt_labels", "labels"))).contains("unknown section"));
    assert!(matches!(
        decode_scene(&with_header(&header.replace(r#"{"name":"densities","dtype":"f32","shape":[1],"offset":28,"byte_len":4},"#, ""))),
        Err(OvxError::MissingSection("densities"))
    ));
    assert!(matches!(decode_scene(&with_header(&header.replace("\"meta\"", "\"extra\""))), Err(OvxError::Header(_))));
    // non-positive size is caught as a scene invariant
    let mut zero = good.clone();
    let at = 12 + header_len;
    zero[at..at + 4].copy_from_slice(&0f32.to_le_bytes());
    assert!(matches!(decode_scene(&zero), Err(OvxError::Invalid(_))));
    // header length pointing past the end
    let mut long = good.clone();
    long[4..12].copy_from_slice(&(u64::MAX).to_le_bytes());
    assert!(matches!(decode_scene(&long), Err(OvxError::Truncated(_))));
}

#[test]
fn synthetic_scene_with_grouping_round_trips_bytes() {
    let spec = SceneSpec { seed: 1, n_objects: 3, ..Default::default() };
    let (mut scene, records) = generate_scene(&spec).unwrap();
    let n = scene.len();
    scene.grouping.field_f = Some(vec![[0.5, -1.0, 2.0]; n]);
    scene.grouping.field_w = Some(vec![0.75; n]);
    scene.grouping.ids = Some((0..n as i32).map(|i| i % 4).collect());
    let bytes = encode_scene(&scene);
    let back = decode_scene(&bytes).unwrap();
    assert_eq!(back, scene);
    assert_eq!(encode_scene(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("objects.json");
    save_records(&records, &path).unwrap();
    assert_eq!(load_records(&path).unwrap(), records);
}

#[test]
fn cameras_round_trip_through_json() {
    let (scene, _) = generate_scene(&SceneSpec { seed: 2, n_objects: 2, ..Default::default() }).unwrap();
    let views = generate_orbit(&scene, &OrbitSpec { n_views: 5, width: 20, height: 10, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cameras.json");
    save_cameras(&views, &path).unwrap();
    let back = load_cameras(&path).unwrap();
    assert_eq!(back.len(), views.len());
    for (a, b) in views.iter().zip(&back) {
        assert_eq!(a.name, b.name);
        assert_eq!((a.width, a.height), (b.width, b.height));
        assert!((a.rotation - b.rotation).norm() < 1e-12);
        assert!((a.translation - b.translation).norm() < 1e-12);
        // a pixel ray is unchanged
        let (oa, da) = a.ray(3, 7);
        let (ob, db) = b.ray(3, 7);
        assert!((oa - ob).norm() < 1e-12 && (da - db).norm() < 1e-12);
    }
}

#[test]
fn camera_json_rejections() {
    let ok = r#"{"width":4,"height":3,"fx":2,"fy":2,"cx":2,"cy":1.5,"frames":[{"name":"a","c2w":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]}"#;
    let views = CameraRig::from_json(ok).unwrap().views().unwrap();
    assert_eq!(views[0].ray(1, 1).1, Vec3::new(-0.25, 0.0, 1.0).normalize());
    for bad in [
        ok.replace("0,0,0,1]", "0,0,1,1]"),
        ok.replace("[1,0,0,0,", "[2,0,0,0,"),
        ok.replace(", 0,0,0,1]", ", 0,0,1]"),
        ok.replace(r#"[{"name":"a","c2w":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]"#, "[]"),
    ] {
        let res = CameraRig::from_json(&bad).and_then(|r| r.views());
        assert!(res.is_err(), "{bad}");
    }
    assert!(CameraRig::from_json(r#"{"width":4}"#).is_err());
}

#[test]
fn scene_map_and_query_set_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map = SceneMap {
        scene_name: "s".into(),
        entries: vec![
            SceneMapEntry { id: 4, center: [0.1, 0.2, 0.30000000000000004], caption: "mug, red box".into(), voxel_count: 9, flagged: false },
            SceneMapEntry { id: 2, center: [1.0, -2.0, 3.5], caption: "unknown, caption unavailable".into(), voxel_count: 1, flagged: true },
        ],
    };
    let path = dir.path().join("scene_map.json");
    save_scene_map(&map, &path).unwrap();
    let back = load_scene_map(&path).unwrap();
    // loading sorts by id
    assert_eq!(back.ids(), vec![2, 4]);
    assert_eq!(back.get(4).unwrap(), &map.entries[0]);
    assert!(SceneMap::from_json(r#"{"scene_name":"x","groups":[{"id":1,"center":[0,0,0],"caption":"a","voxel_count":1},{"id":1,"center":[0,0,0],"caption":"b","voxel_count":1}]}"#).is_err());

    let rig = r#"{"width":6,"height":4,"fx":3,"fy":3,"cx":3,"cy":2,"frames":[
        {"name":"v0","c2w":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]},
        {"name":"v1","c2w":[1,0,0,1, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]}"#;
    let views = CameraRig::from_json(rig).unwrap().views().unwrap();
    std::fs::create_dir(dir.path().join("masks")).unwrap();
    let mask = InstanceMask::from_labels(6, 4, (0..24).map(|i| u32::from(i % 5 == 0)).collect());
    mask.save_png16(dir.path().join("masks/q0.png")).unwrap();
    let entries = vec![QuerySetEntry { query: "the mug".into(), view: "v1".into(), gt_mask: "masks/q0.png".into() }];
    let qpath = dir.path().join("queries.json");
    save_query_set(&entries, &qpath).unwrap();
    let items = load_query_set(&qpath, &views).unwrap();
    assert_eq!(items[0].gt_mask, mask);
    assert_eq!(items[0].view.name, "v1");
    let wrong_view = vec![QuerySetEntry { view: "v9".into(), ..entries[0].clone() }];
    save_query_set(&wrong_view, &qpath).unwrap();
    assert!(load_query_set(&qpath, &views).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_scenes_round_trip(seed in any::<u64>(), n in 1usize..200, labels in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = random_scene(&mut rng, n, 3.0);
        if labels {
            scene = scene.with_gt_labels((0..n as i32).map(|i| i % 3).collect()).unwrap();
        }
        let bytes = encode_scene(&scene);
        let back = decode_scene(&bytes).unwrap();
        prop_assert_eq!(&back, &scene);
        prop_assert_eq!(encode_scene(&back), bytes);
    }

    #[test]
    fn truncated_or_flipped_files_fail_cleanly(cut in 0usize..400, flip in 0usize..400, bit in 0u8..8) {
        let good = hand_written();
        let _ = decode_scene(&good[..cut.min(good.len())]);
        let mut bad = good.clone();
        let i = flip % bad.len();
        bad[i] ^= 1 << bit;
        let _ = decode_scene(&bad);
    }

    #[test]
    fn masks_round_trip_png16(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = InstanceMask::from_labels(w, h, (0..w * h).map(|_| rng.gen_range(0..65536)).collect());
        let back = InstanceMask::from_png(&mask.to_png16().unwrap()).unwrap();
        prop_assert_eq!(back, mask.clone());
        let bin = InstanceMask::from_png(&mask.to_png8_binary().unwrap()).unwrap();
        prop_assert_eq!(bin.foreground_count(), mask.foreground_count());
    }

    #[test]
    fn color_png_is_8_bit_accurate(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = RgbImage { width: w, height: h, pixels: (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect() };
        let back = RgbImage::from_png(&img.to_png().unwrap()).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
