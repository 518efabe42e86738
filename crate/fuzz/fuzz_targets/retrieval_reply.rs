#![no_main]

use libfuzzer_sys::fuzz_target;

use openvoxel::scene_map::{SceneMap, SceneMapEntry};

fuzz_target!(|text: &str| {
    let entry = |id: u32, caption: &str| SceneMapEntry {
        id,
        center: [0.0, 0.0, 0.0],
        caption: caption.into(),
        voxel_count: 1,
        flagged: false,
    };
    let map = SceneMap {
        scene_name: "fuzz".into(),
        entries: vec![entry(1, "apple, red sphere, on table"), entry(4, "mug, blue box, next to apple")],
    };
    let _ = openvoxel::clients::parse_retrieval(text, &map);
});
