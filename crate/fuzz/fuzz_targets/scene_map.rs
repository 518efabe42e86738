#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = openvoxel::scene_map::SceneMap::from_json(text);
});
