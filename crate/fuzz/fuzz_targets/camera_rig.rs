#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = openvoxel::scene::CameraRig::from_json(text);
});
