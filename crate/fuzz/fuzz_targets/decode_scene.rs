#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scene) = openvoxel::scene::decode_scene(data) {
        let again = openvoxel::scene::encode_scene(&scene);
        assert_eq!(openvoxel::scene::decode_scene(&again).unwrap(), scene);
    }
});
