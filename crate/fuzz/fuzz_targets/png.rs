#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = openvoxel::InstanceMask::from_png(data);
    let _ = openvoxel::RgbImage::from_png(data);
});
