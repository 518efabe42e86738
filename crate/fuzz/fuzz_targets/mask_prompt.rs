#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: (u8, u8, &str)| {
    let (w, h, text) = data;
    let _ = openvoxel::segmenter::decode_mask_prompt(text, w as usize % 64, h as usize % 64);
});
