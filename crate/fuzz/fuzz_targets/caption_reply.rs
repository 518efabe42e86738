#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = openvoxel::clients::parse_canonical(text);
    if let Ok(c) = openvoxel::clients::parse_caption_line(text) {
        assert_eq!(openvoxel::clients::parse_caption_line(&c).as_ref(), Ok(&c));
    }
});
