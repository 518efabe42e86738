#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = openvoxel::pipeline::PipelineConfig::from_json(text);
    let _ = openvoxel::synth::SceneSpec::from_json(text);
});
