#![no_main]

use clickstream_core::synth::SynthConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = SynthConfig::from_json(text) {
            let back = SynthConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }
});
