#![no_main]

use clickstream_core::learners::{ModelArtifact, Value};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = ModelArtifact::from_json(text) {
            let row = vec![Value::Missing; model.schema.len()];
            let _ = model.predict(&row);
        }
    }
});
