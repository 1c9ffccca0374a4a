#![no_main]

use clickstream_core::ingest::validate_header;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(schema) = validate_header(text) {
            let _ = schema.extra_columns();
        }
    }
});
