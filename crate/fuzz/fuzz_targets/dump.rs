#![no_main]

use clickstream_core::ingest::{read_dump, EventArchive};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((schema, dump)) = read_dump(data) {
        let extras: Vec<String> = schema.extra_columns().into_iter().map(String::from).collect();
        let archive = EventArchive::new(extras, dump.events);
        let mut out = Vec::new();
        archive.write_tsv(&mut out).unwrap();
        let (again, rejects) = EventArchive::read_tsv(&out[..]).unwrap();
        assert!(rejects.is_empty());
        assert_eq!(again.events.len(), archive.events.len());
    }
});
