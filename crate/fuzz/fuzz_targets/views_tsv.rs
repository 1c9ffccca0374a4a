#![no_main]

use clickstream_core::video::{build_feature_table, read_views_tsv, write_views_tsv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(views) = read_views_tsv(data) {
        let mut out = Vec::new();
        write_views_tsv(&views, &mut out).unwrap();
        assert_eq!(read_views_tsv(&out[..]).unwrap(), views);
        let _ = build_feature_table(&views);
    }
});
