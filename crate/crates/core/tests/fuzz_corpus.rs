//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets exercise.

use std::fs;
use std::path::PathBuf;

use clickstream_core::ingest::{read_dump, validate_header, EventArchive};
use clickstream_core::learners::{ModelArtifact, Value};
use clickstream_core::synth::SynthConfig;
use clickstream_core::video::{build_feature_table, read_views_tsv, write_views_tsv};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn header_seeds() {
    let mut accepted = 0;
    for (name, data) in seeds("header") {
        let text = String::from_utf8(data).unwrap();
        if let Ok(schema) = validate_header(text.trim_end_matches('\n')) {
            let _ = schema.extra_columns();
            accepted += 1;
        } else {
            assert_eq!(name, "missing_columns");
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn dump_seeds() {
    for (name, data) in seeds("dump") {
        let (schema, dump) = read_dump(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        if name == "with_rejects" {
            assert_eq!(dump.rejects.len(), 2, "{name}");
        }
        let extras: Vec<String> = schema.extra_columns().into_iter().map(String::from).collect();
        let archive = EventArchive::new(extras, dump.events);
        let mut out = Vec::new();
        archive.write_tsv(&mut out).unwrap();
        let (again, rejects) = EventArchive::read_tsv(&out[..]).unwrap();
        assert!(rejects.is_empty());
        assert_eq!(again.events.len(), archive.events.len());
    }
}

#[test]
fn synth_config_seeds() {
    for (name, data) in seeds("synth_config") {
        let result = SynthConfig::from_json(std::str::from_utf8(&data).unwrap());
        match name.as_str() {
            "increasing_profile" | "unknown_field" => assert!(result.is_err(), "{name}"),
            _ => {
                let cfg = result.unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(SynthConfig::from_json(&cfg.to_json()).unwrap(), cfg);
            }
        }
    }
}

#[test]
fn model_seeds() {
    for (name, data) in seeds("model_json") {
        let model = ModelArtifact::from_json(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let p = model.predict(&vec![Value::Missing; model.schema.len()]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{name}");
    }
}

#[test]
fn views_seeds() {
    for (name, data) in seeds("views_tsv") {
        let views = read_views_tsv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        write_views_tsv(&views, &mut out).unwrap();
        assert_eq!(read_views_tsv(&out[..]).unwrap(), views);
        if !views.is_empty() {
            build_feature_table(&views).unwrap();
        }
    }
}

mod mutated {
    use super::*;
    use proptest::prelude::*;

    fn mutate(data: &[u8], edits: &[(usize, u8, u8)]) -> Vec<u8> {
        let mut out = data.to_vec();
        for &(pos, op, byte) in edits {
            if out.is_empty() {
                out.push(byte);
                continue;
            }
            let i = pos % out.len();
            match op % 4 {
                0 => out[i] = byte,
                1 => out.insert(i, byte),
                2 => {
                    out.remove(i);
                }
                _ => out.truncate(i),
            }
        }
        out
    }

    // Rewrites the `k`-th number of a JSON document.
    fn set_number(v: &mut serde_json::Value, k: &mut usize, to: &serde_json::Value) -> bool {
        match v {
            serde_json::Value::Number(_) => {
                if *k == 0 {
                    *v = to.clone();
                    return true;
                }
                *k -= 1;
                false
            }
            serde_json::Value::Array(a) => a.iter_mut().any(|x| set_number(x, k, to)),
            serde_json::Value::Object(o) => o.values_mut().any(|x| set_number(x, k, to)),
            _ => false,
        }
    }

    fn edits() -> impl Strategy<Value = Vec<(usize, u8, u8)>> {
        prop::collection::vec((any::<usize>(), any::<u8>(), prop::sample::select(b"\t\n\\N0123456789.-,:{}[]\"ax".to_vec())), 1..8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn dumps_and_headers_never_panic(pick in any::<prop::sample::Index>(), e in edits()) {
            let all: Vec<_> = seeds("dump").into_iter().chain(seeds("header")).collect();
            let data = mutate(&pick.get(&all).1, &e);
            if let Ok((schema, dump)) = read_dump(&data[..]) {
                let extras: Vec<String> = schema.extra_columns().into_iter().map(String::from).collect();
                let archive = EventArchive::new(extras, dump.events);
                let mut out = Vec::new();
                archive.write_tsv(&mut out).unwrap();
                let (again, rejects) = EventArchive::read_tsv(&out[..]).unwrap();
                prop_assert!(rejects.is_empty());
                prop_assert_eq!(again.events.len(), archive.events.len());
            }
        }

        #[test]
        fn views_never_panic(pick in any::<prop::sample::Index>(), e in edits()) {
            let all = seeds("views_tsv");
            let data = mutate(&pick.get(&all).1, &e);
            if let Ok(views) = read_views_tsv(&data[..]) {
                let mut out = Vec::new();
                write_views_tsv(&views, &mut out).unwrap();
                prop_assert_eq!(read_views_tsv(&out[..]).unwrap(), views);
            }
        }

        #[test]
        fn synth_configs_never_panic(pick in any::<prop::sample::Index>(), e in edits()) {
            let all = seeds("synth_config");
            let data = mutate(&pick.get(&all).1, &e);
            if let Ok(cfg) = SynthConfig::from_json(&String::from_utf8_lossy(&data)) {
                prop_assert_eq!(SynthConfig::from_json(&cfg.to_json()).unwrap(), cfg);
            }
        }

        #[test]
        fn models_with_altered_numbers_never_panic(
            pick in any::<prop::sample::Index>(),
            k in 0usize..400,
            to in prop_oneof![
                (0u64..40).prop_map(serde_json::Value::from),
                (-5.0f64..5.0).prop_map(serde_json::Value::from),
                Just(serde_json::Value::from(u32::MAX)),
            ],
        ) {
            let all = seeds("model_json");
            let mut v: serde_json::Value = serde_json::from_slice(&pick.get(&all).1).unwrap();
            let mut k = k;
            set_number(&mut v, &mut k, &to);
            if let Ok(model) = ModelArtifact::from_json(&v.to_string()) {
                let width = model.schema.len();
                for row in [vec![Value::Missing; width], vec![Value::Numeric(1e9); width]] {
                    if let Ok(p) = model.predict(&row) {
                        prop_assert_eq!(p.len(), model.class_labels.len());
                    }
                }
            }
        }
    }
}
