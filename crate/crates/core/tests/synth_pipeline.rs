use std::collections::HashMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use clickstream_core::eval::{cross_validate, merge_task};
use clickstream_core::learners::{LearnerConfig, LearnerKind};
use clickstream_core::pipeline::{self, ingest_paths, label_events, PipelineOptions};
use clickstream_core::synth::{generate, ground_truth, SynthConfig};
use clickstream_core::video::build_feature_table;

fn config(n_users: usize, signal: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_users,
        signal_strength: signal,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn generated_dumps_ingest_without_rejects_and_labels_match_the_manifest() {
    let cfg = config(400, 0.8, 11);
    let data = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = data.write_to(dir.path()).unwrap();
    assert_eq!(paths.len(), cfg.n_days);

    let (archive, reports) = ingest_paths(&paths);
    for r in &reports {
        assert!(r.error.is_none(), "{r:?}");
        assert_eq!(r.rejects, 0, "{r:?}");
    }
    assert_eq!(archive.events.len(), data.click_count());

    let labeled = label_events(archive.events, 1800);
    assert!(labeled.regressions.is_empty());
    let truth = ground_truth(&cfg).unwrap();
    assert_eq!(labeled.views.len(), truth.views.len());
    let expected: HashMap<&str, _> = truth.views.iter().map(|v| (v.player_id.as_str(), v)).collect();
    for v in &labeled.views {
        let t = expected[&*v.player_id];
        assert_eq!(v.exit_class5, t.exit_class, "{}", v.player_id);
        assert_eq!(v.early_exit, t.early_exit);
        assert_eq!(&*v.content_category, t.category);
    }
}

#[test]
fn default_config_yields_seven_dumps_near_150k_clicks() {
    let data = generate(&SynthConfig::default()).unwrap();
    assert_eq!(data.days.len(), 7);
    let clicks = data.click_count();
    assert!((120_000..=180_000).contains(&clicks), "{clicks} clicks");
}

#[test]
fn fifty_nine_days_give_fifty_nine_files() {
    let cfg = SynthConfig {
        n_users: 30,
        n_days: 59,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(generate(&cfg).unwrap().write_to(dir.path()).unwrap().len(), 59);
}

// Pearson test of independence between referrer type and early exit.
fn referrer_p_value(signal: f64) -> f64 {
    let data = generate(&config(1500, signal, 5)).unwrap();
    let views = label_events(data.all_events(), 1800).views;
    let mut joint: HashMap<(String, bool), f64> = HashMap::new();
    for v in &views {
        *joint.entry((v.features.referrer_type.to_string(), v.early_exit)).or_default() += 1.0;
    }
    let n = views.len() as f64;
    let mut rows: HashMap<&str, f64> = HashMap::new();
    let mut cols: HashMap<bool, f64> = HashMap::new();
    for ((r, c), k) in &joint {
        *rows.entry(r.as_str()).or_default() += k;
        *cols.entry(*c).or_default() += k;
    }
    let mut stat = 0.0;
    for (r, nr) in &rows {
        for (c, nc) in &cols {
            let e = nr * nc / n;
            let o = joint.get(&(r.to_string(), *c)).copied().unwrap_or(0.0);
            stat += (o - e).powi(2) / e;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn zero_signal_leaves_the_planted_column_independent() {
    let p = referrer_p_value(0.0);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn planted_signal_is_detectable() {
    let p = referrer_p_value(0.8);
    assert!(p < 1e-6, "p = {p}");
}

#[test]
fn full_strength_rule_is_learned_by_a_tree() {
    let data = generate(&config(1500, 1.0, 3)).unwrap();
    let views = label_events(data.all_events(), 1800).views;
    let table = merge_task(&build_feature_table(&views).unwrap()).unwrap();
    let report = cross_validate(&LearnerConfig::default_for(LearnerKind::C45), &table, 10, 1).unwrap();
    assert!(report.accuracy > 0.9, "accuracy {}", report.accuracy);
}

#[test]
fn pipeline_without_video_stops_after_labeling() {
    let data = generate(&SynthConfig {
        n_users: 50,
        video_probability: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = pipeline::run(data.all_events(), &PipelineOptions::default(), dir.path());
    let failure = run.failure.expect("must fail").to_string();
    assert!(failure.contains("label") && failure.contains("0 video views"), "{failure}");
    assert!(run.outputs.iter().any(|p| p.ends_with("section_edges.csv")));
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn pipeline_outputs_are_listed_and_reproducible() {
    let events = generate(&config(150, 0.8, 2)).unwrap().all_events();
    let opts = PipelineOptions {
        learners: vec![
            LearnerConfig::default_for(LearnerKind::NaiveBayes),
            LearnerConfig::default_for(LearnerKind::C45),
        ],
        folds: 5,
        ..PipelineOptions::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::run(events.clone(), &opts, a.path());
    let rb = pipeline::run(events, &opts, b.path());
    assert!(ra.failure.is_none(), "{:?}", ra.failure);
    assert_eq!(ra.outputs, rb.outputs);
    assert_eq!(ra.reports.len(), 4);
    for rel in &ra.outputs {
        let x = std::fs::read(a.path().join(rel)).unwrap();
        let y = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(x, y, "{}", rel.display());
    }
    assert!(ra.outputs.iter().any(|p| p.ends_with("summary.csv")));
}
