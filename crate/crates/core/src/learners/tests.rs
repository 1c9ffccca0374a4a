use super::*;
use crate::table::{ClassColumn, Column, FeatureTable};
use proptest::prelude::*;

fn mixed(n: usize, shift: usize) -> FeatureTable {
    let class: Vec<String> = (0..n)
        .map(|i| {
            let j = (i + shift) % n;
            if (j * 7) % 10 < 4 { "a" } else if j.is_multiple_of(11) { "c" } else { "b" }.to_string()
        })
        .collect();
    let signal = class
        .iter()
        .enumerate()
        .map(|(i, c)| Some(if i % 9 == 0 { "z".to_string() } else { c.to_uppercase() }));
    FeatureTable::new(
        vec![
            Column::nominal("signal", signal),
            Column::nominal("noise", (0..n).map(|i| Some(format!("n{}", (i * 5 + shift) % 3)))),
            Column::numeric(
                "num",
                (0..n).map(|i| if i % 13 == 4 { None } else { Some(((i * 37) % 17) as f64 / 4.0) }),
            ),
        ],
        Some(ClassColumn::new("y", class)),
    )
    .unwrap()
}

fn small_configs() -> Vec<LearnerConfig> {
    let mut v: Vec<LearnerConfig> = LearnerKind::BENCHMARK
        .iter()
        .map(|&k| LearnerConfig::default_for(k))
        .collect();
    for c in &mut v {
        match c {
            LearnerConfig::RandomForest { n_trees, .. } => *n_trees = 8,
            LearnerConfig::RandomSubspace { n_members, .. } => *n_members = 4,
            LearnerConfig::Stacking { bases, folds, .. } => {
                bases[0].n_members = 3;
                *folds = 4;
            }
            _ => {}
        }
    }
    v.push(LearnerConfig::Majority);
    v
}

#[test]
fn aliases_parse() {
    for (s, k) in [
        ("NB", LearnerKind::NaiveBayes),
        ("C4.5", LearnerKind::C45),
        ("RIP", LearnerKind::Ripper),
        ("DT", LearnerKind::DecisionTable),
        ("RF", LearnerKind::RandomForest),
        ("rs", LearnerKind::RandomSubspace),
        ("ST", LearnerKind::Stacking),
        ("random_forest", LearnerKind::RandomForest),
    ] {
        assert_eq!(LearnerKind::parse(s).unwrap(), k);
    }
    assert!(LearnerKind::parse("svm").is_err());
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let bad = [
        LearnerConfig::C45 {
            min_leaf: 0.0,
            prune_confidence: 0.25,
            prune: true,
        },
        LearnerConfig::C45 {
            min_leaf: 2.0,
            prune_confidence: 1.0,
            prune: true,
        },
        LearnerConfig::RandomForest {
            n_trees: 0,
            features_per_split: None,
        },
        LearnerConfig::RandomSubspace {
            n_members: 3,
            subspace_fraction: 0.0,
            min_leaf: 2.0,
            prune_confidence: 0.25,
            prune: true,
        },
        LearnerConfig::Stacking {
            bases: vec![],
            meta: Box::new(LearnerConfig::Majority),
            folds: 10,
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(LearnerError::InvalidParameter(_))), "{c:?}");
    }
}

#[test]
fn empty_table_is_an_error() {
    let t = mixed(0, 0);
    for c in small_configs() {
        assert!(matches!(ModelArtifact::train(&c, &t, 1), Err(LearnerError::EmptyTable)));
    }
}

#[test]
fn every_learner_yields_distributions_and_is_deterministic() {
    let t = mixed(90, 0);
    for c in small_configs() {
        let a = ModelArtifact::train(&c, &t, 17).unwrap();
        let b = ModelArtifact::train(&c, &t, 17).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{}", c.kind());
        for row in a.predict_table(&t).unwrap() {
            assert_eq!(row.len(), 3);
            assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{}", c.kind());
        }
        let all_missing = vec![Value::Missing; 3];
        let p = a.predict(&all_missing).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn artifact_roundtrips_through_json() {
    let t = mixed(60, 2);
    for c in small_configs() {
        let a = ModelArtifact::train(&c, &t, 3).unwrap();
        let back = ModelArtifact::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back, "{}", c.kind());
        assert_eq!(back.class_labels, vec!["a", "b", "c"]);
    }
}

#[test]
fn bad_rows_are_schema_mismatches() {
    let a = ModelArtifact::train(&LearnerConfig::default_for(LearnerKind::NaiveBayes), &mixed(30, 0), 1).unwrap();
    assert!(matches!(a.predict(&[Value::Missing]), Err(LearnerError::SchemaMismatch(_))));
    let wrong_kind = [Value::Numeric(1.0), Value::Missing, Value::Missing];
    assert!(matches!(a.predict(&wrong_kind), Err(LearnerError::SchemaMismatch(_))));
    let ok = [Value::Nominal("never-seen".into()), Value::Missing, Value::Numeric(2.0)];
    let p = a.predict(&ok).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn hard_label_ties_go_to_the_first_class() {
    let t = FeatureTable::new(
        vec![Column::nominal("f", [Some("p"), Some("q")])],
        Some(ClassColumn::new("y", ["x", "y"])),
    )
    .unwrap();
    let a = ModelArtifact::train(&LearnerConfig::Majority, &t, 0).unwrap();
    assert_eq!(a.predict_label(&[Value::Missing]).unwrap(), "x");
}

#[test]
fn naive_bayes_two_row_dominance() {
    let t = FeatureTable::new(
        vec![Column::nominal("f", [Some("p"), Some("q")])],
        Some(ClassColumn::new("y", ["x", "y"])),
    )
    .unwrap();
    let a = ModelArtifact::train(&LearnerConfig::default_for(LearnerKind::NaiveBayes), &t, 0).unwrap();
    assert!(a.predict(&[Value::Nominal("p".into())]).unwrap()[0] > 0.5);
    assert!(a.predict(&[Value::Nominal("q".into())]).unwrap()[1] > 0.5);
}

fn train_accuracy(a: &ModelArtifact, t: &FeatureTable) -> f64 {
    let data = Dataset::from_table(t).unwrap();
    let preds = a.predict_table(t).unwrap();
    preds
        .iter()
        .zip(&data.y)
        .filter(|(p, y)| crate::util::argmax(p) == **y)
        .count() as f64
        / data.n_rows() as f64
}

#[test]
fn consistent_data_is_shattered_by_an_unpruned_tree() {
    let n = 64;
    let class: Vec<&str> = (0..n).map(|i| if (i ^ (i >> 3)) & 1 == 1 { "p" } else { "q" }).collect();
    let t = FeatureTable::new(
        vec![
            Column::numeric("lo", (0..n).map(|i| Some((i & 7) as f64))),
            Column::numeric("hi", (0..n).map(|i| Some((i >> 3) as f64))),
        ],
        Some(ClassColumn::new("y", class)),
    )
    .unwrap();
    let cfg = LearnerConfig::C45 {
        min_leaf: 1.0,
        prune_confidence: 0.25,
        prune: false,
    };
    let a = ModelArtifact::train(&cfg, &t, 0).unwrap();
    assert_eq!(train_accuracy(&a, &t), 1.0);
}

#[test]
fn single_member_full_subspace_equals_the_tree() {
    let t = mixed(80, 1);
    let rs = LearnerConfig::RandomSubspace {
        n_members: 1,
        subspace_fraction: 1.0,
        min_leaf: 2.0,
        prune_confidence: 0.25,
        prune: true,
    };
    let a = ModelArtifact::train(&rs, &t, 9).unwrap();
    let b = ModelArtifact::train(&LearnerConfig::default_for(LearnerKind::C45), &t, 9).unwrap();
    assert_eq!(a.predict_table(&t).unwrap(), b.predict_table(&t).unwrap());
}

#[test]
fn stacking_is_no_worse_than_majority_on_training_data() {
    let t = mixed(120, 0);
    let st = ModelArtifact::train(&small_configs()[6], &t, 4).unwrap();
    let maj = ModelArtifact::train(&LearnerConfig::Majority, &t, 4).unwrap();
    assert!(train_accuracy(&st, &t) >= train_accuracy(&maj, &t));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unpruned_fits_training_data_at_least_as_well(shift in 0usize..50, n in 30usize..120) {
        let t = mixed(n, shift);
        let pruned = LearnerConfig::C45 { min_leaf: 2.0, prune_confidence: 0.25, prune: true };
        let unpruned = LearnerConfig::C45 { min_leaf: 2.0, prune_confidence: 0.25, prune: false };
        let p = ModelArtifact::train(&pruned, &t, 0).unwrap();
        let u = ModelArtifact::train(&unpruned, &t, 0).unwrap();
        prop_assert!(train_accuracy(&u, &t) + 1e-12 >= train_accuracy(&p, &t));
    }

    #[test]
    fn row_order_does_not_change_nb_tree_or_table(
        shift in 0usize..40,
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let n = 70;
        let class: Vec<String> = (0..n)
            .map(|i| if ((i + shift) * 7) % 10 < 4 { "a".to_string() } else { "b".to_string() })
            .collect();
        let t = FeatureTable::new(
            vec![
                Column::nominal("s", class.iter().enumerate().map(|(i, c)| Some(if i % 6 == 0 { "o".into() } else { c.clone() }))),
                Column::nominal("k", (0..n).map(|i| Some(format!("{}", (i * 3 + shift) % 4)))),
                Column::numeric("x", (0..n).map(|i| Some(((i * 29 + shift) % 23) as f64))),
            ],
            Some(ClassColumn::new("y", class)),
        )
        .unwrap();
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut crate::util::stream(perm_seed, "perm", 0));
        let shuffled = t.take_rows(&rows);
        for kind in [LearnerKind::NaiveBayes, LearnerKind::C45, LearnerKind::DecisionTable] {
            let c = LearnerConfig::default_for(kind);
            let a = ModelArtifact::train(&c, &t, 1).unwrap();
            let b = ModelArtifact::train(&c, &shuffled, 1).unwrap();
            prop_assert_eq!(a.predict_table(&t).unwrap(), b.predict_table(&t).unwrap(), "{}", kind);
        }
    }

    #[test]
    fn predictions_are_normalized_for_random_rows(
        cells in prop::collection::vec((0u8..5, -3.0f64..6.0, any::<bool>()), 1..20),
    ) {
        let t = mixed(70, 3);
        let models: Vec<ModelArtifact> = small_configs()
            .iter()
            .map(|c| ModelArtifact::train(c, &t, 2).unwrap())
            .collect();
        for (lvl, x, miss) in cells {
            let row = [
                if miss { Value::Missing } else { Value::Nominal(["A", "B", "C", "Z", "Q"][lvl as usize].into()) },
                Value::Nominal(format!("n{}", lvl % 4)),
                if miss { Value::Missing } else { Value::Numeric(x) },
            ];
            for m in &models {
                let p = m.predict(&row).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            }
        }
    }
}

#[test]
fn corrupt_artifacts_are_rejected_on_load() {
    let t = mixed(60, 1);
    let tree = ModelArtifact::train(&LearnerConfig::default_for(LearnerKind::C45), &t, 0).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&tree.to_json().unwrap()).unwrap();
    let nodes = v["model"]["parameters"]["nodes"].as_array_mut().unwrap();
    assert!(nodes.len() > 1);
    nodes.truncate(1);
    nodes[0]["split"] = serde_json::json!({"type": "numeric", "attr": 2, "threshold": 1.0, "weights": [1.0, 1.0], "children": [0, 0]});
    assert!(matches!(ModelArtifact::from_json(&v.to_string()), Err(LearnerError::Artifact(_))));

    let nb = ModelArtifact::train(&LearnerConfig::default_for(LearnerKind::NaiveBayes), &t, 0).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&nb.to_json().unwrap()).unwrap();
    v["class_labels"].as_array_mut().unwrap().push("d".into());
    assert!(matches!(ModelArtifact::from_json(&v.to_string()), Err(LearnerError::Artifact(_))));

    let mut v: serde_json::Value = serde_json::from_str(&nb.to_json().unwrap()).unwrap();
    v["version"] = 99.into();
    assert!(matches!(ModelArtifact::from_json(&v.to_string()), Err(LearnerError::Artifact(_))));
}
