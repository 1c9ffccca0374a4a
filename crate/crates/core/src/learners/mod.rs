//! Classifiers over mixed nominal/numeric tables. Every learner returns a
//! [`Model`] producing a class distribution; [`ModelArtifact`] wraps a model
//! with its schema for JSON persistence.

mod check;
pub mod dataset;
pub mod dtable;
pub mod ensemble;
pub mod nb;
pub mod ripper;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{FeatureTable, TableError};
use crate::util::argmax;
pub use dataset::{Attribute, Dataset, Schema, Value};
use dtable::{DecisionTable, DecisionTableParams};
use ensemble::{RandomForest, RandomSubspace, Stacking, SubspaceSpec};
use nb::NaiveBayes;
use ripper::{Ripper, RipperParams};
use tree::{Tree, TreeParams};

pub const ARTIFACT_FORMAT: &str = "clickstream-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training table is empty")]
    EmptyTable,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("unknown learner {0:?}")]
    UnknownLearner(String),
    #[error("unsupported model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Majority,
    NaiveBayes,
    C45,
    Ripper,
    DecisionTable,
    RandomForest,
    RandomSubspace,
    Stacking,
}

impl LearnerKind {
    /// The classifiers benchmarked by the pipeline, in report order.
    pub const BENCHMARK: [LearnerKind; 7] = [
        LearnerKind::NaiveBayes,
        LearnerKind::C45,
        LearnerKind::Ripper,
        LearnerKind::DecisionTable,
        LearnerKind::RandomForest,
        LearnerKind::RandomSubspace,
        LearnerKind::Stacking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Majority => "majority",
            LearnerKind::NaiveBayes => "naive_bayes",
            LearnerKind::C45 => "c45",
            LearnerKind::Ripper => "ripper",
            LearnerKind::DecisionTable => "decision_table",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::RandomSubspace => "random_subspace",
            LearnerKind::Stacking => "stacking",
        }
    }

    /// Accepts the canonical names and the short forms `nb`, `rip`, `dt`,
    /// `rf`, `rs`, `st`.
    pub fn parse(s: &str) -> Result<LearnerKind, LearnerError> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "majority" | "zero_r" => LearnerKind::Majority,
            "naive_bayes" | "nb" => LearnerKind::NaiveBayes,
            "c45" | "c4.5" | "j48" => LearnerKind::C45,
            "ripper" | "rip" | "jrip" => LearnerKind::Ripper,
            "decision_table" | "dt" => LearnerKind::DecisionTable,
            "random_forest" | "rf" => LearnerKind::RandomForest,
            "random_subspace" | "rs" => LearnerKind::RandomSubspace,
            "stacking" | "st" => LearnerKind::Stacking,
            _ => return Err(LearnerError::UnknownLearner(s.to_string())),
        };
        Ok(k)
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A learner with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Majority,
    NaiveBayes {
        bins: usize,
    },
    C45 {
        min_leaf: f64,
        prune_confidence: f64,
        prune: bool,
    },
    Ripper {
        optimization_runs: usize,
        min_coverage: f64,
    },
    DecisionTable {
        stale_limit: usize,
    },
    RandomForest {
        n_trees: usize,
        /// Candidates per split; `floor(sqrt(M))` when absent.
        features_per_split: Option<usize>,
    },
    RandomSubspace {
        n_members: usize,
        subspace_fraction: f64,
        min_leaf: f64,
        prune_confidence: f64,
        prune: bool,
    },
    Stacking {
        bases: Vec<SubspaceSpec>,
        meta: Box<LearnerConfig>,
        folds: usize,
    },
}

impl LearnerConfig {
    pub fn default_for(kind: LearnerKind) -> LearnerConfig {
        match kind {
            LearnerKind::Majority => LearnerConfig::Majority,
            LearnerKind::NaiveBayes => LearnerConfig::NaiveBayes {
                bins: crate::select::DEFAULT_BINS,
            },
            LearnerKind::C45 => LearnerConfig::C45 {
                min_leaf: 2.0,
                prune_confidence: 0.25,
                prune: true,
            },
            LearnerKind::Ripper => {
                let p = RipperParams::default();
                LearnerConfig::Ripper {
                    optimization_runs: p.optimization_runs,
                    min_coverage: p.min_coverage,
                }
            }
            LearnerKind::DecisionTable => LearnerConfig::DecisionTable {
                stale_limit: DecisionTableParams::default().stale_limit,
            },
            LearnerKind::RandomForest => LearnerConfig::RandomForest {
                n_trees: 100,
                features_per_split: None,
            },
            LearnerKind::RandomSubspace => LearnerConfig::RandomSubspace {
                n_members: 10,
                subspace_fraction: 0.5,
                min_leaf: 2.0,
                prune_confidence: 0.25,
                prune: true,
            },
            LearnerKind::Stacking => LearnerConfig::Stacking {
                bases: vec![SubspaceSpec::default()],
                meta: Box::new(LearnerConfig::default_for(LearnerKind::NaiveBayes)),
                folds: 10,
            },
        }
    }

    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::Majority => LearnerKind::Majority,
            LearnerConfig::NaiveBayes { .. } => LearnerKind::NaiveBayes,
            LearnerConfig::C45 { .. } => LearnerKind::C45,
            LearnerConfig::Ripper { .. } => LearnerKind::Ripper,
            LearnerConfig::DecisionTable { .. } => LearnerKind::DecisionTable,
            LearnerConfig::RandomForest { .. } => LearnerKind::RandomForest,
            LearnerConfig::RandomSubspace { .. } => LearnerKind::RandomSubspace,
            LearnerConfig::Stacking { .. } => LearnerKind::Stacking,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: String| Err(LearnerError::InvalidParameter(msg));
        let tree = |min_leaf: f64, cf: f64| -> Result<(), LearnerError> {
            if min_leaf.is_nan() || min_leaf < 1.0 {
                return bad(format!("min_leaf must be at least 1, got {min_leaf}"));
            }
            if !(cf > 0.0 && cf < 1.0) {
                return bad(format!("prune_confidence must be in (0, 1), got {cf}"));
            }
            if cf > 0.5 {
                return bad(format!("prune_confidence above 0.5 is not supported, got {cf}"));
            }
            Ok(())
        };
        let fraction = |f: f64| -> Result<(), LearnerError> {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("subspace_fraction must be in (0, 1], got {f}"));
            }
            Ok(())
        };
        match self {
            LearnerConfig::Majority => Ok(()),
            LearnerConfig::NaiveBayes { bins } => {
                if *bins < 2 {
                    return bad(format!("bins must be at least 2, got {bins}"));
                }
                Ok(())
            }
            LearnerConfig::C45 {
                min_leaf,
                prune_confidence,
                ..
            } => tree(*min_leaf, *prune_confidence),
            LearnerConfig::Ripper { min_coverage, .. } => {
                if min_coverage.is_nan() || *min_coverage < 0.0 {
                    return bad(format!("min_coverage must be non-negative, got {min_coverage}"));
                }
                Ok(())
            }
            LearnerConfig::DecisionTable { stale_limit } => {
                if *stale_limit == 0 {
                    return bad("stale_limit must be at least 1".into());
                }
                Ok(())
            }
            LearnerConfig::RandomForest {
                n_trees,
                features_per_split,
            } => {
                if *n_trees == 0 {
                    return bad("n_trees must be at least 1".into());
                }
                if *features_per_split == Some(0) {
                    return bad("features_per_split must be at least 1".into());
                }
                Ok(())
            }
            LearnerConfig::RandomSubspace {
                n_members,
                subspace_fraction,
                min_leaf,
                prune_confidence,
                ..
            } => {
                if *n_members == 0 {
                    return bad("n_members must be at least 1".into());
                }
                fraction(*subspace_fraction)?;
                tree(*min_leaf, *prune_confidence)
            }
            LearnerConfig::Stacking { bases, meta, folds } => {
                if bases.is_empty() {
                    return bad("stacking needs at least one base ensemble".into());
                }
                for b in bases {
                    if b.n_members == 0 {
                        return bad("n_members must be at least 1".into());
                    }
                    fraction(b.subspace_fraction)?;
                    tree(b.tree.min_leaf, b.tree.confidence)?;
                }
                if *folds < 2 {
                    return bad(format!("stacking folds must be at least 2, got {folds}"));
                }
                meta.validate()
            }
        }
    }

    /// Trains on every row of `data`.
    pub fn fit(&self, data: &Dataset, seed: u64) -> Result<Model, LearnerError> {
        self.validate()?;
        if data.n_rows() == 0 {
            return Err(LearnerError::EmptyTable);
        }
        let model = match self {
            LearnerConfig::Majority => Model::Majority {
                counts: data.class_counts(),
            },
            LearnerConfig::NaiveBayes { bins } => Model::NaiveBayes(NaiveBayes::fit(data, *bins)),
            LearnerConfig::C45 {
                min_leaf,
                prune_confidence,
                prune,
            } => Model::C45(Tree::fit_all(data, &TreeParams::c45(*min_leaf, *prune_confidence, *prune))),
            LearnerConfig::Ripper {
                optimization_runs,
                min_coverage,
            } => Model::Ripper(Ripper::fit(
                data,
                &RipperParams {
                    optimization_runs: *optimization_runs,
                    min_coverage: *min_coverage,
                },
                seed,
            )),
            LearnerConfig::DecisionTable { stale_limit } => Model::DecisionTable(DecisionTable::fit(
                data,
                &DecisionTableParams {
                    stale_limit: *stale_limit,
                },
            )),
            LearnerConfig::RandomForest {
                n_trees,
                features_per_split,
            } => Model::RandomForest(RandomForest::fit(data, *n_trees, *features_per_split, seed)),
            LearnerConfig::RandomSubspace {
                n_members,
                subspace_fraction,
                min_leaf,
                prune_confidence,
                prune,
            } => Model::RandomSubspace(RandomSubspace::fit(
                data,
                *n_members,
                *subspace_fraction,
                &TreeParams::c45(*min_leaf, *prune_confidence, *prune),
                seed,
            )),
            LearnerConfig::Stacking { bases, meta, folds } => {
                Model::Stacking(Stacking::fit(data, bases, meta, *folds, seed)?)
            }
        };
        Ok(model)
    }

    /// Hyperparameters as a flat name/value map.
    pub fn hyperparameters(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(map)) => map.into_iter().filter(|(k, _)| k != "kind").collect(),
            _ => BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "snake_case")]
pub enum Model {
    Majority { counts: Vec<f64> },
    NaiveBayes(NaiveBayes),
    C45(Tree),
    Ripper(Ripper),
    DecisionTable(DecisionTable),
    RandomForest(RandomForest),
    RandomSubspace(RandomSubspace),
    Stacking(Stacking),
}

impl Model {
    /// Class distribution for one encoded row.
    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Model::Majority { counts } => {
                let mut d = counts.clone();
                crate::util::normalize(&mut d);
                d
            }
            Model::NaiveBayes(m) => m.distribution(row),
            Model::C45(m) => m.distribution(row),
            Model::Ripper(m) => m.distribution(row),
            Model::DecisionTable(m) => m.distribution(row),
            Model::RandomForest(m) => m.distribution(row),
            Model::RandomSubspace(m) => m.distribution(row),
            Model::Stacking(m) => m.distribution(row),
        }
    }
}

/// A trained model with everything needed to score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub learner_kind: LearnerKind,
    pub class_labels: Vec<String>,
    pub schema: Vec<Attribute>,
    pub train_seed: u64,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub model: Model,
}

impl ModelArtifact {
    pub fn train(config: &LearnerConfig, table: &FeatureTable, seed: u64) -> Result<ModelArtifact, LearnerError> {
        if table.row_count() == 0 {
            return Err(LearnerError::EmptyTable);
        }
        let data = Dataset::from_table(table)?;
        let model = config.fit(&data, seed)?;
        Ok(ModelArtifact::new(config, data.schema, seed, model))
    }

    pub fn new(config: &LearnerConfig, schema: Schema, seed: u64, model: Model) -> ModelArtifact {
        ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            learner_kind: config.kind(),
            class_labels: schema.classes,
            schema: schema.attributes,
            train_seed: seed,
            hyperparameters: config.hyperparameters(),
            model,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema {
            attributes: self.schema.clone(),
            classes: self.class_labels.clone(),
        }
    }

    pub fn predict(&self, row: &[Value]) -> Result<Vec<f64>, LearnerError> {
        let encoded = self.schema().encode_row(row)?;
        Ok(self.model.distribution(&encoded))
    }

    /// Hard label: the most probable class, ties to the earlier label.
    pub fn predict_label(&self, row: &[Value]) -> Result<&str, LearnerError> {
        let p = self.predict(row)?;
        Ok(&self.class_labels[argmax(&p)])
    }

    /// Distributions for every row of `table`, whose predictor columns must
    /// match the training schema.
    pub fn predict_table(&self, table: &FeatureTable) -> Result<Vec<Vec<f64>>, LearnerError> {
        let schema = self.schema();
        let x = schema.encode(table)?;
        let m = schema.attributes.len();
        Ok((0..table.row_count())
            .map(|i| self.model.distribution(&x[i * m..(i + 1) * m]))
            .collect())
    }

    pub fn to_json(&self) -> Result<String, LearnerError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<ModelArtifact, LearnerError> {
        let a: ModelArtifact = serde_json::from_str(text)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(LearnerError::Artifact(format!("format {:?}", a.format)));
        }
        if a.version != ARTIFACT_VERSION {
            return Err(LearnerError::Artifact(format!("version {}", a.version)));
        }
        if a.class_labels.is_empty() {
            return Err(LearnerError::Artifact("no class labels".into()));
        }
        check::check_model(&a.model, a.schema.len(), a.class_labels.len()).map_err(LearnerError::Artifact)?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests;
