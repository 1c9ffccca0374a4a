//! Stratified k-fold cross-validation with pooled accuracy, confusion
//! matrices, ROC curves and AUROC.

use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{Dataset, LearnerConfig, LearnerError, LearnerKind};
use crate::table::{ClassColumn, FeatureTable, TableError};
use crate::util::{argmax, derive_seed, stream};
use crate::video::{binary_label, to_binary, ExitClass, EARLY, LATE};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{rows} rows cannot fill {k} folds")]
    TooFewRows { rows: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("label {0:?} is not an exit class")]
    UnknownLabel(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs both positive and negative examples")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Multiclass5,
    BinaryEarly,
    /// Any other class set.
    Other,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Multiclass5 => "multiclass5",
            Task::BinaryEarly => "binary_early",
            Task::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multiclass5" | "multiclass" | "5" => Some(Task::Multiclass5),
            "binary_early" | "binary" | "2" => Some(Task::BinaryEarly),
            _ => None,
        }
    }

    pub fn of_classes(classes: &[String]) -> Task {
        if classes == ExitClass::order().as_slice() {
            Task::Multiclass5
        } else if classes == [EARLY, LATE] {
            Task::BinaryEarly
        } else {
            Task::Other
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How one-vs-rest AUROCs are combined for more than two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Weighted,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// `(train, test)` row indices of fold `f`, ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.folds.len()).partition(|&r| self.folds[r] != f)
    }
}

/// Shuffles each class's rows and deals them round-robin over `k` folds,
/// continuing the deal where the previous class stopped so fold sizes stay
/// within one of each other.
pub fn assign_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (r, &c) in y.iter().enumerate() {
        by_class[c].push(r);
    }
    let mut rng = stream(seed, "folds", 0);
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            folds[r] = next;
            next = (next + 1) % k;
        }
    }
    folds
}

pub fn stratified_folds(table: &FeatureTable, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    let data = Dataset::from_table(table)?;
    fold_dataset(&data, k, seed)
}

fn fold_dataset(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    if data.n_rows() < k {
        return Err(EvalError::TooFewRows { rows: data.n_rows(), k });
    }
    Ok(FoldAssignment {
        folds: assign_folds(&data.y, data.n_classes(), k, seed),
        k,
        seed,
    })
}

/// Replaces the five exit classes with `early`/`late`.
pub fn merge_task(table: &FeatureTable) -> Result<FeatureTable, EvalError> {
    let class = table.require_class()?;
    let labels = class
        .labels
        .iter()
        .map(|l| {
            ExitClass::parse(l)
                .map(|c| binary_label(to_binary(c)))
                .ok_or_else(|| EvalError::UnknownLabel(l.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let merged = ClassColumn::with_order(class.name.clone(), labels, vec![EARLY.to_string(), LATE.to_string()])?;
    Ok(table.clone().with_class(merged)?)
}

/// Rows are actual classes, columns predicted classes.
pub type Confusion = Vec<Vec<u64>>;

pub fn accuracy(confusion: &Confusion) -> Result<f64, EvalError> {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace: u64 = confusion.iter().enumerate().map(|(i, r)| r.get(i).copied().unwrap_or(0)).sum();
    Ok(trace as f64 / total as f64)
}

/// ROC points from thresholding at each distinct score, highest first, and
/// the trapezoidal area under them. Tied scores move along a diagonal.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<(Vec<(f64, f64)>, f64), EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: positive.len(),
        });
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (pf, nf) = (p as f64, n as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / nf, tp as f64 / pf));
    }
    Ok((points, area / (pf * nf)))
}

/// One-vs-rest AUROC per class; classes absent from `y` get `None`.
pub fn one_vs_rest(probs: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>, EvalError> {
    if probs.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            scores: probs.len(),
            labels: y.len(),
        });
    }
    (0..n_classes)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
            match roc_curve(&scores, &pos) {
                Ok((_, a)) => Ok(Some(a)),
                Err(EvalError::SingleClass) if pos.iter().all(|b| !b) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Single-number AUROC. With two classes this is the binary AUROC of class 0.
pub fn multiclass_auroc(probs: &[Vec<f64>], y: &[usize], n_classes: usize, averaging: Averaging) -> Result<f64, EvalError> {
    if n_classes == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[0]).collect();
        let pos: Vec<bool> = y.iter().map(|&t| t == 0).collect();
        return roc_curve(&scores, &pos).map(|(_, a)| a);
    }
    let per_class = one_vs_rest(probs, y, n_classes)?;
    let mut counts = vec![0usize; n_classes];
    for &t in y {
        counts[t] += 1;
    }
    let present: Vec<(usize, f64)> = per_class
        .iter()
        .enumerate()
        .filter_map(|(c, a)| a.map(|a| (c, a)))
        .collect();
    if present.is_empty() {
        return Err(EvalError::SingleClass);
    }
    Ok(match averaging {
        Averaging::Weighted => present.iter().map(|&(c, a)| a * counts[c] as f64).sum::<f64>() / y.len() as f64,
        Averaging::Macro => present.iter().map(|&(_, a)| a).sum::<f64>() / present.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// The class scored as positive.
    pub class: String,
    pub auroc: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub learner_kind: LearnerKind,
    pub learner: LearnerConfig,
    pub task: Task,
    pub class_labels: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub n_rows: usize,
    pub per_fold_confusions: Vec<Confusion>,
    pub pooled_confusion: Confusion,
    pub accuracy: f64,
    pub auroc: f64,
    pub averaging: Averaging,
    /// One curve for the positive class of a binary task, else one per class.
    pub roc_points: Vec<RocCurve>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: DEFAULT_FOLDS,
            seed: DEFAULT_SEED,
            averaging: Averaging::Weighted,
        }
    }
}

pub fn cross_validate(config: &LearnerConfig, table: &FeatureTable, k: usize, seed: u64) -> Result<EvalReport, EvalError> {
    cross_validate_with(
        config,
        table,
        &CvOptions {
            k,
            seed,
            ..CvOptions::default()
        },
    )
}

pub fn cross_validate_with(config: &LearnerConfig, table: &FeatureTable, opts: &CvOptions) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    config.validate()?;
    let data = Dataset::from_table(table)?;
    let assignment = fold_dataset(&data, opts.k, opts.seed)?;
    let c = data.n_classes();

    let fold_results = (0..opts.k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = assignment.split(f);
            let model = config.fit(&data.subset(&train), derive_seed(opts.seed, "cv_train", f as u64))?;
            Ok(test
                .into_iter()
                .map(|r| (r, model.distribution(data.row(r))))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, LearnerError>>()?;

    let mut probs = vec![Vec::new(); data.n_rows()];
    let mut per_fold_confusions = Vec::with_capacity(opts.k);
    let mut pooled_confusion = vec![vec![0u64; c]; c];
    for fold in fold_results {
        let mut m = vec![vec![0u64; c]; c];
        for (r, p) in fold {
            let pred = argmax(&p);
            m[data.y[r]][pred] += 1;
            pooled_confusion[data.y[r]][pred] += 1;
            probs[r] = p;
        }
        per_fold_confusions.push(m);
    }

    let task = Task::of_classes(&data.schema.classes);
    let roc_points = if c == 2 {
        vec![curve_for(&probs, &data.y, 0, &data.schema.classes)?]
    } else {
        let mut curves = Vec::new();
        for class in 0..c {
            if data.y.contains(&class) {
                curves.push(curve_for(&probs, &data.y, class, &data.schema.classes)?);
            }
        }
        curves
    };
    Ok(EvalReport {
        learner_kind: config.kind(),
        learner: config.clone(),
        task,
        class_labels: data.schema.classes.clone(),
        k: opts.k,
        seed: opts.seed,
        n_rows: data.n_rows(),
        accuracy: accuracy(&pooled_confusion)?,
        auroc: multiclass_auroc(&probs, &data.y, c, opts.averaging)?,
        averaging: opts.averaging,
        per_fold_confusions,
        pooled_confusion,
        roc_points,
        wall_time: started.elapsed(),
    })
}

fn curve_for(probs: &[Vec<f64>], y: &[usize], class: usize, labels: &[String]) -> Result<RocCurve, EvalError> {
    let scores: Vec<f64> = probs.iter().map(|p| p[class]).collect();
    let pos: Vec<bool> = y.iter().map(|&t| t == class).collect();
    let (points, auroc) = roc_curve(&scores, &pos)?;
    Ok(RocCurve {
        class: labels[class].clone(),
        auroc,
        points,
    })
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.learner_kind, self.task, self.accuracy, self.auroc, self.seed
        )
    }
}

pub fn write_summary_csv<W: Write>(reports: &[EvalReport], mut w: W) -> io::Result<()> {
    writeln!(w, "learner,task,accuracy,auroc,seed")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_roc_csv<W: Write>(curve: &RocCurve, mut w: W) -> io::Result<()> {
    writeln!(w, "fpr,tpr")?;
    for (x, y) in &curve.points {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}
