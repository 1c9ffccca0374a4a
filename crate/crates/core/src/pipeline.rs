//! End-to-end batch run: dumps to sessions, labeled views, rankings and
//! cross-validated learner reports, written as a directory of artifacts.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{self, cross_validate_with, merge_task, Averaging, CvOptions, EvalReport, Task};
use crate::ingest::{filter_crawlers, read_dump, ClickEvent, EventArchive};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::select::{self, consensus, rank_all};
use crate::table::FeatureTable;
use crate::sessionizer::{section_graph, sessionize, Session, DEFAULT_TIMEOUT_SECONDS};
use crate::util::stream;
use crate::video::{build_feature_table, dropoff_curve, extract_video_views, write_dropoff_csv, write_views_tsv, MarkerRegression, VideoViewInstance};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage_err(stage: &'static str, e: impl ToString) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Outcome of reading one dump file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub path: String,
    pub events: usize,
    pub rejects: usize,
    /// Up to ten `line: reason` samples.
    pub reject_samples: Vec<String>,
    /// Set when the file could not be read or its header is invalid.
    pub error: Option<String>,
}

/// Parses dumps in parallel and merges them in the given order. Files that
/// fail are reported and skipped.
pub fn ingest_paths(paths: &[PathBuf]) -> (EventArchive, Vec<FileReport>) {
    let parsed: Vec<_> = paths
        .par_iter()
        .map(|p| {
            let result = File::open(p)
                .map_err(|e| e.to_string())
                .and_then(|f| read_dump(BufReader::new(f)).map_err(|e| e.to_string()));
            (p, result)
        })
        .collect();
    let mut archive = EventArchive::default();
    let mut reports = Vec::with_capacity(paths.len());
    for (p, result) in parsed {
        let path = p.display().to_string();
        match result {
            Ok((schema, dump)) => {
                reports.push(FileReport {
                    path,
                    events: dump.events.len(),
                    rejects: dump.rejects.len(),
                    reject_samples: dump
                        .rejects
                        .iter()
                        .take(10)
                        .map(|r| format!("{}: {}", r.line, r.reason))
                        .collect(),
                    error: None,
                });
                archive.merge(&schema.extra_columns(), dump.events);
            }
            Err(e) => reports.push(FileReport {
                path,
                events: 0,
                rejects: 0,
                reject_samples: Vec::new(),
                error: Some(e),
            }),
        }
    }
    (archive, reports)
}

/// Sessions, views and marker warnings for non-crawler traffic.
pub struct Labeled {
    pub sessions: Vec<Session>,
    pub views: Vec<VideoViewInstance>,
    pub regressions: Vec<MarkerRegression>,
}

pub fn label_events(events: Vec<ClickEvent>, timeout_seconds: i64) -> Labeled {
    let events = filter_crawlers(events);
    let sessions = sessionize(&events, timeout_seconds);
    let (views, regressions) = extract_video_views(&sessions);
    Labeled {
        sessions,
        views,
        regressions,
    }
}

/// A seeded sample of `n` views, kept in their original order. Returns all
/// views when there are at most `n`.
pub fn sample_views(views: &[VideoViewInstance], n: usize, seed: u64) -> Vec<VideoViewInstance> {
    if views.len() <= n {
        return views.to_vec();
    }
    let mut idx: Vec<usize> = (0..views.len()).collect();
    idx.shuffle(&mut stream(seed, "view_sample", 0));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| views[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub seed: u64,
    pub timeout_seconds: i64,
    pub folds: usize,
    pub learners: Vec<LearnerConfig>,
    pub tasks: Vec<Task>,
    pub top_fraction: f64,
    pub graph_top_k: usize,
    pub averaging: Averaging,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: eval::DEFAULT_SEED,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            folds: eval::DEFAULT_FOLDS,
            learners: LearnerKind::BENCHMARK.iter().map(|&k| LearnerConfig::default_for(k)).collect(),
            tasks: vec![Task::Multiclass5, Task::BinaryEarly],
            top_fraction: 0.10,
            graph_top_k: 10,
            averaging: Averaging::Weighted,
        }
    }
}

#[derive(Debug, Default)]
pub struct PipelineRun {
    /// Paths relative to the output directory, in write order.
    pub outputs: Vec<PathBuf>,
    pub view_count: usize,
    pub consensus: Vec<String>,
    pub reports: Vec<EvalReport>,
    pub stage_times: Vec<(String, Duration)>,
    pub failure: Option<PipelineError>,
}

/// An output directory that records every file written into it.
pub struct OutputDir<'a> {
    dir: &'a Path,
    outputs: Vec<PathBuf>,
}

impl<'a> OutputDir<'a> {
    pub fn new(dir: &'a Path) -> Self {
        OutputDir { dir, outputs: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        self.dir
    }

    /// Lists a file written by other means.
    pub fn record(&mut self, rel: PathBuf) {
        self.outputs.push(rel);
    }

    /// Relative paths in write order.
    pub fn outputs(&self) -> &[PathBuf] {
        &self.outputs
    }

    pub fn into_outputs(self) -> Vec<PathBuf> {
        self.outputs
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        let rel = rel.as_ref();
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(rel.to_path_buf());
        Ok(())
    }
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs every stage after ingest. On failure the artifacts written so far
/// stay on disk and `failure` names the stage.
pub fn run(events: Vec<ClickEvent>, opts: &PipelineOptions, out_dir: &Path) -> PipelineRun {
    let mut w = OutputDir::new(out_dir);
    let mut run = PipelineRun::default();
    if let Err(e) = run_stages(events, opts, &mut w, &mut run) {
        run.failure = Some(e);
    }
    run.outputs = w.into_outputs();
    run
}

fn run_stages(events: Vec<ClickEvent>, opts: &PipelineOptions, w: &mut OutputDir, run: &mut PipelineRun) -> Result<(), PipelineError> {
    let mut clock = Instant::now();
    let mut lap = |run: &mut PipelineRun, name: &str| {
        run.stage_times.push((name.to_string(), clock.elapsed()));
        clock = Instant::now();
    };
    if opts.timeout_seconds <= 0 {
        return Err(stage_err("sessionize", "timeout must be positive"));
    }
    let labeled = label_events(events, opts.timeout_seconds);
    let graph = section_graph(&labeled.sessions, opts.graph_top_k.max(1));
    w.write("graph/section_nodes.csv", |f| graph.write_nodes_csv(f))
        .map_err(|e| stage_err("sessionize", e))?;
    w.write("graph/section_edges.csv", |f| graph.write_edges_csv(f))
        .map_err(|e| stage_err("sessionize", e))?;
    lap(run, "sessionize");

    run.view_count = labeled.views.len();
    if labeled.views.is_empty() {
        return Err(stage_err("label", "0 video views"));
    }
    let views = labeled.views;
    w.write("views.tsv", |f| write_views_tsv(&views, f))
        .map_err(|e| stage_err("label", e))?;
    let mut curves = dropoff_curve(&views, true);
    curves.extend(dropoff_curve(&views, false));
    w.write("dropoff.csv", |f| write_dropoff_csv(&curves, f))
        .map_err(|e| stage_err("label", e))?;
    let table = build_feature_table(&views).map_err(|e| stage_err("label", e))?;
    lap(run, "label");

    run.consensus = rank_stage(&table, opts.top_fraction, w)?;
    lap(run, "rank");

    for &task in &opts.tasks {
        let reports = evaluate_stage(&table, task, opts, w)?;
        run.reports.extend(reports);
        lap(run, &format!("evaluate_{task}"));
    }
    let reports = &run.reports;
    w.write("summary.csv", |f| eval::write_summary_csv(reports, f))
        .map_err(|e| stage_err("evaluate", e))?;
    Ok(())
}

/// Ranks every predictor under all five methods and writes `rankings.csv`
/// and `consensus.json`; returns the consensus set.
pub fn rank_stage(table: &FeatureTable, top_fraction: f64, w: &mut OutputDir) -> Result<Vec<String>, PipelineError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(stage_err("rank", format!("top fraction {top_fraction} outside (0, 1]")));
    }
    let rankings = rank_all(table).map_err(|e| stage_err("rank", e))?;
    let picked = consensus(&rankings, top_fraction);
    w.write("rankings.csv", |f| select::write_rankings_csv(&rankings, f))
        .map_err(|e| stage_err("rank", e))?;
    let text = select::consensus_json(&picked);
    w.write("consensus.json", |f| writeln!(f, "{text}"))
        .map_err(|e| stage_err("rank", e))?;
    Ok(picked)
}

/// Cross-validates every configured learner on one task of the five-class
/// view table, writing `eval/{task}/{learner}.json` and ROC curves.
pub fn evaluate_stage(
    table: &FeatureTable,
    task: Task,
    opts: &PipelineOptions,
    w: &mut OutputDir,
) -> Result<Vec<EvalReport>, PipelineError> {
    let task_table = match task {
        Task::BinaryEarly => merge_task(table).map_err(|e| stage_err("evaluate", e))?,
        _ => table.clone(),
    };
    let cv = CvOptions {
        k: opts.folds,
        seed: opts.seed,
        averaging: opts.averaging,
    };
    let mut reports = Vec::with_capacity(opts.learners.len());
    for config in &opts.learners {
        let report = cross_validate_with(config, &task_table, &cv)
            .map_err(|e| stage_err("evaluate", format!("{} on {}: {e}", config.kind(), task)))?;
        let base = format!("{}/{}", task, config.kind());
        let json = serde_json::to_string_pretty(&report).map_err(|e| stage_err("evaluate", e))?;
        w.write(format!("eval/{base}.json"), |f| writeln!(f, "{json}"))
            .map_err(|e| stage_err("evaluate", e))?;
        for curve in &report.roc_points {
            let name = if report.roc_points.len() == 1 {
                format!("roc/{base}.csv")
            } else {
                format!("roc/{base}_{}.csv", file_stem(&curve.class))
            };
            w.write(name, |f| eval::write_roc_csv(curve, f))
                .map_err(|e| stage_err("evaluate", e))?;
        }
        reports.push(report);
    }
    Ok(reports)
}
