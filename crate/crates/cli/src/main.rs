mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use clickstream_core::eval::{self, Averaging, Task};
use clickstream_core::ingest::{archive_table, prune_columns, EventArchive};
use clickstream_core::learners::{LearnerConfig, LearnerKind, ModelArtifact};
use clickstream_core::pipeline::{self, evaluate_stage, ingest_paths, label_events, rank_stage, FileReport, OutputDir, PipelineOptions};
use clickstream_core::sessionizer::{section_graph, sessionize, write_sessions_jsonl};
use clickstream_core::synth::{self, SynthConfig};
use clickstream_core::video::{build_feature_table, dropoff_curve, read_views_tsv, write_dropoff_csv, write_views_tsv};

use manifest::{RunManifest, Status};

#[derive(Parser)]
#[command(name = "clickstream", version, about = "Clickstream sessionization and video-exit prediction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Root seed for every random choice [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Record wall-clock times in run.json.
    #[arg(long, global = true)]
    timings: bool,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(eval::DEFAULT_SEED)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate dumps and merge them into one archive with a column prune report.
    Ingest(IngestArgs),
    /// Split an archive into per-user sessions (JSON lines).
    Sessionize(SessionArgs),
    /// Extract labeled video views from an archive.
    Label(SessionArgs),
    /// Section transition graph of an archive.
    Graph(GraphArgs),
    /// Per-category drop-off curves from labeled views.
    Dropoff(ViewsArgs),
    /// Rank predictors of labeled views with all five scorers.
    Rank(RankArgs),
    /// Fit one learner on labeled views and write a model artifact.
    Train(TrainArgs),
    /// Cross-validate learners on labeled views.
    Evaluate(EvaluateArgs),
    /// Run every stage from dumps to evaluation reports.
    Pipeline(PipelineArgs),
    /// Generate seeded synthetic dumps and their ground-truth manifest.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Inputs {
    /// Dump or archive files; directories contribute their `*.tsv` files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SessionArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, short)]
    out: PathBuf,
    /// Inactivity gap that closes a session.
    #[arg(long, default_value_t = 30)]
    timeout_minutes: i64,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Successors kept per section.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct ViewsArgs {
    /// A views.tsv written by `label` or `pipeline`.
    views: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    views: ViewsArgs,
    #[arg(long, default_value_t = 0.10)]
    top_fraction: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Multi,
    Binary,
    Both,
}

impl TaskArg {
    fn tasks(self) -> Vec<Task> {
        match self {
            TaskArg::Multi => vec![Task::Multiclass5],
            TaskArg::Binary => vec![Task::BinaryEarly],
            TaskArg::Both => vec![Task::Multiclass5, Task::BinaryEarly],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Weighted,
    Macro,
}

#[derive(Args, Clone)]
struct Hyper {
    /// Trees in a random forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Attributes tried per random-forest split.
    #[arg(long)]
    features_per_split: Option<usize>,
    /// Members of a random-subspace ensemble (also stacking's base).
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    subspace_fraction: Option<f64>,
    /// Minimum instances per tree leaf.
    #[arg(long)]
    min_leaf: Option<f64>,
    /// Pruning confidence for C4.5-style trees.
    #[arg(long)]
    prune_confidence: Option<f64>,
    /// Grow trees without pruning.
    #[arg(long)]
    no_prune: bool,
    /// Equal-frequency bins for numeric naive Bayes inputs.
    #[arg(long)]
    nb_bins: Option<usize>,
    /// RIPPER optimization passes.
    #[arg(long)]
    ripper_runs: Option<usize>,
    /// Non-improving expansions before decision-table search stops.
    #[arg(long)]
    stale_limit: Option<usize>,
    /// Internal folds for stacking's meta training set.
    #[arg(long)]
    stacking_folds: Option<usize>,
}

impl Hyper {
    fn apply(&self, mut c: LearnerConfig) -> LearnerConfig {
        let prune_flag = |p: &mut bool| {
            if self.no_prune {
                *p = false;
            }
        };
        match &mut c {
            LearnerConfig::Majority => {}
            LearnerConfig::NaiveBayes { bins } => set(bins, self.nb_bins),
            LearnerConfig::C45 {
                min_leaf,
                prune_confidence,
                prune,
            } => {
                set(min_leaf, self.min_leaf);
                set(prune_confidence, self.prune_confidence);
                prune_flag(prune);
            }
            LearnerConfig::Ripper { optimization_runs, .. } => set(optimization_runs, self.ripper_runs),
            LearnerConfig::DecisionTable { stale_limit } => set(stale_limit, self.stale_limit),
            LearnerConfig::RandomForest {
                n_trees,
                features_per_split,
            } => {
                set(n_trees, self.trees);
                if self.features_per_split.is_some() {
                    *features_per_split = self.features_per_split;
                }
            }
            LearnerConfig::RandomSubspace {
                n_members,
                subspace_fraction,
                min_leaf,
                prune_confidence,
                prune,
            } => {
                set(n_members, self.members);
                set(subspace_fraction, self.subspace_fraction);
                set(min_leaf, self.min_leaf);
                set(prune_confidence, self.prune_confidence);
                prune_flag(prune);
            }
            LearnerConfig::Stacking { bases, folds, .. } => {
                set(folds, self.stacking_folds);
                for b in bases {
                    set(&mut b.n_members, self.members);
                    set(&mut b.subspace_fraction, self.subspace_fraction);
                    set(&mut b.tree.min_leaf, self.min_leaf);
                    set(&mut b.tree.confidence, self.prune_confidence);
                    prune_flag(&mut b.tree.prune);
                }
            }
        }
        c
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct EvalFlags {
    /// Comma-separated learner names or aliases (nb, c4.5, rip, dt, rf, rs, st, majority).
    #[arg(long, value_delimiter = ',', default_value = "nb,c45,ripper,dt,rf,rs,st")]
    learners: Vec<String>,
    #[arg(long, value_enum, default_value_t = TaskArg::Both)]
    task: TaskArg,
    #[arg(long, default_value_t = eval::DEFAULT_FOLDS)]
    folds: usize,
    /// How per-class AUROCs combine on the five-class task.
    #[arg(long, value_enum, default_value_t = AveragingArg::Weighted)]
    averaging: AveragingArg,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    views: ViewsArgs,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    views: ViewsArgs,
    #[arg(long, default_value = "c45")]
    learner: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Binary)]
    task: TaskArg,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[command(flatten)]
    eval: EvalFlags,
    #[arg(long, default_value_t = 0.10)]
    top_fraction: f64,
    /// Successors kept per section in the graph output.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON config; defaults apply to absent fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    signal_strength: Option<f64>,
}

/// A failure that still lets the command write its manifest.
struct Failure {
    stage: String,
    message: String,
}

impl Failure {
    fn new(stage: &str, message: impl ToString) -> Self {
        Failure {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

struct Ctx<'a> {
    global: &'a Global,
    manifest: RunManifest,
    started: Instant,
    /// A failure that did not stop the command, such as one unreadable input.
    deferred: Option<Failure>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (name, out) = match &cli.command {
        Command::Ingest(a) => ("ingest", &a.out),
        Command::Sessionize(a) => ("sessionize", &a.out),
        Command::Label(a) => ("label", &a.out),
        Command::Graph(a) => ("graph", &a.session.out),
        Command::Dropoff(a) => ("dropoff", &a.out),
        Command::Rank(a) => ("rank", &a.views.out),
        Command::Train(a) => ("train", &a.views.out),
        Command::Evaluate(a) => ("evaluate", &a.views.out),
        Command::Pipeline(a) => ("pipeline", &a.session.out),
        Command::Synth(a) => ("synth", &a.out),
    };
    let out = out.clone();
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(2);
    }
    let mut ctx = Ctx {
        global: &cli.global,
        manifest: RunManifest::new(name, cli.global.seed()),
        started: Instant::now(),
        deferred: None,
    };
    let mut w = OutputDir::new(&out);
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, &mut ctx, &mut w),
        Command::Sessionize(a) => cmd_sessionize(a, &mut ctx, &mut w),
        Command::Label(a) => cmd_label(a, &mut ctx, &mut w),
        Command::Graph(a) => cmd_graph(a, &mut ctx, &mut w),
        Command::Dropoff(a) => cmd_dropoff(a, &mut ctx, &mut w),
        Command::Rank(a) => cmd_rank(a, &mut ctx, &mut w),
        Command::Train(a) => cmd_train(a, &mut ctx, &mut w),
        Command::Evaluate(a) => cmd_evaluate(a, &mut ctx, &mut w),
        Command::Pipeline(a) => cmd_pipeline(a, &mut ctx, &mut w),
        Command::Synth(a) => cmd_synth(a, &mut ctx, &mut w),
    };
    let result = result.and_then(|()| ctx.deferred.take().map_or(Ok(()), Err));
    let mut manifest = ctx.manifest;
    manifest.outputs.extend(w.into_outputs().iter().map(|p| manifest::display(p)));
    let code = match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.stage, f.message);
            manifest.status = Status::Failed {
                stage: f.stage,
                message: f.message,
            };
            ExitCode::FAILURE
        }
    };
    if cli.global.timings {
        manifest.wall_time_seconds = Some(ctx.started.elapsed().as_secs_f64());
    } else {
        manifest.stage_seconds.clear();
    }
    if let Err(e) = fs::write(out.join(manifest::FILE), manifest.to_json() + "\n") {
        eprintln!("error: cannot write run manifest: {e}");
        return ExitCode::FAILURE;
    }
    code
}

/// Files named on the command line plus the sorted `*.tsv` entries of
/// directories. Missing paths are reported as failed files.
fn expand_inputs(inputs: &[PathBuf]) -> Result<(Vec<PathBuf>, Vec<FileReport>), Failure> {
    let mut files = Vec::new();
    let mut missing = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Failure::new("ingest", format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.is_file() && q.extension().is_some_and(|x| x == "tsv"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            missing.push(FileReport {
                path: p.display().to_string(),
                events: 0,
                rejects: 0,
                reject_samples: Vec::new(),
                error: Some("no such file".to_string()),
            });
        }
    }
    if files.is_empty() && missing.is_empty() {
        return Err(Failure::new("ingest", "no input files"));
    }
    Ok((files, missing))
}

/// Reads every input, printing per-file diagnostics. Unusable files are
/// skipped and mark the run as failed; it stops only when none was usable.
fn load_inputs(inputs: &Inputs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<EventArchive, Failure> {
    let (files, mut reports) = expand_inputs(&inputs.inputs)?;
    ctx.manifest.inputs = inputs.inputs.iter().map(|p| manifest::display(p)).collect();
    let (archive, read) = ingest_paths(&files);
    reports.extend(read);
    let mut failed = 0;
    for r in &reports {
        match &r.error {
            Some(e) => {
                failed += 1;
                eprintln!("{}: {e}", r.path);
            }
            None if r.rejects > 0 => {
                eprintln!("{}: {} events, {} rejected lines", r.path, r.events, r.rejects);
                for s in &r.reject_samples {
                    eprintln!("  line {s}");
                }
            }
            None => log::info!("{}: {} events", r.path, r.events),
        }
    }
    let text = serde_json::to_string_pretty(&reports).map_err(|e| Failure::new("ingest", e))?;
    write(w, "ingest_report.json", "ingest", |f| writeln!(f, "{text}"))?;
    if failed > 0 {
        let f = Failure::new("ingest", format!("{failed} of {} input files failed", reports.len()));
        if failed == reports.len() {
            return Err(f);
        }
        ctx.deferred = Some(f);
    }
    Ok(archive)
}

fn write(
    w: &mut OutputDir,
    rel: &str,
    stage: &str,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), Failure> {
    w.write(rel, f).map_err(|e| Failure::new(stage, format!("{rel}: {e}")))
}

fn timeout_seconds(minutes: i64) -> Result<i64, Failure> {
    if minutes <= 0 {
        return Err(Failure::new("sessionize", "--timeout-minutes must be positive"));
    }
    Ok(minutes * 60)
}

fn cmd_ingest(a: &IngestArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    ctx.manifest.set_config(json!({}));
    let archive = load_inputs(&a.inputs, ctx, w)?;
    write(w, "archive.tsv", "ingest", |f| archive.write_tsv(f))?;
    if archive.events.is_empty() {
        return Err(Failure::new("ingest", "archive holds no events"));
    }
    let table = archive_table(&archive).map_err(|e| Failure::new("ingest", e))?;
    let (_, report) = prune_columns(&table).map_err(|e| Failure::new("ingest", e))?;
    let text = report.to_json();
    write(w, "prune_report.json", "ingest", |f| writeln!(f, "{text}"))
}

fn cmd_sessionize(a: &SessionArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let timeout = timeout_seconds(a.timeout_minutes)?;
    ctx.manifest.set_config(json!({ "timeout_minutes": a.timeout_minutes }));
    let archive = load_inputs(&a.inputs, ctx, w)?;
    let sessions = sessionize(&archive.events, timeout);
    write(w, "sessions.jsonl", "sessionize", |f| write_sessions_jsonl(&sessions, f))
}

fn cmd_label(a: &SessionArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let timeout = timeout_seconds(a.timeout_minutes)?;
    ctx.manifest.set_config(json!({ "timeout_minutes": a.timeout_minutes }));
    let archive = load_inputs(&a.inputs, ctx, w)?;
    let labeled = label_events(archive.events, timeout);
    for r in &labeled.regressions {
        log::warn!("{r:?}");
    }
    if !labeled.regressions.is_empty() {
        eprintln!("warning: {} non-monotone marker sequences", labeled.regressions.len());
    }
    write(w, "views.tsv", "label", |f| write_views_tsv(&labeled.views, f))?;
    if labeled.views.is_empty() {
        return Err(Failure::new("label", "0 video views"));
    }
    Ok(())
}

fn cmd_graph(a: &GraphArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let timeout = timeout_seconds(a.session.timeout_minutes)?;
    if a.top_k == 0 {
        return Err(Failure::new("graph", "--top-k must be at least 1"));
    }
    ctx.manifest
        .set_config(json!({ "timeout_minutes": a.session.timeout_minutes, "top_k": a.top_k }));
    let archive = load_inputs(&a.session.inputs, ctx, w)?;
    let sessions = sessionize(&archive.events, timeout);
    let graph = section_graph(&sessions, a.top_k);
    write(w, "section_nodes.csv", "graph", |f| graph.write_nodes_csv(f))?;
    write(w, "section_edges.csv", "graph", |f| graph.write_edges_csv(f))
}

fn load_views(a: &ViewsArgs, ctx: &mut Ctx) -> Result<Vec<clickstream_core::video::VideoViewInstance>, Failure> {
    ctx.manifest.inputs = vec![manifest::display(&a.views)];
    let file = File::open(&a.views).map_err(|e| Failure::new("label", format!("{}: {e}", a.views.display())))?;
    let views = read_views_tsv(BufReader::new(file)).map_err(|e| Failure::new("label", format!("{}: {e}", a.views.display())))?;
    if views.is_empty() {
        return Err(Failure::new("label", "0 video views"));
    }
    Ok(views)
}

fn cmd_dropoff(a: &ViewsArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    ctx.manifest.set_config(json!({}));
    let views = load_views(a, ctx)?;
    let mut curves = dropoff_curve(&views, true);
    curves.extend(dropoff_curve(&views, false));
    write(w, "dropoff.csv", "dropoff", |f| write_dropoff_csv(&curves, f))
}

fn cmd_rank(a: &RankArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    ctx.manifest.set_config(json!({ "top_fraction": a.top_fraction }));
    let views = load_views(&a.views, ctx)?;
    let table = build_feature_table(&views).map_err(|e| Failure::new("label", e))?;
    rank_stage(&table, a.top_fraction, w).map_err(stage_failure)?;
    Ok(())
}

fn stage_failure(e: pipeline::PipelineError) -> Failure {
    let pipeline::PipelineError::Stage { stage, message } = e;
    Failure::new(stage, message)
}

fn learner_configs(flags: &EvalFlags) -> Result<Vec<LearnerConfig>, Failure> {
    let mut configs = Vec::new();
    for name in &flags.learners {
        let kind = LearnerKind::parse(name.trim()).map_err(|e| Failure::new("config", e))?;
        let config = flags.hyper.apply(LearnerConfig::default_for(kind));
        config.validate().map_err(|e| Failure::new("config", format!("{kind}: {e}")))?;
        configs.push(config);
    }
    if configs.is_empty() {
        return Err(Failure::new("config", "no learners requested"));
    }
    Ok(configs)
}

fn pipeline_options(flags: &EvalFlags, seed: u64) -> Result<PipelineOptions, Failure> {
    if flags.folds < 2 {
        return Err(Failure::new("config", "--folds must be at least 2"));
    }
    Ok(PipelineOptions {
        seed,
        folds: flags.folds,
        learners: learner_configs(flags)?,
        tasks: flags.task.tasks(),
        averaging: match flags.averaging {
            AveragingArg::Weighted => Averaging::Weighted,
            AveragingArg::Macro => Averaging::Macro,
        },
        ..PipelineOptions::default()
    })
}

fn options_json(opts: &PipelineOptions) -> serde_json::Value {
    json!({
        "folds": opts.folds,
        "tasks": opts.tasks.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
        "averaging": match opts.averaging { Averaging::Weighted => "weighted", Averaging::Macro => "macro" },
        "learners": opts.learners,
        "timeout_seconds": opts.timeout_seconds,
        "top_fraction": opts.top_fraction,
        "graph_top_k": opts.graph_top_k,
    })
}

fn cmd_evaluate(a: &EvaluateArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let opts = pipeline_options(&a.eval, ctx.global.seed())?;
    ctx.manifest.set_config(options_json(&opts));
    let views = load_views(&a.views, ctx)?;
    let table = build_feature_table(&views).map_err(|e| Failure::new("label", e))?;
    let mut reports = Vec::new();
    for &task in &opts.tasks {
        let t = Instant::now();
        reports.extend(evaluate_stage(&table, task, &opts, w).map_err(stage_failure)?);
        ctx.manifest.stage(&format!("evaluate_{task}"), t.elapsed());
    }
    write(w, "summary.csv", "evaluate", |f| eval::write_summary_csv(&reports, f))
}

fn cmd_train(a: &TrainArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let kind = LearnerKind::parse(&a.learner).map_err(|e| Failure::new("config", e))?;
    let config = a.hyper.apply(LearnerConfig::default_for(kind));
    config.validate().map_err(|e| Failure::new("config", e))?;
    let tasks = a.task.tasks();
    ctx.manifest.set_config(json!({
        "learner": config,
        "tasks": tasks.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
    }));
    let views = load_views(&a.views, ctx)?;
    let table = build_feature_table(&views).map_err(|e| Failure::new("label", e))?;
    for task in tasks {
        let task_table = match task {
            Task::BinaryEarly => eval::merge_task(&table).map_err(|e| Failure::new("train", e))?,
            _ => table.clone(),
        };
        let model = ModelArtifact::train(&config, &task_table, ctx.global.seed()).map_err(|e| Failure::new("train", e))?;
        let text = model.to_json().map_err(|e| Failure::new("train", e))?;
        write(w, &format!("model_{task}_{kind}.json"), "train", |f| writeln!(f, "{text}"))?;
    }
    Ok(())
}

fn cmd_pipeline(a: &PipelineArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let mut opts = pipeline_options(&a.eval, ctx.global.seed())?;
    opts.timeout_seconds = timeout_seconds(a.session.timeout_minutes)?;
    opts.top_fraction = a.top_fraction;
    if a.top_k == 0 {
        return Err(Failure::new("config", "--top-k must be at least 1"));
    }
    opts.graph_top_k = a.top_k;
    ctx.manifest.set_config(options_json(&opts));
    let t = Instant::now();
    let archive = load_inputs(&a.session.inputs, ctx, w)?;
    ctx.manifest.stage("ingest", t.elapsed());
    let out = w.dir().to_path_buf();
    let run = pipeline::run(archive.events, &opts, &out);
    for p in run.outputs {
        w.record(p);
    }
    for (name, d) in run.stage_times {
        ctx.manifest.stage(&name, d);
    }
    match run.failure {
        Some(e) => Err(stage_failure(e)),
        None => Ok(()),
    }
}

fn cmd_synth(a: &SynthArgs, ctx: &mut Ctx, w: &mut OutputDir) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            ctx.manifest.inputs = vec![manifest::display(p)];
            let text = fs::read_to_string(p).map_err(|e| Failure::new("config", format!("{}: {e}", p.display())))?;
            SynthConfig::from_json(&text).map_err(|e| Failure::new("config", e))?
        }
        None => SynthConfig::default(),
    };
    set(&mut cfg.n_users, a.users);
    set(&mut cfg.n_days, a.days);
    set(&mut cfg.signal_strength, a.signal_strength);
    match ctx.global.seed {
        Some(seed) => cfg.seed = seed,
        None if a.config.is_none() => cfg.seed = eval::DEFAULT_SEED,
        None => {}
    }
    ctx.manifest.seed = cfg.seed;
    cfg.validate().map_err(|e| Failure::new("config", e))?;
    ctx.manifest.set_config(serde_json::to_value(&cfg).map_err(|e| Failure::new("config", e))?);
    let data = synth::generate(&cfg).map_err(|e| Failure::new("synth", e))?;
    for d in 0..data.days.len() {
        write(w, &synth::dump_name(d), "synth", |f| data.write_day(d, f))?;
    }
    let text = data.truth.to_json();
    write(w, "manifest.json", "synth", |f| writeln!(f, "{text}"))?;
    eprintln!("{} clicks in {} files", data.click_count(), data.days.len());
    Ok(())
}
