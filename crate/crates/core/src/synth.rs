//! Seeded synthetic click dumps standing in for the proprietary logs, with
//! per-category drop-off profiles and planted feature-to-exit dependencies.
//!
//! Every user draws from a private stream derived from `(seed, user)`, so the
//! output does not depend on how users are scheduled across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{render_event, ClickEvent, Field, ProgressMarker, UserKey, VisitFrequency};
use crate::select::MISSING_LABEL;
use crate::table::{ClassColumn, Column, FeatureTable};
use crate::util::{sha256_hex, stream, Sym};
use crate::video::{hour_of_day, to_binary, ExitClass};

pub const MANIFEST_FORMAT: &str = "clickstream-synth-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Columns a planted rule may condition on.
pub const PLANTABLE: [&str; 6] = ["referrer_type", "frequency_of_visits", "city", "isp", "search_engine", "hour"];

const DAY: i64 = 86_400;
const EDGE: i64 = 1_800;
const SESSION_SPACING: i64 = 2_700;
const MAX_GAP: f64 = 1_500.0;
const FREQUENCY_WEIGHTS: [f64; 5] = [0.10, 0.35, 0.30, 0.15, 0.10];
/// Expected sessions per day for each visit frequency.
const FREQUENCY_RATES: [f64; 5] = [3.0, 1.0, 0.3, 0.1, 0.05];
const CRAWLER_RATE: f64 = 1.0;
const CRAWLER_SESSION_CLICKS: f64 = 10.0;
const CITIES: [(&str, &str); 16] = [
    ("Atlanta", "GA"),
    ("Austin", "TX"),
    ("Boston", "MA"),
    ("Chicago", "IL"),
    ("Dallas", "TX"),
    ("Denver", "CO"),
    ("Detroit", "MI"),
    ("Houston", "TX"),
    ("Miami", "FL"),
    ("Newark", "NJ"),
    ("Phoenix", "AZ"),
    ("Portland", "OR"),
    ("Sacramento", "CA"),
    ("Seattle", "WA"),
    ("Tampa", "FL"),
    ("Tucson", "AZ"),
];
const ISPS: [&str; 8] = [
    "comcast.net",
    "verizon.net",
    "att.net",
    "charter.com",
    "cox.net",
    "frontier.com",
    "centurylink.net",
    "windstream.net",
];
const BROWSERS: [&str; 5] = ["chrome", "firefox", "safari", "edge", "opera"];
const ENGINES: [&str; 4] = ["google", "bing", "yahoo", "duckduckgo"];
const CHANNELS: [&str; 3] = ["web", "mobile", "app"];
const STORIES_PER_SECTION: usize = 40;
const VIDEOS_PER_CATEGORY: usize = 30;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryProfile {
    pub name: String,
    /// Share of views reaching 0, 25, 50, 75 and 100 percent.
    pub survival: [f64; 5],
}

/// Views whose `column` value is in `risky` lean towards early exits; all
/// other views lean the other way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedRule {
    pub column: String,
    pub risky: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_days: usize,
    /// Epoch seconds of the first day's midnight.
    pub start_time: i64,
    pub sections: Vec<String>,
    pub categories: Vec<CategoryProfile>,
    pub referrer_mix: BTreeMap<String, f64>,
    pub signal_strength: f64,
    pub planted: Vec<PlantedRule>,
    pub noise_columns: usize,
    pub constant_columns: usize,
    /// Extra columns that come in identical pairs; must be even.
    pub redundant_columns: usize,
    pub video_probability: f64,
    pub mean_session_clicks: f64,
    pub crawler_fraction: f64,
    pub cookieless_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let profile = |name: &str, survival: [f64; 5]| CategoryProfile {
            name: name.to_string(),
            survival,
        };
        SynthConfig {
            n_users: 5_000,
            n_days: 7,
            start_time: 1_356_998_400,
            sections: [
                "news",
                "sports",
                "business",
                "entertainment",
                "lifestyle",
                "technology",
                "travel",
                "opinion",
                "weather",
                "local",
                "world",
                "video",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            categories: vec![
                profile("news", [1.0, 0.82, 0.64, 0.50, 0.40]),
                profile("sports", [1.0, 0.85, 0.70, 0.58, 0.48]),
                profile("entertainment", [1.0, 0.78, 0.58, 0.44, 0.33]),
                profile("politics", [1.0, 0.80, 0.60, 0.42, 0.30]),
                profile("lifestyle", [1.0, 0.70, 0.45, 0.28, 0.17]),
            ],
            referrer_mix: [("direct", 0.35), ("search", 0.30), ("social", 0.20), ("email", 0.05), ("other", 0.10)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            signal_strength: 0.8,
            planted: vec![PlantedRule {
                column: "referrer_type".to_string(),
                risky: vec!["social".to_string(), "other".to_string()],
            }],
            noise_columns: 6,
            constant_columns: 4,
            redundant_columns: 4,
            video_probability: 0.5,
            mean_session_clicks: 4.0,
            crawler_fraction: 0.02,
            cookieless_fraction: 0.1,
            seed: 1,
        }
    }
}

fn check_text(field: &str, s: &str) -> Result<(), SynthError> {
    if s.is_empty() || s.chars().any(|c| c.is_control()) || s == crate::ingest::MISSING {
        return Err(invalid(field, format!("{s:?} is not a usable value")));
    }
    Ok(())
}

fn check_unit(field: &str, v: f64) -> Result<(), SynthError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<SynthConfig, SynthError> {
        let c: SynthConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 {
            return Err(invalid("n_users", "must be at least 1"));
        }
        if self.n_users > 9_999_999 {
            return Err(invalid("n_users", "must be below 10,000,000"));
        }
        if self.n_days == 0 || self.n_days > 999 {
            return Err(invalid("n_days", "must be in 1..=999"));
        }
        if self.start_time <= 0 {
            return Err(invalid("start_time", "must be positive"));
        }
        if self.sections.is_empty() {
            return Err(invalid("sections", "must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.sections.iter().enumerate() {
            check_text(&format!("sections[{i}]"), s)?;
            if s.contains('/') {
                return Err(invalid(format!("sections[{i}]"), "must not contain '/'"));
            }
            if !seen.insert(s) {
                return Err(invalid(format!("sections[{i}]"), format!("duplicate section {s:?}")));
            }
        }
        if self.categories.is_empty() {
            return Err(invalid("categories", "must not be empty"));
        }
        let mut names = BTreeSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            let field = format!("categories[{i}]");
            check_text(&format!("{field}.name"), &c.name)?;
            if c.name.contains(['/', ':']) {
                return Err(invalid(format!("{field}.name"), "must not contain '/' or ':'"));
            }
            if !names.insert(&c.name) {
                return Err(invalid(format!("{field}.name"), format!("duplicate category {:?}", c.name)));
            }
            if c.survival[0] != 1.0 {
                return Err(invalid(format!("{field}.survival"), "must start at 1.0"));
            }
            for k in 1..5 {
                check_unit(&format!("{field}.survival[{k}]"), c.survival[k])?;
                if c.survival[k] > c.survival[k - 1] {
                    return Err(invalid(
                        format!("{field}.survival[{k}]"),
                        format!("survival increases from {} to {}", c.survival[k - 1], c.survival[k]),
                    ));
                }
            }
        }
        if self.referrer_mix.is_empty() {
            return Err(invalid("referrer_mix", "must not be empty"));
        }
        let mut total = 0.0;
        for (k, v) in &self.referrer_mix {
            check_text("referrer_mix", k)?;
            if k == "internal" {
                return Err(invalid("referrer_mix", "\"internal\" is reserved for in-visit clicks"));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return Err(invalid(format!("referrer_mix.{k}"), "must be a non-negative number"));
            }
            total += v;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(invalid("referrer_mix", format!("weights sum to {total}, expected 1")));
        }
        check_unit("signal_strength", self.signal_strength)?;
        for (i, r) in self.planted.iter().enumerate() {
            if !PLANTABLE.contains(&r.column.as_str()) {
                return Err(invalid(
                    format!("planted[{i}].column"),
                    format!("{:?} is not one of {}", r.column, PLANTABLE.join(", ")),
                ));
            }
            if r.risky.is_empty() {
                return Err(invalid(format!("planted[{i}].risky"), "must not be empty"));
            }
        }
        if !self.redundant_columns.is_multiple_of(2) {
            return Err(invalid("redundant_columns", "must be even (columns come in identical pairs)"));
        }
        check_unit("video_probability", self.video_probability)?;
        check_unit("crawler_fraction", self.crawler_fraction)?;
        check_unit("cookieless_fraction", self.cookieless_fraction)?;
        if !(self.mean_session_clicks >= 1.0 && self.mean_session_clicks <= 1_000.0) {
            return Err(invalid("mean_session_clicks", "must be in [1, 1000]"));
        }
        Ok(())
    }

    pub fn extra_columns(&self) -> Vec<String> {
        let mut v = Vec::new();
        for j in 0..self.noise_columns {
            v.push(format!("noise_{j:02}"));
        }
        for j in 0..self.constant_columns {
            v.push(format!("constant_{j:02}"));
        }
        for j in 0..self.redundant_columns / 2 {
            v.push(format!("redundant_{j:02}a"));
            v.push(format!("redundant_{j:02}b"));
        }
        v
    }

    pub fn planted_columns(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.planted.iter().map(|r| r.column.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

/// Early-exit odds multiplier at full tilt.
pub fn odds_multiplier(signal_strength: f64) -> f64 {
    1.0 + 9.0 * signal_strength
}

fn tilted(p: f64, factor: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return p.clamp(0.0, 1.0);
    }
    let odds = p / (1.0 - p) * factor;
    odds / (1.0 + odds)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        0.0
    } else {
        (a / b).clamp(0.0, 1.0)
    }
}

/// Exit class drawn in stages (early or late, then 0 vs 25, then the hazards
/// at 50 and 75). Each stage's odds of the earlier outcome are multiplied by
/// `factor`, so `factor = 1` reproduces the survival profile exactly.
pub fn sample_exit<R: Rng>(survival: &[f64; 5], factor: f64, rng: &mut R) -> ExitClass {
    let s = survival;
    if rng.random_bool(tilted(1.0 - s[2], factor)) {
        if rng.random_bool(tilted(ratio(1.0 - s[1], 1.0 - s[2]), factor)) {
            ExitClass::E0
        } else {
            ExitClass::E25
        }
    } else if rng.random_bool(tilted(ratio(s[2] - s[3], s[2]), factor)) {
        ExitClass::E50
    } else if rng.random_bool(tilted(ratio(s[3] - s[4], s[3]), factor)) {
        ExitClass::E75
    } else {
        ExitClass::E100
    }
}

/// Exit-class probabilities implied by [`sample_exit`].
pub fn exit_probabilities(survival: &[f64; 5], factor: f64) -> [f64; 5] {
    let s = survival;
    let early = tilted(1.0 - s[2], factor);
    let e0 = tilted(ratio(1.0 - s[1], 1.0 - s[2]), factor);
    let h50 = tilted(ratio(s[2] - s[3], s[2]), factor);
    let h75 = tilted(ratio(s[3] - s[4], s[3]), factor);
    let late = 1.0 - early;
    [
        early * e0,
        early * (1.0 - e0),
        late * h50,
        late * (1.0 - h50) * h75,
        late * (1.0 - h50) * (1.0 - h75),
    ]
}

struct Story {
    url: Sym,
    title: Sym,
}

/// Interned strings and fixed site structure shared by all users.
struct Vocab {
    sections: Vec<Sym>,
    subsections: Vec<Vec<Sym>>,
    stories: Vec<Vec<Story>>,
    transitions: Vec<WeightedIndex<f64>>,
    categories: Vec<Sym>,
    videos: Vec<Vec<Story>>,
    referrer_types: Vec<Sym>,
    referrer_weights: WeightedIndex<f64>,
    referrer_urls: Vec<Vec<Sym>>,
    internal: Sym,
    cities: Vec<(Sym, Sym)>,
    country: Sym,
    isps: Vec<Sym>,
    browsers: Vec<Sym>,
    engines: Vec<Sym>,
    channels: Vec<Sym>,
    noise_levels: Vec<Vec<Sym>>,
    constant: Sym,
    redundant_levels: Vec<Vec<Sym>>,
}

fn sym(s: impl AsRef<str>) -> Sym {
    Arc::from(s.as_ref())
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Vocab {
    fn new(cfg: &SynthConfig) -> Vocab {
        let mut rng = stream(cfg.seed, "synth_site", 0);
        let n = cfg.sections.len();
        let transitions = (0..n)
            .map(|i| {
                let w: Vec<f64> = (0..n)
                    .map(|j| if i == j { 2.0 } else { rng.random_range(0.2..1.0) })
                    .collect();
                WeightedIndex::new(w).expect("positive weights")
            })
            .collect();
        let referrer_types: Vec<Sym> = cfg.referrer_mix.keys().map(sym).collect();
        let referrer_urls = cfg
            .referrer_mix
            .keys()
            .map(|t| match t.as_str() {
                "direct" => vec![sym("(direct)")],
                "search" => ENGINES.iter().map(|e| sym(format!("https://www.{e}.com/search"))).collect(),
                "social" => ["https://www.facebook.com/", "https://twitter.com/", "https://www.reddit.com/"]
                    .iter()
                    .map(sym)
                    .collect(),
                "email" => vec![sym("https://mail.example.com/")],
                other => (0..4).map(|k| sym(format!("https://{other}{k}.example.org/"))).collect(),
            })
            .collect();
        let weights: Vec<f64> = cfg.referrer_mix.values().copied().collect();
        Vocab {
            sections: cfg.sections.iter().map(sym).collect(),
            subsections: cfg
                .sections
                .iter()
                .map(|s| (0..4).map(|k| sym(format!("{s}/sub{k}"))).collect())
                .collect(),
            stories: cfg
                .sections
                .iter()
                .map(|s| {
                    (0..STORIES_PER_SECTION)
                        .map(|k| Story {
                            url: sym(format!("https://www.example.com/{s}/story-{k:03}")),
                            title: sym(format!("{}: Story {k:03}", capitalize(s))),
                        })
                        .collect()
                })
                .collect(),
            transitions,
            categories: cfg.categories.iter().map(|c| sym(&c.name)).collect(),
            videos: cfg
                .categories
                .iter()
                .map(|c| {
                    (0..VIDEOS_PER_CATEGORY)
                        .map(|k| Story {
                            url: sym(format!("https://www.example.com/video/{}/clip-{k:03}", c.name)),
                            title: sym(format!("{}: Video {k:03}", capitalize(&c.name))),
                        })
                        .collect()
                })
                .collect(),
            referrer_types,
            referrer_weights: WeightedIndex::new(weights).expect("validated mix"),
            referrer_urls,
            internal: sym("internal"),
            cities: CITIES.iter().map(|(c, r)| (sym(c), sym(r))).collect(),
            country: sym("US"),
            isps: ISPS.iter().map(sym).collect(),
            browsers: BROWSERS.iter().map(sym).collect(),
            engines: ENGINES.iter().map(sym).collect(),
            channels: CHANNELS.iter().map(sym).collect(),
            noise_levels: (0..cfg.noise_columns)
                .map(|j| (0..3 + j % 6).map(|k| sym(format!("n{j}v{k}"))).collect())
                .collect(),
            constant: sym("x"),
            redundant_levels: (0..cfg.redundant_columns / 2)
                .map(|j| (0..2 + j % 4).map(|k| sym(format!("r{j}v{k}"))).collect())
                .collect(),
        }
    }
}

/// True label of one generated view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTruth {
    pub player_id: String,
    pub user_key: String,
    pub category: String,
    pub exit_class: ExitClass,
    pub early_exit: bool,
    /// Mean of +1 (risky) and -1 (safe) over the planted rules.
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSummary {
    pub file: String,
    pub clicks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub signal_strength: f64,
    pub planted_columns: Vec<String>,
    pub planted_rules: Vec<PlantedRule>,
    pub dumps: Vec<DumpSummary>,
    /// Views of non-crawler users, sorted by player id.
    pub views: Vec<ViewTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<GroundTruth, SynthError> {
        let m: GroundTruth = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(invalid("format", format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}

/// Generated dumps held in memory: one event list per day, ordered by time.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub extra_columns: Vec<String>,
    pub days: Vec<Vec<ClickEvent>>,
    pub truth: GroundTruth,
}

pub fn dump_name(day: usize) -> String {
    format!("day_{day:03}.tsv")
}

struct UserOutput {
    clicks: Vec<(i64, ClickEvent)>,
    views: Vec<ViewTruth>,
}

struct UserProfile {
    index: usize,
    key: UserKey,
    cookie: Option<Sym>,
    ip: Sym,
    crawler: bool,
    frequency: VisitFrequency,
    city: usize,
    isp: usize,
    browser: usize,
}

fn ip_for(user: usize) -> String {
    // Multiplication by an odd constant is a bijection on u32.
    let x = (user as u32).wrapping_mul(0x9E37_79B1).wrapping_add(0x0A00_0001);
    let b = x.to_be_bytes();
    format!("{}.{}.{}.{}", b[0], b[1], b[2], b[3])
}

fn generate_user(u: usize, cfg: &SynthConfig, vocab: &Vocab) -> UserOutput {
    let mut rng = stream(cfg.seed, "synth_user", u as u64);
    let crawler = rng.random_bool(cfg.crawler_fraction);
    let cookieless = rng.random_bool(cfg.cookieless_fraction);
    let ip = sym(ip_for(u));
    let cookie = (!cookieless).then(|| sym(format!("c{u:07}")));
    let frequency = VisitFrequency::ALL[WeightedIndex::new(FREQUENCY_WEIGHTS)
        .expect("weights")
        .sample(&mut rng)];
    let profile = UserProfile {
        index: u,
        key: ClickEvent::resolve_user_key(!cookieless, cookie.as_ref(), &ip),
        cookie,
        ip,
        crawler,
        frequency,
        city: rng.random_range(0..vocab.cities.len()),
        isp: rng.random_range(0..vocab.isps.len()),
        browser: rng.random_range(0..vocab.browsers.len()),
    };
    let rate = if crawler { CRAWLER_RATE } else { FREQUENCY_RATES[frequency as usize] };
    let mean_len = if crawler { CRAWLER_SESSION_CLICKS } else { cfg.mean_session_clicks };
    let length = Geometric::new(1.0 / mean_len).expect("valid mean");
    let gaps = LogNormal::new(60f64.ln(), 1.0).expect("valid lognormal");
    let visits = Poisson::new(rate).expect("positive rate");

    let mut out = UserOutput {
        clicks: Vec::new(),
        views: Vec::new(),
    };
    let mut visit_number = 0u32;
    let mut last_visit: Option<i64> = None;
    let mut views_made = 0usize;
    for day in 0..cfg.n_days {
        let day_start = cfg.start_time + day as i64 * DAY;
        let (lo, hi) = (day_start + EDGE, day_start + DAY - EDGE);
        let k = visits.sample(&mut rng) as usize;
        let mut starts: Vec<i64> = (0..k).map(|_| rng.random_range(lo..hi - 3_600)).collect();
        starts.sort_unstable();
        let mut earliest = lo;
        for start in starts {
            let start = start.max(earliest);
            let len = 1 + length.sample(&mut rng) as usize;
            let session = generate_session(
                &profile,
                cfg,
                vocab,
                &mut rng,
                SessionContext {
                    start,
                    len,
                    visit_number: visit_number + 1,
                    last_visit,
                    view_index: views_made,
                },
                &gaps,
            );
            let end = session.clicks.last().map(|c| c.timestamp).unwrap_or(start);
            if end > hi {
                break;
            }
            visit_number += 1;
            last_visit = Some(start);
            earliest = end + SESSION_SPACING + 1;
            if let Some(v) = session.view {
                views_made += 1;
                out.views.push(v);
            }
            out.clicks.extend(session.clicks.into_iter().map(|c| (day as i64, c)));
        }
    }
    out
}

struct SessionContext {
    start: i64,
    len: usize,
    visit_number: u32,
    last_visit: Option<i64>,
    view_index: usize,
}

struct SessionOutput {
    clicks: Vec<ClickEvent>,
    view: Option<ViewTruth>,
}

fn planted_value(column: &str, profile: &UserProfile, vocab: &Vocab, entry_type: &Sym, engine: Option<&Sym>, ts: i64) -> String {
    match column {
        "referrer_type" => entry_type.to_string(),
        "frequency_of_visits" => profile.frequency.as_str().to_string(),
        "city" => vocab.cities[profile.city].0.to_string(),
        "isp" => vocab.isps[profile.isp].to_string(),
        "search_engine" => engine.map(|e| e.to_string()).unwrap_or_else(|| MISSING_LABEL.to_string()),
        "hour" => hour_of_day(ts).to_string(),
        other => unreachable!("unvalidated planted column {other}"),
    }
}

fn generate_session(
    profile: &UserProfile,
    cfg: &SynthConfig,
    vocab: &Vocab,
    rng: &mut ChaCha8Rng,
    ctx: SessionContext,
    gaps: &LogNormal<f64>,
) -> SessionOutput {
    let ref_idx = vocab.referrer_weights.sample(rng);
    let entry_type = vocab.referrer_types[ref_idx].clone();
    let urls = &vocab.referrer_urls[ref_idx];
    let entry_url = urls[rng.random_range(0..urls.len())].clone();
    let (engine, keywords, page_num) = if entry_type.as_ref() == "search" {
        let e = rng.random_range(0..vocab.engines.len());
        let page = 1 + Geometric::new(0.6).expect("p").sample(rng) as u32;
        (
            Some(vocab.engines[e].clone()),
            Some(sym(format!("query {}", rng.random_range(0..50)))),
            Some(page),
        )
    } else {
        (None, None, None)
    };
    let channel = vocab.channels[rng.random_range(0..vocab.channels.len())].clone();
    let video_at = (!profile.crawler && rng.random_bool(cfg.video_probability)).then(|| rng.random_range(0..ctx.len));

    let mut section = rng.random_range(0..vocab.sections.len());
    let mut t = ctx.start;
    let mut clicks: Vec<ClickEvent> = Vec::with_capacity(ctx.len + 5);
    let mut view = None;
    let mut first_page: Option<Sym> = None;
    let mut prev_url: Option<Sym> = None;
    let mut prev_ts: Option<i64> = None;

    let gap = |rng: &mut ChaCha8Rng| -> i64 { gaps.sample(rng).clamp(1.0, MAX_GAP) as i64 };

    for pos in 0..ctx.len {
        if pos > 0 {
            section = vocab.transitions[section].sample(rng);
            t += gap(rng);
        }
        let subsection = vocab.subsections[section][rng.random_range(0..4)].clone();
        let is_video = video_at == Some(pos);
        let (page, category) = if is_video {
            let c = rng.random_range(0..vocab.categories.len());
            let v = &vocab.videos[c][rng.random_range(0..VIDEOS_PER_CATEGORY)];
            ((v.url.clone(), v.title.clone()), Some(c))
        } else {
            let s = &vocab.stories[section][rng.random_range(0..STORIES_PER_SECTION)];
            ((s.url.clone(), s.title.clone()), None)
        };
        let first_page = first_page.get_or_insert_with(|| page.0.clone()).clone();

        let make = |ts: i64, referrer_url: Sym, referrer_type: Sym, last_click: Option<i64>, rng: &mut ChaCha8Rng| {
            let mut extras = Vec::with_capacity(cfg.noise_columns + cfg.constant_columns + cfg.redundant_columns);
            for levels in &vocab.noise_levels {
                extras.push(Some(levels[rng.random_range(0..levels.len())].clone()));
            }
            for _ in 0..cfg.constant_columns {
                extras.push(Some(vocab.constant.clone()));
            }
            for levels in &vocab.redundant_levels {
                let v = levels[rng.random_range(0..levels.len())].clone();
                extras.push(Some(v.clone()));
                extras.push(Some(v));
            }
            let (city, region) = &vocab.cities[profile.city];
            ClickEvent {
                user_key: profile.key.clone(),
                cookie_id: profile.cookie.clone(),
                ip: profile.ip.clone(),
                timestamp: ts,
                channel: channel.clone(),
                section: vocab.sections[section].clone(),
                subsection: subsection.clone(),
                page_url: page.0.clone(),
                story_title: page.1.clone(),
                referrer_url,
                referrer_type,
                first_hit_page: first_page.clone(),
                first_hit_referrer: entry_url.clone(),
                first_hit_time: Some(ctx.start),
                last_visit: ctx.last_visit,
                last_click,
                browser: Some(vocab.browsers[profile.browser].clone()),
                city: Some(city.clone()),
                region: Some(region.clone()),
                country: Some(vocab.country.clone()),
                isp_domain: Some(vocab.isps[profile.isp].clone()),
                search_keywords: keywords.clone(),
                search_engine: engine.clone(),
                search_page_num: page_num,
                cookies_enabled: profile.cookie.is_some(),
                exclude_hit: profile.crawler,
                new_visit: last_click.is_none(),
                visit_number: ctx.visit_number,
                frequency_of_visits: profile.frequency,
                player_id: None,
                progress_marker: None,
                content_category: None,
                extras,
            }
        };

        let (referrer_url, referrer_type) = match &prev_url {
            None => (entry_url.clone(), entry_type.clone()),
            Some(u) => (u.clone(), vocab.internal.clone()),
        };
        let mut click = make(t, referrer_url, referrer_type, prev_ts, rng);
        if let Some(c) = category {
            let tilt = if cfg.planted.is_empty() {
                0.0
            } else {
                cfg.planted
                    .iter()
                    .map(|r| {
                        let v = planted_value(&r.column, profile, vocab, &entry_type, engine.as_ref(), t);
                        if r.risky.contains(&v) {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .sum::<f64>()
                    / cfg.planted.len() as f64
            };
            let factor = odds_multiplier(cfg.signal_strength).powf(tilt);
            let exit = sample_exit(&cfg.categories[c].survival, factor, rng);
            let player = sym(format!("v{:07}-{:04}", profile.index, ctx.view_index));
            let category = vocab.categories[c].clone();
            click.player_id = Some(player.clone());
            click.progress_marker = Some(ProgressMarker::P0);
            click.content_category = Some(category.clone());
            view = Some(ViewTruth {
                player_id: player.to_string(),
                user_key: profile.key.to_string(),
                category: category.to_string(),
                exit_class: exit,
                early_exit: to_binary(exit),
                tilt,
            });
            prev_ts = Some(t);
            prev_url = Some(page.0.clone());
            clicks.push(click);
            for marker in &ProgressMarker::ALL[1..=exit.index()] {
                t += gap(rng);
                let mut m = make(t, page.0.clone(), vocab.internal.clone(), prev_ts, rng);
                m.player_id = Some(player.clone());
                m.progress_marker = Some(*marker);
                m.content_category = Some(category.clone());
                prev_ts = Some(t);
                clicks.push(m);
            }
            continue;
        }
        prev_ts = Some(t);
        prev_url = Some(page.0.clone());
        clicks.push(click);
    }
    SessionOutput { clicks, view }
}

/// Runs the generator. Each day's events are ordered by timestamp, then
/// user, then the user's own click order.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let vocab = Vocab::new(cfg);
    let users: Vec<UserOutput> = (0..cfg.n_users)
        .into_par_iter()
        .map(|u| generate_user(u, cfg, &vocab))
        .collect();

    let mut days: Vec<Vec<(i64, usize, usize, ClickEvent)>> = vec![Vec::new(); cfg.n_days];
    let mut views = Vec::new();
    for (u, out) in users.into_iter().enumerate() {
        for (seq, (day, click)) in out.clicks.into_iter().enumerate() {
            days[day as usize].push((click.timestamp, u, seq, click));
        }
        views.extend(out.views);
    }
    let days: Vec<Vec<ClickEvent>> = days
        .into_par_iter()
        .map(|mut d| {
            d.sort_unstable_by_key(|(t, u, s, _)| (*t, *u, *s));
            d.into_iter().map(|(_, _, _, c)| c).collect()
        })
        .collect();
    views.sort_by(|a, b| a.player_id.cmp(&b.player_id));
    let truth = GroundTruth {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        config_sha256: cfg.sha256(),
        signal_strength: cfg.signal_strength,
        planted_columns: cfg.planted_columns(),
        planted_rules: cfg.planted.clone(),
        dumps: days
            .iter()
            .enumerate()
            .map(|(d, e)| DumpSummary {
                file: dump_name(d),
                clicks: e.len(),
            })
            .collect(),
        views,
    };
    Ok(SynthData {
        extra_columns: cfg.extra_columns(),
        days,
        truth,
    })
}

/// The manifest a `generate` call with the same config would write.
pub fn ground_truth(cfg: &SynthConfig) -> Result<GroundTruth, SynthError> {
    Ok(generate(cfg)?.truth)
}

impl SynthData {
    pub fn header(&self) -> String {
        let mut names: Vec<&str> = Field::ALL.iter().map(|f| f.name()).collect();
        names.extend(self.extra_columns.iter().map(String::as_str));
        names.join("\t")
    }

    pub fn write_day<W: Write>(&self, day: usize, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{}", self.header())?;
        let mut line = String::with_capacity(512);
        for e in &self.days[day] {
            line.clear();
            render_event(&mut line, e);
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()
    }

    /// Writes `day_NNN.tsv` files and `manifest.json` into `dir`; returns
    /// the dump paths in day order.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.days.len());
        for d in 0..self.days.len() {
            let path = dir.join(dump_name(d));
            self.write_day(d, File::create(&path)?)?;
            paths.push(path);
        }
        fs::write(dir.join("manifest.json"), self.truth.to_json() + "\n")?;
        Ok(paths)
    }

    pub fn click_count(&self) -> usize {
        self.days.iter().map(Vec::len).sum()
    }

    pub fn all_events(&self) -> Vec<ClickEvent> {
        self.days.iter().flatten().cloned().collect()
    }
}

/// Shape of a wide ranking-benchmark table: planted informative columns among
/// constant, pairwise-redundant and noise columns, with a five-class target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedTableSpec {
    pub n_rows: usize,
    pub n_columns: usize,
    pub n_planted: usize,
    /// Probability that a planted cell follows its class.
    pub strength: f64,
    pub constant_columns: usize,
    pub redundant_columns: usize,
    /// Adds a `row_key` column unique to every row.
    pub unique_key: bool,
    pub seed: u64,
}

impl Default for PlantedTableSpec {
    fn default() -> Self {
        PlantedTableSpec {
            n_rows: 5_000,
            n_columns: 161,
            n_planted: 12,
            strength: 0.8,
            constant_columns: 32,
            redundant_columns: 40,
            unique_key: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedTable {
    pub table: FeatureTable,
    pub planted: Vec<String>,
}

/// Nominal level counts cycled through by noise columns.
const NOISE_LEVELS: [usize; 8] = [2, 3, 4, 6, 8, 12, 20, 50];

pub fn planted_table(spec: &PlantedTableSpec) -> Result<PlantedTable, SynthError> {
    let fixed = spec.n_planted + spec.constant_columns + spec.redundant_columns;
    if fixed > spec.n_columns {
        return Err(invalid("n_columns", format!("{} columns cannot hold {fixed} fixed ones", spec.n_columns)));
    }
    if !spec.redundant_columns.is_multiple_of(2) {
        return Err(invalid("redundant_columns", "must be even"));
    }
    if spec.n_rows < 2 {
        return Err(invalid("n_rows", "must be at least 2"));
    }
    check_unit("strength", spec.strength)?;
    let mut rng = stream(spec.seed, "planted_table", 0);
    let class: Vec<usize> = (0..spec.n_rows).map(|_| rng.random_range(0..5)).collect();
    let labels = ExitClass::order();
    let mut columns = Vec::with_capacity(spec.n_columns + 1);
    let mut planted = Vec::with_capacity(spec.n_planted);

    for j in 0..spec.n_planted {
        let name = format!("planted_{j:02}");
        let mut rng = stream(spec.seed, "planted_column", j as u64);
        if j % 6 == 5 {
            columns.push(Column::numeric(
                &name,
                class.iter().map(|&c| {
                    let v = if rng.random_bool(spec.strength) {
                        c as f64 + rng.random::<f64>()
                    } else {
                        rng.random_range(0.0..5.0)
                    };
                    Some(v)
                }),
            ));
        } else {
            let levels = 3 + j % 5;
            let offset = j % levels;
            columns.push(Column::nominal(
                &name,
                class.iter().map(|&c| {
                    let level = if rng.random_bool(spec.strength) {
                        (c + offset) % levels
                    } else {
                        rng.random_range(0..levels)
                    };
                    Some(format!("p{level}"))
                }),
            ));
        }
        planted.push(name);
    }

    let noise = |rng: &mut ChaCha8Rng, j: usize, name: String| -> Column {
        let missing = if j % 7 == 3 { 0.2 } else { 0.0 };
        if j % 5 == 4 {
            Column::numeric(
                name,
                (0..spec.n_rows).map(|_| (!rng.random_bool(missing)).then(|| rng.random::<f64>() * 100.0)),
            )
        } else {
            let levels = NOISE_LEVELS[j % NOISE_LEVELS.len()];
            Column::nominal(
                name,
                (0..spec.n_rows).map(|_| (!rng.random_bool(missing)).then(|| format!("v{}", rng.random_range(0..levels)))),
            )
        }
    };

    for j in 0..spec.constant_columns {
        columns.push(Column::nominal(format!("constant_{j:02}"), (0..spec.n_rows).map(|_| Some("k"))));
    }
    for j in 0..spec.redundant_columns / 2 {
        let mut rng = stream(spec.seed, "redundant_column", j as u64);
        let a = noise(&mut rng, j, format!("redundant_{j:02}a"));
        let b = Column {
            name: format!("redundant_{j:02}b"),
            values: a.values.clone(),
        };
        columns.push(a);
        columns.push(b);
    }
    for j in 0..spec.n_columns - fixed {
        let mut rng = stream(spec.seed, "noise_column", j as u64);
        columns.push(noise(&mut rng, j, format!("noise_{j:03}")));
    }
    if spec.unique_key {
        columns.push(Column::nominal("row_key", (0..spec.n_rows).map(|i| Some(format!("r{i:06}")))));
    }
    let class = ClassColumn::with_order("exit_class", class.iter().map(|&c| labels[c].as_str()), labels.clone())
        .map_err(|e| invalid("class", e.to_string()))?;
    let table = FeatureTable::new(columns, Some(class)).map_err(|e| invalid("table", e.to_string()))?;
    Ok(PlantedTable { table, planted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 300,
            n_days: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let c = SynthConfig::default();
        c.validate().unwrap();
        assert_eq!(SynthConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(c.categories.iter().any(|p| p.survival[4] < 0.2));
        let partial = SynthConfig::from_json(r#"{"n_users": 10, "seed": 4}"#).unwrap();
        assert_eq!(partial.n_days, 7);
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = SynthConfig::default();
        c.categories[1].survival = [1.0, 0.5, 0.6, 0.4, 0.2];
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("categories[1].survival[2]"), "{err}");

        let mut c = SynthConfig::default();
        c.referrer_mix.insert("direct".into(), 0.9);
        assert!(c.validate().unwrap_err().to_string().contains("referrer_mix"));

        let c = SynthConfig {
            signal_strength: 1.5,
            ..SynthConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("signal_strength"));

        let mut c = SynthConfig::default();
        c.planted[0].column = "browser".into();
        assert!(c.validate().unwrap_err().to_string().contains("planted[0].column"));

        assert!(SynthConfig::from_json(r#"{"n_user": 3}"#).is_err());
    }

    #[test]
    fn neutral_factor_reproduces_the_profile() {
        let s = [1.0, 0.8, 0.55, 0.3, 0.1];
        let p = exit_probabilities(&s, 1.0);
        let expect = [0.2, 0.25, 0.25, 0.2, 0.1];
        for k in 0..5 {
            assert!((p[k] - expect[k]).abs() < 1e-12, "{p:?}");
        }
        let tilted = exit_probabilities(&s, 8.2);
        assert!(tilted[0] + tilted[1] > 0.45);
        assert!((tilted.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_exits_follow_the_probabilities() {
        let s = [1.0, 0.8, 0.6, 0.4, 0.2];
        let mut rng = stream(3, "test", 0);
        let mut counts = [0usize; 5];
        let n = 40_000;
        for _ in 0..n {
            counts[sample_exit(&s, 1.0, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.truth.to_json(), b.truth.to_json());
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_day(1, &mut x).unwrap();
        b.write_day(1, &mut y).unwrap();
        assert_eq!(x, y);
        let c = generate(&SynthConfig { seed: 2, ..small() }).unwrap();
        let mut z = Vec::new();
        c.write_day(1, &mut z).unwrap();
        assert_ne!(x, z);
        assert_eq!(x.split(|&b| b == b'\n').next(), z.split(|&b| b == b'\n').next());
    }

    #[test]
    fn days_are_time_ordered_and_inside_their_window() {
        let cfg = small();
        let d = generate(&cfg).unwrap();
        assert_eq!(d.days.len(), 3);
        for (day, events) in d.days.iter().enumerate() {
            let start = cfg.start_time + day as i64 * DAY;
            assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            assert!(events.iter().all(|e| e.timestamp >= start + EDGE && e.timestamp <= start + DAY - EDGE));
        }
    }

    #[test]
    fn manifest_lists_planted_columns_and_views() {
        let mut cfg = small();
        cfg.planted.push(PlantedRule {
            column: "city".into(),
            risky: vec!["Boston".into()],
        });
        let t = ground_truth(&cfg).unwrap();
        assert_eq!(t.planted_columns, vec!["city", "referrer_type"]);
        assert!(!t.views.is_empty());
        let ids: BTreeSet<&str> = t.views.iter().map(|v| v.player_id.as_str()).collect();
        assert_eq!(ids.len(), t.views.len());
        assert!(t.views.iter().all(|v| v.tilt.abs() <= 1.0));
        assert_eq!(GroundTruth::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn planted_table_shape() {
        let spec = PlantedTableSpec {
            n_rows: 300,
            ..PlantedTableSpec::default()
        };
        let t = planted_table(&spec).unwrap();
        assert_eq!(t.table.columns().len(), 161);
        assert_eq!(t.planted.len(), 12);
        let keyed = planted_table(&PlantedTableSpec {
            unique_key: true,
            ..spec.clone()
        })
        .unwrap();
        assert_eq!(keyed.table.columns().len(), 162);
        assert!(planted_table(&PlantedTableSpec {
            n_columns: 50,
            ..spec
        })
        .is_err());
    }
}
