//! Video views reconstructed from cumulative progress markers: exit labels,
//! the predictor table and per-category drop-off curves.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{encode_field, ProgressMarker, UserKey, VisitFrequency, MISSING};
use crate::sessionizer::{csv_field, Session};
use crate::table::{ClassColumn, Column, FeatureTable, TableError};
use crate::util::{Interner, Sym};

pub const CLASS_COLUMN: &str = "exit_class";
pub const EARLY: &str = "early";
pub const LATE: &str = "late";

/// Predictor columns of a view, in table order.
pub const PREDICTORS: [&str; 12] = [
    "hour",
    "ip",
    "first_hit_referrer",
    "first_hit_page",
    "story_title",
    "search_engine",
    "city",
    "isp",
    "referrer_type",
    "pages_viewed",
    "search_page_num",
    "frequency_of_visits",
];

const ID_COLUMNS: [&str; 4] = ["user_key", "player_id", "content_category", "start_time"];

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("no video views")]
    EmptyInput,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Highest progress marker reached; exit class `E50` means the viewer left
/// somewhere in `[50%, 75%)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExitClass {
    E0,
    E25,
    E50,
    E75,
    E100,
}

impl ExitClass {
    pub const ALL: [ExitClass; 5] = [ExitClass::E0, ExitClass::E25, ExitClass::E50, ExitClass::E75, ExitClass::E100];

    pub fn label(self) -> &'static str {
        match self {
            ExitClass::E0 => "E0",
            ExitClass::E25 => "E25",
            ExitClass::E50 => "E50",
            ExitClass::E75 => "E75",
            ExitClass::E100 => "E100",
        }
    }

    pub fn parse(s: &str) -> Option<ExitClass> {
        ExitClass::ALL.iter().copied().find(|c| c.label() == s)
    }

    pub fn marker(self) -> ProgressMarker {
        ProgressMarker::ALL[self as usize]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn order() -> Vec<String> {
        ExitClass::ALL.iter().map(|c| c.label().to_string()).collect()
    }
}

impl From<ProgressMarker> for ExitClass {
    fn from(m: ProgressMarker) -> Self {
        ExitClass::ALL[m.index()]
    }
}

/// Early exit means leaving before half of the video (markers 0 and 25).
pub fn to_binary(class5: ExitClass) -> bool {
    matches!(class5, ExitClass::E0 | ExitClass::E25)
}

pub fn binary_label(early: bool) -> &'static str {
    if early {
        EARLY
    } else {
        LATE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub hour: u8,
    pub ip: Sym,
    pub first_hit_referrer: Sym,
    pub first_hit_page: Sym,
    pub story_title: Sym,
    pub search_engine: Option<Sym>,
    pub city: Option<Sym>,
    pub isp: Option<Sym>,
    pub referrer_type: Sym,
    pub pages_viewed: u32,
    pub search_page_num: Option<u32>,
    pub frequency_of_visits: VisitFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoViewInstance {
    pub user_key: UserKey,
    pub player_id: Sym,
    pub content_category: Sym,
    /// Timestamp of the view's first video click.
    pub start_time: i64,
    pub features: ViewFeatures,
    pub exit_class5: ExitClass,
    pub early_exit: bool,
}

/// Non-fatal: a player's markers went backwards in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerRegression {
    pub user_key: UserKey,
    pub player_id: Sym,
    pub session_start: i64,
}

/// Category from a `"Category: headline"` title, `uncategorized` otherwise.
pub fn category_from_title(title: &str) -> &str {
    match title.split_once(':') {
        Some((prefix, _)) if !prefix.trim().is_empty() => prefix.trim(),
        _ => "uncategorized",
    }
}

pub fn hour_of_day(timestamp: i64) -> u8 {
    (timestamp.rem_euclid(86_400) / 3_600) as u8
}

/// One instance per `(session, player_id)`, labeled by the highest marker the
/// player reached in that session. Features come from the session prefix
/// ending at the view's first video click.
pub fn extract_video_views(sessions: &[Session]) -> (Vec<VideoViewInstance>, Vec<MarkerRegression>) {
    let mut views = Vec::new();
    let mut warnings = Vec::new();
    for session in sessions {
        // player -> (first click position, max marker, last marker seen, regressed)
        let mut players: BTreeMap<&str, (usize, ProgressMarker, ProgressMarker, bool)> = BTreeMap::new();
        for (pos, click) in session.clicks.iter().enumerate() {
            let (Some(pid), Some(marker)) = (&click.player_id, click.progress_marker) else {
                continue;
            };
            players
                .entry(pid.as_ref())
                .and_modify(|(_, max, last, regressed)| {
                    if marker < *last {
                        *regressed = true;
                    }
                    *last = marker;
                    *max = (*max).max(marker);
                })
                .or_insert((pos, marker, marker, false));
        }
        for (_, (pos, max, _, regressed)) in players {
            let first = &session.clicks[pos];
            let player_id = first.player_id.clone().expect("video click");
            if regressed {
                warnings.push(MarkerRegression {
                    user_key: session.user_key.clone(),
                    player_id: player_id.clone(),
                    session_start: session.start_time,
                });
            }
            let content_category = first
                .content_category
                .clone()
                .unwrap_or_else(|| Arc::from(category_from_title(&first.story_title)));
            let exit_class5 = ExitClass::from(max);
            views.push(VideoViewInstance {
                user_key: session.user_key.clone(),
                player_id,
                content_category,
                start_time: first.timestamp,
                features: ViewFeatures {
                    hour: hour_of_day(first.timestamp),
                    ip: first.ip.clone(),
                    first_hit_referrer: first.first_hit_referrer.clone(),
                    first_hit_page: first.first_hit_page.clone(),
                    story_title: first.story_title.clone(),
                    search_engine: first.search_engine.clone(),
                    city: first.city.clone(),
                    isp: first.isp_domain.clone(),
                    referrer_type: session.entry_referrer_type.clone(),
                    pages_viewed: (pos + 1) as u32,
                    search_page_num: first.search_page_num,
                    frequency_of_visits: first.frequency_of_visits,
                },
                exit_class5,
                early_exit: to_binary(exit_class5),
            });
        }
    }
    views.sort_by(|a, b| {
        a.user_key
            .cmp(&b.user_key)
            .then(a.start_time.cmp(&b.start_time))
            .then_with(|| a.player_id.cmp(&b.player_id))
    });
    (views, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoffCurve {
    pub category: String,
    /// Share of views reaching start, 25%, 50%, 75% and completion.
    pub fractions: [f64; 5],
    pub view_count: usize,
}

/// Retention curves, one per category (sorted by name) or a single `all`
/// curve. Categories without views are omitted.
pub fn dropoff_curve(views: &[VideoViewInstance], group_by_category: bool) -> Vec<DropoffCurve> {
    let mut counts: BTreeMap<String, [usize; 5]> = BTreeMap::new();
    for v in views {
        let key = if group_by_category {
            v.content_category.to_string()
        } else {
            "all".to_string()
        };
        counts.entry(key).or_default()[v.exit_class5.index()] += 1;
    }
    counts
        .into_iter()
        .map(|(category, exits)| {
            let n: usize = exits.iter().sum();
            let mut fractions = [0.0; 5];
            for (k, f) in fractions.iter_mut().enumerate() {
                *f = exits[k..].iter().sum::<usize>() as f64 / n as f64;
            }
            fractions[0] = 1.0;
            DropoffCurve {
                category,
                fractions,
                view_count: n,
            }
        })
        .collect()
}

/// `category,marker,fraction,count`, where count is the number of views
/// reaching the marker.
pub fn write_dropoff_csv<W: Write>(curves: &[DropoffCurve], mut w: W) -> io::Result<()> {
    writeln!(w, "category,marker,fraction,count")?;
    for c in curves {
        for (k, marker) in ProgressMarker::ALL.iter().enumerate() {
            let reached = (c.fractions[k] * c.view_count as f64).round() as usize;
            writeln!(
                w,
                "{},{},{},{}",
                csv_field(&c.category),
                marker.percent(),
                c.fractions[k],
                reached
            )?;
        }
    }
    Ok(())
}

/// Twelve predictors plus the five-class exit label.
pub fn build_feature_table(views: &[VideoViewInstance]) -> Result<FeatureTable, VideoError> {
    if views.is_empty() {
        return Err(VideoError::EmptyInput);
    }
    let nominal = |name: &str, f: &dyn Fn(&ViewFeatures) -> Option<Sym>| Column {
        name: name.to_string(),
        values: crate::table::ColumnValues::Nominal(views.iter().map(|v| f(&v.features)).collect()),
    };
    let columns = vec![
        nominal("hour", &|f| Some(Arc::from(f.hour.to_string()))),
        nominal("ip", &|f| Some(f.ip.clone())),
        nominal("first_hit_referrer", &|f| Some(f.first_hit_referrer.clone())),
        nominal("first_hit_page", &|f| Some(f.first_hit_page.clone())),
        nominal("story_title", &|f| Some(f.story_title.clone())),
        nominal("search_engine", &|f| f.search_engine.clone()),
        nominal("city", &|f| f.city.clone()),
        nominal("isp", &|f| f.isp.clone()),
        nominal("referrer_type", &|f| Some(f.referrer_type.clone())),
        Column::numeric("pages_viewed", views.iter().map(|v| Some(v.features.pages_viewed as f64))),
        Column::numeric(
            "search_page_num",
            views.iter().map(|v| v.features.search_page_num.map(|n| n as f64)),
        ),
        nominal("frequency_of_visits", &|f| Some(Arc::from(f.frequency_of_visits.as_str()))),
    ];
    let class = ClassColumn::with_order(
        CLASS_COLUMN,
        views.iter().map(|v| v.exit_class5.label()),
        ExitClass::order(),
    )?;
    Ok(FeatureTable::new(columns, Some(class))?)
}

/// TSV with identification columns, the predictors, and the class last.
pub fn write_views_tsv<W: Write>(views: &[VideoViewInstance], mut w: W) -> io::Result<()> {
    let mut header: Vec<&str> = ID_COLUMNS.to_vec();
    header.extend(PREDICTORS);
    header.push(CLASS_COLUMN);
    writeln!(w, "{}", header.join("\t"))?;
    let mut line = String::new();
    for v in views {
        line.clear();
        let f = &v.features;
        let cells: [Option<String>; 17] = [
            Some(v.user_key.to_string()),
            Some(v.player_id.to_string()),
            Some(v.content_category.to_string()),
            Some(v.start_time.to_string()),
            Some(f.hour.to_string()),
            Some(f.ip.to_string()),
            Some(f.first_hit_referrer.to_string()),
            Some(f.first_hit_page.to_string()),
            Some(f.story_title.to_string()),
            f.search_engine.as_ref().map(|s| s.to_string()),
            f.city.as_ref().map(|s| s.to_string()),
            f.isp.as_ref().map(|s| s.to_string()),
            Some(f.referrer_type.to_string()),
            Some(f.pages_viewed.to_string()),
            f.search_page_num.map(|n| n.to_string()),
            Some(f.frequency_of_visits.as_str().to_string()),
            Some(v.exit_class5.label().to_string()),
        ];
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                line.push('\t');
            }
            encode_field(&mut line, c.as_deref());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Reads a file written by [`write_views_tsv`]. Any malformed line fails the
/// whole read.
pub fn read_views_tsv<R: BufRead>(reader: R) -> Result<Vec<VideoViewInstance>, VideoError> {
    let mut lines = reader.lines();
    let bad = |line: usize, message: &str| VideoError::Malformed {
        line,
        message: message.to_string(),
    };
    let header = lines.next().ok_or_else(|| bad(1, "missing header"))??;
    let mut expected: Vec<&str> = ID_COLUMNS.to_vec();
    expected.extend(PREDICTORS);
    expected.push(CLASS_COLUMN);
    if header.trim_end_matches('\r').split('\t').collect::<Vec<_>>() != expected {
        return Err(bad(1, "unexpected header"));
    }
    let mut pool = Interner::new();
    let mut views = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        let raw: Vec<&str> = line.split('\t').collect();
        if raw.len() != expected.len() {
            return Err(bad(n, "field-count mismatch"));
        }
        let cell = |k: usize| -> Option<String> {
            if raw[k] == MISSING {
                None
            } else {
                Some(unescape_owned(raw[k]))
            }
        };
        let sym = |k: usize, pool: &mut Interner| -> Result<Sym, VideoError> {
            cell(k)
                .map(|s| pool.intern(&s))
                .ok_or_else(|| bad(n, &format!("{} is missing", expected[k])))
        };
        let user_key = UserKey::parse(&sym(0, &mut pool)?).ok_or_else(|| bad(n, "bad user_key"))?;
        let player_id = sym(1, &mut pool)?;
        let content_category = sym(2, &mut pool)?;
        let start_time = sym(3, &mut pool)?.parse::<i64>().map_err(|_| bad(n, "bad start_time"))?;
        let hour = sym(4, &mut pool)?.parse::<u8>().ok().filter(|h| *h < 24).ok_or_else(|| bad(n, "bad hour"))?;
        let ip = sym(5, &mut pool)?;
        let first_hit_referrer = sym(6, &mut pool)?;
        let first_hit_page = sym(7, &mut pool)?;
        let story_title = sym(8, &mut pool)?;
        let search_engine = cell(9).map(|s| pool.intern(&s));
        let city = cell(10).map(|s| pool.intern(&s));
        let isp = cell(11).map(|s| pool.intern(&s));
        let referrer_type = sym(12, &mut pool)?;
        let pages_viewed = sym(13, &mut pool)?.parse::<u32>().map_err(|_| bad(n, "bad pages_viewed"))?;
        let search_page_num = match cell(14) {
            None => None,
            Some(s) => Some(s.parse::<u32>().map_err(|_| bad(n, "bad search_page_num"))?),
        };
        let frequency_of_visits = VisitFrequency::parse(&sym(15, &mut pool)?).ok_or_else(|| bad(n, "bad frequency"))?;
        let exit_class5 = ExitClass::parse(&sym(16, &mut pool)?).ok_or_else(|| bad(n, "bad exit_class"))?;
        views.push(VideoViewInstance {
            user_key,
            player_id,
            content_category,
            start_time,
            features: ViewFeatures {
                hour,
                ip,
                first_hit_referrer,
                first_hit_page,
                story_title,
                search_engine,
                city,
                isp,
                referrer_type,
                pages_viewed,
                search_page_num,
                frequency_of_visits,
            },
            exit_class5,
            early_exit: to_binary(exit_class5),
        });
    }
    Ok(views)
}

fn unescape_owned(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(o) => {
                out.push('\\');
                out.push(o);
            }
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sessionizer::{sessionize, tests::click, DEFAULT_TIMEOUT_SECONDS};

    fn video(user: &str, t: i64, player: &str, marker: u8, title: &str) -> crate::ingest::ClickEvent {
        let mut c = click(user, t, "video");
        c.player_id = Some(Arc::from(player));
        c.progress_marker = ProgressMarker::from_percent(marker as i64);
        c.story_title = Arc::from(title);
        c
    }

    fn views_for(events: &[crate::ingest::ClickEvent]) -> Vec<VideoViewInstance> {
        extract_video_views(&sessionize(events, DEFAULT_TIMEOUT_SECONDS)).0
    }

    #[test]
    fn exit_is_highest_marker() {
        let ev = [
            video("u", 100, "p", 0, "News: a"),
            video("u", 160, "p", 25, "News: a"),
            video("u", 220, "p", 50, "News: a"),
        ];
        let v = views_for(&ev);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].exit_class5, ExitClass::E50);
        assert!(!v[0].early_exit);
        assert_eq!(v[0].content_category.as_ref(), "News");

        let v = views_for(&[video("u", 100, "p", 0, "t")]);
        assert_eq!(v[0].exit_class5, ExitClass::E0);
        assert!(v[0].early_exit);

        let full: Vec<_> = [0, 25, 50, 75, 100]
            .iter()
            .enumerate()
            .map(|(i, m)| video("u", 100 + 60 * i as i64, "p", *m, "t"))
            .collect();
        assert_eq!(views_for(&full)[0].exit_class5, ExitClass::E100);
    }

    #[test]
    fn regression_is_flagged_and_max_wins() {
        let ev = [
            video("u", 100, "p", 0, "t"),
            video("u", 160, "p", 50, "t"),
            video("u", 220, "p", 25, "t"),
        ];
        let (v, warnings) = extract_video_views(&sessionize(&ev, DEFAULT_TIMEOUT_SECONDS));
        assert_eq!(v[0].exit_class5, ExitClass::E50);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn binary_merge() {
        assert!(to_binary(ExitClass::E0));
        assert!(to_binary(ExitClass::E25));
        assert!(!to_binary(ExitClass::E50));
        assert!(!to_binary(ExitClass::E75));
        assert!(!to_binary(ExitClass::E100));
    }

    #[test]
    fn timeout_starts_a_new_view() {
        let ev = [
            video("u", 100, "p", 0, "t"),
            video("u", 160, "p", 25, "t"),
            video("u", 5000, "p", 50, "t"),
        ];
        let v = views_for(&ev);
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].exit_class5, ExitClass::E25);
        assert_eq!(v[1].exit_class5, ExitClass::E50);
    }

    #[test]
    fn pages_viewed_counts_session_prefix() {
        let ev = [
            click("u", 10, "news"),
            click("u", 20, "news"),
            click("u", 30, "sports"),
            video("u", 40, "p", 0, "t"),
            video("u", 50, "p", 25, "t"),
            click("u", 60, "news"),
        ];
        let v = views_for(&ev);
        assert_eq!(v[0].features.pages_viewed, 4);
        assert_eq!(v[0].features.hour, 0);
        assert_eq!(v[0].features.referrer_type.as_ref(), "direct");
    }

    #[test]
    fn dropoff_counts() {
        let mut views = Vec::new();
        for (i, m) in [0u8, 25, 50, 75, 100].iter().enumerate() {
            for j in 0..2 {
                views.extend(views_for(&[video(&format!("u{i}{j}"), 100, "p", *m, "Tech: x")]));
            }
        }
        let c = dropoff_curve(&views, true);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].fractions, [1.0, 0.8, 0.6, 0.4, 0.2]);
        assert_eq!(c[0].view_count, 10);
        let mut csv = Vec::new();
        write_dropoff_csv(&c, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("category,marker,fraction,count\nTech,0,1,10\nTech,25,0.8,8\n"));
    }

    #[test]
    fn full_retention_curve() {
        let views: Vec<_> = (0..4)
            .flat_map(|i| {
                views_for(
                    &[0, 25, 50, 75, 100]
                        .iter()
                        .enumerate()
                        .map(|(k, m)| video(&format!("u{i}"), 100 + 60 * k as i64, "p", *m, "t"))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        assert_eq!(dropoff_curve(&views, false)[0].fractions, [1.0; 5]);
    }

    #[test]
    fn table_shape_and_missing_cells() {
        let views: Vec<_> = (0..100)
            .flat_map(|i| views_for(&[video(&format!("u{i:03}"), 100 + i, "p", 25, "t")]))
            .collect();
        let t = build_feature_table(&views).unwrap();
        assert_eq!(t.row_count(), 100);
        assert_eq!(t.columns().len(), 12);
        assert_eq!(t.column_names(), PREDICTORS.to_vec());
        match &t.column("search_page_num").unwrap().values {
            crate::table::ColumnValues::Numeric(v) => assert!(v.iter().all(Option::is_none)),
            _ => panic!("numeric expected"),
        }
        assert!(matches!(build_feature_table(&[]), Err(VideoError::EmptyInput)));
    }

    #[test]
    fn views_tsv_round_trip() {
        let mut c = video("u", 100, "p\t1", 25, "Tech: tab\there");
        c.search_page_num = Some(2);
        c.city = Some(Arc::from("South Bend"));
        let views = views_for(&[c, video("v", 200, "q", 100, "Tech: y")]);
        let mut buf = Vec::new();
        write_views_tsv(&views, &mut buf).unwrap();
        let back = read_views_tsv(&buf[..]).unwrap();
        assert_eq!(back, views);
        assert!(read_views_tsv(&b"nope\n"[..]).is_err());
    }

    #[test]
    fn category_prefix_parsing() {
        assert_eq!(category_from_title("Technology: New phone"), "Technology");
        assert_eq!(category_from_title("no prefix"), "uncategorized");
        assert_eq!(category_from_title(": empty"), "uncategorized");
    }
}
