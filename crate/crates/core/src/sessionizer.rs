//! Groups clicks into per-user sessions with an inactivity timeout and
//! aggregates sessions into section paths and section-transition graphs.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use serde::Serialize;

use crate::ingest::{ClickEvent, UserKey};
use crate::util::Sym;

/// Thirty minutes.
pub const DEFAULT_TIMEOUT_SECONDS: i64 = 30 * 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user_key: UserKey,
    pub clicks: Vec<ClickEvent>,
    pub start_time: i64,
    pub end_time: i64,
    pub entry_referrer_type: Sym,
    pub pages_viewed: usize,
}

impl Session {
    fn from_clicks(clicks: Vec<ClickEvent>) -> Session {
        let first = &clicks[0];
        Session {
            user_key: first.user_key.clone(),
            start_time: first.timestamp,
            end_time: clicks[clicks.len() - 1].timestamp,
            entry_referrer_type: first.referrer_type.clone(),
            pages_viewed: clicks.len(),
            clicks,
        }
    }
}

/// Splits `events` into sessions. A new session starts whenever the gap to
/// the same user's previous click strictly exceeds `timeout_seconds`.
/// Same-user clicks with equal timestamps keep their input order.
///
/// Output is ordered by user key, then start time.
pub fn sessionize(events: &[ClickEvent], timeout_seconds: i64) -> Vec<Session> {
    assert!(timeout_seconds > 0, "timeout must be positive");
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&events[a], &events[b]);
        ea.user_key
            .cmp(&eb.user_key)
            .then(ea.timestamp.cmp(&eb.timestamp))
            .then(a.cmp(&b))
    });

    let mut sessions = Vec::new();
    let mut current: Vec<ClickEvent> = Vec::new();
    for idx in order {
        let e = &events[idx];
        if let Some(prev) = current.last() {
            if prev.user_key != e.user_key || e.timestamp - prev.timestamp > timeout_seconds {
                sessions.push(Session::from_clicks(std::mem::take(&mut current)));
            }
        }
        current.push(e.clone());
    }
    if !current.is_empty() {
        sessions.push(Session::from_clicks(current));
    }
    sessions
}

/// Section of each click, consecutive repeats collapsed into counts.
pub fn session_path(session: &Session) -> Vec<(Sym, usize)> {
    let mut path: Vec<(Sym, usize)> = Vec::new();
    for c in &session.clicks {
        match path.last_mut() {
            Some((s, n)) if *s == c.section => *n += 1,
            _ => path.push((c.section.clone(), 1)),
        }
    }
    path
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectionGraph {
    /// `(section, clicks)`, busiest first, ties by name.
    pub nodes: Vec<(String, u64)>,
    /// `(from, to, traversals)`, sorted by endpoints.
    pub edges: Vec<(String, String, u64)>,
}

impl SectionGraph {
    pub fn write_edges_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "from,to,count")?;
        for (a, b, n) in &self.edges {
            writeln!(w, "{},{},{}", csv_field(a), csv_field(b), n)?;
        }
        Ok(())
    }

    pub fn write_nodes_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "section,visits")?;
        for (s, n) in &self.nodes {
            writeln!(w, "{},{}", csv_field(s), n)?;
        }
        Ok(())
    }
}

/// Quotes a CSV field when it contains a delimiter, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Transition graph over the `top_k` sections by click volume. Edges count
/// consecutive same-session clicks moving between two distinct kept sections.
pub fn section_graph(sessions: &[Session], top_k: usize) -> SectionGraph {
    assert!(top_k >= 1, "top_k must be at least 1");
    let mut visits: HashMap<&str, u64> = HashMap::new();
    for s in sessions {
        for c in &s.clicks {
            *visits.entry(&c.section).or_default() += 1;
        }
    }
    let mut nodes: Vec<(String, u64)> = visits.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    nodes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    nodes.truncate(top_k);
    let kept: std::collections::HashSet<&str> = nodes.iter().map(|(s, _)| s.as_str()).collect();

    let mut edges: BTreeMap<(String, String), u64> = BTreeMap::new();
    for s in sessions {
        for pair in s.clicks.windows(2) {
            let (a, b) = (&pair[0].section, &pair[1].section);
            if a != b && kept.contains(a.as_ref()) && kept.contains(b.as_ref()) {
                *edges.entry((a.to_string(), b.to_string())).or_default() += 1;
            }
        }
    }
    SectionGraph {
        nodes,
        edges: edges.into_iter().map(|((a, b), n)| (a, b, n)).collect(),
    }
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    user_key: String,
    start_time: i64,
    end_time: i64,
    clicks: usize,
    path: Vec<(&'a str, usize)>,
}

/// One JSON object per line: user key, start/end, click count, section path.
pub fn write_sessions_jsonl<W: Write>(sessions: &[Session], mut w: W) -> io::Result<()> {
    for s in sessions {
        let path = session_path(s);
        let record = SessionRecord {
            user_key: s.user_key.to_string(),
            start_time: s.start_time,
            end_time: s.end_time,
            clicks: s.clicks.len(),
            path: path.iter().map(|(sec, n)| (sec.as_ref(), *n)).collect(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
