//! Daily click-log dumps: header validation, line parsing, crawler filtering
//! and constant/redundant column pruning.
//!
//! Dump dialect: UTF-8, tab separated, one click per line, first line is a
//! header of canonical column names. A field consisting of exactly `\N` is a
//! missing value; inside other fields `\\`, `\t`, `\n` and `\r` are escapes.
//! Columns not in the canonical set are kept as opaque nominal extras.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Column, ColumnValues, FeatureTable, TableError};
use crate::util::{Interner, Sym};

pub const MISSING: &str = "\\N";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("input has no header line")]
    NoHeader,
    #[error("header is not valid UTF-8")]
    HeaderEncoding,
    #[error("table is empty")]
    EmptyTable,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Canonical dump columns. Every one must be present in a header; the
/// optional ones may hold `\N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    CookieId,
    Ip,
    Timestamp,
    Channel,
    Section,
    Subsection,
    PageUrl,
    StoryTitle,
    ReferrerUrl,
    ReferrerType,
    FirstHitPage,
    FirstHitReferrer,
    FirstHitTime,
    LastVisit,
    LastClick,
    Browser,
    City,
    Region,
    Country,
    IspDomain,
    SearchKeywords,
    SearchEngine,
    SearchPageNum,
    CookiesEnabled,
    ExcludeHit,
    NewVisit,
    VisitNumber,
    FrequencyOfVisits,
    PlayerId,
    ProgressMarker,
    ContentCategory,
}

impl Field {
    pub const ALL: [Field; 31] = [
        Field::CookieId,
        Field::Ip,
        Field::Timestamp,
        Field::Channel,
        Field::Section,
        Field::Subsection,
        Field::PageUrl,
        Field::StoryTitle,
        Field::ReferrerUrl,
        Field::ReferrerType,
        Field::FirstHitPage,
        Field::FirstHitReferrer,
        Field::FirstHitTime,
        Field::LastVisit,
        Field::LastClick,
        Field::Browser,
        Field::City,
        Field::Region,
        Field::Country,
        Field::IspDomain,
        Field::SearchKeywords,
        Field::SearchEngine,
        Field::SearchPageNum,
        Field::CookiesEnabled,
        Field::ExcludeHit,
        Field::NewVisit,
        Field::VisitNumber,
        Field::FrequencyOfVisits,
        Field::PlayerId,
        Field::ProgressMarker,
        Field::ContentCategory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::CookieId => "cookie_id",
            Field::Ip => "ip",
            Field::Timestamp => "timestamp",
            Field::Channel => "channel",
            Field::Section => "section",
            Field::Subsection => "subsection",
            Field::PageUrl => "page_url",
            Field::StoryTitle => "story_title",
            Field::ReferrerUrl => "referrer_url",
            Field::ReferrerType => "referrer_type",
            Field::FirstHitPage => "first_hit_page",
            Field::FirstHitReferrer => "first_hit_referrer",
            Field::FirstHitTime => "first_hit_time",
            Field::LastVisit => "last_visit",
            Field::LastClick => "last_click",
            Field::Browser => "browser",
            Field::City => "city",
            Field::Region => "region",
            Field::Country => "country",
            Field::IspDomain => "isp_domain",
            Field::SearchKeywords => "search_keywords",
            Field::SearchEngine => "search_engine",
            Field::SearchPageNum => "search_page_num",
            Field::CookiesEnabled => "cookies_enabled",
            Field::ExcludeHit => "exclude_hit",
            Field::NewVisit => "new_visit",
            Field::VisitNumber => "visit_number",
            Field::FrequencyOfVisits => "frequency_of_visits",
            Field::PlayerId => "player_id",
            Field::ProgressMarker => "progress_marker",
            Field::ContentCategory => "content_category",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.iter().copied().find(|f| f.name() == name)
    }

    fn optional(self) -> bool {
        matches!(
            self,
            Field::CookieId
                | Field::FirstHitTime
                | Field::LastVisit
                | Field::LastClick
                | Field::Browser
                | Field::City
                | Field::Region
                | Field::Country
                | Field::IspDomain
                | Field::SearchKeywords
                | Field::SearchEngine
                | Field::SearchPageNum
                | Field::PlayerId
                | Field::ProgressMarker
                | Field::ContentCategory
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProgressMarker {
    #[serde(rename = "0")]
    P0,
    #[serde(rename = "25")]
    P25,
    #[serde(rename = "50")]
    P50,
    #[serde(rename = "75")]
    P75,
    #[serde(rename = "100")]
    P100,
}

impl ProgressMarker {
    pub const ALL: [ProgressMarker; 5] = [
        ProgressMarker::P0,
        ProgressMarker::P25,
        ProgressMarker::P50,
        ProgressMarker::P75,
        ProgressMarker::P100,
    ];

    pub fn percent(self) -> u8 {
        match self {
            ProgressMarker::P0 => 0,
            ProgressMarker::P25 => 25,
            ProgressMarker::P50 => 50,
            ProgressMarker::P75 => 75,
            ProgressMarker::P100 => 100,
        }
    }

    pub fn from_percent(p: i64) -> Option<ProgressMarker> {
        match p {
            0 => Some(ProgressMarker::P0),
            25 => Some(ProgressMarker::P25),
            50 => Some(ProgressMarker::P50),
            75 => Some(ProgressMarker::P75),
            100 => Some(ProgressMarker::P100),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitFrequency {
    Hourly,
    Daily,
    Weekly,
    Monthly,
    Yearly,
}

impl VisitFrequency {
    pub const ALL: [VisitFrequency; 5] = [
        VisitFrequency::Hourly,
        VisitFrequency::Daily,
        VisitFrequency::Weekly,
        VisitFrequency::Monthly,
        VisitFrequency::Yearly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VisitFrequency::Hourly => "hourly",
            VisitFrequency::Daily => "daily",
            VisitFrequency::Weekly => "weekly",
            VisitFrequency::Monthly => "monthly",
            VisitFrequency::Yearly => "yearly",
        }
    }

    pub fn parse(s: &str) -> Option<VisitFrequency> {
        VisitFrequency::ALL.iter().copied().find(|f| f.as_str() == s)
    }
}

/// Identity used for sessionization: the cookie when cookies are enabled,
/// otherwise the IP address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UserKey {
    Cookie(Sym),
    Ip(Sym),
}

impl UserKey {
    /// Inverse of the `Display` form (`cookie:<id>` or `ip:<addr>`).
    pub fn parse(s: &str) -> Option<UserKey> {
        if let Some(c) = s.strip_prefix("cookie:") {
            Some(UserKey::Cookie(c.into()))
        } else {
            s.strip_prefix("ip:").map(|ip| UserKey::Ip(ip.into()))
        }
    }
}

impl fmt::Display for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UserKey::Cookie(c) => write!(f, "cookie:{c}"),
            UserKey::Ip(ip) => write!(f, "ip:{ip}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickEvent {
    pub user_key: UserKey,
    pub cookie_id: Option<Sym>,
    pub ip: Sym,
    pub timestamp: i64,
    pub channel: Sym,
    pub section: Sym,
    pub subsection: Sym,
    pub page_url: Sym,
    pub story_title: Sym,
    pub referrer_url: Sym,
    pub referrer_type: Sym,
    pub first_hit_page: Sym,
    pub first_hit_referrer: Sym,
    pub first_hit_time: Option<i64>,
    pub last_visit: Option<i64>,
    pub last_click: Option<i64>,
    pub browser: Option<Sym>,
    pub city: Option<Sym>,
    pub region: Option<Sym>,
    pub country: Option<Sym>,
    pub isp_domain: Option<Sym>,
    pub search_keywords: Option<Sym>,
    pub search_engine: Option<Sym>,
    pub search_page_num: Option<u32>,
    pub cookies_enabled: bool,
    pub exclude_hit: bool,
    pub new_visit: bool,
    pub visit_number: u32,
    pub frequency_of_visits: VisitFrequency,
    pub player_id: Option<Sym>,
    pub progress_marker: Option<ProgressMarker>,
    pub content_category: Option<Sym>,
    /// Values of the schema's extra (non-canonical) columns, in schema order.
    pub extras: Vec<Option<Sym>>,
}

impl ClickEvent {
    pub fn resolve_user_key(cookies_enabled: bool, cookie_id: Option<&Sym>, ip: &Sym) -> UserKey {
        match (cookies_enabled, cookie_id) {
            (true, Some(c)) => UserKey::Cookie(c.clone()),
            _ => UserKey::Ip(ip.clone()),
        }
    }

    /// Raw text of a canonical field as it appears in a dump (`None` = `\N`).
    pub fn field_text(&self, field: Field) -> Option<String> {
        fn s(v: &Sym) -> Option<String> {
            Some(v.to_string())
        }
        fn os(v: &Option<Sym>) -> Option<String> {
            v.as_ref().map(|x| x.to_string())
        }
        fn b(v: bool) -> Option<String> {
            Some(if v { "1" } else { "0" }.to_string())
        }
        match field {
            Field::CookieId => os(&self.cookie_id),
            Field::Ip => s(&self.ip),
            Field::Timestamp => Some(self.timestamp.to_string()),
            Field::Channel => s(&self.channel),
            Field::Section => s(&self.section),
            Field::Subsection => s(&self.subsection),
            Field::PageUrl => s(&self.page_url),
            Field::StoryTitle => s(&self.story_title),
            Field::ReferrerUrl => s(&self.referrer_url),
            Field::ReferrerType => s(&self.referrer_type),
            Field::FirstHitPage => s(&self.first_hit_page),
            Field::FirstHitReferrer => s(&self.first_hit_referrer),
            Field::FirstHitTime => self.first_hit_time.map(|t| t.to_string()),
            Field::LastVisit => self.last_visit.map(|t| t.to_string()),
            Field::LastClick => self.last_click.map(|t| t.to_string()),
            Field::Browser => os(&self.browser),
            Field::City => os(&self.city),
            Field::Region => os(&self.region),
            Field::Country => os(&self.country),
            Field::IspDomain => os(&self.isp_domain),
            Field::SearchKeywords => os(&self.search_keywords),
            Field::SearchEngine => os(&self.search_engine),
            Field::SearchPageNum => self.search_page_num.map(|n| n.to_string()),
            Field::CookiesEnabled => b(self.cookies_enabled),
            Field::ExcludeHit => b(self.exclude_hit),
            Field::NewVisit => b(self.new_visit),
            Field::VisitNumber => Some(self.visit_number.to_string()),
            Field::FrequencyOfVisits => Some(self.frequency_of_visits.as_str().to_string()),
            Field::PlayerId => os(&self.player_id),
            Field::ProgressMarker => self.progress_marker.map(|m| m.percent().to_string()),
            Field::ContentCategory => os(&self.content_category),
        }
    }
}

/// Column layout of one dump file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaMap {
    pub column_index_by_name: BTreeMap<String, usize>,
    pub declared_column_count: usize,
    canonical: [usize; 31],
    extras: Vec<(String, usize)>,
}

impl SchemaMap {
    pub fn position(&self, field: Field) -> usize {
        self.canonical[field as usize]
    }

    /// Extra column names in header order.
    pub fn extra_columns(&self) -> Vec<&str> {
        self.extras.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Validates a header row and maps canonical fields to column positions.
pub fn validate_header(header_row: &str) -> Result<SchemaMap, IngestError> {
    let header_row = header_row.strip_suffix('\n').unwrap_or(header_row);
    let header_row = header_row.strip_suffix('\r').unwrap_or(header_row);
    let names: Vec<&str> = header_row.split('\t').collect();
    let mut column_index_by_name = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if column_index_by_name.insert(name.to_string(), i).is_some() {
            return Err(IngestError::DuplicateColumn(name.to_string()));
        }
    }
    let mut canonical = [0usize; 31];
    for field in Field::ALL {
        match column_index_by_name.get(field.name()) {
            Some(&i) => canonical[field as usize] = i,
            None => return Err(IngestError::MissingColumn(field.name().to_string())),
        }
    }
    let extras = names
        .iter()
        .enumerate()
        .filter(|(_, n)| Field::from_name(n).is_none())
        .map(|(i, n)| (n.to_string(), i))
        .collect();
    Ok(SchemaMap {
        column_index_by_name,
        declared_column_count: names.len(),
        canonical,
        extras,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("field-count mismatch: expected {expected}, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("line is not valid UTF-8")]
    Encoding,
    #[error("required field {0} is missing")]
    MissingRequired(&'static str),
    #[error("malformed timestamp in {field}: {value:?}")]
    BadTimestamp { field: &'static str, value: String },
    #[error("timestamp must be positive")]
    NonPositiveTimestamp,
    #[error("first_hit_time is later than timestamp")]
    FirstHitAfterClick,
    #[error("marker outside {{0,25,50,75,100}}: {0:?}")]
    BadMarker(String),
    #[error("progress_marker and player_id must be present together")]
    MarkerPlayerMismatch,
    #[error("malformed boolean in {field}: {value:?}")]
    BadBool { field: &'static str, value: String },
    #[error("malformed integer in {field}: {value:?}")]
    BadInteger { field: &'static str, value: String },
    #[error("unknown visit frequency {0:?}")]
    BadFrequency(String),
    #[error("cookies enabled but cookie_id is missing")]
    MissingCookie,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the file, header included.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Default)]
pub struct ParsedDump {
    pub events: Vec<ClickEvent>,
    pub rejects: Vec<Reject>,
}

fn unescape(raw: &str) -> Option<std::borrow::Cow<'_, str>> {
    if raw == MISSING {
        return None;
    }
    if !raw.contains('\\') {
        return Some(std::borrow::Cow::Borrowed(raw));
    }
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
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    Some(std::borrow::Cow::Owned(out))
}

fn escape_into(out: &mut String, value: &str) {
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
}

/// Renders one optional value in the dump dialect.
pub fn encode_field(out: &mut String, value: Option<&str>) {
    match value {
        None => out.push_str(MISSING),
        Some(v) => escape_into(out, v),
    }
}

struct LineParser<'a> {
    fields: Vec<&'a str>,
    schema: &'a SchemaMap,
}

impl<'a> LineParser<'a> {
    fn raw(&self, f: Field) -> Option<std::borrow::Cow<'a, str>> {
        unescape(self.fields[self.schema.position(f)])
    }

    fn sym(&self, f: Field, pool: &mut Interner) -> Result<Option<Sym>, RejectReason> {
        let v = self.raw(f).map(|s| pool.intern(&s));
        if v.is_none() && !f.optional() {
            return Err(RejectReason::MissingRequired(f.name()));
        }
        Ok(v)
    }

    fn req(&self, f: Field, pool: &mut Interner) -> Result<Sym, RejectReason> {
        self.raw(f)
            .map(|s| pool.intern(&s))
            .ok_or(RejectReason::MissingRequired(f.name()))
    }

    fn time(&self, f: Field) -> Result<Option<i64>, RejectReason> {
        match self.raw(f) {
            None if f.optional() => Ok(None),
            None => Err(RejectReason::MissingRequired(f.name())),
            Some(s) => s.parse::<i64>().map(Some).map_err(|_| RejectReason::BadTimestamp {
                field: f.name(),
                value: s.into_owned(),
            }),
        }
    }

    fn boolean(&self, f: Field) -> Result<bool, RejectReason> {
        match self.raw(f).as_deref() {
            Some("1") | Some("true") => Ok(true),
            Some("0") | Some("false") => Ok(false),
            None => Err(RejectReason::MissingRequired(f.name())),
            Some(other) => Err(RejectReason::BadBool {
                field: f.name(),
                value: other.to_string(),
            }),
        }
    }

    fn count(&self, f: Field) -> Result<Option<u32>, RejectReason> {
        match self.raw(f) {
            None if f.optional() => Ok(None),
            None => Err(RejectReason::MissingRequired(f.name())),
            Some(s) => match s.parse::<u32>() {
                Ok(n) if n >= 1 => Ok(Some(n)),
                _ => Err(RejectReason::BadInteger {
                    field: f.name(),
                    value: s.into_owned(),
                }),
            },
        }
    }
}

/// Parses one data line (without its terminator) against `schema`.
pub fn parse_line(line: &str, schema: &SchemaMap, pool: &mut Interner) -> Result<ClickEvent, RejectReason> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != schema.declared_column_count {
        return Err(RejectReason::FieldCount {
            expected: schema.declared_column_count,
            found: fields.len(),
        });
    }
    let p = LineParser { fields, schema };

    let timestamp = p.time(Field::Timestamp)?.expect("required");
    if timestamp <= 0 {
        return Err(RejectReason::NonPositiveTimestamp);
    }
    let first_hit_time = p.time(Field::FirstHitTime)?;
    if first_hit_time.is_some_and(|t| t > timestamp) {
        return Err(RejectReason::FirstHitAfterClick);
    }
    let progress_marker = match p.raw(Field::ProgressMarker) {
        None => None,
        Some(s) => {
            let m = s
                .parse::<i64>()
                .ok()
                .and_then(ProgressMarker::from_percent)
                .ok_or_else(|| RejectReason::BadMarker(s.to_string()))?;
            Some(m)
        }
    };
    let player_id = p.sym(Field::PlayerId, pool)?;
    if player_id.is_some() != progress_marker.is_some() {
        return Err(RejectReason::MarkerPlayerMismatch);
    }
    let frequency_of_visits = match p.raw(Field::FrequencyOfVisits) {
        None => return Err(RejectReason::MissingRequired(Field::FrequencyOfVisits.name())),
        Some(s) => VisitFrequency::parse(&s).ok_or_else(|| RejectReason::BadFrequency(s.to_string()))?,
    };
    let cookies_enabled = p.boolean(Field::CookiesEnabled)?;
    let cookie_id = p.sym(Field::CookieId, pool)?;
    if cookies_enabled && cookie_id.is_none() {
        return Err(RejectReason::MissingCookie);
    }
    let ip = p.req(Field::Ip, pool)?;
    let user_key = ClickEvent::resolve_user_key(cookies_enabled, cookie_id.as_ref(), &ip);

    let extras = schema
        .extras
        .iter()
        .map(|(_, i)| unescape(p.fields[*i]).map(|s| pool.intern(&s)))
        .collect();

    Ok(ClickEvent {
        user_key,
        cookie_id,
        ip,
        timestamp,
        channel: p.req(Field::Channel, pool)?,
        section: p.req(Field::Section, pool)?,
        subsection: p.req(Field::Subsection, pool)?,
        page_url: p.req(Field::PageUrl, pool)?,
        story_title: p.req(Field::StoryTitle, pool)?,
        referrer_url: p.req(Field::ReferrerUrl, pool)?,
        referrer_type: p.req(Field::ReferrerType, pool)?,
        first_hit_page: p.req(Field::FirstHitPage, pool)?,
        first_hit_referrer: p.req(Field::FirstHitReferrer, pool)?,
        first_hit_time,
        last_visit: p.time(Field::LastVisit)?,
        last_click: p.time(Field::LastClick)?,
        browser: p.sym(Field::Browser, pool)?,
        city: p.sym(Field::City, pool)?,
        region: p.sym(Field::Region, pool)?,
        country: p.sym(Field::Country, pool)?,
        isp_domain: p.sym(Field::IspDomain, pool)?,
        search_keywords: p.sym(Field::SearchKeywords, pool)?,
        search_engine: p.sym(Field::SearchEngine, pool)?,
        search_page_num: p.count(Field::SearchPageNum)?,
        cookies_enabled,
        exclude_hit: p.boolean(Field::ExcludeHit)?,
        new_visit: p.boolean(Field::NewVisit)?,
        visit_number: p.count(Field::VisitNumber)?.expect("required"),
        frequency_of_visits,
        player_id,
        progress_marker,
        content_category: p.sym(Field::ContentCategory, pool)?,
        extras,
    })
}

/// Parses every line after the header. Never aborts: each line yields an
/// event or a reject, in file order.
pub fn parse_dump<R: BufRead>(lines: R, schema: &SchemaMap) -> io::Result<ParsedDump> {
    parse_dump_from(lines, schema, 2, &mut Interner::new())
}

fn parse_dump_from<R: BufRead>(
    mut reader: R,
    schema: &SchemaMap,
    first_line_number: usize,
    pool: &mut Interner,
) -> io::Result<ParsedDump> {
    let mut out = ParsedDump::default();
    let mut buf = Vec::new();
    let mut line_number = first_line_number;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        let parsed = match std::str::from_utf8(&buf) {
            Ok(line) => parse_line(line, schema, pool),
            Err(_) => Err(RejectReason::Encoding),
        };
        match parsed {
            Ok(e) => out.events.push(e),
            Err(reason) => out.rejects.push(Reject {
                line: line_number,
                reason,
            }),
        }
        line_number += 1;
    }
    Ok(out)
}

/// Reads the header and then all data lines of one dump.
pub fn read_dump<R: BufRead>(reader: R) -> Result<(SchemaMap, ParsedDump), IngestError> {
    read_dump_with(reader, &mut Interner::new())
}

/// Like [`read_dump`] but sharing a string pool across files.
pub fn read_dump_with<R: BufRead>(mut reader: R, pool: &mut Interner) -> Result<(SchemaMap, ParsedDump), IngestError> {
    let mut header = Vec::new();
    if reader.read_until(b'\n', &mut header)? == 0 {
        return Err(IngestError::NoHeader);
    }
    let header = std::str::from_utf8(&header).map_err(|_| IngestError::HeaderEncoding)?;
    let schema = validate_header(header)?;
    let parsed = parse_dump_from(reader, &schema, 2, pool)?;
    Ok((schema, parsed))
}

/// Events plus the names of their extra columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventArchive {
    pub extra_columns: Vec<String>,
    pub events: Vec<ClickEvent>,
}

impl EventArchive {
    pub fn new(extra_columns: Vec<String>, events: Vec<ClickEvent>) -> Self {
        EventArchive { extra_columns, events }
    }

    /// Appends events parsed under another schema, aligning extras by name
    /// (columns unknown to one side become missing).
    pub fn merge(&mut self, schema_extras: &[&str], events: Vec<ClickEvent>) {
        for name in schema_extras {
            if !self.extra_columns.iter().any(|c| c == name) {
                self.extra_columns.push(name.to_string());
                for e in &mut self.events {
                    e.extras.push(None);
                }
            }
        }
        let positions: Vec<Option<usize>> = self
            .extra_columns
            .iter()
            .map(|c| schema_extras.iter().position(|n| n == c))
            .collect();
        self.events.extend(events.into_iter().map(|mut e| {
            let old = std::mem::take(&mut e.extras);
            e.extras = positions.iter().map(|p| p.and_then(|i| old[i].clone())).collect();
            e
        }));
    }

    pub fn header(&self) -> String {
        let mut names: Vec<&str> = Field::ALL.iter().map(|f| f.name()).collect();
        names.extend(self.extra_columns.iter().map(String::as_str));
        names.join("\t")
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header())?;
        let mut line = String::with_capacity(512);
        for e in &self.events {
            line.clear();
            render_event(&mut line, e);
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<(EventArchive, Vec<Reject>), IngestError> {
        let (schema, parsed) = read_dump(reader)?;
        let extras = schema.extra_columns().into_iter().map(String::from).collect();
        Ok((EventArchive::new(extras, parsed.events), parsed.rejects))
    }
}

/// Appends one event as a dump line (no terminator), canonical columns first.
pub fn render_event(out: &mut String, e: &ClickEvent) {
    for (i, field) in Field::ALL.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        encode_field(out, e.field_text(*field).as_deref());
    }
    for extra in &e.extras {
        out.push('\t');
        encode_field(out, extra.as_deref());
    }
}

/// Drops rows flagged as crawler traffic, preserving order.
pub fn filter_crawlers(events: Vec<ClickEvent>) -> Vec<ClickEvent> {
    events.into_iter().filter(|e| !e.exclude_hit).collect()
}

/// One nominal column per canonical and extra field, holding the raw text.
pub fn archive_table(archive: &EventArchive) -> Result<FeatureTable, IngestError> {
    let mut pool = Interner::new();
    let mut columns: Vec<Column> = Field::ALL
        .iter()
        .map(|f| Column {
            name: f.name().to_string(),
            values: ColumnValues::Nominal(
                archive
                    .events
                    .iter()
                    .map(|e| e.field_text(*f).map(|s| pool.intern(&s)))
                    .collect(),
            ),
        })
        .collect();
    for (i, name) in archive.extra_columns.iter().enumerate() {
        columns.push(Column {
            name: name.clone(),
            values: ColumnValues::Nominal(archive.events.iter().map(|e| e.extras[i].clone()).collect()),
        });
    }
    Ok(FeatureTable::new(columns, None)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub constant_columns: Vec<String>,
    /// Sets of row-by-row identical columns; the first (smallest) name of
    /// each group is the one kept.
    pub redundant_groups: Vec<Vec<String>>,
    pub kept_columns: Vec<String>,
}

impl PruneReport {
    /// Columns participating in any redundant group, kept member included.
    pub fn redundant_column_count(&self) -> usize {
        self.redundant_groups.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Drops constant columns and all but the lexicographically first member of
/// every group of value-identical columns. The class column is untouched.
pub fn prune_columns(table: &FeatureTable) -> Result<(FeatureTable, PruneReport), IngestError> {
    if table.row_count() == 0 || table.columns().is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let cols = table.columns();
    let mut constant_columns = Vec::new();
    let mut candidates = Vec::new();
    for (i, c) in cols.iter().enumerate() {
        if c.values.is_constant() {
            constant_columns.push(c.name.clone());
        } else {
            candidates.push(i);
        }
    }

    // Bucket by a content fingerprint, then confirm exact equality.
    let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
    for &i in &candidates {
        buckets.entry(fingerprint(&cols[i].values)).or_default().push(i);
    }
    let mut assigned = vec![false; cols.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &candidates {
        if assigned[i] {
            continue;
        }
        let bucket = &buckets[&fingerprint(&cols[i].values)];
        let mut group = vec![i];
        for &j in bucket {
            if j != i && !assigned[j] && cols[i].values.same_values(&cols[j].values) {
                group.push(j);
            }
        }
        for &j in &group {
            assigned[j] = true;
        }
        if group.len() > 1 {
            groups.push(group);
        }
    }

    let mut dropped = vec![false; cols.len()];
    for name in &constant_columns {
        let i = cols.iter().position(|c| &c.name == name).expect("present");
        dropped[i] = true;
    }
    let mut redundant_groups = Vec::new();
    for group in &groups {
        let mut names: Vec<(String, usize)> = group.iter().map(|&i| (cols[i].name.clone(), i)).collect();
        names.sort();
        for (_, i) in names.iter().skip(1) {
            dropped[*i] = true;
        }
        redundant_groups.push(names.into_iter().map(|(n, _)| n).collect::<Vec<_>>());
    }
    redundant_groups.sort();

    let kept: Vec<Column> = cols
        .iter()
        .zip(&dropped)
        .filter(|(_, d)| !**d)
        .map(|(c, _)| c.clone())
        .collect();
    let kept_columns = kept.iter().map(|c| c.name.clone()).collect();
    let pruned = FeatureTable::new(kept, table.class().cloned())?;
    Ok((
        pruned,
        PruneReport {
            constant_columns,
            redundant_groups,
            kept_columns,
        },
    ))
}

fn fingerprint(values: &ColumnValues) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    match values {
        ColumnValues::Nominal(v) => {
            0u8.hash(&mut h);
            for x in v {
                x.as_deref().hash(&mut h);
            }
        }
        ColumnValues::Numeric(v) => {
            1u8.hash(&mut h);
            for x in v {
                x.map(|f| if f == 0.0 { 0u64 } else { f.to_bits() }).hash(&mut h);
            }
        }
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header() -> String {
        Field::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join("\t")
    }

    fn line(overrides: &[(Field, &str)]) -> String {
        Field::ALL
            .iter()
            .map(|f| {
                if let Some((_, v)) = overrides.iter().find(|(g, _)| g == f) {
                    return v.to_string();
                }
                match f {
                    Field::CookieId => "c1",
                    Field::Ip => "10.0.0.1",
                    Field::Timestamp => "1000",
                    Field::FirstHitTime => "900",
                    Field::LastVisit | Field::LastClick => "\\N",
                    Field::SearchPageNum => "\\N",
                    Field::CookiesEnabled => "1",
                    Field::ExcludeHit | Field::NewVisit => "0",
                    Field::VisitNumber => "3",
                    Field::FrequencyOfVisits => "daily",
                    Field::PlayerId | Field::ProgressMarker | Field::ContentCategory => "\\N",
                    _ => "x",
                }
                .to_string()
            })
            .collect::<Vec<_>>()
            .join("\t")
    }

    #[test]
    fn full_header_maps_every_field() {
        let schema = validate_header(&header()).unwrap();
        assert_eq!(schema.declared_column_count, 31);
        for (i, f) in Field::ALL.iter().enumerate() {
            assert_eq!(schema.position(*f), i);
        }
        assert!(schema.extra_columns().is_empty());
    }

    #[test]
    fn missing_player_column_is_reported() {
        let h: Vec<&str> = Field::ALL.iter().map(|f| f.name()).filter(|n| *n != "player_id").collect();
        match validate_header(&h.join("\t")) {
            Err(IngestError::MissingColumn(name)) => assert_eq!(name, "player_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_column_is_reported() {
        let h = format!("{}\tcity", header());
        assert!(matches!(validate_header(&h), Err(IngestError::DuplicateColumn(n)) if n == "city"));
    }

    #[test]
    fn wide_header_keeps_extras() {
        let mut h = header();
        for i in 0..130 {
            h.push_str(&format!("\tprop_{i:03}"));
        }
        let schema = validate_header(&h).unwrap();
        assert_eq!(schema.declared_column_count, 161);
        assert_eq!(schema.extra_columns().len(), 130);
        assert_eq!(schema.extra_columns()[0], "prop_000");
    }

    #[test]
    fn marker_line_parses() {
        let schema = validate_header(&header()).unwrap();
        let l = line(&[(Field::PlayerId, "pl-7"), (Field::ProgressMarker, "75")]);
        let e = parse_line(&l, &schema, &mut Interner::new()).unwrap();
        assert_eq!(e.progress_marker, Some(ProgressMarker::P75));
        assert_eq!(e.user_key, UserKey::Cookie("c1".into()));
    }

    #[test]
    fn off_grid_marker_is_rejected() {
        let schema = validate_header(&header()).unwrap();
        let l = line(&[(Field::PlayerId, "pl-7"), (Field::ProgressMarker, "60")]);
        let err = parse_line(&l, &schema, &mut Interner::new()).unwrap_err();
        assert_eq!(err, RejectReason::BadMarker("60".into()));
        assert_eq!(err.to_string(), "marker outside {0,25,50,75,100}: \"60\"");
    }

    #[test]
    fn marker_requires_player() {
        let schema = validate_header(&header()).unwrap();
        let l = line(&[(Field::ProgressMarker, "0")]);
        assert_eq!(
            parse_line(&l, &schema, &mut Interner::new()).unwrap_err(),
            RejectReason::MarkerPlayerMismatch
        );
    }

    #[test]
    fn cookieless_user_is_keyed_by_ip() {
        let schema = validate_header(&header()).unwrap();
        let l = line(&[(Field::CookiesEnabled, "0"), (Field::CookieId, "\\N")]);
        let e = parse_line(&l, &schema, &mut Interner::new()).unwrap();
        assert_eq!(e.user_key, UserKey::Ip("10.0.0.1".into()));
    }

    #[test]
    fn bad_rows_are_rejected_not_fatal() {
        let schema = validate_header(&header()).unwrap();
        let text = [
            line(&[]),
            line(&[(Field::Timestamp, "yesterday")]),
            "too\tfew".to_string(),
            line(&[(Field::Timestamp, "0")]),
            line(&[(Field::FirstHitTime, "5000")]),
            line(&[(Field::ExcludeHit, "maybe")]),
            line(&[(Field::FrequencyOfVisits, "fortnightly")]),
            line(&[(Field::VisitNumber, "0")]),
            line(&[(Field::CookieId, "\\N")]),
            line(&[(Field::Section, "\\N")]),
            line(&[]),
        ]
        .join("\n");
        let parsed = parse_dump(text.as_bytes(), &schema).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.rejects.len(), 9);
        assert_eq!(parsed.rejects[0].line, 3);
        assert!(matches!(parsed.rejects[0].reason, RejectReason::BadTimestamp { .. }));
        assert!(matches!(parsed.rejects[1].reason, RejectReason::FieldCount { expected: 31, found: 2 }));
        assert_eq!(parsed.rejects[2].reason, RejectReason::NonPositiveTimestamp);
        assert_eq!(parsed.rejects[3].reason, RejectReason::FirstHitAfterClick);
        assert_eq!(parsed.rejects[7].reason, RejectReason::MissingCookie);
        assert_eq!(parsed.rejects[8].reason, RejectReason::MissingRequired("section"));
    }

    #[test]
    fn empty_stream_yields_nothing() {
        let schema = validate_header(&header()).unwrap();
        let parsed = parse_dump(&b""[..], &schema).unwrap();
        assert!(parsed.events.is_empty() && parsed.rejects.is_empty());
        assert!(matches!(read_dump(&b""[..]), Err(IngestError::NoHeader)));
    }

    #[test]
    fn crlf_and_invalid_utf8_lines() {
        let schema = validate_header(&header()).unwrap();
        let mut bytes = format!("{}\r\n", line(&[])).into_bytes();
        bytes.extend_from_slice(b"\xff\xfe\n");
        let parsed = parse_dump(&bytes[..], &schema).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.rejects[0].reason, RejectReason::Encoding);
    }

    #[test]
    fn escapes_round_trip() {
        let mut out = String::new();
        encode_field(&mut out, Some("a\tb\\N\nc\\"));
        assert_eq!(out, "a\\tb\\\\N\\nc\\\\");
        assert_eq!(unescape(&out).unwrap(), "a\tb\\N\nc\\");
        assert_eq!(unescape("\\N"), None);
        assert_eq!(unescape("\\q").unwrap(), "\\q");
    }

    fn event(exclude: bool, t: i64) -> ClickEvent {
        let schema = validate_header(&header()).unwrap();
        let l = line(&[(Field::ExcludeHit, if exclude { "1" } else { "0" }), (Field::Timestamp, &t.to_string())]);
        parse_line(&l, &schema, &mut Interner::new()).unwrap()
    }

    #[test]
    fn crawler_filter_cases() {
        let events: Vec<ClickEvent> = (0..10).map(|i| event(i % 3 == 0 && i < 9, 1000 + i)).collect();
        let kept = filter_crawlers(events.clone());
        assert_eq!(kept.len(), 7);
        assert!(kept.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(filter_crawlers(vec![event(true, 1000), event(true, 1001)]).is_empty());
        let clean: Vec<ClickEvent> = (0..4).map(|i| event(false, 1000 + i)).collect();
        assert_eq!(filter_crawlers(clean.clone()), clean);
    }

    #[test]
    fn constant_column_is_dropped() {
        let t = FeatureTable::new(
            vec![
                Column::nominal("flat", (0..1000).map(|_| Some("k"))),
                Column::numeric("x", (0..1000).map(|i| Some(i as f64))),
            ],
            None,
        )
        .unwrap();
        let (pruned, report) = prune_columns(&t).unwrap();
        assert_eq!(report.constant_columns, vec!["flat"]);
        assert_eq!(report.kept_columns, vec!["x"]);
        assert_eq!(pruned.column_names(), vec!["x"]);
    }

    #[test]
    fn duplicate_pair_keeps_first_name() {
        let vals: Vec<Option<&str>> = vec![Some("a"), Some("b"), None, Some("a")];
        let t = FeatureTable::new(
            vec![
                Column::nominal("zeta", vals.clone()),
                Column::nominal("alpha", vals),
                Column::nominal("other", [Some("1"), Some("1"), Some("2"), Some("2")]),
            ],
            None,
        )
        .unwrap();
        let (pruned, report) = prune_columns(&t).unwrap();
        assert_eq!(report.redundant_groups, vec![vec!["alpha".to_string(), "zeta".to_string()]]);
        assert_eq!(pruned.column_names(), vec!["alpha", "other"]);
        assert!(matches!(
            prune_columns(&FeatureTable::new(vec![], None).unwrap()),
            Err(IngestError::EmptyTable)
        ));
    }

    #[test]
    fn prune_report_json_keys() {
        let r = PruneReport {
            constant_columns: vec!["c".into()],
            redundant_groups: vec![vec!["a".into(), "b".into()]],
            kept_columns: vec!["a".into()],
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v.get("constant_columns").is_some());
        assert!(v.get("redundant_groups").is_some());
        assert!(v.get("kept_columns").is_some());
    }

    #[test]
    fn merge_aligns_extras_by_name() {
        let mut a = EventArchive::new(vec!["x".into()], vec![]);
        let mut e = event(false, 1000);
        e.extras = vec![Some("y-val".into()), Some("x-val".into())];
        a.merge(&["y", "x"], vec![e]);
        assert_eq!(a.extra_columns, vec!["x", "y"]);
        assert_eq!(a.events[0].extras, vec![Some("x-val".into()), Some("y-val".into())]);
    }
}
