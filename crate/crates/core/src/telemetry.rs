//! Event and document data model, plus the JSONL log interchange format.
//!
//! A log is UTF-8 text with one JSON object per line. Each object carries a
//! `kind` tag:
//!
//! ```text
//! {"kind":"event","doc":"d1","author":"a1","ts":1000,"cmd":"Bold"}
//! {"kind":"content","doc":"d1","ts":2000,"pages":1,"sections":1,"paragraphs":3,"lines":12,"words":120,"chars":700}
//! ```
//!
//! Unknown extra fields are ignored. Malformed lines never abort a parse;
//! they are reported as [`ParseDiagnostic`]s and skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch.
pub type Millis = u64;

pub const HOUR_MS: Millis = 3_600_000;
pub const DAY_MS: Millis = 24 * HOUR_MS;

/// One timestamped command issued by one author on one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    #[serde(rename = "doc")]
    pub doc_id: String,
    #[serde(rename = "author")]
    pub author_id: String,
    #[serde(rename = "ts")]
    pub timestamp: Millis,
    #[serde(rename = "cmd")]
    pub command: String,
}

impl TelemetryEvent {
    pub fn new(
        doc_id: impl Into<String>,
        author_id: impl Into<String>,
        timestamp: Millis,
        command: impl Into<String>,
    ) -> Self {
        Self { doc_id: doc_id.into(), author_id: author_id.into(), timestamp, command: command.into() }
    }
}

/// Document size counters read at one instant. The counts are independent
/// readings; no relation between them is assumed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentSnapshot {
    #[serde(rename = "doc")]
    pub doc_id: String,
    #[serde(rename = "ts")]
    pub timestamp: Millis,
    #[serde(rename = "pages")]
    pub page_count: u64,
    #[serde(rename = "sections")]
    pub section_count: u64,
    #[serde(rename = "paragraphs")]
    pub paragraph_count: u64,
    #[serde(rename = "lines")]
    pub line_count: u64,
    #[serde(rename = "words")]
    pub word_count: u64,
    #[serde(rename = "chars")]
    pub character_count: u64,
}

/// A single line of the interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Event(TelemetryEvent),
    Content(ContentSnapshot),
}

impl Record {
    pub fn doc_id(&self) -> &str {
        match self {
            Record::Event(e) => &e.doc_id,
            Record::Content(c) => &c.doc_id,
        }
    }

    /// Serialize as one JSONL line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Record::Event(e) => {
                if e.doc_id.is_empty() {
                    return Err("empty doc id".into());
                }
                if e.author_id.is_empty() {
                    return Err("empty author id".into());
                }
                Ok(())
            }
            Record::Content(c) if c.doc_id.is_empty() => Err("empty doc id".into()),
            Record::Content(_) => Ok(()),
        }
    }
}

/// A skipped input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<TelemetryEvent>,
    pub snapshots: Vec<ContentSnapshot>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

/// Parse a JSONL log stream. Only a failing reader is fatal; malformed lines
/// become diagnostics. Blank lines are skipped silently.
pub fn parse_log_stream<R: BufRead>(mut input: R) -> io::Result<ParsedLog> {
    let mut parsed = ParsedLog::default();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim_end_matches(['\n', '\r']),
            Err(e) => {
                parsed.diagnostics.push(ParseDiagnostic { line: line_no, reason: format!("invalid UTF-8: {e}") });
                continue;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        match parse_line(text) {
            Ok(Record::Event(e)) => parsed.events.push(e),
            Ok(Record::Content(c)) => parsed.snapshots.push(c),
            Err(reason) => parsed.diagnostics.push(ParseDiagnostic { line: line_no, reason }),
        }
    }
    Ok(parsed)
}

fn parse_line(text: &str) -> Result<Record, String> {
    let record: Record = serde_json::from_str(text).map_err(|e| e.to_string())?;
    record.validate()?;
    Ok(record)
}

/// Write records as JSONL, one per line.
pub fn write_records<'a, W, I>(mut out: W, records: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Record>,
{
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// All records of one document, time-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTimeline {
    pub doc_id: String,
    pub events: Vec<TelemetryEvent>,
    pub content_snapshots: Vec<ContentSnapshot>,
    pub creation_time: Millis,
    pub last_activity_time: Millis,
    pub authors: BTreeSet<String>,
}

impl DocumentTimeline {
    /// Build a timeline from the records of a single document. Returns `None`
    /// when there are no events. Sorting is stable, so equal timestamps keep
    /// input order.
    pub fn from_records(
        doc_id: impl Into<String>,
        mut events: Vec<TelemetryEvent>,
        mut content_snapshots: Vec<ContentSnapshot>,
    ) -> Option<Self> {
        events.sort_by_key(|e| e.timestamp);
        content_snapshots.sort_by_key(|c| c.timestamp);
        let creation_time = events.first()?.timestamp;
        let last_activity_time = events.last()?.timestamp;
        let authors = events.iter().map(|e| e.author_id.clone()).collect();
        Some(Self { doc_id: doc_id.into(), events, content_snapshots, creation_time, last_activity_time, authors })
    }

    pub fn lifetime(&self) -> Millis {
        self.last_activity_time - self.creation_time
    }

    pub fn author_count(&self) -> usize {
        self.authors.len()
    }

    /// Events with `timestamp <= cutoff`.
    pub fn events_until(&self, cutoff: Millis) -> &[TelemetryEvent] {
        let end = self.events.partition_point(|e| e.timestamp <= cutoff);
        &self.events[..end]
    }

    /// Latest content snapshot with `timestamp <= cutoff`.
    pub fn content_at(&self, cutoff: Millis) -> Option<&ContentSnapshot> {
        let end = self.content_snapshots.partition_point(|c| c.timestamp <= cutoff);
        end.checked_sub(1).map(|i| &self.content_snapshots[i])
    }
}

pub type Corpus = BTreeMap<String, DocumentTimeline>;

/// Route events and snapshots into per-document timelines. Documents that
/// only have content snapshots are dropped.
pub fn build_timelines(events: Vec<TelemetryEvent>, snapshots: Vec<ContentSnapshot>) -> Corpus {
    let mut by_doc: BTreeMap<String, (Vec<TelemetryEvent>, Vec<ContentSnapshot>)> = BTreeMap::new();
    for e in events {
        by_doc.entry(e.doc_id.clone()).or_default().0.push(e);
    }
    for s in snapshots {
        if let Some(slot) = by_doc.get_mut(&s.doc_id) {
            slot.1.push(s);
        }
    }
    by_doc
        .into_iter()
        .filter_map(|(doc, (ev, sn))| DocumentTimeline::from_records(doc.clone(), ev, sn).map(|t| (doc, t)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub min_lifetime_ms: Millis,
    pub min_authors: usize,
    pub max_authors: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { min_lifetime_ms: HOUR_MS, min_authors: 2, max_authors: 10 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid filter: {0}")]
pub struct FilterError(String);

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.min_authors < 1 {
            return Err(FilterError("min_authors must be at least 1".into()));
        }
        if self.max_authors < self.min_authors {
            return Err(FilterError(format!(
                "max_authors {} is below min_authors {}",
                self.max_authors, self.min_authors
            )));
        }
        Ok(())
    }

    pub fn keeps(&self, timeline: &DocumentTimeline) -> bool {
        let authors = timeline.author_count();
        timeline.lifetime() >= self.min_lifetime_ms && (self.min_authors..=self.max_authors).contains(&authors)
    }
}

/// Keep documents whose lifetime and author count pass `params`.
pub fn filter_corpus(corpus: Corpus, params: &FilterParams) -> Result<Corpus, FilterError> {
    params.validate()?;
    Ok(corpus.into_iter().filter(|(_, t)| params.keeps(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(doc: &str, author: &str, ts: Millis, cmd: &str) -> TelemetryEvent {
        TelemetryEvent::new(doc, author, ts, cmd)
    }

    #[test]
    fn parses_event_line() {
        let log = r#"{"kind":"event","doc":"d1","author":"a1","ts":1000,"cmd":"Bold"}"#;
        let parsed = parse_log_stream(log.as_bytes()).unwrap();
        assert_eq!(parsed.events, vec![ev("d1", "a1", 1000, "Bold")]);
        assert!(parsed.snapshots.is_empty());
        assert!(parsed.diagnostics.is_empty());
    }

    #[test]
    fn parses_content_line_and_ignores_extra_fields() {
        let log = r#"{"kind":"content","doc":"d1","ts":2000,"words":120,"pages":1,"sections":1,"paragraphs":4,"lines":10,"chars":650,"extra":true}"#;
        let parsed = parse_log_stream(log.as_bytes()).unwrap();
        assert_eq!(parsed.snapshots.len(), 1);
        let s = &parsed.snapshots[0];
        assert_eq!((s.word_count, s.page_count, s.character_count), (120, 1, 650));
    }

    #[test]
    fn malformed_lines_become_diagnostics() {
        let log = "not json\n\
            {\"kind\":\"event\",\"doc\":\"d1\",\"author\":\"a1\",\"ts\":1,\"cmd\":\"Bold\"}\n\
            {\"kind\":\"event\",\"doc\":\"d1\",\"author\":\"a1\",\"ts\":-5,\"cmd\":\"Bold\"}\n\
            {\"kind\":\"event\",\"doc\":\"\",\"author\":\"a1\",\"ts\":5,\"cmd\":\"Bold\"}\n\
            {\"kind\":\"banana\",\"doc\":\"d1\"}\n\
            \n";
        let parsed = parse_log_stream(log.as_bytes()).unwrap();
        assert_eq!(parsed.events.len(), 1);
        let lines: Vec<usize> = parsed.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![1, 3, 4, 5]);
    }

    #[test]
    fn invalid_utf8_is_a_diagnostic_not_an_error() {
        let mut bytes = b"{\"kind\":\"event\",\"doc\":\"d\xff\",\"author\":\"a\",\"ts\":1,\"cmd\":\"X\"}\n".to_vec();
        bytes.extend_from_slice(b"{\"kind\":\"event\",\"doc\":\"d\",\"author\":\"a\",\"ts\":1,\"cmd\":\"X\"}\n");
        let parsed = parse_log_stream(&bytes[..]).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.diagnostics.len(), 1);
        assert_eq!(parsed.diagnostics[0].line, 1);
    }

    #[test]
    fn failing_reader_is_fatal() {
        struct Broken;
        impl io::Read for Broken {
            fn read(&mut self, _: &mut [u8]) -> io::Result<usize> {
                Err(io::Error::other("disk on fire"))
            }
        }
        assert!(parse_log_stream(io::BufReader::new(Broken)).is_err());
    }

    #[test]
    fn timelines_have_lifetime_and_routing() {
        let corpus =
            build_timelines(vec![ev("d1", "a", 100, "X"), ev("d2", "b", 50, "X"), ev("d1", "b", 500, "X")], vec![]);
        assert_eq!(corpus.len(), 2);
        let d1 = &corpus["d1"];
        assert_eq!((d1.creation_time, d1.lifetime(), d1.events.len()), (100, 400, 2));
        assert_eq!(corpus["d2"].lifetime(), 0);
        assert_eq!(d1.author_count(), 2);
    }

    #[test]
    fn equal_timestamps_keep_input_order() {
        let corpus =
            build_timelines(vec![ev("d", "a", 5, "First"), ev("d", "a", 1, "Zero"), ev("d", "a", 5, "Second")], vec![]);
        let cmds: Vec<&str> = corpus["d"].events.iter().map(|e| e.command.as_str()).collect();
        assert_eq!(cmds, ["Zero", "First", "Second"]);
    }

    #[test]
    fn snapshots_without_events_are_dropped() {
        let snap = ContentSnapshot { doc_id: "ghost".into(), ..Default::default() };
        let corpus = build_timelines(vec![], vec![snap]);
        assert!(corpus.is_empty());
    }

    fn doc_with(lifetime: Millis, authors: usize) -> DocumentTimeline {
        let mut events: Vec<_> = (0..authors).map(|a| ev("d", &format!("a{a}"), 0, "X")).collect();
        events.push(ev("d", "a0", lifetime, "X"));
        DocumentTimeline::from_records("d", events, vec![]).unwrap()
    }

    #[test]
    fn default_filter_boundaries() {
        let p = FilterParams::default();
        assert!(!p.keeps(&doc_with(30 * 60 * 1000, 3)));
        assert!(!p.keeps(&doc_with(2 * HOUR_MS, 1)));
        assert!(p.keeps(&doc_with(2 * HOUR_MS, 2)));
        assert!(p.keeps(&doc_with(HOUR_MS, 10)));
        assert!(!p.keeps(&doc_with(HOUR_MS, 11)));
    }

    #[test]
    fn filter_rejects_inverted_bounds() {
        let p = FilterParams { min_authors: 4, max_authors: 3, ..Default::default() };
        assert!(filter_corpus(Corpus::new(), &p).is_err());
        let p = FilterParams { min_authors: 0, ..Default::default() };
        assert!(filter_corpus(Corpus::new(), &p).is_err());
    }

    #[test]
    fn cutoff_queries() {
        let snaps = vec![
            ContentSnapshot { doc_id: "d".into(), timestamp: 10, word_count: 1, ..Default::default() },
            ContentSnapshot { doc_id: "d".into(), timestamp: 20, word_count: 2, ..Default::default() },
        ];
        let t = DocumentTimeline::from_records(
            "d",
            vec![ev("d", "a", 0, "X"), ev("d", "a", 15, "Y"), ev("d", "a", 30, "Z")],
            snaps,
        )
        .unwrap();
        assert_eq!(t.events_until(15).len(), 2);
        assert_eq!(t.events_until(14).len(), 1);
        assert!(t.content_at(9).is_none());
        assert_eq!(t.content_at(19).unwrap().word_count, 1);
        assert_eq!(t.content_at(20).unwrap().word_count, 2);
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        let id = "[a-zA-Z0-9_é\\-]{1,8}";
        prop_oneof![
            (id, id, any::<u64>(), "[A-Za-z]{1,12}")
                .prop_map(|(d, a, ts, c)| { Record::Event(TelemetryEvent::new(d, a, ts, c)) }),
            (id, any::<u64>(), proptest::array::uniform6(any::<u32>())).prop_map(|(d, ts, n)| {
                Record::Content(ContentSnapshot {
                    doc_id: d,
                    timestamp: ts,
                    page_count: n[0] as u64,
                    section_count: n[1] as u64,
                    paragraph_count: n[2] as u64,
                    line_count: n[3] as u64,
                    word_count: n[4] as u64,
                    character_count: n[5] as u64,
                })
            }),
        ]
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(records in proptest::collection::vec(arb_record(), 0..30)) {
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            let parsed = parse_log_stream(&buf[..]).unwrap();
            prop_assert!(parsed.diagnostics.is_empty());
            let events: Vec<_> = records.iter().filter_map(|r| match r { Record::Event(e) => Some(e.clone()), _ => None }).collect();
            let snaps: Vec<_> = records.iter().filter_map(|r| match r { Record::Content(c) => Some(c.clone()), _ => None }).collect();
            prop_assert_eq!(parsed.events, events);
            prop_assert_eq!(parsed.snapshots, snaps);
        }

        #[test]
        fn build_timelines_is_permutation_invariant(
            raw in proptest::collection::vec((0u8..4, 0u8..3, 0u64..50), 1..40),
            seed in any::<u64>(),
        ) {
            // Distinct commands make stable tie order observable.
            let events: Vec<_> = raw.iter().enumerate()
                .map(|(i, (d, a, ts))| ev(&format!("d{d}"), &format!("a{a}"), *ts, &format!("c{i}")))
                .collect();
            let mut shuffled = events.clone();
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let a = build_timelines(events, vec![]);
            let b = build_timelines(shuffled, vec![]);
            prop_assert_eq!(a.len(), b.len());
            for (doc, ta) in &a {
                let tb = &b[doc];
                prop_assert_eq!(ta.creation_time, tb.creation_time);
                prop_assert_eq!(ta.lifetime(), tb.lifetime());
                prop_assert_eq!(&ta.authors, &tb.authors);
                // Same multiset per timestamp.
                let key = |t: &DocumentTimeline| {
                    let mut v: Vec<_> = t.events.iter().map(|e| (e.timestamp, e.command.clone())).collect();
                    v.sort();
                    v
                };
                prop_assert_eq!(key(ta), key(tb));
                prop_assert!(tb.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            }
        }

        #[test]
        fn filter_is_idempotent(
            docs in proptest::collection::vec((0u64..3 * HOUR_MS, 1usize..13), 0..20)
        ) {
            let corpus: Corpus = docs.iter().enumerate().map(|(i, (l, a))| {
                let mut t = doc_with(*l, *a);
                t.doc_id = format!("d{i}");
                (t.doc_id.clone(), t)
            }).collect();
            let p = FilterParams::default();
            let once = filter_corpus(corpus, &p).unwrap();
            let twice = filter_corpus(once.clone(), &p).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
