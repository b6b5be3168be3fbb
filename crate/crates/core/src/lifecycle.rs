//! Descriptive lifecycle statistics over a corpus of timelines.
//!
//! A document's lifetime is cut into ten equal stages. Stage `k` covers the
//! half-open relative interval `[(k-1)/10, k/10)`; the last stage is closed
//! so the final event lands in stage 10. Stage arithmetic is done in
//! integers, so boundaries are exact.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::taxonomy::{CommandGroups, CommandTaxonomy};
use crate::telemetry::{DocumentTimeline, Millis};

pub const STAGES: usize = 10;
/// Stages plus the empty pre and post buckets.
pub const CAT_POINTS: usize = STAGES + 2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("document {0:?} has zero lifetime")]
    ZeroLifetime(String),
    #[error("timestamp {timestamp} is outside the lifetime of document {doc:?}")]
    OutsideLifetime { doc: String, timestamp: Millis },
    #[error("no activity sets given")]
    NoActivitySets,
    #[error("max_collaborators must be at least 2, got {0}")]
    MaxCollaborators(usize),
    #[error("need at least 2 populated collaborator groups, found {0}")]
    TooFewGroups(usize),
}

/// Stage (1..=10) of an offset into a lifetime of `lifetime` ms.
/// Caller guarantees `lifetime > 0` and `offset <= lifetime`.
pub(crate) fn stage_of_offset(offset: Millis, lifetime: Millis) -> usize {
    debug_assert!(lifetime > 0 && offset <= lifetime);
    let k = (offset as u128 * STAGES as u128) / lifetime as u128;
    (k as usize + 1).min(STAGES)
}

pub fn stage_bucket(timeline: &DocumentTimeline, timestamp: Millis) -> Result<usize, AnalyticsError> {
    let lifetime = timeline.lifetime();
    if lifetime == 0 {
        return Err(AnalyticsError::ZeroLifetime(timeline.doc_id.clone()));
    }
    if timestamp < timeline.creation_time || timestamp > timeline.last_activity_time {
        return Err(AnalyticsError::OutsideLifetime { doc: timeline.doc_id.clone(), timestamp });
    }
    Ok(stage_of_offset(timestamp - timeline.creation_time, lifetime))
}

/// Per-stage event counts of one document. Index 0 is stage 1.
pub fn stage_counts(timeline: &DocumentTimeline) -> Result<[u64; STAGES], AnalyticsError> {
    let lifetime = timeline.lifetime();
    if lifetime == 0 {
        return Err(AnalyticsError::ZeroLifetime(timeline.doc_id.clone()));
    }
    let mut counts = [0u64; STAGES];
    for e in &timeline.events {
        counts[stage_of_offset(e.timestamp - timeline.creation_time, lifetime) - 1] += 1;
    }
    Ok(counts)
}

/// How documents are combined into one CAT curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatMode {
    /// Pool raw event counts across documents.
    #[default]
    Pooled,
    /// Average each document's own normalized curve.
    PerDocumentAverage,
}

/// Contributions Across Time: `buckets[0]` is pre, `buckets[11]` is post,
/// `buckets[k]` is stage k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatDistribution {
    pub buckets: [f64; CAT_POINTS],
    pub total_events: u64,
}

impl CatDistribution {
    pub fn stage(&self, stage: usize) -> f64 {
        self.buckets[stage]
    }

    /// L1 distance over all 12 points.
    pub fn l1_distance(&self, weights: &[f64; CAT_POINTS]) -> f64 {
        self.buckets.iter().zip(weights).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub fn cat_distribution<'a, I>(timelines: I, mode: CatMode) -> Result<CatDistribution, AnalyticsError>
where
    I: IntoIterator<Item = &'a DocumentTimeline>,
{
    let mut buckets = [0.0; CAT_POINTS];
    let mut pooled = [0u64; STAGES];
    let mut docs = 0usize;
    for t in timelines {
        let counts = stage_counts(t)?;
        docs += 1;
        let doc_total: u64 = counts.iter().sum();
        for (k, c) in counts.iter().enumerate() {
            pooled[k] += c;
            if mode == CatMode::PerDocumentAverage {
                buckets[k + 1] += *c as f64 / doc_total as f64;
            }
        }
    }
    let total_events: u64 = pooled.iter().sum();
    if total_events > 0 {
        match mode {
            CatMode::Pooled => {
                for (k, c) in pooled.iter().enumerate() {
                    buckets[k + 1] = *c as f64 / total_events as f64;
                }
            }
            CatMode::PerDocumentAverage => {
                for b in &mut buckets[1..=STAGES] {
                    *b /= docs as f64;
                }
            }
        }
    }
    Ok(CatDistribution { buckets, total_events })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityRow {
    pub activity: String,
    /// Share of the activity's occurrences in each stage; index 0 is stage 1.
    pub shares: [f64; STAGES],
    pub occurrences: u64,
}

impl ActivityRow {
    pub fn early_bias(&self) -> f64 {
        self.shares[0] - self.shares[STAGES - 1]
    }
}

/// Rows sorted by descending `stage1 - stage10`, ties by activity name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityStageMatrix {
    pub rows: Vec<ActivityRow>,
}

impl ActivityStageMatrix {
    pub fn row(&self, activity: &str) -> Option<&ActivityRow> {
        self.rows.iter().find(|r| r.activity == activity)
    }
}

pub fn activity_stage_matrix<'a, I>(
    timelines: I,
    activity_sets: &CommandGroups,
) -> Result<ActivityStageMatrix, AnalyticsError>
where
    I: IntoIterator<Item = &'a DocumentTimeline>,
{
    if activity_sets.is_empty() {
        return Err(AnalyticsError::NoActivitySets);
    }
    let membership = activity_sets.membership();
    let mut counts = vec![[0u64; STAGES]; activity_sets.len()];
    for t in timelines {
        let lifetime = t.lifetime();
        if lifetime == 0 {
            return Err(AnalyticsError::ZeroLifetime(t.doc_id.clone()));
        }
        for e in &t.events {
            if let Some(groups) = membership.get(e.command.as_str()) {
                let stage = stage_of_offset(e.timestamp - t.creation_time, lifetime);
                for &g in groups {
                    counts[g][stage - 1] += 1;
                }
            }
        }
    }
    let mut rows: Vec<ActivityRow> = activity_sets
        .names()
        .zip(counts)
        .filter_map(|(name, c)| {
            let total: u64 = c.iter().sum();
            (total > 0).then(|| ActivityRow {
                activity: name.to_owned(),
                shares: c.map(|x| x as f64 / total as f64),
                occurrences: total,
            })
        })
        .collect();
    rows.sort_by(|a, b| b.early_bias().total_cmp(&a.early_bias()).then_with(|| a.activity.cmp(&b.activity)));
    Ok(ActivityStageMatrix { rows })
}

/// Activity distributions of the authors who arrived `rank`-th.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankProfile {
    pub rank: usize,
    pub authors: u64,
    pub events: u64,
    /// High-level category of each author's first event.
    pub first_high_level: BTreeMap<String, f64>,
    /// High-level category over all of the authors' events.
    pub all_high_level: BTreeMap<String, f64>,
    pub first_category: BTreeMap<String, f64>,
    pub all_category: BTreeMap<String, f64>,
}

impl RankProfile {
    pub fn first_category_share(&self, category: &str) -> f64 {
        self.first_category.get(category).copied().unwrap_or(0.0)
    }

    pub fn first_high_level_share(&self, high_level: &str) -> f64 {
        self.first_high_level.get(high_level).copied().unwrap_or(0.0)
    }
}

/// `ranks[0]` is rank 1. Only populated ranks are present.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstActivityProfile {
    pub ranks: Vec<RankProfile>,
}

impl FirstActivityProfile {
    pub fn rank(&self, rank: usize) -> Option<&RankProfile> {
        rank.checked_sub(1).and_then(|i| self.ranks.get(i))
    }
}

#[derive(Default)]
struct RankCounts<'a> {
    authors: u64,
    events: u64,
    first_high: BTreeMap<&'static str, u64>,
    all_high: BTreeMap<&'static str, u64>,
    first_cat: BTreeMap<&'a str, u64>,
    all_cat: BTreeMap<&'a str, u64>,
}

fn normalize<K: AsRef<str>>(counts: &BTreeMap<K, u64>) -> BTreeMap<String, f64> {
    let total: u64 = counts.values().sum();
    counts.iter().map(|(k, v)| (k.as_ref().to_owned(), *v as f64 / total as f64)).collect()
}

/// Authors of each document are ranked by the time of their first event
/// (ties by author id); distributions are pooled per rank across documents.
pub fn first_activity_profile<'a, I>(timelines: I, taxonomy: &'a CommandTaxonomy) -> FirstActivityProfile
where
    I: IntoIterator<Item = &'a DocumentTimeline>,
{
    let mut per_rank: Vec<RankCounts<'a>> = Vec::new();
    for t in timelines {
        // author -> (first timestamp, index of first event)
        let mut firsts: BTreeMap<&str, (Millis, usize)> = BTreeMap::new();
        for (i, e) in t.events.iter().enumerate() {
            firsts.entry(e.author_id.as_str()).or_insert((e.timestamp, i));
        }
        let mut order: Vec<(&str, Millis, usize)> = firsts.into_iter().map(|(a, (ts, i))| (a, ts, i)).collect();
        order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        let rank_of: BTreeMap<&str, usize> = order.iter().enumerate().map(|(r, (a, _, _))| (*a, r)).collect();
        if per_rank.len() < order.len() {
            per_rank.resize_with(order.len(), RankCounts::default);
        }
        for (r, (_, _, first_idx)) in order.iter().enumerate() {
            let c = taxonomy.classify(&t.events[*first_idx].command);
            let slot = &mut per_rank[r];
            slot.authors += 1;
            *slot.first_high.entry(c.high_level_name()).or_default() += 1;
            *slot.first_cat.entry(c.category()).or_default() += 1;
        }
        for e in &t.events {
            let c = taxonomy.classify(&e.command);
            let slot = &mut per_rank[rank_of[e.author_id.as_str()]];
            slot.events += 1;
            *slot.all_high.entry(c.high_level_name()).or_default() += 1;
            *slot.all_cat.entry(c.category()).or_default() += 1;
        }
    }
    let ranks = per_rank
        .iter()
        .enumerate()
        .map(|(i, c)| RankProfile {
            rank: i + 1,
            authors: c.authors,
            events: c.events,
            first_high_level: normalize(&c.first_high),
            all_high_level: normalize(&c.all_high),
            first_category: normalize(&c.first_cat),
            all_category: normalize(&c.all_cat),
        })
        .collect();
    FirstActivityProfile { ranks }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollaboratorGroup {
    pub collaborators: usize,
    pub documents: u64,
    pub mean_lifetime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifetimeCorrelation {
    /// Pearson r between collaborator count and mean lifetime per group.
    pub r: f64,
    /// Number of populated groups.
    pub n: usize,
    /// Set when group means have zero variance; `r` is then 0.
    pub degenerate: bool,
    pub groups: Vec<CollaboratorGroup>,
}

/// Group documents by author count (1..=max_collaborators; larger documents
/// are ignored) and correlate the count with the group's mean lifetime.
pub fn lifetime_collaborator_correlation<'a, I>(
    timelines: I,
    max_collaborators: usize,
) -> Result<LifetimeCorrelation, AnalyticsError>
where
    I: IntoIterator<Item = &'a DocumentTimeline>,
{
    if max_collaborators < 2 {
        return Err(AnalyticsError::MaxCollaborators(max_collaborators));
    }
    let mut sums = vec![(0u64, 0u128); max_collaborators + 1];
    for t in timelines {
        let k = t.author_count();
        if (1..=max_collaborators).contains(&k) {
            sums[k].0 += 1;
            sums[k].1 += t.lifetime() as u128;
        }
    }
    let groups: Vec<CollaboratorGroup> = sums
        .iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(k, (n, total))| CollaboratorGroup {
            collaborators: k,
            documents: *n,
            mean_lifetime_ms: *total as f64 / *n as f64,
        })
        .collect();
    if groups.len() < 2 {
        return Err(AnalyticsError::TooFewGroups(groups.len()));
    }
    let xs: Vec<f64> = groups.iter().map(|g| g.collaborators as f64).collect();
    let ys: Vec<f64> = groups.iter().map(|g| g.mean_lifetime_ms).collect();
    let (r, degenerate) = match pearson(&xs, &ys) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    Ok(LifetimeCorrelation { r, n: groups.len(), degenerate, groups })
}

/// Two-pass Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::TelemetryEvent;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn timeline(doc: &str, events: &[(&str, Millis, &str)]) -> DocumentTimeline {
        let ev = events.iter().map(|(a, ts, c)| TelemetryEvent::new(doc, *a, *ts, *c)).collect();
        DocumentTimeline::from_records(doc, ev, vec![]).unwrap()
    }

    fn at_positions(doc: &str, positions: &[f64], cmd: &str) -> DocumentTimeline {
        let mut ev = vec![("a", 0, "Open"), ("a", 1000, "Close")];
        for p in positions {
            ev.push(("a", (p * 1000.0).round() as Millis, cmd));
        }
        let owned: Vec<(&str, Millis, &str)> = ev;
        timeline(doc, &owned)
    }

    #[test]
    fn bucket_boundaries() {
        let t = timeline("d", &[("a", 1000, "X"), ("a", 2000, "X")]);
        assert_eq!(stage_bucket(&t, 1000).unwrap(), 1);
        assert_eq!(stage_bucket(&t, 2000).unwrap(), 10);
        assert_eq!(stage_bucket(&t, 1950).unwrap(), 10);
        assert_eq!(stage_bucket(&t, 1100).unwrap(), 2);
        assert_eq!(stage_bucket(&t, 1099).unwrap(), 1);
        assert!(matches!(stage_bucket(&t, 999), Err(AnalyticsError::OutsideLifetime { .. })));
        assert!(matches!(stage_bucket(&t, 2001), Err(AnalyticsError::OutsideLifetime { .. })));
    }

    #[test]
    fn zero_lifetime_bucket_is_an_error() {
        let t = timeline("d", &[("a", 5, "X")]);
        assert_eq!(stage_bucket(&t, 5), Err(AnalyticsError::ZeroLifetime("d".into())));
    }

    #[test]
    fn cat_of_midpoints_is_uniform() {
        // Events at 0.05, 0.15, ..., 0.95 over lifetime [0, 1000].
        let ev: Vec<(&str, Millis, &str)> = (0..10).map(|k| ("a", 50 + 100 * k, "X")).collect();
        let mut t = timeline("d", &ev);
        t.creation_time = 0;
        t.last_activity_time = 1000;
        let cat = cat_distribution([&t], CatMode::Pooled).unwrap();
        for k in 1..=STAGES {
            assert_eq!(cat.stage(k), 0.1);
        }
        assert_eq!((cat.buckets[0], cat.buckets[11]), (0.0, 0.0));
    }

    #[test]
    fn cat_all_early() {
        let mut t = timeline("d", &[("a", 0, "X"), ("a", 50, "X"), ("a", 99, "X")]);
        t.last_activity_time = 1000;
        let cat = cat_distribution([&t], CatMode::Pooled).unwrap();
        assert_eq!(cat.stage(1), 1.0);
        assert_eq!(cat.buckets.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn cat_pools_counts_across_documents() {
        // Hand count: [8,0..,2] + [2,0..,8] -> [10,..,10] / 20.
        let mut a: Vec<(&str, Millis, &str)> = vec![("a", 0, "X"); 8];
        a.extend(vec![("a", 1000, "X"); 2]);
        let mut b: Vec<(&str, Millis, &str)> = vec![("a", 0, "X"); 2];
        b.extend(vec![("a", 1000, "X"); 8]);
        let (ta, tb) = (timeline("a", &a), timeline("b", &b));
        let cat = cat_distribution([&ta, &tb], CatMode::Pooled).unwrap();
        let mut expected = [0.0; CAT_POINTS];
        expected[1] = 0.5;
        expected[10] = 0.5;
        assert_eq!(cat.buckets, expected);
        assert_eq!(cat.total_events, 20);
    }

    #[test]
    fn per_document_mode_weights_documents_equally() {
        // a: 3 events, stage counts [2,..,1]; b: 2 events [1,..,1].
        let ta = timeline("a", &[("x", 0, "X"), ("x", 1, "X"), ("x", 1000, "X")]);
        let tb = timeline("b", &[("x", 0, "X"), ("x", 1000, "X")]);
        let cat = cat_distribution([&ta, &tb], CatMode::PerDocumentAverage).unwrap();
        assert!((cat.stage(1) - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert!((cat.stage(10) - (1.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_corpus_gives_zero_cat() {
        let cat = cat_distribution(std::iter::empty(), CatMode::Pooled).unwrap();
        assert_eq!(cat.total_events, 0);
        assert!(cat.buckets.iter().all(|b| *b == 0.0));
    }

    fn groups(entries: &[(&str, &[&str])]) -> CommandGroups {
        CommandGroups::from_map(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()))
                .collect(),
        )
    }

    #[test]
    fn early_activity_row_sorts_first() {
        let t = at_positions("d", &[0.01, 0.02, 0.5, 0.97], "Mid");
        let mut t2 = at_positions("e", &[0.03], "Early");
        t2.events.push(TelemetryEvent::new("e", "a", 990, "Late"));
        t2.events.sort_by_key(|e| e.timestamp);
        let sets = groups(&[("Early", &["Early"]), ("Late", &["Late"]), ("Mid", &["Mid"]), ("Never", &["Nope"])]);
        let m = activity_stage_matrix([&t, &t2], &sets).unwrap();
        let order: Vec<&str> = m.rows.iter().map(|r| r.activity.as_str()).collect();
        assert_eq!(order, ["Early", "Mid", "Late"]);
        assert_eq!(m.rows[0].shares[0], 1.0);
        assert!(m.row("Never").is_none());
        for r in &m.rows {
            assert!((r.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_profiles_tie_break_by_name() {
        let t = at_positions("d", &[0.5], "Cmd");
        let sets = groups(&[("Zeta", &["Cmd"]), ("Alpha", &["Cmd"])]);
        let m = activity_stage_matrix([&t], &sets).unwrap();
        assert_eq!(m.rows[0].activity, "Alpha");
        assert_eq!(m.rows[1].activity, "Zeta");
    }

    #[test]
    fn empty_activity_sets_is_an_error() {
        let t = at_positions("d", &[0.5], "Cmd");
        assert_eq!(activity_stage_matrix([&t], &CommandGroups::default()), Err(AnalyticsError::NoActivitySets));
    }

    #[test]
    fn second_author_commenting_first() {
        let tax = CommandTaxonomy::builtin();
        let t = timeline("d", &[("A", 0, "Typing"), ("B", 10, "NewComment"), ("A", 20, "Bold"), ("B", 30, "Typing")]);
        let p = first_activity_profile([&t], &tax);
        assert_eq!(p.ranks.len(), 2);
        let r2 = p.rank(2).unwrap();
        assert_eq!(r2.first_high_level_share("Communicating"), 1.0);
        assert_eq!(r2.all_high_level["Communicating"], 0.5);
        assert_eq!(r2.all_high_level["Adding Content"], 0.5);
        assert_eq!(p.rank(1).unwrap().first_category_share("Typing"), 1.0);
    }

    #[test]
    fn single_rank_has_no_second_profile() {
        let tax = CommandTaxonomy::builtin();
        let t = timeline("d", &[("A", 0, "Typing"), ("A", 20, "Bold")]);
        let p = first_activity_profile([&t], &tax);
        assert!(p.rank(2).is_none());
        assert!((p.rank(1).unwrap().all_high_level.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_first_events_rank_by_author_id() {
        let tax = CommandTaxonomy::builtin();
        let t = timeline("d", &[("zed", 0, "Typing"), ("amy", 0, "Bold"), ("zed", 9, "Bold")]);
        let p = first_activity_profile([&t], &tax);
        assert_eq!(p.rank(1).unwrap().first_category_share("Formatting"), 1.0);
        assert_eq!(p.rank(2).unwrap().first_category_share("Typing"), 1.0);
    }

    fn doc_with_authors(id: &str, authors: usize, lifetime: Millis) -> DocumentTimeline {
        let mut ev: Vec<TelemetryEvent> =
            (0..authors).map(|a| TelemetryEvent::new(id, format!("a{a}"), 0, "X")).collect();
        ev.push(TelemetryEvent::new(id, "a0", lifetime, "X"));
        DocumentTimeline::from_records(id, ev, vec![]).unwrap()
    }

    #[test]
    fn linear_group_means_have_unit_correlation() {
        let docs: Vec<_> = (1..=5).map(|k| doc_with_authors(&format!("d{k}"), k, 1000 * k as u64)).collect();
        let c = lifetime_collaborator_correlation(&docs, 10).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert_eq!(c.n, 5);
        assert!(!c.degenerate);
    }

    #[test]
    fn constant_group_means_are_degenerate() {
        let docs: Vec<_> = (1..=3).map(|k| doc_with_authors(&format!("d{k}"), k, 5000)).collect();
        let c = lifetime_collaborator_correlation(&docs, 10).unwrap();
        assert_eq!(c.r, 0.0);
        assert!(c.degenerate);
    }

    #[test]
    fn correlation_needs_two_groups() {
        let docs = [doc_with_authors("a", 2, 10), doc_with_authors("b", 2, 20), doc_with_authors("c", 12, 20)];
        assert_eq!(lifetime_collaborator_correlation(&docs, 10), Err(AnalyticsError::TooFewGroups(1)));
        assert_eq!(lifetime_collaborator_correlation(&docs, 1), Err(AnalyticsError::MaxCollaborators(1)));
    }

    proptest! {
        #[test]
        fn stage_is_monotone(lifetime in 1u64..10_000_000, a in 0u64..10_000_000, b in 0u64..10_000_000) {
            let (a, b) = (a.min(lifetime), b.min(lifetime));
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(stage_of_offset(lo, lifetime) <= stage_of_offset(hi, lifetime));
            prop_assert!((1..=STAGES).contains(&stage_of_offset(hi, lifetime)));
        }

        #[test]
        fn cat_sums_to_one(
            docs in proptest::collection::vec(proptest::collection::vec(0u64..5000, 2..30), 1..8),
            per_doc in any::<bool>(),
        ) {
            let tls: Vec<_> = docs.iter().enumerate().filter_map(|(i, ts)| {
                let ev = ts.iter().map(|t| TelemetryEvent::new("d", "a", *t, "X")).collect();
                DocumentTimeline::from_records(format!("d{i}"), ev, vec![])
            }).filter(|t| t.lifetime() > 0).collect();
            prop_assume!(!tls.is_empty());
            let mode = if per_doc { CatMode::PerDocumentAverage } else { CatMode::Pooled };
            let cat = cat_distribution(&tls, mode).unwrap();
            prop_assert!((cat.buckets.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(cat.buckets[0], 0.0);
            prop_assert_eq!(cat.buckets[CAT_POINTS - 1], 0.0);
        }

        #[test]
        fn analytics_ignore_identifier_labels(
            raw in proptest::collection::vec((0u8..3, 0u64..2000, 0usize..4), 2..40),
        ) {
            let tax = CommandTaxonomy::builtin();
            let cmds = ["Typing", "Bold", "NewComment", "InsertHeader"];
            let make = |prefix: &str| {
                let mut ev: Vec<_> = raw.iter()
                    .map(|(a, ts, c)| TelemetryEvent::new("doc", format!("{prefix}{a}"), *ts, cmds[*c]))
                    .collect();
                ev.push(TelemetryEvent::new("doc", format!("{prefix}0"), 2000, "Bold"));
                ev.push(TelemetryEvent::new("doc", format!("{prefix}0"), 0, "Bold"));
                DocumentTimeline::from_records(format!("{prefix}doc"), ev, vec![]).unwrap()
            };
            // Order-preserving relabeling keeps rank tie-breaks unchanged.
            let (a, b) = (make("p"), make("q"));
            prop_assert_eq!(cat_distribution([&a], CatMode::Pooled).unwrap(), cat_distribution([&b], CatMode::Pooled).unwrap());
            prop_assert_eq!(first_activity_profile([&a], &tax), first_activity_profile([&b], &tax));
        }
    }
}
