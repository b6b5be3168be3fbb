//! Seeded synthetic telemetry with stage-dependent behaviour.
//!
//! Each document draws a collaborator count, a lifetime and an event count,
//! then assigns every event a lifetime stage from the CAT weights and a
//! command from that stage's mix. Stage mixes combine profiled activities
//! (an activity's share of stage `s` events is `frequency · profile[s] /
//! cat[s]`) with a background mix interpolated between an early and a late
//! endpoint. Authorship is assigned afterwards without changing the
//! `(stage, command)` pairs: the event placed at offset 0 and each later
//! author's first event are picked so that their categories follow the
//! per-rank first-activity mixes.
//!
//! Randomness comes from ChaCha8 seeded with `seed` and switched to stream
//! `doc_index` for each document, so documents are independent of each
//! other and of thread scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lifecycle::{
    activity_stage_matrix, cat_distribution, first_activity_profile, lifetime_collaborator_correlation, stage_bucket,
    stage_of_offset, AnalyticsError, CatMode, CAT_POINTS, STAGES,
};
use crate::taxonomy::{CommandGroups, CommandTaxonomy};
use crate::telemetry::{build_timelines, ContentSnapshot, Corpus, Millis, Record, TelemetryEvent, DAY_MS, HOUR_MS};

pub const DEFAULT_CONFIG: &str = include_str!("../data/generator.toml");
pub const OTHER_CATEGORY: &str = "*";
const SUM_TOLERANCE: f64 = 1e-9;
const MAX_COLLABORATORS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("generator config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("generator config: {0}")]
    Invalid(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("ground-truth sidecar is missing or empty")]
    MissingSidecar,
    #[error("sidecar line {line}: {reason}")]
    Sidecar { line: usize, reason: String },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GeneratorError> {
    Err(GeneratorError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub early: BTreeMap<String, f64>,
    pub late: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityProfile {
    pub name: String,
    pub frequency: f64,
    pub commands: Vec<String>,
    pub stage_profile: [f64; STAGES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub doc_count: usize,
    pub seed: u64,
    pub epoch_start_ms: Millis,
    pub observation_window_days: u64,
    pub collaborator_weights: Vec<f64>,
    pub lifetime_min_hours: f64,
    pub lifetime_max_hours: f64,
    pub lifetime_span_by_collaborators: Vec<f64>,
    pub events_min: usize,
    pub events_max: usize,
    pub join_horizon: f64,
    pub content_every: usize,
    pub cat_weights: [f64; CAT_POINTS],
    pub background: Background,
    #[serde(rename = "activity")]
    pub activities: Vec<ActivityProfile>,
    pub first_activity: Vec<BTreeMap<String, f64>>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_CONFIG).expect("shipped generator config parses")
    }
}

/// Overlay `over` onto `base`. Tables merge down to `depth` levels; below
/// that, and for every non-table value, the override replaces the base.
fn merge(base: &mut toml::Table, over: toml::Table, depth: usize) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if depth > 1 => merge(b, o, depth - 1),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl GeneratorConfig {
    /// Default config with the given keys replaced. Weight maps such as
    /// `background.early` are replaced whole.
    pub fn with_overrides(overrides: toml::Table) -> Result<Self, GeneratorError> {
        let mut base: toml::Table = toml::from_str(DEFAULT_CONFIG).expect("shipped generator config parses");
        merge(&mut base, overrides, 2);
        Ok(toml::Value::Table(base).try_into()?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, GeneratorError> {
        Self::with_overrides(toml::from_str(s)?)
    }

    pub fn activity_groups(&self) -> CommandGroups {
        CommandGroups::from_map(
            self.activities.iter().map(|a| (a.name.clone(), a.commands.iter().cloned().collect())).collect(),
        )
    }

    /// Configured first-event share of `category` for authors of `rank`.
    pub fn first_activity_target(&self, rank: usize, category: &str) -> Option<f64> {
        let mix = self.first_activity.get((rank.max(1) - 1).min(self.first_activity.len().checked_sub(1)?))?;
        mix.get(category).copied()
    }

    fn validate(&self, taxonomy: &CommandTaxonomy) -> Result<(), GeneratorError> {
        if self.doc_count == 0 {
            return invalid("doc_count must be at least 1");
        }
        check_distribution("collaborator_weights", &self.collaborator_weights)?;
        if self.collaborator_weights.len() > MAX_COLLABORATORS {
            return invalid(format!("collaborator_weights supports at most {MAX_COLLABORATORS} entries"));
        }
        if self.lifetime_span_by_collaborators.len() != self.collaborator_weights.len() {
            return invalid("lifetime_span_by_collaborators must have one entry per collaborator count");
        }
        if self.lifetime_span_by_collaborators.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return invalid("lifetime_span_by_collaborators entries must be in [0, 1]");
        }
        if !(self.lifetime_min_hours * HOUR_MS as f64 >= 100.0) || !(self.lifetime_max_hours >= self.lifetime_min_hours)
        {
            return invalid("need 100 ms <= lifetime_min_hours <= lifetime_max_hours");
        }
        if self.lifetime_max_hours * HOUR_MS as f64 > (self.observation_window_days * DAY_MS) as f64 {
            return invalid("lifetime_max_hours exceeds the observation window");
        }
        if self.events_min < 2 || self.events_max < self.events_min {
            return invalid("need 2 <= events_min <= events_max");
        }
        if !(self.join_horizon > 0.0 && self.join_horizon <= 1.0) {
            return invalid("join_horizon must be in (0, 1]");
        }
        if self.content_every == 0 {
            return invalid("content_every must be at least 1");
        }
        check_distribution("cat_weights", &self.cat_weights)?;
        if self.cat_weights[0] != 0.0 || self.cat_weights[CAT_POINTS - 1] != 0.0 {
            return invalid("cat_weights pre and post buckets must be 0");
        }
        if self.cat_weights[1] == 0.0 || self.cat_weights[STAGES] == 0.0 {
            return invalid(
                "cat_weights for stages 1 and 10 must be positive: a lifetime starts and ends with an event",
            );
        }

        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (label, mix) in [("background.early", &self.background.early), ("background.late", &self.background.late)] {
            check_distribution(label, &mix.values().copied().collect::<Vec<_>>())?;
            for c in mix.keys() {
                check_mapped(taxonomy, label, c)?;
                seen.insert(c, "background");
            }
        }
        let mut names = BTreeSet::new();
        for a in &self.activities {
            if !names.insert(a.name.as_str()) {
                return invalid(format!("activity {:?} is defined twice", a.name));
            }
            let label = format!("activity {:?}", a.name);
            if !(a.frequency >= 0.0 && a.frequency.is_finite()) {
                return invalid(format!("{label}: frequency must be non-negative"));
            }
            check_distribution(&label, &a.stage_profile)?;
            if a.commands.is_empty() {
                return invalid(format!("{label}: no commands"));
            }
            for c in &a.commands {
                check_mapped(taxonomy, &label, c)?;
                if let Some(owner) = seen.insert(c, &a.name) {
                    return invalid(format!("{label}: command {c:?} already belongs to {owner}"));
                }
            }
        }
        for s in 1..=STAGES {
            let claimed: f64 = self.activities.iter().map(|a| a.frequency * a.stage_profile[s - 1]).sum();
            if claimed > self.cat_weights[s] + SUM_TOLERANCE {
                return invalid(format!(
                    "activities need {claimed:.4} of all events in stage {s}, but cat_weights only gives {:.4}",
                    self.cat_weights[s]
                ));
            }
        }

        if self.first_activity.is_empty() {
            return invalid("first_activity needs at least one entry");
        }
        let categories: BTreeSet<&str> = taxonomy.categories().map(|(c, _)| c).collect();
        for (i, mix) in self.first_activity.iter().enumerate() {
            let label = format!("first_activity[{i}]");
            check_distribution(&label, &mix.values().copied().collect::<Vec<_>>())?;
            for k in mix.keys() {
                if k != OTHER_CATEGORY && !categories.contains(k.as_str()) {
                    return invalid(format!("{label}: unknown category {k:?}"));
                }
            }
        }
        Ok(())
    }
}

fn check_distribution(label: &str, weights: &[f64]) -> Result<(), GeneratorError> {
    if weights.is_empty() {
        return invalid(format!("{label}: empty distribution"));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return invalid(format!("{label}: weight {w} is negative or not finite"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return invalid(format!("{label}: weights sum to {total}, expected 1"));
    }
    Ok(())
}

fn check_mapped(taxonomy: &CommandTaxonomy, label: &str, command: &str) -> Result<(), GeneratorError> {
    if taxonomy.classify(command).high_level().is_none() {
        return invalid(format!("{label}: command {command:?} is not in the taxonomy"));
    }
    Ok(())
}

/// Ground-truth stage of one emitted event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub doc: String,
    pub ts: Millis,
    pub true_stage: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDocument {
    pub doc_id: String,
    pub collaborators: usize,
    pub lifetime_ms: Millis,
    /// Events and content snapshots in timestamp order.
    pub records: Vec<Record>,
    pub truth: Vec<TruthRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticCorpus {
    pub documents: Vec<SyntheticDocument>,
}

impl SyntheticCorpus {
    pub fn write_jsonl<W: Write>(&self, out: W) -> io::Result<()> {
        crate::telemetry::write_records(out, self.documents.iter().flat_map(|d| d.records.iter()))
    }

    pub fn write_truth<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in self.truth() {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn truth(&self) -> impl Iterator<Item = &TruthRecord> {
        self.documents.iter().flat_map(|d| d.truth.iter())
    }

    pub fn to_corpus(&self) -> Corpus {
        let mut events = Vec::new();
        let mut snaps = Vec::new();
        for r in self.documents.iter().flat_map(|d| d.records.iter()) {
            match r {
                Record::Event(e) => events.push(e.clone()),
                Record::Content(c) => snaps.push(c.clone()),
            }
        }
        build_timelines(events, snaps)
    }
}

pub fn read_truth<R: BufRead>(input: R) -> Result<Vec<TruthRecord>, GeneratorError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            serde_json::from_str(&line).map_err(|e| GeneratorError::Sidecar { line: i + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum FirstKey {
    Category(String),
    Other,
}

#[derive(Debug, Clone)]
struct FirstMix {
    keys: Vec<FirstKey>,
    named: BTreeSet<String>,
    dist: WeightedIndex<f64>,
}

impl FirstMix {
    fn matches(&self, key: &FirstKey, category: &str) -> bool {
        match key {
            FirstKey::Category(c) => c == category,
            FirstKey::Other => !self.named.contains(category),
        }
    }
}

#[derive(Debug, Default)]
struct Content {
    paragraphs: u64,
    words: u64,
    chars: u64,
}

impl Content {
    fn apply(&mut self, category: &str, rng: &mut ChaCha8Rng) {
        match category {
            "Typing" => {
                let w = rng.gen_range(3..=30);
                self.words += w;
                self.chars += w * rng.gen_range(4..=7);
                if rng.gen_bool(0.15) {
                    self.paragraphs += 1;
                }
            }
            "Adding" => {
                let w = rng.gen_range(0..=60);
                self.words += w;
                self.chars += w * rng.gen_range(4..=7);
                self.paragraphs += rng.gen_range(0..=2);
            }
            "ModifyingContent" => {
                let w = rng.gen_range(0..=8).min(self.words);
                self.words -= w;
                self.chars = self.chars.saturating_sub(w * 5);
            }
            _ => {}
        }
    }

    fn snapshot(&self, doc_id: &str, timestamp: Millis) -> ContentSnapshot {
        let paragraphs = self.paragraphs + 1;
        let lines = self.words / 11 + paragraphs;
        ContentSnapshot {
            doc_id: doc_id.to_owned(),
            timestamp,
            page_count: 1 + lines / 45,
            section_count: 1 + paragraphs / 25,
            paragraph_count: paragraphs,
            line_count: lines,
            word_count: self.words,
            character_count: self.chars,
        }
    }
}

/// A validated config compiled into sampling tables.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    commands: Vec<String>,
    categories: Vec<String>,
    /// `stage_mix[s - 1][i]` is P(command i | stage s).
    stage_mix: Vec<Vec<f64>>,
    stage_sampler: Vec<WeightedIndex<f64>>,
    stage_dist: WeightedIndex<f64>,
    collaborators: WeightedIndex<f64>,
    first: Vec<FirstMix>,
}

impl Generator {
    pub fn new(config: GeneratorConfig, taxonomy: &CommandTaxonomy) -> Result<Self, GeneratorError> {
        config.validate(taxonomy)?;
        let mut commands: BTreeSet<&str> = config.background.early.keys().map(String::as_str).collect();
        commands.extend(config.background.late.keys().map(String::as_str));
        commands.extend(config.activities.iter().flat_map(|a| a.commands.iter().map(String::as_str)));
        let commands: Vec<String> = commands.into_iter().map(str::to_owned).collect();
        let index: BTreeMap<&str, usize> = commands.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let categories = commands.iter().map(|c| taxonomy.classify(c).category().to_owned()).collect();

        let mut stage_mix = Vec::with_capacity(STAGES);
        for s in 1..=STAGES {
            let c_s = config.cat_weights[s];
            let mut p = vec![0.0; commands.len()];
            let mut claimed = 0.0;
            for a in &config.activities {
                let share = a.frequency * a.stage_profile[s - 1] / c_s;
                claimed += share;
                for c in &a.commands {
                    p[index[c.as_str()]] += share / a.commands.len() as f64;
                }
            }
            let background = (1.0 - claimed).max(0.0);
            let lambda = (s - 1) as f64 / (STAGES - 1) as f64;
            for (c, w) in &config.background.early {
                p[index[c.as_str()]] += background * (1.0 - lambda) * w;
            }
            for (c, w) in &config.background.late {
                p[index[c.as_str()]] += background * lambda * w;
            }
            stage_mix.push(p);
        }
        let stage_sampler = stage_mix
            .iter()
            .map(|p| WeightedIndex::new(p).map_err(|e| GeneratorError::Invalid(format!("stage mix: {e}"))))
            .collect::<Result<_, _>>()?;
        let stage_dist = WeightedIndex::new(&config.cat_weights[1..=STAGES]).expect("validated");
        let collaborators = WeightedIndex::new(&config.collaborator_weights).expect("validated");
        let first = config
            .first_activity
            .iter()
            .map(|mix| {
                let keys = mix
                    .keys()
                    .map(|k| if k == OTHER_CATEGORY { FirstKey::Other } else { FirstKey::Category(k.clone()) })
                    .collect();
                let named = mix.keys().filter(|k| *k != OTHER_CATEGORY).cloned().collect();
                FirstMix { keys, named, dist: WeightedIndex::new(mix.values()).expect("validated") }
            })
            .collect();
        Ok(Self { config, commands, categories, stage_mix, stage_sampler, stage_dist, collaborators, first })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Command distribution used for events in `stage` (1..=10).
    pub fn stage_command_mix(&self, stage: usize) -> BTreeMap<String, f64> {
        self.commands.iter().cloned().zip(self.stage_mix[stage - 1].iter().copied()).filter(|(_, p)| *p > 0.0).collect()
    }

    pub fn generate(&self) -> SyntheticCorpus {
        let documents = (0..self.config.doc_count).into_par_iter().map(|i| self.document(i)).collect();
        SyntheticCorpus { documents }
    }

    /// A command from `stage`'s mix conditioned on matching `key`.
    fn draw_within(&self, stage: usize, mix: &FirstMix, key: &FirstKey, rng: &mut ChaCha8Rng) -> Option<usize> {
        let weights: Vec<f64> = self.stage_mix[stage - 1]
            .iter()
            .zip(&self.categories)
            .map(|(p, c)| if mix.matches(key, c) { *p } else { 0.0 })
            .collect();
        WeightedIndex::new(&weights).ok().map(|d| d.sample(rng))
    }

    fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo * (hi / lo).powf(rng.gen::<f64>())
    }

    pub fn document(&self, index: usize) -> SyntheticDocument {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let doc_id = format!("doc{index:06}");

        let k = self.collaborators.sample(&mut rng) + 1;
        let span = cfg.lifetime_span_by_collaborators[k - 1];
        let hi = cfg.lifetime_min_hours * (cfg.lifetime_max_hours / cfg.lifetime_min_hours).powf(span);
        let min_ms = (cfg.lifetime_min_hours * HOUR_MS as f64).ceil() as Millis;
        let lifetime = ((Self::log_uniform(&mut rng, cfg.lifetime_min_hours, hi) * HOUR_MS as f64).round() as Millis)
            .clamp(min_ms, cfg.observation_window_days * DAY_MS);
        let n = (Self::log_uniform(&mut rng, cfg.events_min as f64, cfg.events_max as f64 + 1.0).floor() as usize)
            .clamp(cfg.events_min, cfg.events_max)
            .max(k + 2);
        let window = cfg.observation_window_days * DAY_MS;
        let start = cfg.epoch_start_ms + rng.gen_range(0..=window - lifetime);

        let stages: Vec<usize> = loop {
            let s: Vec<usize> = (0..n).map(|_| self.stage_dist.sample(&mut rng) + 1).collect();
            if s.contains(&1) && s.contains(&STAGES) {
                break s;
            }
        };
        let mut cmds: Vec<usize> = stages.iter().map(|s| self.stage_sampler[s - 1].sample(&mut rng)).collect();

        // Creation event: a stage-1 event whose category follows the rank-1
        // mix. Only when no stage-1 event fits is one of them redrawn within
        // the wanted category.
        let creator_mix = &self.first[0];
        let want = &creator_mix.keys[creator_mix.dist.sample(&mut rng)];
        let stage1: Vec<usize> = (0..n).filter(|i| stages[*i] == 1).collect();
        let pick = |pool: &[usize], rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())];
        let matching: Vec<usize> =
            stage1.iter().copied().filter(|i| creator_mix.matches(want, &self.categories[cmds[*i]])).collect();
        let creator = if matching.is_empty() {
            let i = pick(&stage1, &mut rng);
            if let Some(c) = self.draw_within(1, creator_mix, want, &mut rng) {
                cmds[i] = c;
            }
            i
        } else {
            pick(&matching, &mut rng)
        };
        let stage10: Vec<usize> = (0..n).filter(|i| stages[*i] == STAGES).collect();
        let closer = pick(&stage10, &mut rng);

        let bound = |s: usize| -> Millis { ((s as u128 * lifetime as u128).div_ceil(STAGES as u128)) as Millis };
        let offsets: Vec<Millis> = (0..n)
            .map(|i| {
                if i == creator {
                    return 0;
                }
                if i == closer {
                    return lifetime;
                }
                let s = stages[i];
                let lo = bound(s - 1).max(1);
                let hi = if s == STAGES { lifetime - 1 } else { bound(s) - 1 };
                rng.gen_range(lo..=hi)
            })
            .collect();
        debug_assert!((0..n).all(|i| stage_of_offset(offsets[i], lifetime) == stages[i]));

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|i| (offsets[*i], *i != creator, *i));

        // Authors by rank: position (in time order) of each author's first event.
        let mut first_pos = vec![0usize];
        let mut joins: Vec<f64> = (1..k).map(|_| rng.gen::<f64>() * cfg.join_horizon).collect();
        joins.sort_by(f64::total_cmp);
        for (r, u) in (1..k).zip(joins) {
            let prev = first_pos[r - 1];
            let limit = n - (k - 1 - r);
            let start = ((u * n as f64) as usize).max(prev + 1).min(limit - 1);
            let mix = &self.first[r.min(self.first.len() - 1)];
            let want = &mix.keys[mix.dist.sample(&mut rng)];
            let after_prev = |p: &usize| offsets[order[*p]] > offsets[order[prev]];
            let category = |p: usize| self.categories[cmds[order[p]]].as_str();
            let chosen = match (start..limit).find(|p| after_prev(p) && mix.matches(want, category(*p))) {
                Some(p) => p,
                None => {
                    let p = (start..limit).find(after_prev).unwrap_or(start);
                    if let Some(c) = self.draw_within(stages[order[p]], mix, want, &mut rng) {
                        cmds[order[p]] = c;
                    }
                    p
                }
            };
            first_pos.push(chosen);
        }
        let weights: Vec<f64> = (0..k).map(|_| 0.2 + rng.gen::<f64>()).collect();
        let mut author_of = vec![usize::MAX; n];
        for (r, p) in first_pos.iter().enumerate() {
            author_of[*p] = r;
        }
        for p in 0..n {
            if author_of[p] != usize::MAX {
                continue;
            }
            let joined = first_pos.iter().filter(|f| **f < p).count();
            let total: f64 = weights[..joined].iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut a = joined - 1;
            for (r, w) in weights[..joined].iter().enumerate() {
                if x < *w {
                    a = r;
                    break;
                }
                x -= w;
            }
            author_of[p] = a;
        }

        let mut content = Content::default();
        let mut records = Vec::with_capacity(n + n / cfg.content_every + 1);
        let mut truth = Vec::with_capacity(n);
        for (p, &i) in order.iter().enumerate() {
            let ts = start + offsets[i];
            let command = &self.commands[cmds[i]];
            records.push(Record::Event(TelemetryEvent::new(
                doc_id.as_str(),
                format!("{doc_id}-u{:02}", author_of[p] + 1),
                ts,
                command.as_str(),
            )));
            truth.push(TruthRecord { doc: doc_id.clone(), ts, true_stage: stages[i] });
            content.apply(&self.categories[cmds[i]], &mut rng);
            if (p + 1) % cfg.content_every == 0 || p + 1 == n {
                records.push(Record::Content(content.snapshot(&doc_id, ts)));
            }
        }
        SyntheticDocument { doc_id, collaborators: k, lifetime_ms: lifetime, records, truth }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityDelta {
    pub activity: String,
    pub target: [f64; STAGES],
    /// `None` when the corpus has no occurrence of the activity.
    pub observed: Option<[f64; STAGES]>,
    pub max_abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstActivityDelta {
    pub category: String,
    pub rank1_target: Option<f64>,
    pub rank1_observed: Option<f64>,
    pub rank2_target: Option<f64>,
    pub rank2_observed: Option<f64>,
    pub ratio_target: Option<f64>,
    pub ratio_observed: Option<f64>,
}

impl FirstActivityDelta {
    /// |observed / target − 1| for the rank-2 over rank-1 ratio.
    pub fn ratio_relative_delta(&self) -> Option<f64> {
        Some((self.ratio_observed? / self.ratio_target? - 1.0).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub documents: usize,
    pub events: u64,
    pub cat_observed: [f64; CAT_POINTS],
    pub cat_l1: f64,
    pub activities: Vec<ActivityDelta>,
    pub first_activity: FirstActivityDelta,
    pub lifetime_r: Option<f64>,
    pub truth_records: usize,
    pub truth_mismatches: usize,
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d > 0.0 => Some(n / d),
        _ => None,
    }
}

/// Compare a corpus against the statistics `config` was built to produce.
pub fn calibration_report(
    config: &GeneratorConfig,
    corpus: &Corpus,
    truth: &[TruthRecord],
    taxonomy: &CommandTaxonomy,
) -> Result<CalibrationReport, GeneratorError> {
    if corpus.is_empty() {
        return Err(GeneratorError::EmptyCorpus);
    }
    if truth.is_empty() {
        return Err(GeneratorError::MissingSidecar);
    }
    let timelines = || corpus.values().filter(|t| t.lifetime() > 0);
    let cat = cat_distribution(timelines(), CatMode::Pooled)?;

    let activities = if config.activities.is_empty() {
        Vec::new()
    } else {
        let matrix = activity_stage_matrix(timelines(), &config.activity_groups())?;
        config
            .activities
            .iter()
            .map(|a| {
                let observed = matrix.row(&a.name).map(|r| r.shares);
                let max_abs_delta = match observed {
                    Some(o) => o.iter().zip(&a.stage_profile).map(|(o, t)| (o - t).abs()).fold(0.0, f64::max),
                    None => a.stage_profile.iter().copied().fold(0.0, f64::max),
                };
                ActivityDelta { activity: a.name.clone(), target: a.stage_profile, observed, max_abs_delta }
            })
            .collect()
    };

    let profile = first_activity_profile(corpus.values(), taxonomy);
    let observed = |rank: usize| profile.rank(rank).map(|r| r.first_category_share("Typing"));
    let (t1, t2) = (config.first_activity_target(1, "Typing"), config.first_activity_target(2, "Typing"));
    let (o1, o2) = (observed(1), observed(2));
    let first_activity = FirstActivityDelta {
        category: "Typing".into(),
        rank1_target: t1,
        rank1_observed: o1,
        rank2_target: t2,
        rank2_observed: o2,
        ratio_target: ratio(t2, t1),
        ratio_observed: ratio(o2, o1),
    };

    let lifetime_r = lifetime_collaborator_correlation(corpus.values(), MAX_COLLABORATORS).ok().map(|c| c.r);

    let mut mismatches = 0;
    for t in truth {
        match corpus.get(&t.doc) {
            Some(tl) if tl.lifetime() > 0 && stage_bucket(tl, t.ts).ok() != Some(t.true_stage) => {
                mismatches += 1;
            }
            _ => {}
        }
    }

    Ok(CalibrationReport {
        documents: corpus.len(),
        events: cat.total_events,
        cat_observed: cat.buckets,
        cat_l1: cat.l1_distance(&config.cat_weights),
        activities,
        first_activity,
        lifetime_r,
        truth_records: truth.len(),
        truth_mismatches: mismatches,
    })
}
