//! Snapshot sampling and featurization.
//!
//! A snapshot of a document at relative time `t ∈ [0, 1]` aggregates every
//! record with `timestamp <= creation + floor(t · lifetime)`. Nothing after
//! that cutoff is consulted. Each snapshot is labeled with the lifetime
//! quartile containing `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collaboration::{balance_score, contribution_vector, AuthorMembership, Dimension};
use crate::taxonomy::{CommandGroups, CommandTaxonomy, HighLevel};
use crate::telemetry::{Corpus, DocumentTimeline, Millis, DAY_MS};

pub const LAYOUT_VERSION: u32 = 1;
pub const DEFAULT_SNAPSHOTS: usize = 5;
const OTHER: &str = "(unmapped)";

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("relative time {0} is outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("document {0:?} has zero lifetime")]
    ZeroLifetime(String),
    #[error("snapshot count must be at least 1")]
    NoSnapshots,
    #[error("split ratio {0} is outside (0, 1)")]
    SplitRatio(f64),
    #[error("{docs} documents cannot populate both train and test at ratio {ratio}")]
    TooFewDocuments { docs: usize, ratio: f64 },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("dataset schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Lifetime quartile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [Quartile::Q1, Quartile::Q2, Quartile::Q3, Quartile::Q4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        ["Q1", "Q2", "Q3", "Q4"][self.index()]
    }
}

impl fmt::Display for Quartile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Quartile {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quartile::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| FeatureError::Schema(format!("bad label {s:?}")))
    }
}

/// How relative time maps onto labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBoundaries {
    /// Four equal quarters: [0,.25) [.25,.5) [.5,.75) [.75,1].
    #[default]
    Quartiles,
    /// Cut points 0, .25, .75, 1 only: [0,.25)→Q1, [.25,.75)→Q2, [.75,1]→Q3.
    Literal,
}

impl LabelBoundaries {
    pub fn label(self, t_rel: f64) -> Result<Quartile, FeatureError> {
        if !(0.0..=1.0).contains(&t_rel) {
            return Err(FeatureError::TimeOutOfRange(t_rel));
        }
        let q = match self {
            LabelBoundaries::Quartiles => ((t_rel * 4.0).floor() as usize).min(3),
            LabelBoundaries::Literal if t_rel < 0.25 => 0,
            LabelBoundaries::Literal if t_rel < 0.75 => 1,
            LabelBoundaries::Literal => 2,
        };
        Ok(Quartile::ALL[q])
    }
}

pub fn quartile_of(t_rel: f64) -> Result<Quartile, FeatureError> {
    LabelBoundaries::Quartiles.label(t_rel)
}

/// Stable 64-bit seed for a (seed, key) pair, independent of iteration order.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `k` distinct relative times drawn uniformly from [0, 1).
pub fn sample_snapshots(timeline: &DocumentTimeline, k: usize, seed: u64) -> Result<Vec<f64>, FeatureError> {
    if k == 0 {
        return Err(FeatureError::NoSnapshots);
    }
    if timeline.lifetime() == 0 {
        return Err(FeatureError::ZeroLifetime(timeline.doc_id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = Vec::with_capacity(k);
    while out.len() < k {
        let t: f64 = rng.gen();
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureClass {
    Commands,
    CommandCategories,
    HighLevelCategories,
    AdvancedFunctionality,
    Collaboration,
    Content,
    Lifetime,
}

impl FeatureClass {
    /// Classes whose values are within-class shares.
    pub fn is_normalized(self) -> bool {
        matches!(self, FeatureClass::Commands | FeatureClass::CommandCategories | FeatureClass::HighLevelCategories)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpan {
    pub class: FeatureClass,
    pub start: usize,
    pub end: usize,
}

/// Ordered feature names partitioned into classes, identified by a tag
/// derived from the names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub version: u32,
    pub tag: String,
    pub names: Vec<String>,
    pub classes: Vec<ClassSpan>,
}

impl FeatureLayout {
    pub fn new(classes: Vec<(FeatureClass, Vec<String>)>) -> Result<Self, FeatureError> {
        let mut names = Vec::new();
        let mut spans = Vec::new();
        for (class, members) in classes {
            let start = names.len();
            names.extend(members);
            spans.push(ClassSpan { class, start, end: names.len() });
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(FeatureError::DuplicateFeature(n.clone()));
            }
        }
        let mut h = Sha256::new();
        h.update(LAYOUT_VERSION.to_le_bytes());
        for n in &names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        let tag = format!("v{LAYOUT_VERSION}-{}", hex_prefix(&h.finalize()));
        Ok(Self { version: LAYOUT_VERSION, tag, names, classes: spans })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn span(&self, class: FeatureClass) -> Option<&ClassSpan> {
        self.classes.iter().find(|s| s.class == class)
    }

    fn class_of(&self, index: usize) -> FeatureClass {
        self.classes
            .iter()
            .find(|s| (s.start..s.end).contains(&index))
            .map(|s| s.class)
            .expect("every index belongs to a class")
    }

    /// Sub-layout with the named features in the given order.
    pub fn project(&self, names: &[String]) -> Result<(FeatureLayout, Vec<usize>), FeatureError> {
        let mut indices = Vec::with_capacity(names.len());
        let mut grouped: Vec<(FeatureClass, Vec<String>)> = Vec::new();
        for n in names {
            let i = self.index_of(n).ok_or_else(|| FeatureError::UnknownFeature(n.clone()))?;
            indices.push(i);
            let class = self.class_of(i);
            match grouped.last_mut() {
                Some((c, members)) if *c == class => members.push(n.clone()),
                _ => grouped.push((class, vec![n.clone()])),
            }
        }
        Ok((FeatureLayout::new(grouped)?, indices))
    }

    pub fn names_in(&self, classes: &[FeatureClass]) -> Vec<String> {
        self.classes
            .iter()
            .filter(|s| classes.contains(&s.class))
            .flat_map(|s| self.names[s.start..s.end].iter().cloned())
            .collect()
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Coarse elapsed-time bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElapsedBucket {
    Hours,
    Days,
    Weeks,
    Months,
}

impl ElapsedBucket {
    pub fn of(elapsed: Millis) -> Self {
        match elapsed {
            e if e < DAY_MS => ElapsedBucket::Hours,
            e if e < 7 * DAY_MS => ElapsedBucket::Days,
            e if e < 30 * DAY_MS => ElapsedBucket::Weeks,
            _ => ElapsedBucket::Months,
        }
    }
}

const CONTENT_FIELDS: [&str; 6] = ["pages", "sections", "paragraphs", "lines", "words", "chars"];

pub const TIME_ELAPSED: &str = "lifetime:time_elapsed_ms";
pub const TIME_ELAPSED_BUCKET: &str = "lifetime:time_elapsed_bucket";

/// One featurized snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFeatures {
    pub doc_id: String,
    pub t_rel: f64,
    pub cutoff_ms: Millis,
    pub label: Quartile,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerOptions {
    pub boundaries: LabelBoundaries,
    pub membership: AuthorMembership,
}

/// Converts document history into feature vectors with a fixed layout.
#[derive(Debug, Clone)]
pub struct Featurizer {
    taxonomy: CommandTaxonomy,
    layout: FeatureLayout,
    options: FeaturizerOptions,
    commands: BTreeMap<String, usize>,
    categories: BTreeMap<String, usize>,
    advanced: BTreeMap<String, Vec<usize>>,
    advanced_count: usize,
    spans: [usize; 7],
}

impl Featurizer {
    pub fn new(
        taxonomy: CommandTaxonomy,
        advanced: &CommandGroups,
        options: FeaturizerOptions,
    ) -> Result<Self, FeatureError> {
        let commands: BTreeMap<String, usize> =
            taxonomy.commands().enumerate().map(|(i, c)| (c.to_owned(), i)).collect();
        let categories: BTreeMap<String, usize> =
            taxonomy.categories().enumerate().map(|(i, (c, _))| (c.to_owned(), i)).collect();
        let advanced_members: BTreeMap<String, Vec<usize>> =
            advanced.membership().into_iter().map(|(c, g)| (c.to_owned(), g)).collect();

        let with_other = |prefix: &str, names: Vec<&str>| -> Vec<String> {
            names.into_iter().chain(std::iter::once(OTHER)).map(|n| format!("{prefix}:{n}")).collect()
        };
        let mut collab = vec!["collab:collaborators".to_owned(), "collab:cbs".into(), "collab:cbs_missing".into()];
        for d in Dimension::ALL {
            collab.push(format!("collab:rbs_{}", d.slug()));
            collab.push(format!("collab:rbs_{}_missing", d.slug()));
        }
        let mut content: Vec<String> = CONTENT_FIELDS.iter().map(|f| format!("content:{f}")).collect();
        content.push("content:missing".into());
        let layout = FeatureLayout::new(vec![
            (FeatureClass::Commands, with_other("cmd", commands.keys().map(String::as_str).collect())),
            (FeatureClass::CommandCategories, with_other("cat", categories.keys().map(String::as_str).collect())),
            (FeatureClass::HighLevelCategories, with_other("hl", HighLevel::ALL.iter().map(|h| h.name()).collect())),
            (
                FeatureClass::AdvancedFunctionality,
                advanced.names().flat_map(|n| [format!("adv:{n}:count"), format!("adv:{n}:present")]).collect(),
            ),
            (FeatureClass::Collaboration, collab),
            (FeatureClass::Content, content),
            (FeatureClass::Lifetime, vec![TIME_ELAPSED.into(), TIME_ELAPSED_BUCKET.into()]),
        ])?;
        let spans = {
            let mut s = [0usize; 7];
            for (i, c) in layout.classes.iter().enumerate() {
                s[i] = c.start;
            }
            s
        };
        Ok(Self {
            taxonomy,
            layout,
            options,
            commands,
            categories,
            advanced: advanced_members,
            advanced_count: advanced.len(),
            spans,
        })
    }

    /// Featurizer over the shipped taxonomy and advanced-feature groups.
    pub fn builtin() -> Self {
        Self::new(CommandTaxonomy::builtin(), &CommandGroups::builtin_advanced_features(), FeaturizerOptions::default())
            .expect("builtin layout is valid")
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn taxonomy(&self) -> &CommandTaxonomy {
        &self.taxonomy
    }

    pub fn options(&self) -> FeaturizerOptions {
        self.options
    }

    pub fn cutoff(timeline: &DocumentTimeline, t_rel: f64) -> Millis {
        timeline.creation_time + (t_rel * timeline.lifetime() as f64).floor() as Millis
    }

    pub fn featurize(&self, timeline: &DocumentTimeline, t_rel: f64) -> Result<SnapshotFeatures, FeatureError> {
        let label = self.options.boundaries.label(t_rel)?;
        if timeline.lifetime() == 0 {
            return Err(FeatureError::ZeroLifetime(timeline.doc_id.clone()));
        }
        let cutoff = Self::cutoff(timeline, t_rel);
        Ok(SnapshotFeatures {
            doc_id: timeline.doc_id.clone(),
            t_rel,
            cutoff_ms: cutoff,
            label,
            values: self.values_at(timeline, cutoff),
        })
    }

    /// Feature values from records with `timestamp <= cutoff`.
    pub fn values_at(&self, timeline: &DocumentTimeline, cutoff: Millis) -> Vec<f64> {
        let [cmd_at, cat_at, hl_at, adv_at, collab_at, content_at, life_at] = self.spans;
        let mut v = vec![0.0; self.layout.len()];
        let events = timeline.events_until(cutoff);

        let n_commands = self.commands.len();
        let n_categories = self.categories.len();
        for e in events {
            let c = self.taxonomy.classify(&e.command);
            let ci = self.commands.get(&e.command).copied().unwrap_or(n_commands);
            v[cmd_at + ci] += 1.0;
            let ki = self.categories.get(c.category()).copied().unwrap_or(n_categories);
            v[cat_at + ki] += 1.0;
            let hi = c.high_level().map_or(HighLevel::ALL.len(), HighLevel::index);
            v[hl_at + hi] += 1.0;
            if let Some(groups) = self.advanced.get(&e.command) {
                for g in groups {
                    v[adv_at + 2 * g] += 1.0;
                }
            }
        }
        if !events.is_empty() {
            let total = events.len() as f64;
            for x in &mut v[cmd_at..adv_at] {
                *x /= total;
            }
        }
        for g in 0..self.advanced_count {
            v[adv_at + 2 * g + 1] = f64::from(u8::from(v[adv_at + 2 * g] > 0.0));
        }

        let membership = self.options.membership;
        let contributors = contribution_vector(events, &self.taxonomy, None, AuthorMembership::Contributors);
        v[collab_at] = contributors.as_ref().map_or(0, |c| c.authors()) as f64;
        let mut slot = collab_at + 1;
        for dim in std::iter::once(None).chain(Dimension::ALL.into_iter().map(Some)) {
            let score = contribution_vector(events, &self.taxonomy, dim, membership).map(|c| balance_score(&c));
            match score {
                Some(s) if !s.single_author => v[slot] = s.value,
                _ => v[slot + 1] = 1.0,
            }
            slot += 2;
        }

        match timeline.content_at(cutoff) {
            Some(c) => {
                let counts =
                    [c.page_count, c.section_count, c.paragraph_count, c.line_count, c.word_count, c.character_count];
                for (i, n) in counts.iter().enumerate() {
                    v[content_at + i] = *n as f64;
                }
            }
            None => v[content_at + CONTENT_FIELDS.len()] = 1.0,
        }

        let elapsed = cutoff - timeline.creation_time;
        v[life_at] = elapsed as f64;
        v[life_at + 1] = ElapsedBucket::of(elapsed) as u8 as f64;
        v
    }

    /// Sample `k` snapshots of one document and featurize them.
    pub fn snapshots(
        &self,
        timeline: &DocumentTimeline,
        k: usize,
        seed: u64,
    ) -> Result<Vec<SnapshotFeatures>, FeatureError> {
        sample_snapshots(timeline, k, derive_seed(seed, &timeline.doc_id))?
            .into_iter()
            .map(|t| self.featurize(timeline, t))
            .collect()
    }
}

/// Featurized snapshots sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FeatureLayout,
    pub rows: Vec<SnapshotFeatures>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<Quartile> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Keep only the named features, in the given order.
    pub fn project(&self, names: &[String]) -> Result<Dataset, FeatureError> {
        let (layout, indices) = self.layout.project(names)?;
        let rows = self
            .rows
            .iter()
            .map(|r| SnapshotFeatures { values: indices.iter().map(|&i| r.values[i]).collect(), ..r.clone() })
            .collect();
        Ok(Dataset { layout, rows })
    }

    pub fn select_classes(&self, classes: &[FeatureClass]) -> Result<Dataset, FeatureError> {
        self.project(&self.layout.names_in(classes))
    }

    /// CSV with header `doc_id,t_rel,cutoff_ms,<features...>,label`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["doc_id".to_owned(), "t_rel".into(), "cutoff_ms".into()];
        header.extend(self.layout.names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.doc_id.clone(), r.t_rel.to_string(), r.cutoff_ms.to_string()];
            rec.extend(r.values.iter().map(|x| x.to_string()));
            rec.push(r.label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, layout: FeatureLayout) -> Result<Dataset, FeatureError> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        let width = layout.len() + 4;
        let expected = std::iter::once("doc_id")
            .chain(["t_rel", "cutoff_ms"])
            .chain(layout.names.iter().map(String::as_str))
            .chain(["label"]);
        if header.len() != width || !header.iter().eq(expected) {
            return Err(FeatureError::Schema(format!("CSV header does not match feature layout {}", layout.tag)));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, FeatureError> {
                rec[i]
                    .parse()
                    .map_err(|_| FeatureError::Schema(format!("bad number {:?} in column {}", &rec[i], &header[i])))
            };
            let cutoff_ms = rec[2].parse().map_err(|_| FeatureError::Schema(format!("bad cutoff {:?}", &rec[2])))?;
            let values = (3..width - 1).map(num).collect::<Result<_, _>>()?;
            rows.push(SnapshotFeatures {
                doc_id: rec[0].to_owned(),
                t_rel: num(1)?,
                cutoff_ms,
                label: rec[width - 1].parse()?,
                values,
            });
        }
        Ok(Dataset { layout, rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetParams {
    pub snapshots_per_doc: usize,
    pub seed: u64,
    pub split_ratio: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { snapshots_per_doc: DEFAULT_SNAPSHOTS, seed: 0, split_ratio: 0.8 }
    }
}

/// Split documents (never individual snapshots) into train and test, then
/// featurize `snapshots_per_doc` snapshots of each.
pub fn build_dataset(
    corpus: &Corpus,
    featurizer: &Featurizer,
    params: &DatasetParams,
) -> Result<(Dataset, Dataset), FeatureError> {
    let ratio = params.split_ratio;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FeatureError::SplitRatio(ratio));
    }
    if params.snapshots_per_doc == 0 {
        return Err(FeatureError::NoSnapshots);
    }
    let mut docs: Vec<&str> = corpus.keys().map(String::as_str).collect();
    let n_train = (docs.len() as f64 * ratio).round() as usize;
    if n_train == 0 || n_train >= docs.len() {
        return Err(FeatureError::TooFewDocuments { docs: docs.len(), ratio });
    }
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let (train, test) = docs.split_at(n_train);
    let side = |ids: &[&str]| -> Result<Dataset, FeatureError> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        let per_doc: Vec<Vec<SnapshotFeatures>> = ids
            .par_iter()
            .map(|id| featurizer.snapshots(&corpus[*id], params.snapshots_per_doc, params.seed))
            .collect::<Result<_, _>>()?;
        Ok(Dataset { layout: featurizer.layout().clone(), rows: per_doc.into_iter().flatten().collect() })
    };
    Ok((side(train)?, side(test)?))
}
