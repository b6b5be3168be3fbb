//! Three-level command taxonomy (command → category → high-level category)
//! and named command groups (UI activity sets, advanced functionality).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Sentinel name used for commands missing from the taxonomy.
pub const UNKNOWN: &str = "Unknown";

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.tsv");
const DEFAULT_ACTIVITY_SETS: &str = include_str!("../data/activity_sets.tsv");
const DEFAULT_ADVANCED_FEATURES: &str = include_str!("../data/advanced_features.tsv");

/// The ten coarse activity groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HighLevel {
    AddingContent,
    Editing,
    Viewing,
    Selecting,
    Sharing,
    Communicating,
    Finalizing,
    StartNewOpenClose,
    SavePrintCopy,
    Meta,
}

impl HighLevel {
    pub const ALL: [HighLevel; 10] = [
        HighLevel::AddingContent,
        HighLevel::Editing,
        HighLevel::Viewing,
        HighLevel::Selecting,
        HighLevel::Sharing,
        HighLevel::Communicating,
        HighLevel::Finalizing,
        HighLevel::StartNewOpenClose,
        HighLevel::SavePrintCopy,
        HighLevel::Meta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HighLevel::AddingContent => "Adding Content",
            HighLevel::Editing => "Editing",
            HighLevel::Viewing => "Viewing",
            HighLevel::Selecting => "Selecting",
            HighLevel::Sharing => "Sharing",
            HighLevel::Communicating => "Communicating",
            HighLevel::Finalizing => "Finalizing",
            HighLevel::StartNewOpenClose => "Start/New/Open/Close",
            HighLevel::SavePrintCopy => "Save/Print/Copy",
            HighLevel::Meta => "Meta",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The four groups that count as content contribution.
    pub fn is_contribution(self) -> bool {
        matches!(self, HighLevel::AddingContent | HighLevel::Editing | HighLevel::Communicating | HighLevel::Finalizing)
    }
}

impl fmt::Display for HighLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HighLevel {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HighLevel::ALL.into_iter().find(|h| h.name() == s).ok_or_else(|| TaxonomyError::UnknownHighLevel(s.to_owned()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("reading table: {0}")]
    Read(#[from] csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("line {line}: expected {expected} tab-separated columns, got {got}")]
    Columns { line: u64, expected: usize, got: usize },
    #[error("line {line}: empty field")]
    EmptyField { line: u64 },
    #[error("line {line}: duplicate command {command:?}")]
    DuplicateCommand { line: u64, command: String },
    #[error("category {category:?} is mapped to both {first:?} and {second:?}")]
    ConflictingCategory { category: String, first: String, second: String },
    #[error("unknown high-level category {0:?}")]
    UnknownHighLevel(String),
}

/// Result of looking a command up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification<'a> {
    Mapped { category: &'a str, high_level: HighLevel },
    Unmapped,
}

impl<'a> Classification<'a> {
    pub fn category(&self) -> &'a str {
        match self {
            Classification::Mapped { category, .. } => category,
            Classification::Unmapped => UNKNOWN,
        }
    }

    pub fn high_level(&self) -> Option<HighLevel> {
        match self {
            Classification::Mapped { high_level, .. } => Some(*high_level),
            Classification::Unmapped => None,
        }
    }

    pub fn high_level_name(&self) -> &'static str {
        self.high_level().map_or(UNKNOWN, HighLevel::name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandTaxonomy {
    entries: BTreeMap<String, (String, HighLevel)>,
    categories: BTreeMap<String, HighLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TaxonomyStats {
    pub commands: usize,
    pub categories: usize,
    pub high_levels: usize,
}

impl CommandTaxonomy {
    /// The shipped table: the sample commands of every category plus the
    /// commands used by the default activity and advanced-feature groups.
    pub fn builtin() -> Self {
        Self::load(DEFAULT_TAXONOMY.as_bytes()).expect("shipped taxonomy is valid")
    }

    /// Load a `command<TAB>category<TAB>high_level` table. The first
    /// non-comment row is the header; `#` lines are comments.
    pub fn load<R: Read>(input: R) -> Result<Self, TaxonomyError> {
        let mut taxonomy = CommandTaxonomy::default();
        for (line, row) in read_rows(input, 3)? {
            let (command, category, high) = (&row[0], &row[1], &row[2]);
            let high_level: HighLevel = high.parse()?;
            taxonomy.insert(line, command, category, high_level)?;
        }
        Ok(taxonomy)
    }

    fn insert(&mut self, line: u64, command: &str, category: &str, high_level: HighLevel) -> Result<(), TaxonomyError> {
        if self.entries.contains_key(command) {
            return Err(TaxonomyError::DuplicateCommand { line, command: command.to_owned() });
        }
        match self.categories.get(category) {
            Some(&existing) if existing != high_level => {
                return Err(TaxonomyError::ConflictingCategory {
                    category: category.to_owned(),
                    first: existing.name().to_owned(),
                    second: high_level.name().to_owned(),
                })
            }
            Some(_) => {}
            None => {
                self.categories.insert(category.to_owned(), high_level);
            }
        }
        self.entries.insert(command.to_owned(), (category.to_owned(), high_level));
        Ok(())
    }

    /// Case-sensitive exact lookup.
    pub fn classify(&self, command: &str) -> Classification<'_> {
        match self.entries.get(command) {
            Some((category, high_level)) => Classification::Mapped { category, high_level: *high_level },
            None => Classification::Unmapped,
        }
    }

    pub fn stats(&self) -> TaxonomyStats {
        let high_levels: BTreeSet<HighLevel> = self.categories.values().copied().collect();
        TaxonomyStats {
            commands: self.entries.len(),
            categories: self.categories.len(),
            high_levels: high_levels.len(),
        }
    }

    /// Commands in lexicographic order.
    pub fn commands(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Categories in lexicographic order.
    pub fn categories(&self) -> impl Iterator<Item = (&str, HighLevel)> {
        self.categories.iter().map(|(c, h)| (c.as_str(), *h))
    }

    pub fn category_high_level(&self, category: &str) -> Option<HighLevel> {
        self.categories.get(category).copied()
    }
}

/// Named sets of commands, e.g. "HeaderFooter" → {InsertHeader, ...}.
/// Groups may overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandGroups {
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl CommandGroups {
    /// Load a two-column `group<TAB>command` table with a header row.
    pub fn load<R: Read>(input: R) -> Result<Self, TaxonomyError> {
        let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (_, row) in read_rows(input, 2)? {
            groups.entry(row[0].clone()).or_default().insert(row[1].clone());
        }
        Ok(Self { groups })
    }

    pub fn builtin_activity_sets() -> Self {
        Self::load(DEFAULT_ACTIVITY_SETS.as_bytes()).expect("shipped activity sets are valid")
    }

    pub fn builtin_advanced_features() -> Self {
        Self::load(DEFAULT_ADVANCED_FEATURES.as_bytes()).expect("shipped advanced features are valid")
    }

    pub fn from_map(groups: BTreeMap<String, BTreeSet<String>>) -> Self {
        Self { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(name)
    }

    /// Command → indices (in name order) of the groups containing it.
    pub fn membership(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, commands) in self.groups.values().enumerate() {
            for c in commands {
                out.entry(c.as_str()).or_default().push(i);
            }
        }
        out
    }
}

fn read_rows<R: Read>(input: R, columns: usize) -> Result<Vec<(u64, Vec<String>)>, TaxonomyError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(input);
    let mut rows = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != columns {
            return Err(TaxonomyError::Columns { line, expected: columns, got: record.len() });
        }
        if !saw_header {
            saw_header = true;
            continue;
        }
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_owned()).collect();
        if fields.iter().any(String::is_empty) {
            return Err(TaxonomyError::EmptyField { line });
        }
        rows.push((line, fields));
    }
    if !saw_header {
        return Err(TaxonomyError::MissingHeader);
    }
    Ok(rows)
}
