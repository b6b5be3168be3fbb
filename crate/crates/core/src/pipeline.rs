//! End-to-end batch stages: simulate, analyze, featurize, train, evaluate.
//!
//! Every stage reads its inputs from files and writes its outputs under one
//! output directory, so stages can run separately or chained by [`repro`].
//! Numbers depend only on the config; nothing reads the clock.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collaboration::AuthorMembership;
use crate::features::{
    build_dataset, Dataset, DatasetParams, FeatureError, FeatureLayout, Featurizer, FeaturizerOptions, LabelBoundaries,
    DEFAULT_SNAPSHOTS,
};
use crate::lifecycle::{
    activity_stage_matrix, cat_distribution, first_activity_profile, lifetime_collaborator_correlation,
    ActivityStageMatrix, AnalyticsError, CatDistribution, CatMode, FirstActivityProfile, LifetimeCorrelation,
    CAT_POINTS, STAGES,
};
use crate::predictor::{
    evaluate as evaluate_models, train_baseline, train_ova_gbdt, ArParams, BoostedForestModel, EvalReport,
    ModelEvaluation, PredictorError, TrainParams,
};
use crate::synthgen::{calibration_report, Generator, GeneratorConfig, GeneratorError};
use crate::taxonomy::{CommandGroups, CommandTaxonomy, TaxonomyError};
use crate::telemetry::{build_timelines, filter_corpus, parse_log_stream, Corpus, FilterError, FilterParams};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn input_err(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Input { path: path.display().to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSettings {
    pub snapshots_per_doc: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub label_boundaries: LabelBoundaries,
    pub author_membership: AuthorMembership,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let d = DatasetParams::default();
        Self {
            snapshots_per_doc: DEFAULT_SNAPSHOTS,
            split_ratio: d.split_ratio,
            seed: d.seed,
            label_boundaries: LabelBoundaries::default(),
            author_membership: AuthorMembership::default(),
        }
    }
}

impl FeatureSettings {
    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams { snapshots_per_doc: self.snapshots_per_doc, seed: self.seed, split_ratio: self.split_ratio }
    }

    pub fn featurizer_options(&self) -> FeaturizerOptions {
        FeaturizerOptions { boundaries: self.label_boundaries, membership: self.author_membership }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSettings {
    pub cat_mode: CatMode,
    pub max_collaborators: usize,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        Self { cat_mode: CatMode::Pooled, max_collaborators: 10 }
    }
}

/// Optional input locations. Unset entries fall back to the shipped
/// mappings or to the files a previous stage wrote into the output directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSettings {
    pub taxonomy: Option<PathBuf>,
    pub activity_sets: Option<PathBuf>,
    pub advanced_features: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Generator keys merged over the shipped generator config.
    pub simulate: toml::Table,
    pub filter: FilterParams,
    pub features: FeatureSettings,
    pub analyze: AnalyzeSettings,
    pub train: TrainParams,
    pub evaluate: ArParams,
    pub paths: PathSettings,
}

impl PipelineConfig {
    /// Parse and validate. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(s: &str, base_dir: &Path, origin: &str) -> Result<Self, PipelineError> {
        let bad = |message: String| PipelineError::Config { path: origin.to_owned(), message };
        let mut cfg: PipelineConfig = toml::from_str(s).map_err(|e| bad(e.message().to_owned()))?;
        cfg.filter.validate().map_err(|e| bad(format!("[filter] {e}")))?;
        cfg.train.validate().map_err(|e| bad(format!("[train] {e}")))?;
        let f = &cfg.features;
        if f.snapshots_per_doc == 0 {
            return Err(bad("[features] snapshots_per_doc must be at least 1".into()));
        }
        if !(f.split_ratio > 0.0 && f.split_ratio < 1.0) {
            return Err(bad(format!("[features] split_ratio {} is outside (0, 1)", f.split_ratio)));
        }
        if cfg.analyze.max_collaborators < 2 {
            return Err(bad("[analyze] max_collaborators must be at least 2".into()));
        }
        if cfg.evaluate.iterations == 0 {
            return Err(bad("[evaluate] iterations must be at least 1".into()));
        }
        let p = &mut cfg.paths;
        for slot in [
            &mut p.taxonomy,
            &mut p.activity_sets,
            &mut p.advanced_features,
            &mut p.corpus,
            &mut p.dataset,
            &mut p.models,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        }
        let res = Resources::load(&cfg.paths)?;
        let gen = cfg.generator().map_err(|e| bad(format!("[simulate] {e}")))?;
        Generator::new(gen, &res.taxonomy).map_err(|e| bad(format!("[simulate] {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, &path.display().to_string())
    }

    pub fn generator(&self) -> Result<GeneratorConfig, GeneratorError> {
        GeneratorConfig::with_overrides(self.simulate.clone())
    }
}

/// Mapping tables every stage may need.
pub struct Resources {
    pub taxonomy: CommandTaxonomy,
    pub activity_sets: CommandGroups,
    pub advanced_features: CommandGroups,
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn load_groups(path: &Option<PathBuf>, builtin: fn() -> CommandGroups) -> Result<CommandGroups, PipelineError> {
    match path {
        None => Ok(builtin()),
        Some(p) => CommandGroups::load(open(p)?).map_err(|e: TaxonomyError| input_err(p, e)),
    }
}

impl Resources {
    pub fn load(paths: &PathSettings) -> Result<Self, PipelineError> {
        let taxonomy = match &paths.taxonomy {
            None => CommandTaxonomy::builtin(),
            Some(p) => CommandTaxonomy::load(open(p)?).map_err(|e| input_err(p, e))?,
        };
        Ok(Self {
            taxonomy,
            activity_sets: load_groups(&paths.activity_sets, CommandGroups::builtin_activity_sets)?,
            advanced_features: load_groups(&paths.advanced_features, CommandGroups::builtin_advanced_features)?,
        })
    }
}

/// Create parent directories, write through a buffer and flush.
fn write_file<F>(path: &Path, body: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), PipelineError>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    body(&mut w)?;
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(io_err(path))
    })
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), PipelineError> {
    write_file(path, |w| {
        writeln!(w, "{header}").map_err(io_err(path))?;
        for r in rows {
            writeln!(w, "{r}").map_err(io_err(path))?;
        }
        Ok(())
    })
}

/// Quote a CSV field when it needs it.
fn field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Names of the CAT points: pre, 1..10, post.
pub fn cat_point_label(k: usize) -> String {
    match k {
        0 => "pre".into(),
        k if k == CAT_POINTS - 1 => "post".into(),
        k => k.to_string(),
    }
}

fn corpus_path(cfg: &PipelineConfig, out: &Path) -> PathBuf {
    cfg.paths.corpus.clone().unwrap_or_else(|| out.join("corpus.jsonl"))
}

fn dataset_dir(cfg: &PipelineConfig, out: &Path) -> PathBuf {
    cfg.paths.dataset.clone().unwrap_or_else(|| out.join("dataset"))
}

fn models_dir(cfg: &PipelineConfig, out: &Path) -> PathBuf {
    cfg.paths.models.clone().unwrap_or_else(|| out.join("models"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOutcome {
    pub documents: usize,
    pub records: usize,
}

/// Generate a corpus with its ground-truth sidecar and calibration report.
pub fn simulate(cfg: &PipelineConfig, out: &Path) -> Result<SimulateOutcome, PipelineError> {
    let res = Resources::load(&cfg.paths)?;
    let gen_cfg = cfg.generator()?;
    let generator = Generator::new(gen_cfg.clone(), &res.taxonomy)?;
    let synthetic = generator.generate();
    let corpus_file = out.join("corpus.jsonl");
    write_file(&corpus_file, |w| synthetic.write_jsonl(w).map_err(io_err(&corpus_file)))?;
    let truth_file = out.join("truth.jsonl");
    write_file(&truth_file, |w| synthetic.write_truth(w).map_err(io_err(&truth_file)))?;
    let truth: Vec<_> = synthetic.truth().cloned().collect();
    let report = calibration_report(&gen_cfg, &synthetic.to_corpus(), &truth, &res.taxonomy)?;
    write_json(&out.join("calibration.json"), &report)?;
    Ok(SimulateOutcome {
        documents: synthetic.documents.len(),
        records: synthetic.documents.iter().map(|d| d.records.len()).sum(),
    })
}

/// Parse a JSONL corpus and apply the document filter. Malformed lines are
/// logged and skipped; their count is returned.
pub fn load_corpus(path: &Path, filter: &FilterParams) -> Result<(Corpus, usize), PipelineError> {
    let parsed = parse_log_stream(open(path)?).map_err(io_err(path))?;
    for d in parsed.diagnostics.iter().take(20) {
        log::warn!("{}: {d}", path.display());
    }
    if parsed.diagnostics.len() > 20 {
        log::warn!("{}: {} malformed lines in total", path.display(), parsed.diagnostics.len());
    }
    let all = build_timelines(parsed.events, parsed.snapshots);
    let before = all.len();
    let kept = filter_corpus(all, filter)?;
    log::info!("{}: kept {} of {} documents", path.display(), kept.len(), before);
    Ok((kept, parsed.diagnostics.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analytics {
    pub documents: usize,
    pub events: u64,
    pub malformed_lines: usize,
    pub cat_mode: CatMode,
    pub cat: CatDistribution,
    /// Absent when no activity occurs in the corpus.
    pub activity_stages: Option<ActivityStageMatrix>,
    pub first_activity: FirstActivityProfile,
    /// Absent when fewer than two collaborator groups are populated.
    pub lifetime_correlation: Option<LifetimeCorrelation>,
}

/// Lifecycle statistics over the filtered corpus.
pub fn compute_analytics(
    corpus: &Corpus,
    settings: &AnalyzeSettings,
    res: &Resources,
) -> Result<Analytics, PipelineError> {
    let cat = cat_distribution(corpus.values(), settings.cat_mode)?;
    let activity_stages = match activity_stage_matrix(corpus.values(), &res.activity_sets) {
        Ok(m) => Some(m),
        Err(AnalyticsError::NoActivitySets) => None,
        Err(e) => return Err(e.into()),
    };
    let lifetime_correlation = match lifetime_collaborator_correlation(corpus.values(), settings.max_collaborators) {
        Ok(c) => Some(c),
        Err(AnalyticsError::TooFewGroups(n)) => {
            log::warn!("lifetime correlation skipped: {n} populated collaborator group(s)");
            None
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Analytics {
        documents: corpus.len(),
        events: corpus.values().map(|t| t.events.len() as u64).sum(),
        malformed_lines: 0,
        cat_mode: settings.cat_mode,
        cat,
        activity_stages,
        first_activity: first_activity_profile(corpus.values(), &res.taxonomy),
        lifetime_correlation,
    })
}

/// Write analytics as one JSON document plus one CSV per statistic.
pub fn write_analytics(a: &Analytics, out: &Path) -> Result<(), PipelineError> {
    write_json(&out.join("analytics.json"), a)?;
    write_lines(
        &out.join("cat.csv"),
        "bucket,share",
        a.cat.buckets.iter().enumerate().map(|(k, s)| format!("{},{s}", cat_point_label(k))),
    )?;
    let rows = a.activity_stages.iter().flat_map(|m| m.rows.iter()).enumerate().flat_map(|(rank, r)| {
        (0..STAGES)
            .map(move |s| format!("{},{},{},{},{}", rank + 1, field(&r.activity), s + 1, r.shares[s], r.occurrences))
    });
    write_lines(&out.join("activity_stages.csv"), "order,activity,stage,share,occurrences", rows)?;
    let mut fa = Vec::new();
    for r in &a.first_activity.ranks {
        for (scope, level, map) in [
            ("first", "high_level", &r.first_high_level),
            ("first", "category", &r.first_category),
            ("all", "high_level", &r.all_high_level),
            ("all", "category", &r.all_category),
        ] {
            for (name, share) in map {
                fa.push(format!("{},{},{scope},{level},{},{share}", r.rank, r.authors, field(name)));
            }
        }
    }
    write_lines(&out.join("first_activity.csv"), "rank,authors,scope,level,name,share", fa)?;
    let groups = a.lifetime_correlation.iter().flat_map(|c| c.groups.iter());
    write_lines(
        &out.join("lifetime_by_collaborators.csv"),
        "collaborators,documents,mean_lifetime_ms",
        groups.map(|g| format!("{},{},{}", g.collaborators, g.documents, g.mean_lifetime_ms)),
    )
}

pub fn analyze(cfg: &PipelineConfig, out: &Path) -> Result<Analytics, PipelineError> {
    let res = Resources::load(&cfg.paths)?;
    let (corpus, malformed) = load_corpus(&corpus_path(cfg, out), &cfg.filter)?;
    let mut a = compute_analytics(&corpus, &cfg.analyze, &res)?;
    a.malformed_lines = malformed;
    write_analytics(&a, out)?;
    Ok(a)
}

/// Contents of `features.json`, which later stages use to read the CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub layout: FeatureLayout,
    pub params: DatasetParams,
    pub options: FeaturizerOptions,
    pub train_documents: usize,
    pub test_documents: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

fn doc_count(d: &Dataset) -> usize {
    let mut ids: Vec<&str> = d.rows.iter().map(|r| r.doc_id.as_str()).collect();
    ids.dedup();
    ids.len()
}

pub fn featurize(cfg: &PipelineConfig, out: &Path) -> Result<DatasetManifest, PipelineError> {
    let res = Resources::load(&cfg.paths)?;
    let (corpus, _) = load_corpus(&corpus_path(cfg, out), &cfg.filter)?;
    let featurizer = Featurizer::new(res.taxonomy, &res.advanced_features, cfg.features.featurizer_options())?;
    let params = cfg.features.dataset_params();
    let (train, test) = build_dataset(&corpus, &featurizer, &params)?;
    let dir = out.join("dataset");
    write_file(&dir.join("train.csv"), |w| Ok(train.write_csv(w)?))?;
    write_file(&dir.join("test.csv"), |w| Ok(test.write_csv(w)?))?;
    let manifest = DatasetManifest {
        layout: featurizer.layout().clone(),
        params,
        options: featurizer.options(),
        train_documents: doc_count(&train),
        test_documents: doc_count(&test),
        train_rows: train.len(),
        test_rows: test.len(),
    };
    write_json(&dir.join("features.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, PipelineError> {
    let path = dir.join("features.json");
    serde_json::from_reader(open(&path)?).map_err(|e| input_err(&path, e))
}

pub fn read_split(dir: &Path, split: &str, layout: &FeatureLayout) -> Result<Dataset, PipelineError> {
    let path = dir.join(format!("{split}.csv"));
    Dataset::read_csv(open(&path)?, layout.clone()).map_err(|e| input_err(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub train_rows: usize,
    pub model_trees: usize,
    pub baseline_trees: usize,
}

pub fn train(cfg: &PipelineConfig, out: &Path) -> Result<TrainOutcome, PipelineError> {
    let dir = dataset_dir(cfg, out);
    let manifest = read_manifest(&dir)?;
    let data = read_split(&dir, "train", &manifest.layout)?;
    let model = train_ova_gbdt(&data, &cfg.train)?;
    let baseline = train_baseline(&data, &cfg.train)?;
    let models = out.join("models");
    for (name, m) in [("model.json", &model), ("baseline.json", &baseline)] {
        let path = models.join(name);
        write_file(&path, |w| writeln!(w, "{}", m.to_json()).map_err(io_err(&path)))?;
    }
    write_lines(
        &models.join("feature_importance.csv"),
        "rank,feature,gain",
        model
            .feature_importance()
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{},{},{}", i + 1, field(&f.feature), f.gain)),
    )?;
    Ok(TrainOutcome { train_rows: data.len(), model_trees: model.tree_count(), baseline_trees: baseline.tree_count() })
}

pub fn read_model(path: &Path) -> Result<BoostedForestModel, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    BoostedForestModel::from_json(&text).map_err(|e| input_err(path, e))
}

pub fn evaluate(cfg: &PipelineConfig, out: &Path) -> Result<EvalReport, PipelineError> {
    let dir = dataset_dir(cfg, out);
    let manifest = read_manifest(&dir)?;
    let test = read_split(&dir, "test", &manifest.layout)?;
    let models = models_dir(cfg, out);
    let model = read_model(&models.join("model.json"))?;
    let baseline = read_model(&models.join("baseline.json"))?;
    let report = evaluate_models(&model, &baseline, &test, cfg.evaluate)?;
    write_json(&out.join("report.json"), &report)?;
    let which = [("model", &report.model), ("baseline", &report.baseline)];
    let pr = which.iter().flat_map(|(name, e): &(&str, &ModelEvaluation)| {
        e.per_class.iter().flat_map(move |c| {
            c.pr_curve.iter().map(move |p| format!("{name},{},{},{},{}", c.label, p.threshold, p.precision, p.recall))
        })
    });
    write_lines(&out.join("pr_curves.csv"), "model,label,threshold,precision,recall", pr)?;
    let conf = which.iter().flat_map(|(name, e)| {
        e.confusion.iter().enumerate().flat_map(move |(t, row)| {
            row.iter().enumerate().map(move |(p, n)| format!("{name},Q{},Q{},{n}", t + 1, p + 1))
        })
    });
    write_lines(&out.join("confusion.csv"), "model,true,predicted,count", conf)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub documents_generated: usize,
    pub documents_kept: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub model_accuracy: f64,
    pub baseline_accuracy: f64,
    pub delta: f64,
    pub p_value: f64,
    pub ar_iterations: usize,
    pub cat_l1: f64,
    pub lifetime_r: Option<f64>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k}: {v}\n"));
        line("documents_generated", self.documents_generated.to_string());
        line("documents_kept", self.documents_kept.to_string());
        line("train_examples", self.train_examples.to_string());
        line("test_examples", self.test_examples.to_string());
        line("cat_l1_to_config", format!("{:.6}", self.cat_l1));
        line("lifetime_collaborators_r", self.lifetime_r.map_or("n/a".into(), |r| format!("{r:.4}")));
        line("model_accuracy", format!("{:.6}", self.model_accuracy));
        line("baseline_accuracy", format!("{:.6}", self.baseline_accuracy));
        line("delta", format!("{:.6}", self.delta));
        line("p_value", format!("{:.6}", self.p_value));
        line("ar_iterations", self.ar_iterations.to_string());
        line("significant_at_0.01", (self.p_value < 0.01).to_string());
        s
    }
}

/// Run every stage in order inside `out`. Input paths that name earlier
/// stage outputs are ignored so the chain always uses its own files.
pub fn repro(cfg: &PipelineConfig, out: &Path) -> Result<Summary, PipelineError> {
    let mut cfg = cfg.clone();
    cfg.paths.corpus = None;
    cfg.paths.dataset = None;
    cfg.paths.models = None;
    let sim = simulate(&cfg, out)?;
    let analytics = analyze(&cfg, out)?;
    let manifest = featurize(&cfg, out)?;
    train(&cfg, out)?;
    let report = evaluate(&cfg, out)?;
    let weights = cfg.generator()?.cat_weights;
    let summary = Summary {
        documents_generated: sim.documents,
        documents_kept: analytics.documents,
        train_examples: manifest.train_rows,
        test_examples: report.test_examples,
        model_accuracy: report.model.macro_accuracy,
        baseline_accuracy: report.baseline.macro_accuracy,
        delta: report.delta,
        p_value: report.p_value,
        ar_iterations: report.ar_iterations,
        cat_l1: analytics.cat.l1_distance(&weights),
        lifetime_r: analytics.lifetime_correlation.as_ref().map(|c| c.r),
    };
    let path = out.join("summary.txt");
    write_file(&path, |w| w.write_all(summary.render().as_bytes()).map_err(io_err(&path)))?;
    Ok(summary)
}
