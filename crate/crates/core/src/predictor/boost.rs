//! One-vs-all gradient boosting on logistic loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Columns, Tree, TreeParams};
use super::PredictorError;
use crate::features::{derive_seed, Dataset, FeatureClass, Quartile};

pub const MODEL_FORMAT: u32 = 1;
const PRIOR_CLAMP: f64 = 1e-6;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { tree_count: 100, max_depth: 4, learning_rate: 0.1, min_leaf: 20, subsample: 1.0, seed: 0 }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Params(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        Ok(())
    }
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic loss `log(1 + e^f) − y f` for raw score `f`.
pub fn logistic_loss(f: f64, y: f64) -> f64 {
    let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
    softplus - y * f
}

/// Derivative of [`logistic_loss`] with respect to `f`.
pub fn logistic_gradient(f: f64, y: f64) -> f64 {
    sigmoid(f) - y
}

fn mean_loss(scores: &[f64], y: &[f64]) -> f64 {
    scores.iter().zip(y).map(|(f, y)| logistic_loss(*f, *y)).sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEnsemble {
    pub label: Quartile,
    pub bias: f64,
    pub trees: Vec<Tree>,
    /// Mean training loss before the first tree and after each one.
    pub loss_history: Vec<f64>,
}

impl ClassEnsemble {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.bias + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Quartile,
    pub scores: [f64; 4],
}

/// Index of the largest score; ties go to the lower quartile.
pub fn argmax(scores: &[f64; 4]) -> Quartile {
    let mut best = 0;
    for i in 1..4 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Quartile::ALL[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub gain: f64,
}

/// Four one-vs-all boosted ensembles over a fixed feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedForestModel {
    pub format_version: u32,
    pub layout_tag: String,
    pub feature_names: Vec<String>,
    pub params: TrainParams,
    /// Set when trained on a single label.
    pub degenerate: bool,
    pub classes: Vec<ClassEnsemble>,
}

impl BoostedForestModel {
    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn tree_count(&self) -> usize {
        self.classes.iter().map(|c| c.trees.len()).sum()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let mut scores = [0.0; 4];
        for (s, c) in scores.iter_mut().zip(&self.classes) {
            *s = c.score(x);
        }
        Prediction { label: argmax(&scores), scores }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Prediction>, PredictorError> {
        if data.layout.tag != self.layout_tag {
            return Err(PredictorError::LayoutMismatch {
                model: self.layout_tag.clone(),
                data: data.layout.tag.clone(),
            });
        }
        Ok(data.rows.par_iter().map(|r| self.predict(&r.values)).collect())
    }

    /// Split gain summed over every tree of every class, largest first.
    pub fn feature_importance(&self) -> Vec<FeatureImportance> {
        let mut gain = vec![0.0; self.width()];
        let mut used = vec![false; self.width()];
        for c in &self.classes {
            for t in &c.trees {
                for (f, g) in t.splits() {
                    gain[f] += g;
                    used[f] = true;
                }
            }
        }
        let mut out: Vec<(usize, f64)> = (0..self.width()).filter(|f| used[*f]).map(|f| (f, gain[f])).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(f, gain)| FeatureImportance { feature: self.feature_names[f].clone(), gain }).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PredictorError> {
        let m: Self = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT {
            return Err(PredictorError::Model(format!(
                "format version {} is not supported (expected {MODEL_FORMAT})",
                m.format_version
            )));
        }
        if m.classes.len() != 4 || m.classes.iter().zip(Quartile::ALL).any(|(c, q)| c.label != q) {
            return Err(PredictorError::Model("expected one ensemble per quartile, in order".into()));
        }
        for c in &m.classes {
            for t in &c.trees {
                t.validate(m.width()).map_err(PredictorError::Model)?;
            }
        }
        Ok(m)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    (p / (1.0 - p)).ln()
}

fn train_class(
    label: Quartile,
    cols: &Columns,
    presorted: &[Vec<u32>],
    labels: &[Quartile],
    params: &TrainParams,
) -> ClassEnsemble {
    let n = cols.n_rows;
    let y: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(*l == label))).collect();
    let bias = logit(y.iter().sum::<f64>() / n as f64);
    let mut scores = vec![bias; n];
    let mut loss = mean_loss(&scores, &y);
    let mut history = vec![loss];
    let mut trees = Vec::with_capacity(params.tree_count);
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf };
    let sample_size = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, label.name()));
    let mut residual = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    let mut delta = vec![0.0; n];

    for _ in 0..params.tree_count {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            residual[i] = y[i] - p;
            hessian[i] = p * (1.0 - p);
        }
        let lists = if sample_size < n {
            let mut keep = vec![false; n];
            for i in rand::seq::index::sample(&mut rng, n, sample_size) {
                keep[i] = true;
            }
            presorted.iter().map(|l| l.iter().copied().filter(|r| keep[*r as usize]).collect()).collect()
        } else {
            presorted.to_vec()
        };
        let mut tree = fit_tree(cols, lists, &residual, &hessian, tree_params);
        tree.scale_leaves(params.learning_rate);
        for (i, d) in delta.iter_mut().enumerate() {
            *d = tree.predict_column(cols, i);
        }

        let trial = |delta: &[f64]| -> f64 {
            scores.iter().zip(delta).zip(&y).map(|((f, d), y)| logistic_loss(f + d, *y)).sum::<f64>() / n as f64
        };
        let mut new_loss = trial(&delta);
        let mut halvings = 0;
        while new_loss > loss && halvings < MAX_HALVINGS {
            tree.scale_leaves(0.5);
            delta.iter_mut().for_each(|d| *d *= 0.5);
            new_loss = trial(&delta);
            halvings += 1;
        }
        if new_loss > loss {
            log::debug!("class {label}: no descent step found, stopping at {} trees", trees.len());
            break;
        }
        for (s, d) in scores.iter_mut().zip(&delta) {
            *s += d;
        }
        loss = new_loss;
        history.push(loss);
        trees.push(tree);
    }
    ClassEnsemble { label, bias, trees, loss_history: history }
}

/// Fit one binary ensemble per quartile on `train`.
pub fn train_ova_gbdt(train: &Dataset, params: &TrainParams) -> Result<BoostedForestModel, PredictorError> {
    params.validate()?;
    if train.is_empty() {
        return Err(PredictorError::EmptyTrainingSet);
    }
    let width = train.layout.len();
    if let Some(r) = train.rows.iter().find(|r| r.values.len() != width) {
        return Err(PredictorError::Width { expected: width, found: r.values.len() });
    }
    let labels = train.labels();
    let distinct: std::collections::BTreeSet<Quartile> = labels.iter().copied().collect();
    let degenerate = distinct.len() < 2;

    let classes = if degenerate {
        log::warn!("training set has a single label ({}); model will always predict it", labels[0]);
        let n = labels.len() as f64;
        Quartile::ALL
            .iter()
            .map(|q| {
                let y: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(l == q))).collect();
                let bias = logit(y.iter().sum::<f64>() / n);
                let loss = mean_loss(&vec![bias; y.len()], &y);
                ClassEnsemble { label: *q, bias, trees: Vec::new(), loss_history: vec![loss] }
            })
            .collect()
    } else {
        let cols = Columns::from_rows(width, train.rows.iter().map(|r| r.values.as_slice()));
        let presorted = cols.presort();
        Quartile::ALL.par_iter().map(|q| train_class(*q, &cols, &presorted, &labels, params)).collect()
    };
    Ok(BoostedForestModel {
        format_version: MODEL_FORMAT,
        layout_tag: train.layout.tag.clone(),
        feature_names: train.layout.names.clone(),
        params: *params,
        degenerate,
        classes,
    })
}

/// Same learner restricted to the elapsed-time features.
pub fn train_baseline(train: &Dataset, params: &TrainParams) -> Result<BoostedForestModel, PredictorError> {
    train_ova_gbdt(&train.select_classes(&[FeatureClass::Lifetime])?, params)
}
