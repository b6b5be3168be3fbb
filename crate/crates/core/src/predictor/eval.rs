//! Macro accuracy, confusion matrices and per-quartile precision/recall.

use serde::{Deserialize, Serialize};

use super::boost::{BoostedForestModel, Prediction};
use super::significance::{approx_randomization_test, ArParams};
use super::PredictorError;
use crate::features::{Dataset, Quartile};

/// Rows are true labels, columns predicted labels.
pub type Confusion = [[u64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Quartile,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    /// One-vs-rest accuracy of the argmax decision for this class.
    pub accuracy: f64,
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub macro_accuracy: f64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_examples: usize,
    pub model: ModelEvaluation,
    pub baseline: ModelEvaluation,
    /// Model macro accuracy minus baseline macro accuracy.
    pub delta: f64,
    pub p_value: f64,
    pub ar_iterations: usize,
}

pub fn confusion_matrix(predicted: &[Quartile], labels: &[Quartile]) -> Confusion {
    let mut m = [[0u64; 4]; 4];
    for (p, y) in predicted.iter().zip(labels) {
        m[y.index()][p.index()] += 1;
    }
    m
}

/// Mean per-class recall over the classes present in `labels`.
pub fn macro_accuracy(predicted: &[Quartile], labels: &[Quartile]) -> f64 {
    let m = confusion_matrix(predicted, labels);
    let recalls: Vec<f64> = (0..4)
        .filter_map(|q| {
            let support: u64 = m[q].iter().sum();
            (support > 0).then(|| m[q][q] as f64 / support as f64)
        })
        .collect();
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// Sweep every distinct score from high to low; each point counts examples
/// scoring at or above the threshold as positive.
pub fn pr_curve(scores: &[f64], positive: &[bool]) -> Vec<PrPoint> {
    let total_pos = positive.iter().filter(|p| **p).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: if total_pos == 0 { 0.0 } else { tp as f64 / total_pos as f64 },
        });
    }
    out
}

pub fn evaluate_predictions(preds: &[Prediction], labels: &[Quartile]) -> ModelEvaluation {
    let predicted: Vec<Quartile> = preds.iter().map(|p| p.label).collect();
    let confusion = confusion_matrix(&predicted, labels);
    let n = labels.len() as u64;
    let per_class = Quartile::ALL
        .iter()
        .map(|q| {
            let k = q.index();
            let support: u64 = confusion[k].iter().sum();
            let predicted_k: u64 = confusion.iter().map(|row| row[k]).sum();
            let tp = confusion[k][k];
            let tn = n - support - predicted_k + tp;
            let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let scores: Vec<f64> = preds.iter().map(|p| p.scores[k]).collect();
            let positive: Vec<bool> = labels.iter().map(|l| l == q).collect();
            ClassMetrics {
                label: *q,
                support,
                predicted: predicted_k,
                precision: ratio(tp, predicted_k),
                recall: ratio(tp, support),
                accuracy: ratio(tp + tn, n),
                pr_curve: pr_curve(&scores, &positive),
            }
        })
        .collect();
    ModelEvaluation { macro_accuracy: macro_accuracy(&predicted, labels), confusion, per_class }
}

/// Score both models on `test` and compare them with a randomization test.
/// The baseline sees only the columns it was trained on.
pub fn evaluate(
    model: &BoostedForestModel,
    baseline: &BoostedForestModel,
    test: &Dataset,
    ar: ArParams,
) -> Result<EvalReport, PredictorError> {
    if test.is_empty() {
        return Err(PredictorError::EmptyTestSet);
    }
    let labels = test.labels();
    let full = model.predict_dataset(test)?;
    let base = baseline.predict_dataset(&test.project(&baseline.feature_names)?)?;
    let a: Vec<Quartile> = full.iter().map(|p| p.label).collect();
    let b: Vec<Quartile> = base.iter().map(|p| p.label).collect();
    let outcome = approx_randomization_test(&a, &b, &labels, ar)?;
    let model_eval = evaluate_predictions(&full, &labels);
    let baseline_eval = evaluate_predictions(&base, &labels);
    Ok(EvalReport {
        test_examples: labels.len(),
        delta: model_eval.macro_accuracy - baseline_eval.macro_accuracy,
        model: model_eval,
        baseline: baseline_eval,
        p_value: outcome.p_value,
        ar_iterations: outcome.iterations,
    })
}
