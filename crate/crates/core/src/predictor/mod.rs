//! Temporal-stage classifier: one-vs-all boosted trees, evaluation and
//! significance testing.

mod boost;
mod eval;
mod significance;
mod tree;

pub use boost::{
    argmax, logistic_gradient, logistic_loss, sigmoid, train_baseline, train_ova_gbdt, BoostedForestModel,
    ClassEnsemble, FeatureImportance, Prediction, TrainParams, MODEL_FORMAT,
};
pub use eval::{
    confusion_matrix, evaluate, evaluate_predictions, macro_accuracy, pr_curve, ClassMetrics, Confusion, EvalReport,
    ModelEvaluation, PrPoint,
};
pub use significance::{approx_randomization_test, ArOutcome, ArParams, DEFAULT_ITERATIONS};
pub use tree::{Node, Tree};

use crate::features::FeatureError;

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid hyperparameters: {0}")]
    Params(String),
    #[error("row has {found} features, layout has {expected}")]
    Width { expected: usize, found: usize },
    #[error("feature layout {data} does not match model layout {model}")]
    LayoutMismatch { model: String, data: String },
    #[error("prediction vectors differ in length (a = {a}, b = {b}, labels = {labels})")]
    Length { a: usize, b: usize, labels: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
