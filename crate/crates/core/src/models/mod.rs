//! The four classifiers, implemented from first principles.
//!
//! All models share one contract: `fit` consumes featurized rows and a class
//! count fixed up front (a training split may be missing some classes — they
//! keep their output slot), `predict_proba` returns a probability vector
//! summing to 1 within 1e-6, and identical data + config + seed reproduce
//! bitwise-identical parameters. Classes absent from training data are
//! handled differently per family: naive Bayes still assigns them their
//! smoothed prior mass, while the discriminative models simply never rank
//! them first.

mod logistic;
mod mlp;
mod naive_bayes;
mod trained;

pub use logistic::{GdOptions, LogisticRegression};
pub use mlp::{Mlp, MlpOptions};
pub use naive_bayes::{NaiveBayes, NbVariant};
pub use trained::{FittedSpace, TrainedModel};

use serde::{Deserialize, Serialize};

use crate::featurize::FeatureVector;
use crate::{Error, Result};

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BernoulliNb,
    MultinomialNb,
    LogisticRegression,
    NeuralNet,
}

impl ModelKind {
    /// Human-readable name, used in rendered result tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::BernoulliNb => "Bernoulli Naive Bayes",
            ModelKind::MultinomialNb => "Multinomial Naive Bayes",
            ModelKind::LogisticRegression => "Logistic Regression",
            ModelKind::NeuralNet => "Neural Network",
        }
    }

    /// Whether this model consumes bag-of-n-gram counts (as opposed to the
    /// fixed token window).
    pub fn uses_counts(&self) -> bool {
        !matches!(self, ModelKind::NeuralNet)
    }
}

/// Hyperparameters for every model family in one place; each family reads
/// the fields that concern it and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ModelKind,
    /// Additive smoothing for both naive Bayes variants.
    pub alpha: f64,
    /// Ridge strength for logistic regression; the bias is not regularized.
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size for the neural net (logistic regression is full-batch).
    pub batch_size: usize,
    /// Dropout rate applied after the first hidden layer, training only.
    pub dropout: f64,
    /// Hidden layer widths for the neural net.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: ModelKind::MultinomialNb,
            alpha: 1.0,
            l2: 1.0,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 128,
            dropout: 0.5,
            hidden: vec![500, 100],
            seed: 42,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("l2 must be non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden layers must be non-empty and positive"));
        }
        Ok(())
    }
}

/// Shape checks shared by the count-vector models: rows present, labels in
/// range, feature indices inside the declared dimensionality.
pub(crate) fn validate_dataset(
    features: &[FeatureVector],
    labels: &[usize],
    n_features: usize,
    n_classes: usize,
) -> Result<()> {
    if features.is_empty() {
        return Err(Error::empty("training requires at least one row"));
    }
    if features.len() != labels.len() {
        return Err(Error::config(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::config("n_classes must be at least 1"));
    }
    for &label in labels {
        if label >= n_classes {
            return Err(Error::config(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
    }
    for row in features {
        for (idx, _) in row.iter() {
            if idx >= n_features {
                return Err(Error::Dimension { expected: n_features, actual: idx + 1 });
            }
        }
    }
    Ok(())
}

/// log(Σ exp(x_i)) with the usual max shift; -inf inputs are fine as long as
/// one entry is finite.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Turns log scores into an exactly normalized probability vector.
pub(crate) fn normalize_log_scores(scores: &mut [f64]) {
    let lse = log_sum_exp(scores);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - lse).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

/// Central-difference gradient of `f` at `params`: the reference every
/// analytic gradient in this crate is checked against. Steps are scaled per
/// coordinate so large weights do not lose precision.
pub fn finite_difference_gradient<F>(f: F, params: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(params.len());
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        let h = 1e-5 * params[i].abs().max(1.0);
        let original = probe[i];
        probe[i] = original + h;
        let plus = f(&probe);
        probe[i] = original - h;
        let minus = f(&probe);
        probe[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Largest relative disagreement between two gradients, with an absolute
/// floor of 1 so near-zero entries compare absolutely.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
