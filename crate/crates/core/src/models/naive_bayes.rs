//! Naive Bayes, in both the Bernoulli and multinomial flavors.
//!
//! Everything runs in log space. Class priors are alpha-smoothed right along
//! with the feature likelihoods — `(n_c + α) / (n + αC)` — so a class that
//! never appears in a training split still receives positive prior mass and
//! the model stays total over the fixed class set.

use serde::{Deserialize, Serialize};

use crate::featurize::FeatureVector;
use crate::models::{normalize_log_scores, validate_dataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbVariant {
    /// Feature presence/absence; any positive count collapses to "present".
    Bernoulli,
    /// Feature counts as event frequencies.
    Multinomial,
}

/// A fitted naive Bayes classifier over sparse count vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    variant: NbVariant,
    n_features: usize,
    n_classes: usize,
    log_prior: Vec<f64>,
    /// Multinomial: log P(feature | class). Bernoulli: log p with p the
    /// presence probability.
    feature_log_prob: Vec<Vec<f64>>,
    /// Bernoulli only: log(1 - p), plus its per-class sum so prediction can
    /// start from "every feature absent" and adjust for the present ones.
    feature_log_neg: Vec<Vec<f64>>,
    neg_row_sums: Vec<f64>,
}

impl NaiveBayes {
    pub fn fit(
        features: &[FeatureVector],
        labels: &[usize],
        n_features: usize,
        n_classes: usize,
        variant: NbVariant,
        alpha: f64,
    ) -> Result<NaiveBayes> {
        if !(alpha > 0.0) {
            return Err(Error::config("alpha must be positive"));
        }
        validate_dataset(features, labels, n_features, n_classes)?;

        let n = features.len() as f64;
        let mut class_count = vec![0.0f64; n_classes];
        for &label in labels {
            class_count[label] += 1.0;
        }
        let log_prior: Vec<f64> = class_count
            .iter()
            .map(|&nc| ((nc + alpha) / (n + alpha * n_classes as f64)).ln())
            .collect();

        let mut feature_log_prob = vec![vec![0.0f64; n_features]; n_classes];
        let mut feature_log_neg = Vec::new();
        let mut neg_row_sums = vec![0.0f64; n_classes];

        match variant {
            NbVariant::Multinomial => {
                // Count feature occurrences per class.
                let mut counts = vec![vec![0.0f64; n_features]; n_classes];
                for (row, &label) in features.iter().zip(labels) {
                    for (idx, value) in row.iter() {
                        counts[label][idx] += value;
                    }
                }
                for c in 0..n_classes {
                    let total: f64 = counts[c].iter().sum();
                    let denom = total + alpha * n_features as f64;
                    for j in 0..n_features {
                        feature_log_prob[c][j] = ((counts[c][j] + alpha) / denom).ln();
                    }
                }
            }
            NbVariant::Bernoulli => {
                // Count rows (not occurrences) containing each feature.
                let mut present = vec![vec![0.0f64; n_features]; n_classes];
                for (row, &label) in features.iter().zip(labels) {
                    for (idx, value) in row.iter() {
                        if value > 0.0 {
                            present[label][idx] += 1.0;
                        }
                    }
                }
                feature_log_neg = vec![vec![0.0f64; n_features]; n_classes];
                for c in 0..n_classes {
                    let denom = class_count[c] + 2.0 * alpha;
                    for j in 0..n_features {
                        let p = (present[c][j] + alpha) / denom;
                        feature_log_prob[c][j] = p.ln();
                        feature_log_neg[c][j] = (1.0 - p).ln();
                    }
                    neg_row_sums[c] = feature_log_neg[c].iter().sum();
                }
            }
        }

        Ok(NaiveBayes {
            variant,
            n_features,
            n_classes,
            log_prior,
            feature_log_prob,
            feature_log_neg,
            neg_row_sums,
        })
    }

    pub fn variant(&self) -> NbVariant {
        self.variant
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Posterior class probabilities for one row, normalized to sum to 1.
    pub fn predict_proba(&self, row: &FeatureVector) -> Result<Vec<f64>> {
        let mut scores = self.log_prior.clone();
        match self.variant {
            NbVariant::Multinomial => {
                for (idx, value) in row.iter() {
                    if idx >= self.n_features {
                        return Err(Error::Dimension {
                            expected: self.n_features,
                            actual: idx + 1,
                        });
                    }
                    for c in 0..self.n_classes {
                        scores[c] += value * self.feature_log_prob[c][idx];
                    }
                }
            }
            NbVariant::Bernoulli => {
                // Start from "all features absent", then swap in the present
                // ones. A count of 7 contributes exactly like a count of 1.
                for c in 0..self.n_classes {
                    scores[c] += self.neg_row_sums[c];
                }
                for (idx, value) in row.iter() {
                    if idx >= self.n_features {
                        return Err(Error::Dimension {
                            expected: self.n_features,
                            actual: idx + 1,
                        });
                    }
                    if value > 0.0 {
                        for c in 0..self.n_classes {
                            scores[c] +=
                                self.feature_log_prob[c][idx] - self.feature_log_neg[c][idx];
                        }
                    }
                }
            }
        }
        normalize_log_scores(&mut scores);
        Ok(scores)
    }

    // Parameter access for serialization; the envelope stores these arrays
    // verbatim so a reloaded model predicts bit-for-bit identically.

    pub(crate) fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub(crate) fn feature_log_prob(&self) -> &[Vec<f64>] {
        &self.feature_log_prob
    }

    pub(crate) fn feature_log_neg(&self) -> &[Vec<f64>] {
        &self.feature_log_neg
    }

    pub(crate) fn from_parts(
        variant: NbVariant,
        n_features: usize,
        n_classes: usize,
        log_prior: Vec<f64>,
        feature_log_prob: Vec<Vec<f64>>,
        feature_log_neg: Vec<Vec<f64>>,
    ) -> NaiveBayes {
        let neg_row_sums = if feature_log_neg.is_empty() {
            vec![0.0; n_classes]
        } else {
            feature_log_neg.iter().map(|row| row.iter().sum()).collect()
        };
        NaiveBayes {
            variant,
            n_features,
            n_classes,
            log_prior,
            feature_log_prob,
            feature_log_neg,
            neg_row_sums,
        }
    }
}
