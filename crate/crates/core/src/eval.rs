//! Seeded k-fold cross-validation and the metrics computed from it.
//!
//! Rows are shuffled once with a seeded generator and split into k folds
//! (optionally keeping all rows of a session in the same fold). Each fold's
//! model scores its held-out rows, and the held-out scores are pooled back
//! into the original row order, so every metric is computed over exactly one
//! prediction per row.
//!
//! ROC AUC uses the rank formulation of the Mann–Whitney statistic with
//! average ranks for ties, which equals the probability that a random
//! positive outscores a random negative (ties counting half).

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::extract::LabeledRow;
use crate::featurize::{FeaturizeConfig, FitScope};
use crate::models::{ClassifierConfig, FittedSpace, ModelKind, TrainedModel};
use crate::{Error, Result};

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    /// Evaluate on a random subset of this many rows, when set.
    pub sample_size: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig { k: 5, seed: 42, sample_size: None }
    }
}

/// Splits `0..n` into `k` disjoint test folds after a seeded shuffle. The
/// first `n % k` folds get the extra rows.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("k must be at least 2"));
    }
    if n < k {
        return Err(Error::config(format!("cannot split {n} rows into {k} folds")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    Ok(partition(&indices, k))
}

/// Like [`kfold_split`] but whole groups (sessions) move together, so no
/// session contributes rows to both sides of a split. Folds are balanced by
/// group count.
pub fn kfold_split_grouped(groups: &[&str], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("k must be at least 2"));
    }
    let mut rows_by_group: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut distinct: Vec<&str> = Vec::new();
    for (i, group) in groups.iter().enumerate() {
        let entry = rows_by_group.entry(group).or_default();
        if entry.is_empty() {
            distinct.push(group);
        }
        entry.push(i);
    }
    if distinct.len() < k {
        return Err(Error::config(format!(
            "cannot split {} groups into {k} folds",
            distinct.len()
        )));
    }
    distinct.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let folds = partition(&distinct, k);
    Ok(folds
        .into_iter()
        .map(|fold_groups| {
            let mut rows: Vec<usize> = fold_groups
                .iter()
                .flat_map(|g| rows_by_group[g].iter().copied())
                .collect();
            rows.sort_unstable();
            rows
        })
        .collect())
}

fn partition<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(items[cursor..cursor + size].to_vec());
        cursor += size;
    }
    folds
}

/// Held-out predictions pooled across all folds, aligned with the original
/// row order: `scores[i]` is the class distribution row `i` received from
/// the one fold that held it out.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub scores: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Runs k-fold cross-validation and pools the held-out scores.
///
/// With `FitScope::Fold` the feature space is refitted on each fold's
/// training rows; with `FitScope::Global` it is fitted once on all rows
/// (test rows included) and shared. Errors inside a fold come back wrapped
/// with that fold's number.
pub fn cross_validate(
    rows: &[LabeledRow],
    classes: &[String],
    model: &ClassifierConfig,
    feat: &FeaturizeConfig,
    eval: &EvalConfig,
    group_by_session: bool,
) -> Result<Pooled> {
    model.validate()?;
    if rows.is_empty() {
        return Err(Error::empty("cross-validation needs rows"));
    }
    let folds = if group_by_session {
        let groups: Vec<&str> = rows.iter().map(|r| r.session_id.as_str()).collect();
        kfold_split_grouped(&groups, eval.k, eval.seed)?
    } else {
        kfold_split(rows.len(), eval.k, eval.seed)?
    };

    let global_space = match feat.fit_scope {
        FitScope::Global => Some(FittedSpace::fit(rows, feat, model.kind)?),
        FitScope::Fold => None,
    };

    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    for (fold, test_indices) in folds.iter().enumerate() {
        let mut held_out = vec![false; rows.len()];
        for &i in test_indices {
            held_out[i] = true;
        }
        let train_rows: Vec<LabeledRow> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !held_out[*i])
            .map(|(_, r)| r.clone())
            .collect();
        let space = match &global_space {
            Some(space) => space.clone(),
            None => FittedSpace::fit(&train_rows, feat, model.kind)
                .map_err(|e| Error::in_fold(fold, e))?,
        };
        let trained = TrainedModel::train_in(space, &train_rows, classes, model)
            .map_err(|e| Error::in_fold(fold, e))?;
        for &i in test_indices {
            scores[i] =
                trained.score(&rows[i].prefix).map_err(|e| Error::in_fold(fold, e))?;
        }
    }

    Ok(Pooled { scores, labels: rows.iter().map(|r| r.label).collect() })
}

/// Fraction of rows whose top-scoring class is the label. Ties resolve to
/// the lowest class index.
pub fn accuracy(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::empty("accuracy needs at least one row"));
    }
    if scores.len() != labels.len() {
        return Err(Error::config(format!(
            "{} score rows but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut correct = 0u64;
    for (row, &label) in scores.iter().zip(labels) {
        let mut best = 0;
        for (c, &score) in row.iter().enumerate() {
            if score > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Accuracy of always guessing the most frequent label.
pub fn majority_baseline(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for &label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    top as f64 / labels.len() as f64
}

/// Area under the ROC curve for binary truth via average ranks; `None` when
/// only one class is present (the curve is undefined there).
pub fn roc_auc_binary(scores: &[f64], truth: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), truth.len());
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Tied block occupies 1-based ranks i+1 ..= j; all members get the
        // average.
        let average_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if truth[idx] {
                positive_rank_sum += average_rank;
            }
        }
        i = j;
    }
    let pos = n_pos as f64;
    Some((positive_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * n_neg as f64))
}

/// AUC and true-row count for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub auc: f64,
    pub support: u64,
}

/// Everything the evaluation produces, in serializable form. `config` echoes
/// the settings the run used; `generated_at` is the only field allowed to
/// differ between reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class_auc: BTreeMap<String, ClassAuc>,
    pub classes_without_auc: Vec<String>,
    pub micro_auc: Option<f64>,
    pub weighted_auc: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub auc_min: Option<f64>,
    pub auc_max: Option<f64>,
    pub config: serde_json::Value,
    pub generated_at: Option<String>,
}

/// Computes the metric suite from pooled held-out scores.
///
/// Per-class AUCs treat each class one-vs-rest. The micro average pools
/// every (row, class) score into one binary problem; the weighted average
/// weights per-class AUCs by class support. Classes that never appear in the
/// labels have no defined AUC and are listed separately.
pub fn build_report(
    pooled: &Pooled,
    classes: &[String],
    config: serde_json::Value,
    generated_at: Option<String>,
) -> Result<MetricsReport> {
    let accuracy = accuracy(&pooled.scores, &pooled.labels)?;
    for row in &pooled.scores {
        if row.len() != classes.len() {
            return Err(Error::Dimension { expected: classes.len(), actual: row.len() });
        }
    }

    let mut per_class_auc = BTreeMap::new();
    let mut classes_without_auc = Vec::new();
    let mut defined: Vec<(f64, u64)> = Vec::new();
    for (c, name) in classes.iter().enumerate() {
        let truth: Vec<bool> = pooled.labels.iter().map(|&l| l == c).collect();
        let class_scores: Vec<f64> = pooled.scores.iter().map(|row| row[c]).collect();
        let support = truth.iter().filter(|t| **t).count() as u64;
        match roc_auc_binary(&class_scores, &truth) {
            Some(auc) => {
                per_class_auc.insert(name.clone(), ClassAuc { auc, support });
                defined.push((auc, support));
            }
            None => classes_without_auc.push(name.clone()),
        }
    }

    let mut flat_scores = Vec::with_capacity(pooled.scores.len() * classes.len());
    let mut flat_truth = Vec::with_capacity(flat_scores.capacity());
    for (row, &label) in pooled.scores.iter().zip(&pooled.labels) {
        for (c, &score) in row.iter().enumerate() {
            flat_scores.push(score);
            flat_truth.push(c == label);
        }
    }
    let micro_auc = roc_auc_binary(&flat_scores, &flat_truth);

    let (weighted_auc, auc_mean, auc_std, auc_min, auc_max) = if defined.is_empty() {
        (None, None, None, None, None)
    } else {
        let total_support: u64 = defined.iter().map(|(_, s)| s).sum();
        let weighted = if total_support == 0 {
            None
        } else {
            Some(
                defined.iter().map(|(a, s)| a * *s as f64).sum::<f64>()
                    / total_support as f64,
            )
        };
        let n = defined.len() as f64;
        let mean = defined.iter().map(|(a, _)| a).sum::<f64>() / n;
        let variance =
            defined.iter().map(|(a, _)| (a - mean).powi(2)).sum::<f64>() / n;
        let min = defined.iter().map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
        let max = defined.iter().map(|(a, _)| *a).fold(f64::NEG_INFINITY, f64::max);
        (weighted, Some(mean), Some(variance.sqrt()), Some(min), Some(max))
    };

    Ok(MetricsReport {
        accuracy,
        per_class_auc,
        classes_without_auc,
        micro_auc,
        weighted_auc,
        auc_mean,
        auc_std,
        auc_min,
        auc_max,
        config,
        generated_at,
    })
}

/// A deterministic subset of `n` rows that keeps the original order.
pub fn subsample(rows: &[LabeledRow], n: usize, seed: u64) -> Vec<LabeledRow> {
    if n >= rows.len() {
        return rows.to_vec();
    }
    let mut indices: Vec<usize> = (0..rows.len()).collect();
    indices.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut chosen = indices[..n].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| rows[i].clone()).collect()
}

/// Renders reports as one aligned text table, one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    fn model_name(report: &MetricsReport) -> String {
        let kind = report.config.get("model").and_then(|m| m.get("kind")).cloned();
        match kind.and_then(|k| serde_json::from_value::<ModelKind>(k).ok()) {
            Some(kind) => kind.display_name().to_string(),
            None => "?".to_string(),
        }
    }

    fn ngram_label(report: &MetricsReport) -> String {
        let kind = report.config.get("model").and_then(|m| m.get("kind")).cloned();
        if let Some(kind) = kind.and_then(|k| serde_json::from_value::<ModelKind>(k).ok()) {
            if !kind.uses_counts() {
                return "-".to_string();
            }
        }
        match report
            .config
            .get("featurize")
            .and_then(|f| f.get("ngram_range"))
            .and_then(|r| serde_json::from_value::<(usize, usize)>(r.clone()).ok())
        {
            Some((lo, hi)) => format!("{lo}-{hi}"),
            None => "?".to_string(),
        }
    }

    fn auc_cell(value: Option<f64>) -> String {
        value.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
    }

    let header = ["Model", "N-grams", "Accuracy", "Mean AUC", "Weighted AUC", "Micro AUC"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                model_name(r),
                ngram_label(r),
                format!("{:.2}%", r.accuracy * 100.0),
                auc_cell(r.auc_mean),
                auc_cell(r.weighted_auc),
                auc_cell(r.micro_auc),
            ]
        })
        .collect();

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{:<width$}", cell, width = widths[i]));
            } else {
                line.push_str(&format!("{:>width$}", cell, width = widths[i]));
            }
        }
        line.trim_end().to_string()
    };
    let header_cells: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    out.push_str(&render_row(&header_cells));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (header.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row.as_slice()));
        out.push('\n');
    }
    out
}
