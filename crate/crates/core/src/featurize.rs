//! From token prefixes to numeric features.
//!
//! Two encodings exist side by side. The count encoding (vocabulary +
//! [`vectorize`]) feeds the counting and linear models: n-grams of the
//! prefix, bagged. The window encoding ([`encode_window`]) feeds the neural
//! model: the last `W` tokens one-hot encoded in place, left-padded.
//!
//! Vocabularies are fitted on training prefixes only; vectorizing held-out
//! data never grows them — unseen n-grams are simply dropped, and unseen
//! single tokens map to the reserved UNK id in the window encoding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inclusive n-gram sizes, e.g. `(1, 3)` for unigrams through trigrams.
pub type NgramRange = (usize, usize);

fn validate_range(range: NgramRange) -> Result<()> {
    let (lo, hi) = range;
    if lo < 1 || hi < lo {
        return Err(Error::config(format!(
            "n-gram range must satisfy 1 <= lo <= hi, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

/// Calls `f` for every contiguous n-gram with `lo <= n <= hi`, enumerated
/// position-major: all sizes starting at position 0, then all sizes starting
/// at position 1, and so on. This order is what gives fitted vocabularies
/// their first-seen indices.
fn for_each_ngram<'a, F: FnMut(&'a [String])>(tokens: &'a [String], range: NgramRange, mut f: F) {
    let (lo, hi) = range;
    for start in 0..tokens.len() {
        let max_n = hi.min(tokens.len() - start);
        for n in lo..=max_n {
            f(&tokens[start..start + n]);
        }
    }
}

/// All n-grams of `tokens` in the range, in position-major order.
pub fn extract_ngrams(tokens: &[String], range: NgramRange) -> Result<Vec<Vec<String>>> {
    validate_range(range)?;
    let mut grams = Vec::new();
    for_each_ngram(tokens, range, |gram| grams.push(gram.to_vec()));
    Ok(grams)
}

/// A fitted n-gram vocabulary: dense indices `0..size` assigned in
/// first-seen order over the training prefixes, restricted to n-grams
/// occurring at least `min_df` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyWire", into = "VocabularyWire")]
pub struct Vocabulary {
    ngram_range: NgramRange,
    grams: Vec<Vec<String>>,
    index: HashMap<Vec<String>, usize>,
}

impl Vocabulary {
    pub fn ngram_range(&self) -> NgramRange {
        self.ngram_range
    }

    pub fn size(&self) -> usize {
        self.grams.len()
    }

    pub fn index_of(&self, gram: &[String]) -> Option<usize> {
        self.index.get(gram).copied()
    }

    /// The gram at a given index; indices are dense, so this is total for
    /// `index < size()`.
    pub fn gram(&self, index: usize) -> &[String] {
        &self.grams[index]
    }

    fn from_grams(ngram_range: NgramRange, grams: Vec<Vec<String>>) -> Vocabulary {
        let index = grams
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Vocabulary { ngram_range, grams, index }
    }
}

/// Fits a vocabulary over the given training prefixes.
///
/// `min_df` counts total occurrences (a prefix containing a gram twice
/// contributes two); grams below the threshold get no index, and the
/// surviving grams keep their first-seen order, reindexed densely.
pub fn fit_vocabulary<'a, I>(prefixes: I, range: NgramRange, min_df: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    validate_range(range)?;
    if min_df < 1 {
        return Err(Error::config("min_df must be at least 1"));
    }
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    let mut order: Vec<&[String]> = Vec::new();
    let mut saw_prefix = false;
    for prefix in prefixes {
        saw_prefix = true;
        for_each_ngram(prefix, range, |gram| {
            let entry = counts.entry(gram).or_insert(0);
            if *entry == 0 {
                order.push(gram);
            }
            *entry += 1;
        });
    }
    if !saw_prefix {
        return Err(Error::empty("cannot fit a vocabulary on zero rows"));
    }
    let grams: Vec<Vec<String>> = order
        .into_iter()
        .filter(|gram| counts[gram] >= min_df as u64)
        .map(|gram| gram.to_vec())
        .collect();
    Ok(Vocabulary::from_grams(range, grams))
}

#[derive(Serialize, Deserialize)]
struct VocabularyWire {
    ngram_range: NgramRange,
    entries: Vec<VocabularyEntry>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyEntry {
    gram: Vec<String>,
    index: usize,
}

impl From<Vocabulary> for VocabularyWire {
    fn from(vocab: Vocabulary) -> VocabularyWire {
        VocabularyWire {
            ngram_range: vocab.ngram_range,
            entries: vocab
                .grams
                .into_iter()
                .enumerate()
                .map(|(index, gram)| VocabularyEntry { gram, index })
                .collect(),
        }
    }
}

impl TryFrom<VocabularyWire> for Vocabulary {
    type Error = String;

    fn try_from(wire: VocabularyWire) -> std::result::Result<Vocabulary, String> {
        validate_range(wire.ngram_range).map_err(|e| e.to_string())?;
        let mut grams: Vec<Option<Vec<String>>> = vec![None; wire.entries.len()];
        for entry in wire.entries {
            let slot = grams
                .get_mut(entry.index)
                .ok_or_else(|| format!("vocabulary index {} out of range", entry.index))?;
            if slot.replace(entry.gram).is_some() {
                return Err(format!("vocabulary index {} appears twice", entry.index));
            }
        }
        let grams: Vec<Vec<String>> = grams
            .into_iter()
            .collect::<Option<_>>()
            .ok_or("vocabulary indices are not dense")?;
        Ok(Vocabulary::from_grams(wire.ngram_range, grams))
    }
}

/// A sparse count vector: `(feature index, count)` pairs sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub pairs: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pairs.iter().copied()
    }
}

/// Counts the prefix's in-vocabulary n-grams. Out-of-vocabulary grams are
/// dropped — the vocabulary never grows here.
pub fn vectorize(prefix: &[String], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for_each_ngram(prefix, vocab.ngram_range, |gram| {
        if let Some(&idx) = vocab.index.get(gram) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    });
    let mut pairs: Vec<(usize, f64)> = counts.into_iter().collect();
    pairs.sort_unstable_by_key(|&(idx, _)| idx);
    FeatureVector { pairs }
}

/// Token ids for the window encoding: id 0 is PAD, training tokens get
/// 1-based ids in first-seen order, and the id after the last training token
/// is reserved for unseen tokens (UNK).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TokenIndexWire", into = "TokenIndexWire")]
pub struct TokenIndex {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const PAD_ID: usize = 0;

impl TokenIndex {
    pub fn fit<'a, I>(prefixes: I) -> TokenIndex
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for prefix in prefixes {
            for token in prefix {
                if !index.contains_key(token.as_str()) {
                    index.insert(token.clone(), tokens.len() + 1);
                    tokens.push(token.clone());
                }
            }
        }
        TokenIndex { tokens, index }
    }

    /// The id for a token: 1-based for known tokens, UNK for the rest.
    pub fn id_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or_else(|| self.unk_id())
    }

    pub fn unk_id(&self) -> usize {
        self.tokens.len() + 1
    }

    /// The largest assigned id, i.e. V in the encoding contract: slot ids
    /// live in `[0, V]` and each slot one-hots into `V + 1` positions.
    pub fn max_id(&self) -> usize {
        self.unk_id()
    }

    pub fn slot_dim(&self) -> usize {
        self.max_id() + 1
    }
}

#[derive(Serialize, Deserialize)]
struct TokenIndexWire {
    tokens: Vec<String>,
}

impl From<TokenIndex> for TokenIndexWire {
    fn from(idx: TokenIndex) -> TokenIndexWire {
        TokenIndexWire { tokens: idx.tokens }
    }
}

impl From<TokenIndexWire> for TokenIndex {
    fn from(wire: TokenIndexWire) -> TokenIndex {
        let index = wire
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        TokenIndex { tokens: wire.tokens, index }
    }
}

/// The last `W` prefix tokens as slot ids, right-aligned and left-padded
/// with PAD. The dense form is the concatenation of one per-slot one-hot of
/// width `slot_dim`, so it holds exactly `W` ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowEncoding {
    pub slots: Vec<usize>,
    pub slot_dim: usize,
}

impl WindowEncoding {
    /// Length of the dense one-hot form: `W × (V + 1)`.
    pub fn dim(&self) -> usize {
        self.slots.len() * self.slot_dim
    }

    /// Positions of the ones in the dense form, one per slot, ascending.
    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .map(|(slot, &id)| slot * self.slot_dim + id)
    }

    /// Materializes the dense one-hot vector.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim()];
        for idx in self.active_indices() {
            dense[idx] = 1.0;
        }
        dense
    }
}

/// Encodes a prefix into the fixed window. Prefixes shorter than `window`
/// are left-padded; longer ones keep only their last `window` tokens.
pub fn encode_window(prefix: &[String], window: usize, index: &TokenIndex) -> WindowEncoding {
    debug_assert!(window >= 1, "window must be at least 1");
    let tail = window.min(prefix.len());
    let mut slots = vec![PAD_ID; window - tail];
    slots.extend(prefix[prefix.len() - tail..].iter().map(|t| index.id_of(t)));
    WindowEncoding { slots, slot_dim: index.slot_dim() }
}

/// One-hot target vector: `n_classes` wide with a single one at `label`.
pub fn one_hot_label(label: usize, n_classes: usize) -> Vec<f64> {
    assert!(label < n_classes, "label {label} out of range for {n_classes} classes");
    let mut dense = vec![0.0; n_classes];
    dense[label] = 1.0;
    dense
}

/// When the feature space gets fitted during cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Refit on each fold's training split, so held-out rows never leak
    /// into the vocabulary or token index.
    Fold,
    /// Fit once on all rows before splitting.
    Global,
}

/// Featurization settings shared by training and evaluation. The n-gram
/// fields drive the count models; `window` drives the windowed encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeConfig {
    pub ngram_range: NgramRange,
    pub min_df: usize,
    pub window: usize,
    pub fit_scope: FitScope,
}

impl Default for FeaturizeConfig {
    fn default() -> FeaturizeConfig {
        FeaturizeConfig { ngram_range: (1, 3), min_df: 1, window: 10, fit_scope: FitScope::Fold }
    }
}
