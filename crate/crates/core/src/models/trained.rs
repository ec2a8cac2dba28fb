//! A classifier bundled with the feature space it was fitted in.
//!
//! The models themselves only see numbers; this layer owns the mapping from
//! rendered token prefixes to those numbers (n-gram count vectors for the
//! naive Bayes and logistic models, windowed one-hot indices for the neural
//! net) and keeps it alongside the fitted parameters so scoring, saving, and
//! loading always agree on what the features mean.
//!
//! Models serialize to a single-document JSON envelope with a version tag.
//! Parameters travel as named flat arrays plus shapes; since the JSON writer
//! emits the shortest decimal that parses back to the identical float, a
//! saved model reloads bit-for-bit.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::extract::LabeledRow;
use crate::featurize::{
    encode_window, fit_vocabulary, vectorize, FeatureVector, FeaturizeConfig, TokenIndex,
    Vocabulary,
};
use crate::models::{
    ClassifierConfig, GdOptions, LogisticRegression, Mlp, MlpOptions, ModelKind, NaiveBayes,
    NbVariant,
};
use crate::{Error, Result};

const FILE_VERSION: u32 = 1;

/// A feature space fitted on training rows, ready to train a model in.
/// Keeping this separate from training lets an evaluation either refit per
/// fold or fit once globally and reuse it.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedSpace {
    Counts(Vocabulary),
    Window { index: TokenIndex, window: usize },
}

impl FittedSpace {
    pub fn fit(rows: &[LabeledRow], feat: &FeaturizeConfig, kind: ModelKind) -> Result<FittedSpace> {
        if kind.uses_counts() {
            let vocab = fit_vocabulary(
                rows.iter().map(|r| r.prefix.as_slice()),
                feat.ngram_range,
                feat.min_df,
            )?;
            Ok(FittedSpace::Counts(vocab))
        } else {
            if feat.window == 0 {
                return Err(Error::config("window must be at least 1"));
            }
            if rows.is_empty() {
                return Err(Error::empty("cannot fit a token index on zero rows"));
            }
            let index = TokenIndex::fit(rows.iter().map(|r| r.prefix.as_slice()));
            Ok(FittedSpace::Window { index, window: feat.window })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CountsModel {
    Nb(NaiveBayes),
    Lr(LogisticRegression),
}

#[derive(Debug, Clone, PartialEq)]
enum FeatureSpace {
    Counts { vocab: Vocabulary, model: CountsModel },
    Window { index: TokenIndex, window: usize, model: Mlp },
}

/// A trained classifier that scores rendered token prefixes directly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    classes: Vec<String>,
    config: ClassifierConfig,
    space: FeatureSpace,
}

impl TrainedModel {
    /// Fits the feature space on `rows` and trains on them.
    pub fn train(
        rows: &[LabeledRow],
        classes: &[String],
        config: &ClassifierConfig,
        feat: &FeaturizeConfig,
    ) -> Result<TrainedModel> {
        let space = FittedSpace::fit(rows, feat, config.kind)?;
        TrainedModel::train_in(space, rows, classes, config)
    }

    /// Trains inside an already-fitted feature space.
    pub fn train_in(
        space: FittedSpace,
        rows: &[LabeledRow],
        classes: &[String],
        config: &ClassifierConfig,
    ) -> Result<TrainedModel> {
        config.validate()?;
        if rows.is_empty() {
            return Err(Error::empty("no training rows"));
        }
        if classes.is_empty() {
            return Err(Error::empty("no target classes"));
        }
        let labels: Vec<usize> = rows.iter().map(|r| r.label).collect();
        let n_classes = classes.len();

        let space = match (space, config.kind) {
            (FittedSpace::Counts(vocab), kind) if kind.uses_counts() => {
                let features: Vec<FeatureVector> =
                    rows.iter().map(|r| vectorize(&r.prefix, &vocab)).collect();
                let model = match kind {
                    ModelKind::BernoulliNb => CountsModel::Nb(NaiveBayes::fit(
                        &features,
                        &labels,
                        vocab.size(),
                        n_classes,
                        NbVariant::Bernoulli,
                        config.alpha,
                    )?),
                    ModelKind::MultinomialNb => CountsModel::Nb(NaiveBayes::fit(
                        &features,
                        &labels,
                        vocab.size(),
                        n_classes,
                        NbVariant::Multinomial,
                        config.alpha,
                    )?),
                    ModelKind::LogisticRegression => CountsModel::Lr(LogisticRegression::fit(
                        &features,
                        &labels,
                        vocab.size(),
                        n_classes,
                        GdOptions {
                            learning_rate: config.learning_rate,
                            l2: config.l2,
                            epochs: config.epochs,
                        },
                    )?),
                    ModelKind::NeuralNet => unreachable!("guarded by uses_counts"),
                };
                FeatureSpace::Counts { vocab, model }
            }
            (FittedSpace::Window { index, window }, ModelKind::NeuralNet) => {
                let encoded: Vec<Vec<usize>> = rows
                    .iter()
                    .map(|r| encode_window(&r.prefix, window, &index).active_indices().collect())
                    .collect();
                let input_dim = window * index.slot_dim();
                let model = Mlp::train(
                    &encoded,
                    &labels,
                    input_dim,
                    &config.hidden,
                    n_classes,
                    &MlpOptions {
                        learning_rate: config.learning_rate,
                        epochs: config.epochs,
                        batch_size: config.batch_size,
                        dropout: config.dropout,
                        seed: config.seed,
                    },
                )?;
                FeatureSpace::Window { index, window, model }
            }
            _ => {
                return Err(Error::config(
                    "fitted feature space does not match the model kind",
                ))
            }
        };

        Ok(TrainedModel { classes: classes.to_vec(), config: config.clone(), space })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Class probabilities for a prefix of rendered tokens, aligned with
    /// `classes()`.
    pub fn score(&self, prefix: &[String]) -> Result<Vec<f64>> {
        match &self.space {
            FeatureSpace::Counts { vocab, model } => {
                let row = vectorize(prefix, vocab);
                match model {
                    CountsModel::Nb(nb) => nb.predict_proba(&row),
                    CountsModel::Lr(lr) => lr.predict_proba(&row),
                }
            }
            FeatureSpace::Window { index, window, model } => {
                let active: Vec<usize> =
                    encode_window(prefix, *window, index).active_indices().collect();
                model.predict_proba(&active)
            }
        }
    }

    pub fn save<W: Write>(&self, writer: &mut W) -> Result<()> {
        let mut file = ModelFile {
            version: FILE_VERSION,
            kind: self.config.kind,
            config: self.config.clone(),
            classes: self.classes.clone(),
            vocabulary: None,
            token_index: None,
            window: None,
            params: Vec::new(),
        };
        match &self.space {
            FeatureSpace::Counts { vocab, model } => {
                file.vocabulary = Some(vocab.clone());
                match model {
                    CountsModel::Nb(nb) => {
                        file.params.push(Tensor::vector("log_prior", nb.log_prior()));
                        file.params
                            .push(Tensor::matrix_rows("feature_log_prob", nb.feature_log_prob()));
                        if nb.variant() == NbVariant::Bernoulli {
                            file.params.push(Tensor::matrix_rows(
                                "feature_log_neg",
                                nb.feature_log_neg(),
                            ));
                        }
                    }
                    CountsModel::Lr(lr) => {
                        file.params.push(Tensor::matrix("weights", lr.weights()));
                        file.params.push(Tensor::array1("bias", lr.bias()));
                    }
                }
            }
            FeatureSpace::Window { index, window, model } => {
                file.token_index = Some(index.clone());
                file.window = Some(*window);
                // layer1 is the input-major first-layer matrix; later layers
                // are output-major like any dense layer.
                file.params.push(Tensor::matrix("layer1.weights", model.embed()));
                file.params.push(Tensor::array1("layer1.bias", model.b1()));
                for (i, dense) in model.dense_layers().iter().enumerate() {
                    let n = i + 2;
                    file.params.push(Tensor::matrix(&format!("layer{n}.weights"), &dense.weights));
                    file.params.push(Tensor::array1(&format!("layer{n}.bias"), &dense.bias));
                }
            }
        }
        serde_json::to_writer(&mut *writer, &file)
            .map_err(|e| Error::config(format!("cannot serialize model: {e}")))?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<TrainedModel> {
        let file: ModelFile = serde_json::from_reader(reader)
            .map_err(|e| Error::format(e.line(), format!("invalid model file: {e}")))?;
        if file.version != FILE_VERSION {
            return Err(Error::config(format!(
                "unsupported model file version {} (expected {FILE_VERSION})",
                file.version
            )));
        }
        if file.kind != file.config.kind {
            return Err(Error::config("model file kind disagrees with its config"));
        }
        file.config.validate()?;
        if file.classes.is_empty() {
            return Err(Error::config("model file lists no classes"));
        }
        let n_classes = file.classes.len();

        let space = match file.kind {
            ModelKind::BernoulliNb | ModelKind::MultinomialNb => {
                let vocab = file
                    .vocabulary
                    .ok_or_else(|| Error::config("model file is missing its vocabulary"))?;
                let d = vocab.size();
                let log_prior = file.params.get_vector("log_prior", n_classes)?;
                let feature_log_prob =
                    file.params.get_rows("feature_log_prob", n_classes, d)?;
                let (variant, feature_log_neg) = if file.kind == ModelKind::BernoulliNb {
                    (
                        NbVariant::Bernoulli,
                        file.params.get_rows("feature_log_neg", n_classes, d)?,
                    )
                } else {
                    (NbVariant::Multinomial, Vec::new())
                };
                let model = NaiveBayes::from_parts(
                    variant,
                    d,
                    n_classes,
                    log_prior,
                    feature_log_prob,
                    feature_log_neg,
                );
                FeatureSpace::Counts { vocab, model: CountsModel::Nb(model) }
            }
            ModelKind::LogisticRegression => {
                let vocab = file
                    .vocabulary
                    .ok_or_else(|| Error::config("model file is missing its vocabulary"))?;
                let weights = file.params.get_matrix("weights", n_classes, vocab.size())?;
                let bias = file.params.get_array1("bias", n_classes)?;
                FeatureSpace::Counts {
                    vocab,
                    model: CountsModel::Lr(LogisticRegression::from_parts(weights, bias)),
                }
            }
            ModelKind::NeuralNet => {
                let index = file
                    .token_index
                    .ok_or_else(|| Error::config("model file is missing its token index"))?;
                let window = file
                    .window
                    .ok_or_else(|| Error::config("model file is missing its window size"))?;
                if window == 0 {
                    return Err(Error::config("window must be at least 1"));
                }
                let input_dim = window * index.slot_dim();
                let hidden = &file.config.hidden;
                let embed = file.params.get_matrix("layer1.weights", input_dim, hidden[0])?;
                let b1 = file.params.get_array1("layer1.bias", hidden[0])?;
                let mut dims: Vec<usize> = hidden.clone();
                dims.push(n_classes);
                let mut layers = Vec::new();
                for k in 1..dims.len() {
                    let name = format!("layer{}.weights", k + 1);
                    let weights = file.params.get_matrix(&name, dims[k], dims[k - 1])?;
                    let bias =
                        file.params.get_array1(&format!("layer{}.bias", k + 1), dims[k])?;
                    layers.push((weights, bias));
                }
                FeatureSpace::Window {
                    index,
                    window,
                    model: Mlp::from_parts(embed, b1, layers),
                }
            }
        };

        Ok(TrainedModel { classes: file.classes, config: file.config, space })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    kind: ModelKind,
    config: ClassifierConfig,
    classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vocabulary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_index: Option<TokenIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    params: Vec<Tensor>,
}

/// A named parameter array. `data` is row-major for matrices.
#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn vector(name: &str, data: &[f64]) -> Tensor {
        Tensor { name: name.to_string(), shape: vec![data.len()], data: data.to_vec() }
    }

    fn array1(name: &str, data: &Array1<f64>) -> Tensor {
        Tensor { name: name.to_string(), shape: vec![data.len()], data: data.to_vec() }
    }

    fn matrix(name: &str, data: &Array2<f64>) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: vec![data.nrows(), data.ncols()],
            data: data.iter().copied().collect(),
        }
    }

    fn matrix_rows(name: &str, rows: &[Vec<f64>]) -> Tensor {
        let cols = rows.first().map_or(0, |r| r.len());
        Tensor {
            name: name.to_string(),
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        }
    }
}

trait TensorLookup {
    fn find(&self, name: &str, shape: &[usize]) -> Result<&Tensor>;
    fn get_vector(&self, name: &str, len: usize) -> Result<Vec<f64>>;
    fn get_array1(&self, name: &str, len: usize) -> Result<Array1<f64>>;
    fn get_matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>>;
    fn get_rows(&self, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>>;
}

impl TensorLookup for Vec<Tensor> {
    fn find(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let tensor = self
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::config(format!("model file is missing tensor '{name}'")))?;
        let count: usize = shape.iter().product();
        if tensor.shape != shape || tensor.data.len() != count {
            return Err(Error::config(format!(
                "tensor '{name}' has shape {:?} with {} values; expected {shape:?}",
                tensor.shape,
                tensor.data.len()
            )));
        }
        Ok(tensor)
    }

    fn get_vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.find(name, &[len])?.data.clone())
    }

    fn get_array1(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(self.find(name, &[len])?.data.clone()))
    }

    fn get_matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let tensor = self.find(name, &[rows, cols])?;
        Array2::from_shape_vec((rows, cols), tensor.data.clone())
            .map_err(|e| Error::config(format!("tensor '{name}': {e}")))
    }

    fn get_rows(&self, name: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
        let tensor = self.find(name, &[rows, cols])?;
        Ok(tensor.data.chunks(cols.max(1)).map(|c| c.to_vec()).take(rows).collect())
    }
}
