//! The run configuration file and its merge with command-line flags.
//!
//! Every knob lives in one TOML file so a whole run is reproducible from a
//! single artifact; any flag given on the command line overrides the
//! corresponding file entry. Unknown keys are rejected rather than ignored,
//! so a typo cannot silently fall back to a default.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use nextcmd::cleanse::RunKey;
use nextcmd::error::{Error, Result};
use nextcmd::eval::EvalConfig;
use nextcmd::extract::TargetMode;
use nextcmd::featurize::{FeaturizeConfig, FitScope, NgramRange};
use nextcmd::models::{ClassifierConfig, ModelKind};

/// Everything a pipeline run needs, grouped by stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub extract: ExtractConfig,
    pub featurize: FeaturizeConfig,
    pub model: ClassifierConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Loads the file, or the all-defaults config when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_key: RunKey,
    /// Split cross-validation folds by session rather than by row, so no
    /// session contributes to both sides of a fold.
    pub group_by_session: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            run_key: RunKey::default(),
            group_by_session: false,
        }
    }
}

/// How target classes are chosen and how much history a row keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub mode: SelectionMode,
    /// Class count for `top_k` mode.
    pub k: usize,
    /// Occurrence fraction for `coverage` mode.
    pub coverage: f64,
    /// Keep only this many trailing prefix tokens; absent keeps them all.
    pub max_prefix_window: Option<usize>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            mode: SelectionMode::TopK,
            k: 61,
            coverage: 0.9,
            max_prefix_window: None,
        }
    }
}

impl ExtractConfig {
    pub fn target_mode(&self) -> TargetMode {
        match self.mode {
            SelectionMode::TopK => TargetMode::TopK(self.k),
            SelectionMode::Coverage => TargetMode::Coverage(self.coverage),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    TopK,
    Coverage,
}

pub fn parse_selection_mode(text: &str) -> std::result::Result<SelectionMode, String> {
    match text {
        "top-k" | "top_k" => Ok(SelectionMode::TopK),
        "coverage" => Ok(SelectionMode::Coverage),
        other => Err(format!("unknown mode {other:?}; expected top-k or coverage")),
    }
}

pub fn parse_model_kind(text: &str) -> std::result::Result<ModelKind, String> {
    match text {
        "bernoulli-nb" | "bnb" => Ok(ModelKind::BernoulliNb),
        "multinomial-nb" | "mnb" => Ok(ModelKind::MultinomialNb),
        "logistic-regression" | "lr" => Ok(ModelKind::LogisticRegression),
        "neural-net" | "nn" => Ok(ModelKind::NeuralNet),
        other => Err(format!(
            "unknown model {other:?}; expected bernoulli-nb, multinomial-nb, \
             logistic-regression, or neural-net"
        )),
    }
}

pub fn parse_run_key(text: &str) -> std::result::Result<RunKey, String> {
    match text {
        "full-base" | "full_base" => Ok(RunKey::FullBase),
        "type-only" | "type_only" => Ok(RunKey::TypeOnly),
        other => Err(format!(
            "unknown run key {other:?}; expected full-base or type-only"
        )),
    }
}

pub fn parse_fit_scope(text: &str) -> std::result::Result<FitScope, String> {
    match text {
        "fold" => Ok(FitScope::Fold),
        "global" => Ok(FitScope::Global),
        other => Err(format!("unknown fit scope {other:?}; expected fold or global")),
    }
}

/// Parses `"LO:HI"` into an n-gram range (`"2"` alone means `2:2`).
pub fn parse_ngram(text: &str) -> std::result::Result<NgramRange, String> {
    let parse = |part: &str| {
        part.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid n-gram bound {part:?}"))
    };
    match text.split_once(':') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => parse(text).map(|n| (n, n)),
    }
}

/// Parses `"500,100"` into hidden-layer widths.
pub fn parse_hidden(text: &str) -> std::result::Result<Vec<usize>, String> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid layer width {part:?}"))
        })
        .collect()
}

/// Classifier knobs; each flag overrides the config-file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Classifier: bernoulli-nb, multinomial-nb, logistic-regression, neural-net.
    #[arg(long, value_parser = parse_model_kind)]
    pub model: Option<ModelKind>,
    /// Smoothing pseudo-count for the Naive Bayes models.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// L2 penalty for logistic regression.
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Dropout probability after the first hidden layer.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden-layer widths for the neural net, comma separated.
    #[arg(long, value_parser = parse_hidden)]
    pub hidden: Option<Vec<usize>>,
    /// Seed for network initialization, shuffling, and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ModelArgs {
    pub fn apply(&self, config: &mut ClassifierConfig) {
        if let Some(kind) = self.model {
            config.kind = kind;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(l2) = self.l2 {
            config.l2 = l2;
        }
        if let Some(rate) = self.learning_rate {
            config.learning_rate = rate;
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        if let Some(batch) = self.batch_size {
            config.batch_size = batch;
        }
        if let Some(dropout) = self.dropout {
            config.dropout = dropout;
        }
        if let Some(hidden) = &self.hidden {
            config.hidden = hidden.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
    }
}

/// Featurization knobs; each flag overrides the config-file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct FeaturizeArgs {
    /// N-gram sizes as LO:HI (a single number means that size only).
    #[arg(long, value_parser = parse_ngram)]
    pub ngram: Option<NgramRange>,
    /// Drop n-grams seen in fewer training prefixes than this.
    #[arg(long)]
    pub min_df: Option<usize>,
    /// Trailing prefix tokens the windowed encoding keeps.
    #[arg(long)]
    pub feature_window: Option<usize>,
    /// Where vocabularies are fitted during evaluation: fold or global.
    #[arg(long, value_parser = parse_fit_scope)]
    pub fit_scope: Option<FitScope>,
}

impl FeaturizeArgs {
    pub fn apply(&self, config: &mut FeaturizeConfig) {
        if let Some(range) = self.ngram {
            config.ngram_range = range;
        }
        if let Some(min_df) = self.min_df {
            config.min_df = min_df;
        }
        if let Some(window) = self.feature_window {
            config.window = window;
        }
        if let Some(scope) = self.fit_scope {
            config.fit_scope = scope;
        }
    }
}

/// Cross-validation knobs; each flag overrides the config-file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for the fold assignment shuffle.
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Evaluate on a seeded subsample of this many rows.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Keep each session's rows within a single fold.
    #[arg(long)]
    pub group_by_session: bool,
}

impl EvalArgs {
    pub fn apply(&self, config: &mut EvalConfig, pipeline: &mut PipelineConfig) {
        if let Some(k) = self.folds {
            config.k = k;
        }
        if let Some(seed) = self.eval_seed {
            config.seed = seed;
        }
        if let Some(sample) = self.sample {
            config.sample_size = Some(sample);
        }
        if self.group_by_session {
            pipeline.group_by_session = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_files_keep_defaults_elsewhere() {
        let text = r#"
            [model]
            kind = "logistic-regression"
            epochs = 50

            [extract]
            mode = "coverage"
            coverage = 0.75
        "#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.model.kind, ModelKind::LogisticRegression);
        assert_eq!(config.model.epochs, 50);
        assert_eq!(config.extract.target_mode(), TargetMode::Coverage(0.75));
        assert_eq!(config.eval.k, 5);
        assert_eq!(config.featurize.ngram_range, (1, 3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[model]\nlerning_rate = 0.1\n");
        assert!(err.is_err());
    }

    #[test]
    fn flag_parsers_accept_the_documented_forms() {
        assert_eq!(parse_ngram("1:3"), Ok((1, 3)));
        assert_eq!(parse_ngram("2"), Ok((2, 2)));
        assert!(parse_ngram("a:b").is_err());
        assert_eq!(parse_hidden("500,100"), Ok(vec![500, 100]));
        assert!(parse_hidden("500,x").is_err());
        assert_eq!(parse_model_kind("neural-net"), Ok(ModelKind::NeuralNet));
        assert_eq!(parse_model_kind("mnb"), Ok(ModelKind::MultinomialNb));
        assert!(parse_model_kind("svm").is_err());
        assert_eq!(parse_run_key("type-only"), Ok(RunKey::TypeOnly));
        assert_eq!(parse_fit_scope("global"), Ok(FitScope::Global));
        assert_eq!(parse_selection_mode("top-k"), Ok(SelectionMode::TopK));
    }

    #[test]
    fn flags_override_the_loaded_config() {
        let mut config = RunConfig::default();
        let model_args = ModelArgs {
            model: Some(ModelKind::NeuralNet),
            epochs: Some(3),
            hidden: Some(vec![32, 16]),
            ..ModelArgs::default()
        };
        model_args.apply(&mut config.model);
        assert_eq!(config.model.kind, ModelKind::NeuralNet);
        assert_eq!(config.model.epochs, 3);
        assert_eq!(config.model.hidden, vec![32, 16]);
        assert_eq!(config.model.batch_size, 128);

        let eval_args = EvalArgs {
            folds: Some(7),
            group_by_session: true,
            ..EvalArgs::default()
        };
        eval_args.apply(&mut config.eval, &mut config.pipeline);
        assert_eq!(config.eval.k, 7);
        assert!(config.pipeline.group_by_session);
    }
}
