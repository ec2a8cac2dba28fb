//! One function per subcommand, all returning the shared error type.
//!
//! Commands read JSON-lines from files or stdin (`-`), write their main
//! artifact where `--out` points, and print a one-line JSON summary to
//! stdout so scripted callers can pick up counts without parsing logs.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde_json::json;

use nextcmd::cleanse::{cleanse_corpus, CleanseOptions, RunKey};
use nextcmd::error::{Error, Result};
use nextcmd::eval::{accuracy, build_report, cross_validate, majority_baseline, render_table, subsample, MetricsReport};
use nextcmd::extract::{extract_corpus, select_targets, ExtractOptions, TargetClassSet};
use nextcmd::ingest::{group_sessions, parse_corpus, write_events, CorpusStats, ParseMode};
use nextcmd::models::TrainedModel;
use nextcmd::synth::{bayes_optimal_accuracy, generate, MarkovSpec};

use crate::config::{ExtractConfig, RunConfig};

/// Opens a JSON-lines input; `-` means stdin.
fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

/// Opens the main output; `-` means stdout.
fn open_output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut writer = open_output(path)?;
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| Error::config(format!("serializing {}: {e}", path.display())))?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

fn summary(value: serde_json::Value) {
    println!("{value}");
}

fn parse_mode(strict: bool) -> ParseMode {
    if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn load_sessions(input: &Path, strict: bool) -> Result<(Vec<nextcmd::event::Session>, usize)> {
    let corpus = parse_corpus(open_input(input)?, parse_mode(strict))?;
    let skipped = corpus.skipped_lines;
    Ok((group_sessions(corpus.events), skipped))
}

/// `generate`: sample a corpus from a chain spec, recording injection truth.
pub fn generate_corpus(
    spec_path: &Path,
    out: &Path,
    truth_path: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec: MarkovSpec = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", spec_path.display())))?;
    let (events, truth) = generate(&spec)?;
    let mut writer = open_output(out)?;
    write_events(&events, &mut writer)?;
    writer.flush()?;

    let truth_value = serde_json::to_value(truth)
        .map_err(|e| Error::config(format!("serializing truth: {e}")))?;
    let default_truth = PathBuf::from(format!("{}.truth.json", out.display()));
    let truth_out = match truth_path {
        Some(path) => Some(path.to_path_buf()),
        // Writing the corpus to stdout leaves nowhere sensible to derive a
        // truth filename from, so the sidecar is opt-in there.
        None if out == Path::new("-") => None,
        None => Some(default_truth),
    };
    if let Some(path) = &truth_out {
        write_json_file(path, &truth_value)?;
    }
    if out != Path::new("-") {
        summary(json!({
            "events": events.len(),
            "sessions": truth.sessions,
            "truth": truth_out.map(|p| p.display().to_string()),
        }));
    }
    Ok(())
}

/// `ingest-stats`: tally a raw corpus without changing it.
pub fn ingest_stats(input: &Path, strict: bool) -> Result<()> {
    let (sessions, skipped) = load_sessions(input, strict)?;
    let stats = CorpusStats::tally(&sessions);
    summary(json!({
        "sessions": stats.session_count,
        "events": stats.total_events,
        "events_per_type": stats.events_per_type,
        "skipped_lines": skipped,
    }));
    Ok(())
}

/// `cleanse`: filter, deduplicate, tokenize, and compress a raw corpus.
pub fn cleanse(input: &Path, out: &Path, run_key: Option<RunKey>, strict: bool) -> Result<()> {
    let (sessions, skipped) = load_sessions(input, strict)?;
    let options = CleanseOptions {
        run_key: run_key.unwrap_or_default(),
    };
    let (streams, report) = cleanse_corpus(&sessions, &options);
    let mut writer = open_output(out)?;
    nextcmd::cleanse::write_streams(&streams, &mut writer)?;
    writer.flush()?;
    if out != Path::new("-") {
        summary(json!({
            "sessions": streams.len(),
            "kept_tokens": streams.iter().map(|s| s.tokens.len()).sum::<usize>(),
            "removed_excluded": report.removed_excluded,
            "removed_unknown": report.removed_unknown,
            "removed_by_dedup": report.removed_by_dedup,
            "removed_by_compression": report.removed_by_compression,
            "skipped_lines": skipped,
        }));
    }
    Ok(())
}

/// `extract`: pick target classes and cut one labeled row per occurrence.
pub fn extract(
    input: &Path,
    out: &Path,
    targets_out: &Path,
    extract_config: &ExtractConfig,
) -> Result<()> {
    let streams = nextcmd::cleanse::read_streams(open_input(input)?)?;
    let targets = select_targets(&streams, extract_config.target_mode())?;
    let options = ExtractOptions {
        max_prefix_window: extract_config.max_prefix_window,
    };
    let rows = extract_corpus(&streams, &targets, &options);
    let mut writer = open_output(out)?;
    nextcmd::extract::write_rows(&rows, &targets, &mut writer)?;
    writer.flush()?;
    let targets_value = serde_json::to_value(&targets)
        .map_err(|e| Error::config(format!("serializing targets: {e}")))?;
    write_json_file(targets_out, &targets_value)?;
    if out != Path::new("-") {
        summary(json!({
            "rows": rows.len(),
            "classes": targets.len(),
            "coverage": targets.coverage,
        }));
    }
    Ok(())
}

fn load_targets(path: &Path) -> Result<TargetClassSet> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(e.line(), e.to_string()))
}

fn load_rows(path: &Path, targets: &TargetClassSet) -> Result<Vec<nextcmd::extract::LabeledRow>> {
    nextcmd::extract::read_rows(open_input(path)?, targets)
}

/// `train`: fit one model on every row and save it.
pub fn train(rows_path: &Path, targets_path: &Path, config: &RunConfig, out: &Path) -> Result<()> {
    let targets = load_targets(targets_path)?;
    let rows = load_rows(rows_path, &targets)?;
    let model = TrainedModel::train(&rows, &targets.classes, &config.model, &config.featurize)?;
    let mut writer = open_output(out)?;
    model.save(&mut writer)?;
    writer.flush()?;
    if out != Path::new("-") {
        summary(json!({
            "model": config.model.kind.display_name(),
            "classes": targets.len(),
            "rows": rows.len(),
        }));
    }
    Ok(())
}

/// `evaluate`: cross-validate one configuration and write a metrics report.
pub fn evaluate(
    rows_path: &Path,
    targets_path: &Path,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    let targets = load_targets(targets_path)?;
    let mut rows = load_rows(rows_path, &targets)?;
    if let Some(n) = config.eval.sample_size {
        rows = subsample(&rows, n, config.eval.seed);
    }
    let pooled = cross_validate(
        &rows,
        &targets.classes,
        &config.model,
        &config.featurize,
        &config.eval,
        config.pipeline.group_by_session,
    )?;
    let echo = json!({
        "model": config.model,
        "featurize": config.featurize,
        "eval": config.eval,
        "pipeline": config.pipeline,
    });
    let generated_at = Some(Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true));
    let report = build_report(&pooled, &targets.classes, echo, generated_at)?;
    let report_value = serde_json::to_value(&report)
        .map_err(|e| Error::config(format!("serializing report: {e}")))?;
    write_json_file(out, &report_value)?;
    if out != Path::new("-") {
        let labels: Vec<usize> = rows.iter().map(|r| r.label).collect();
        summary(json!({
            "model": config.model.kind.display_name(),
            "rows": rows.len(),
            "accuracy": accuracy(&pooled.scores, &pooled.labels)?,
            "majority_baseline": majority_baseline(&labels),
            "micro_auc": report.micro_auc,
        }));
    }
    Ok(())
}

/// `predict`: score prefixes from stdin, one JSON line of top classes each.
pub fn predict(model_path: &Path, top: usize) -> Result<()> {
    let model = TrainedModel::load(BufReader::new(File::open(model_path)?))?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for line in stdin.lock().lines() {
        let line = line?;
        let prefix: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        let scores = model.score(&prefix)?;
        let mut ranked: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let top_classes: Vec<serde_json::Value> = ranked
            .iter()
            .take(top)
            .map(|&(class, probability)| {
                json!({
                    "class": model.classes()[class],
                    "probability": probability,
                })
            })
            .collect();
        serde_json::to_writer(&mut out, &json!({ "top": top_classes }))
            .map_err(|e| Error::config(format!("serializing prediction: {e}")))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// `report`: render one comparison table from saved metrics files.
pub fn report(paths: &[PathBuf]) -> Result<()> {
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        let text = read_to_string(path)?;
        let parsed: MetricsReport =
            serde_json::from_str(&text).map_err(|e| Error::format(e.line(), e.to_string()))?;
        reports.push(parsed);
    }
    print!("{}", render_table(&reports));
    Ok(())
}

/// `bayes`: the ceiling accuracy of a chain spec for a set of classes.
pub fn bayes(spec_path: &Path, targets_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec: MarkovSpec = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", spec_path.display())))?;
    let targets = load_targets(targets_path)?;
    let ceiling = bayes_optimal_accuracy(&spec, &targets.classes)?;
    summary(json!({ "bayes_optimal_accuracy": ceiling }));
    Ok(())
}
