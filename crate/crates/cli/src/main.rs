//! Command-line frontend for the next-command prediction pipeline.
//!
//! Each subcommand wraps one pipeline stage; chained together they go from a
//! raw event log to a cross-validated metrics table. Failures print a single
//! JSON line `{"stage", "message"}` to stderr and exit with a code that says
//! which kind of thing went wrong: 1 for bad usage or configuration, 2 for
//! unreadable or malformed data, 3 for a training run that diverged.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nextcmd::cleanse::RunKey;
use nextcmd::error::Error;

use config::{
    parse_run_key, parse_selection_mode, EvalArgs, FeaturizeArgs, ModelArgs, RunConfig,
    SelectionMode,
};

#[derive(Debug, Parser)]
#[command(
    name = "nextcmd",
    about = "Predict a developer's next IDE command from the preceding event stream",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic event corpus from a Markov chain spec.
    Generate {
        /// Chain spec, a TOML file.
        #[arg(long)]
        spec: PathBuf,
        /// Corpus JSON-lines destination (`-` for stdout).
        #[arg(long)]
        out: PathBuf,
        /// Injection-truth JSON destination (default: `<out>.truth.json`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Tally sessions and event types in a raw corpus.
    IngestStats {
        /// Raw corpus JSON-lines (`-` for stdin).
        #[arg(long)]
        input: PathBuf,
        /// Fail on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Filter, deduplicate, tokenize, and run-compress a raw corpus.
    Cleanse {
        /// Raw corpus JSON-lines (`-` for stdin).
        #[arg(long)]
        input: PathBuf,
        /// Token streams destination (`-` for stdout).
        #[arg(long)]
        out: PathBuf,
        /// What counts as a repeat run: full-base or type-only.
        #[arg(long, value_parser = parse_run_key)]
        run_key: Option<RunKey>,
        /// Fail on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Choose target classes and cut one labeled row per command occurrence.
    Extract {
        /// Token streams JSON-lines (`-` for stdin).
        #[arg(long)]
        input: PathBuf,
        /// Labeled rows destination (`-` for stdout).
        #[arg(long)]
        out: PathBuf,
        /// Target class set destination (JSON).
        #[arg(long)]
        targets: PathBuf,
        /// Run configuration TOML supplying `[extract]` defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Class selection: top-k or coverage.
        #[arg(long, value_parser = parse_selection_mode)]
        mode: Option<SelectionMode>,
        /// Class count for top-k selection.
        #[arg(long)]
        k: Option<usize>,
        /// Occurrence fraction for coverage selection.
        #[arg(long)]
        coverage: Option<f64>,
        /// Keep only this many trailing prefix tokens per row.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Fit one classifier on every row and save it.
    Train {
        /// Labeled rows JSON-lines (`-` for stdin).
        #[arg(long)]
        rows: PathBuf,
        /// Target class set JSON from `extract`.
        #[arg(long)]
        targets: PathBuf,
        /// Run configuration TOML; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model destination (JSON).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        featurize: FeaturizeArgs,
    },
    /// Cross-validate one configuration and write a metrics report.
    Evaluate {
        /// Labeled rows JSON-lines (`-` for stdin).
        #[arg(long)]
        rows: PathBuf,
        /// Target class set JSON from `extract`.
        #[arg(long)]
        targets: PathBuf,
        /// Run configuration TOML; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Metrics report destination (JSON).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        featurize: FeaturizeArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Score prefixes from stdin with a saved model, one JSON line each.
    Predict {
        /// Saved model JSON from `train`.
        #[arg(long)]
        model: PathBuf,
        /// How many top classes to report per prefix.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Render a comparison table from saved metrics reports.
    Report {
        /// Metrics report JSON files from `evaluate`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Compute the ceiling accuracy a chain spec allows for chosen classes.
    Bayes {
        /// Chain spec, a TOML file.
        #[arg(long)]
        spec: PathBuf,
        /// Target class set JSON from `extract`.
        #[arg(long)]
        targets: PathBuf,
    },
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::Generate { .. } => "generate",
        Command::IngestStats { .. } => "ingest-stats",
        Command::Cleanse { .. } => "cleanse",
        Command::Extract { .. } => "extract",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Predict { .. } => "predict",
        Command::Report { .. } => "report",
        Command::Bayes { .. } => "bayes",
    }
}

/// Exit codes by failure kind; `Fold` reports as whatever it wraps.
fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 1,
        Error::Io(_) | Error::Format { .. } | Error::Empty(_) | Error::Dimension { .. } => 2,
        Error::Divergence { .. } => 3,
        Error::Fold { source, .. } => exit_code(source),
    }
}

fn fail(stage: &str, code: u8, message: String) -> ExitCode {
    let line = serde_json::json!({ "stage": stage, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn run(command: &Command) -> nextcmd::Result<()> {
    match command {
        Command::Generate { spec, out, truth } => {
            commands::generate_corpus(spec, out, truth.as_deref())
        }
        Command::IngestStats { input, strict } => commands::ingest_stats(input, *strict),
        Command::Cleanse {
            input,
            out,
            run_key,
            strict,
        } => commands::cleanse(input, out, *run_key, *strict),
        Command::Extract {
            input,
            out,
            targets,
            config,
            mode,
            k,
            coverage,
            window,
        } => {
            let mut run_config = RunConfig::load(config.as_deref())?;
            if let Some(mode) = mode {
                run_config.extract.mode = *mode;
            }
            if let Some(k) = k {
                run_config.extract.k = *k;
            }
            if let Some(coverage) = coverage {
                run_config.extract.coverage = *coverage;
            }
            if let Some(window) = window {
                run_config.extract.max_prefix_window = Some(*window);
            }
            commands::extract(input, out, targets, &run_config.extract)
        }
        Command::Train {
            rows,
            targets,
            config,
            out,
            model,
            featurize,
        } => {
            let mut run_config = RunConfig::load(config.as_deref())?;
            model.apply(&mut run_config.model);
            featurize.apply(&mut run_config.featurize);
            commands::train(rows, targets, &run_config, out)
        }
        Command::Evaluate {
            rows,
            targets,
            config,
            out,
            model,
            featurize,
            eval,
        } => {
            let mut run_config = RunConfig::load(config.as_deref())?;
            model.apply(&mut run_config.model);
            featurize.apply(&mut run_config.featurize);
            eval.apply(&mut run_config.eval, &mut run_config.pipeline);
            commands::evaluate(rows, targets, &run_config, out)
        }
        Command::Predict { model, top } => commands::predict(model, *top),
        Command::Report { reports } => commands::report(reports),
        Command::Bayes { spec, targets } => commands::bayes(spec, targets),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not failures.
            if err.use_stderr() {
                return fail("usage", 1, err.to_string());
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let stage = stage_name(&cli.command);
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => fail(stage, exit_code(&error), error.to_string()),
    }
}
