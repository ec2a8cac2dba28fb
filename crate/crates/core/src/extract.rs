//! Turning token streams into supervised examples.
//!
//! Every occurrence of a command whose descriptor is in the target class set
//! becomes one training row: the label is that descriptor, the features are
//! all tokens strictly before it in the session. Commands outside the target
//! set never become rows but still appear inside later rows' prefixes, as do
//! collapsed repeat tokens (`"X+"`).

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cleanse::TokenStream;
use crate::{Error, Result};

/// How the target class set is chosen from command frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// The `k` most frequent command descriptors.
    TopK(usize),
    /// The smallest frequency-ranked prefix of descriptors covering at least
    /// this fraction of all command occurrences.
    Coverage(f64),
}

impl Default for TargetMode {
    fn default() -> Self {
        TargetMode::TopK(61)
    }
}

/// The label space: command descriptors ordered most-frequent-first, with
/// frequency ties broken lexicographically ascending. `coverage` is the
/// fraction of all command occurrences these classes account for in the
/// corpus they were selected from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetClassSet {
    pub classes: Vec<String>,
    pub coverage: f64,
    pub mode: TargetMode,
}

impl TargetClassSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, descriptor: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == descriptor)
    }

    fn index_map(&self) -> HashMap<&str, usize> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect()
    }
}

/// Counts command-descriptor occurrences and picks the target classes.
///
/// A collapsed repeat (`"X+"`) is a single token and counts as one
/// occurrence. Commands without a descriptor have no class to belong to and
/// are ignored, both in the ranking and in the coverage denominator.
pub fn select_targets(streams: &[TokenStream], mode: TargetMode) -> Result<TargetClassSet> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for stream in streams {
        for token in &stream.tokens {
            if let Some(desc) = token.command_descriptor() {
                *counts.entry(desc).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::empty("corpus contains no command events with descriptors"));
    }
    let total: u64 = counts.values().sum();

    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let take = match mode {
        TargetMode::TopK(k) => {
            if k == 0 {
                return Err(Error::config("top-k target selection needs k >= 1"));
            }
            k.min(ranked.len())
        }
        TargetMode::Coverage(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(format!(
                    "coverage fraction must be in (0, 1], got {f}"
                )));
            }
            let mut covered = 0u64;
            let mut take = ranked.len();
            for (i, (_, count)) in ranked.iter().enumerate() {
                covered += count;
                // Tiny epsilon so a fraction that is exactly representable
                // (e.g. 80/100 vs 0.8) is not missed to rounding.
                if covered as f64 / total as f64 >= f - 1e-12 {
                    take = i + 1;
                    break;
                }
            }
            take
        }
    };

    let covered: u64 = ranked[..take].iter().map(|(_, c)| c).sum();
    Ok(TargetClassSet {
        classes: ranked[..take].iter().map(|(d, _)| d.to_string()).collect(),
        coverage: covered as f64 / total as f64,
        mode,
    })
}

/// One supervised example. `prefix` holds rendered tokens ("CommandEvent-Copy+"
/// form); `label` indexes into the [`TargetClassSet`] it was extracted with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRow {
    pub session_id: String,
    pub prefix: Vec<String>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    /// Keep only the last this-many prefix tokens. `None` keeps the entire
    /// session history, which is the default.
    pub max_prefix_window: Option<usize>,
}

/// Extracts one row per in-target command occurrence in the stream.
pub fn extract_rows(
    stream: &TokenStream,
    targets: &TargetClassSet,
    options: &ExtractOptions,
) -> Vec<LabeledRow> {
    let index = targets.index_map();
    let mut rendered: Vec<String> = Vec::with_capacity(stream.tokens.len());
    let mut rows = Vec::new();
    for token in &stream.tokens {
        if let Some(&label) = token.command_descriptor().and_then(|d| index.get(d)) {
            let start = match options.max_prefix_window {
                Some(w) => rendered.len().saturating_sub(w),
                None => 0,
            };
            rows.push(LabeledRow {
                session_id: stream.session_id.clone(),
                prefix: rendered[start..].to_vec(),
                label,
            });
        }
        rendered.push(token.render());
    }
    rows
}

/// [`extract_rows`] over a whole corpus, concatenated in stream order.
pub fn extract_corpus(
    streams: &[TokenStream],
    targets: &TargetClassSet,
    options: &ExtractOptions,
) -> Vec<LabeledRow> {
    streams
        .iter()
        .flat_map(|s| extract_rows(s, targets, options))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct WireRow {
    session_id: String,
    prefix: Vec<String>,
    label: String,
}

/// Writes rows as JSON-lines `{session_id, prefix, label}` with the label as
/// its descriptor string rather than a class index.
pub fn write_rows<W: Write>(
    rows: &[LabeledRow],
    targets: &TargetClassSet,
    writer: &mut W,
) -> Result<()> {
    for row in rows {
        let label = targets.classes.get(row.label).ok_or_else(|| {
            Error::config(format!(
                "row label index {} out of range for {} classes",
                row.label,
                targets.len()
            ))
        })?;
        let wire = WireRow {
            session_id: row.session_id.clone(),
            prefix: row.prefix.clone(),
            label: label.clone(),
        };
        serde_json::to_writer(&mut *writer, &wire)
            .map_err(|e| Error::config(format!("serializing row: {e}")))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads rows written by [`write_rows`]. A label not present in `targets` is
/// a format error naming the line.
pub fn read_rows<R: BufRead>(reader: R, targets: &TargetClassSet) -> Result<Vec<LabeledRow>> {
    let index = targets.index_map();
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRow = serde_json::from_str(&line)
            .map_err(|e| Error::format(idx + 1, e.to_string()))?;
        let label = *index.get(wire.label.as_str()).ok_or_else(|| {
            Error::format(idx + 1, format!("label {:?} is not a target class", wire.label))
        })?;
        rows.push(LabeledRow { session_id: wire.session_id, prefix: wire.prefix, label });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Token;
    use proptest::prelude::*;

    fn stream(tokens: &[&str]) -> TokenStream {
        TokenStream {
            session_id: "s1".into(),
            tokens: tokens.iter().map(|t| Token::parse(t).unwrap()).collect(),
        }
    }

    fn command_stream(descriptors: &[&str]) -> TokenStream {
        let tokens: Vec<String> = descriptors
            .iter()
            .map(|d| format!("CommandEvent-{d}"))
            .collect();
        stream(&tokens.iter().map(String::as_str).collect::<Vec<_>>())
    }

    #[test]
    fn coverage_picks_smallest_ranked_prefix() {
        // Frequencies 50/30/20: the top two cover exactly 80%.
        let mut descriptors = Vec::new();
        descriptors.extend(std::iter::repeat("Copy").take(50));
        descriptors.extend(std::iter::repeat("Paste").take(30));
        descriptors.extend(std::iter::repeat("Save").take(20));
        // Interleave so adjacent tokens differ and order is not suspicious.
        descriptors.sort_unstable();
        let streams = vec![command_stream(&descriptors)];

        let targets = select_targets(&streams, TargetMode::Coverage(0.80)).unwrap();
        assert_eq!(targets.classes, vec!["Copy", "Paste"]);
        assert!((targets.coverage - 0.80).abs() < 1e-12);
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        let streams = vec![command_stream(&["Zeta", "Alpha", "Zeta", "Alpha", "Mid"])];
        let targets = select_targets(&streams, TargetMode::TopK(2)).unwrap();
        assert_eq!(targets.classes, vec!["Alpha", "Zeta"]);
    }

    #[test]
    fn repeated_token_counts_once() {
        let streams = vec![stream(&[
            "CommandEvent-Copy+",
            "EditEvent",
            "CommandEvent-Paste",
            "EditEvent",
            "CommandEvent-Paste",
        ])];
        let targets = select_targets(&streams, TargetMode::TopK(1)).unwrap();
        // Paste occurs twice, the collapsed Copy run only once.
        assert_eq!(targets.classes, vec!["Paste"]);
    }

    #[test]
    fn top_k_larger_than_distinct_returns_all() {
        let streams = vec![command_stream(&["A", "B"])];
        let targets = select_targets(&streams, TargetMode::TopK(10)).unwrap();
        assert_eq!(targets.len(), 2);
        assert!((targets.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_coverage_returns_all_distinct_classes() {
        let streams = vec![command_stream(&["A", "B", "C", "A"])];
        let targets = select_targets(&streams, TargetMode::Coverage(1.0)).unwrap();
        assert_eq!(targets.len(), 3);
        assert!((targets.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_modes_and_empty_corpora_are_errors() {
        let streams = vec![command_stream(&["A"])];
        assert!(select_targets(&streams, TargetMode::TopK(0)).is_err());
        assert!(select_targets(&streams, TargetMode::Coverage(0.0)).is_err());
        assert!(select_targets(&streams, TargetMode::Coverage(1.5)).is_err());
        // Commands without descriptors cannot form classes.
        let no_commands = vec![stream(&["EditEvent", "CommandEvent"])];
        assert!(select_targets(&no_commands, TargetMode::TopK(5)).is_err());
    }

    fn two_command_targets() -> TargetClassSet {
        TargetClassSet {
            classes: vec!["C1".into(), "C2".into()],
            coverage: 1.0,
            mode: TargetMode::TopK(2),
        }
    }

    #[test]
    fn each_command_yields_prefix_of_everything_before_it() {
        let s = stream(&[
            "EditEvent",
            "NavigationEvent-Open",
            "CommandEvent-C1",
            "WindowEvent-Move",
            "CommandEvent-C2",
        ]);
        let rows = extract_rows(&s, &two_command_targets(), &ExtractOptions::default());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].prefix, vec!["EditEvent", "NavigationEvent-Open"]);
        assert_eq!(rows[0].label, 0);
        assert_eq!(
            rows[1].prefix,
            vec![
                "EditEvent",
                "NavigationEvent-Open",
                "CommandEvent-C1",
                "WindowEvent-Move"
            ]
        );
        assert_eq!(rows[1].label, 1);
    }

    #[test]
    fn repeated_command_token_yields_one_row() {
        let s = stream(&["EditEvent", "CommandEvent-C1+", "EditEvent"]);
        let rows = extract_rows(&s, &two_command_targets(), &ExtractOptions::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, 0);
        assert_eq!(rows[0].prefix, vec!["EditEvent"]);
    }

    #[test]
    fn out_of_target_commands_stay_in_prefixes() {
        let s = stream(&["CommandEvent-Obscure", "CommandEvent-C2"]);
        let rows = extract_rows(&s, &two_command_targets(), &ExtractOptions::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].prefix, vec!["CommandEvent-Obscure"]);
    }

    #[test]
    fn session_with_no_target_commands_yields_no_rows() {
        let s = stream(&["EditEvent", "WindowEvent-Move"]);
        assert!(extract_rows(&s, &two_command_targets(), &ExtractOptions::default()).is_empty());
    }

    #[test]
    fn prefix_window_keeps_last_tokens_only() {
        let s = stream(&["EditEvent", "WindowEvent-Move", "FindEvent", "CommandEvent-C1"]);
        let options = ExtractOptions { max_prefix_window: Some(2) };
        let rows = extract_rows(&s, &two_command_targets(), &options);
        assert_eq!(rows[0].prefix, vec!["WindowEvent-Move", "FindEvent"]);
    }

    #[test]
    fn rows_round_trip_with_string_labels() {
        let targets = two_command_targets();
        let s = stream(&["EditEvent", "CommandEvent-C1", "CommandEvent-C2"]);
        let rows = extract_rows(&s, &targets, &ExtractOptions::default());
        let mut buf = Vec::new();
        write_rows(&rows, &targets, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(r#""label":"C1""#));
        let back = read_rows(std::io::Cursor::new(buf), &targets).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn unknown_label_on_read_is_a_format_error() {
        let line = r#"{"session_id":"s1","prefix":[],"label":"Nope"}"#;
        let err = read_rows(std::io::Cursor::new(line), &two_command_targets()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn prefixes_grow_strictly_within_a_session(
            bases in proptest::collection::vec("[a-c]|CommandEvent-C1|CommandEvent-C2", 0..30)
        ) {
            let refs: Vec<&str> = bases.iter().map(String::as_str).collect();
            let s = stream(&refs);
            let rows = extract_rows(&s, &two_command_targets(), &ExtractOptions::default());
            for pair in rows.windows(2) {
                prop_assert!(pair[0].prefix.len() < pair[1].prefix.len());
            }
            // Every row's prefix is a prefix of the rendered stream.
            for row in &rows {
                let rendered: Vec<String> =
                    s.tokens[..row.prefix.len()].iter().map(Token::render).collect();
                prop_assert_eq!(&row.prefix, &rendered);
            }
        }
    }
}
