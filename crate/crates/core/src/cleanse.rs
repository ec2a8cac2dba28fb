//! Cleansing: turning raw sessions into modeling-ready token streams.
//!
//! The pipeline order is fixed: filter out non-developer events, then drop
//! duplicate records, then flatten events to tokens, then collapse runs of
//! consecutive repeats. Each stage reports how many events it removed so a
//! corpus can be audited after the fact.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::event::{EventClass, RawEvent, Session, Token};
use crate::ingest::CorpusStats;
use crate::{Error, Result};

/// What counts as "the same event" when detecting a run of repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKey {
    /// Type plus descriptor: `CommandEvent-Copy, CommandEvent-Copy` is a run,
    /// `CommandEvent-Copy, CommandEvent-Paste` is not.
    #[default]
    FullBase,
    /// Type only: any two consecutive `CommandEvent`s form a run regardless
    /// of descriptor. Lossy; the run keeps the first token's descriptor.
    TypeOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanseOptions {
    pub run_key: RunKey,
}

/// Removal counts accumulated by the cleansing stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanseReport {
    /// Events whose type is one of the five IDE-internal kinds.
    pub removed_excluded: u64,
    /// Events whose type is outside the taxonomy entirely.
    pub removed_unknown: u64,
    pub removed_by_dedup: u64,
    pub removed_by_compression: u64,
}

impl CleanseReport {
    /// Filter removals as a single figure: excluded plus unknown types.
    pub fn removed_by_filter(&self) -> u64 {
        self.removed_excluded + self.removed_unknown
    }

    pub fn total_removed(&self) -> u64 {
        self.removed_by_filter() + self.removed_by_dedup + self.removed_by_compression
    }

    fn absorb(&mut self, other: CleanseReport) {
        self.removed_excluded += other.removed_excluded;
        self.removed_unknown += other.removed_unknown;
        self.removed_by_dedup += other.removed_by_dedup;
        self.removed_by_compression += other.removed_by_compression;
    }

    /// Copies the removal counters into a raw-corpus tally.
    pub fn apply_to_stats(&self, stats: &mut CorpusStats) {
        stats.removed_by_filter = self.removed_by_filter();
        stats.removed_by_dedup = self.removed_by_dedup;
        stats.removed_by_compression = self.removed_by_compression;
    }
}

/// A cleansed session: the events flattened to tokens, order preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub session_id: String,
    pub tokens: Vec<Token>,
}

/// Keeps exactly the developer-induced events. Excluded and unknown types
/// are removed and counted separately. Order is untouched.
pub fn filter_event_types(session: &Session) -> (Session, CleanseReport) {
    let mut report = CleanseReport::default();
    let events: Vec<RawEvent> = session
        .events
        .iter()
        .filter(|event| match event.event_type.class() {
            EventClass::DeveloperInduced => true,
            EventClass::Excluded => {
                report.removed_excluded += 1;
                false
            }
            EventClass::Unknown => {
                report.removed_unknown += 1;
                false
            }
        })
        .cloned()
        .collect();
    (Session { session_id: session.session_id.clone(), events }, report)
}

/// Removes duplicate records: among events of one session agreeing on
/// `(triggered_at, event_type)`, only the first (in current order) is kept.
/// The descriptor is deliberately not part of the key — a duplicated record
/// differing only in descriptor is still a duplicate.
///
/// Expects the session already sorted by `triggered_at` (as `group_sessions`
/// leaves it), so "first" means earliest in the stream.
pub fn deduplicate(session: &Session) -> (Session, u64) {
    let mut seen: HashSet<(i64, &crate::event::EventType)> = HashSet::new();
    let mut removed = 0u64;
    let mut events = Vec::with_capacity(session.events.len());
    for event in &session.events {
        if seen.insert((event.triggered_at, &event.event_type)) {
            events.push(event.clone());
        } else {
            removed += 1;
        }
    }
    (Session { session_id: session.session_id.clone(), events }, removed)
}

/// Flattens each event to its token. One event, one token; no reordering.
pub fn tokenize(session: &Session) -> TokenStream {
    TokenStream {
        session_id: session.session_id.clone(),
        tokens: session.events.iter().map(Token::from_event).collect(),
    }
}

/// Collapses each maximal run of 2+ consecutive same-key tokens into a single
/// token with `repeated = true`, keeping the first token's base. Runs of
/// length 1 pass through unchanged (an already-`repeated` singleton keeps its
/// flag, which makes the operation idempotent). Returns the number of tokens
/// removed: a run of length n contributes n − 1.
pub fn compress_runs(stream: &TokenStream, run_key: RunKey) -> (TokenStream, u64) {
    let key = |token: &Token| -> String {
        match run_key {
            RunKey::FullBase => token.base.clone(),
            RunKey::TypeOnly => token.type_part().to_string(),
        }
    };

    let mut tokens: Vec<Token> = Vec::with_capacity(stream.tokens.len());
    let mut removed = 0u64;
    let mut run: Option<(String, Token, u64)> = None; // (key, first token, length)

    let flush = |run: &mut Option<(String, Token, u64)>,
                     tokens: &mut Vec<Token>,
                     removed: &mut u64| {
        if let Some((_, first, len)) = run.take() {
            let repeated = first.repeated || len >= 2;
            tokens.push(Token { base: first.base, repeated });
            *removed += len - 1;
        }
    };

    for token in &stream.tokens {
        let token_key = key(token);
        match &mut run {
            Some((current_key, first, len)) if *current_key == token_key => {
                first.repeated |= token.repeated;
                *len += 1;
            }
            _ => {
                flush(&mut run, &mut tokens, &mut removed);
                run = Some((token_key, token.clone(), 1));
            }
        }
    }
    flush(&mut run, &mut tokens, &mut removed);

    (TokenStream { session_id: stream.session_id.clone(), tokens }, removed)
}

/// The full pipeline for one session: filter, deduplicate, tokenize,
/// compress. Stage order matters — duplicates are removed before run
/// compression, so a duplicated record never masquerades as a repeat.
pub fn cleanse_session(session: &Session, options: &CleanseOptions) -> (TokenStream, CleanseReport) {
    let (filtered, mut report) = filter_event_types(session);
    let (deduped, removed_dupes) = deduplicate(&filtered);
    report.removed_by_dedup = removed_dupes;
    let stream = tokenize(&deduped);
    let (compressed, removed_runs) = compress_runs(&stream, options.run_key);
    report.removed_by_compression = removed_runs;
    (compressed, report)
}

/// Cleanses every session and sums the per-session removal counts.
pub fn cleanse_corpus(
    sessions: &[Session],
    options: &CleanseOptions,
) -> (Vec<TokenStream>, CleanseReport) {
    let mut streams = Vec::with_capacity(sessions.len());
    let mut report = CleanseReport::default();
    for session in sessions {
        let (stream, session_report) = cleanse_session(session, options);
        report.absorb(session_report);
        streams.push(stream);
    }
    (streams, report)
}

#[derive(Serialize, Deserialize)]
struct WireStream {
    session_id: String,
    tokens: Vec<String>,
}

/// Writes token streams as JSON-lines of `{session_id, tokens}` with tokens
/// in rendered form (`"CommandEvent-Copy+"`).
pub fn write_streams<W: Write>(streams: &[TokenStream], writer: &mut W) -> Result<()> {
    for stream in streams {
        let wire = WireStream {
            session_id: stream.session_id.clone(),
            tokens: stream.tokens.iter().map(Token::render).collect(),
        };
        serde_json::to_writer(&mut *writer, &wire)
            .map_err(|e| Error::config(format!("serializing token stream: {e}")))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads token streams written by [`write_streams`].
pub fn read_streams<R: BufRead>(reader: R) -> Result<Vec<TokenStream>> {
    let mut streams = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireStream = serde_json::from_str(&line)
            .map_err(|e| Error::format(idx + 1, e.to_string()))?;
        let mut tokens = Vec::with_capacity(wire.tokens.len());
        for text in &wire.tokens {
            tokens.push(
                Token::parse(text).map_err(|e| Error::format(idx + 1, e.to_string()))?,
            );
        }
        streams.push(TokenStream { session_id: wire.session_id, tokens });
    }
    Ok(streams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventType;
    use proptest::prelude::*;

    fn ev(ts: i64, ty: &str, desc: Option<&str>) -> RawEvent {
        RawEvent {
            session_id: "s1".into(),
            triggered_at: ts,
            event_type: EventType::from_name(ty),
            descriptor: desc.map(str::to_string),
        }
    }

    fn session(events: Vec<RawEvent>) -> Session {
        Session { session_id: "s1".into(), events }
    }

    fn stream(bases: &[&str]) -> TokenStream {
        TokenStream {
            session_id: "s1".into(),
            tokens: bases.iter().map(|b| Token::parse(b).unwrap()).collect(),
        }
    }

    fn rendered(stream: &TokenStream) -> Vec<String> {
        stream.tokens.iter().map(Token::render).collect()
    }

    #[test]
    fn filter_keeps_developer_induced_only() {
        let s = session(vec![
            ev(1, "CommandEvent", Some("Copy")),
            ev(2, "SystemEvent", None),
            ev(3, "EditEvent", None),
            ev(4, "TelemetryEvent", None),
            ev(5, "InfoEvent", None),
        ]);
        let (kept, report) = filter_event_types(&s);
        assert_eq!(kept.events.len(), 2);
        assert_eq!(report.removed_excluded, 2);
        assert_eq!(report.removed_unknown, 1);
        assert_eq!(report.removed_by_filter(), 3);
    }

    #[test]
    fn dedup_key_ignores_descriptor_and_keeps_first() {
        let s = session(vec![
            ev(10, "CommandEvent", Some("Copy")),
            ev(10, "CommandEvent", Some("Paste")), // duplicate record, different descriptor
            ev(10, "EditEvent", None),             // same time, different type: kept
            ev(11, "CommandEvent", Some("Copy")),  // same type, later time: kept
        ]);
        let (deduped, removed) = deduplicate(&s);
        assert_eq!(removed, 1);
        assert_eq!(deduped.events.len(), 3);
        assert_eq!(deduped.events[0].descriptor.as_deref(), Some("Copy"));
    }

    #[test]
    fn tokenize_maps_one_event_to_one_token() {
        let s = session(vec![
            ev(1, "CommandEvent", Some("Refresh")),
            ev(2, "EditEvent", None),
        ]);
        let ts = tokenize(&s);
        assert_eq!(rendered(&ts), vec!["CommandEvent-Refresh", "EditEvent"]);
    }

    #[test]
    fn compress_collapses_triple_into_one_repeated_token() {
        let (out, removed) = compress_runs(
            &stream(&["CommandEvent-Copy", "CommandEvent-Copy", "CommandEvent-Copy"]),
            RunKey::FullBase,
        );
        assert_eq!(rendered(&out), vec!["CommandEvent-Copy+"]);
        assert_eq!(removed, 2);
    }

    #[test]
    fn compress_distinguishes_descriptors_under_full_base() {
        let (out, removed) = compress_runs(
            &stream(&["CommandEvent-Copy", "CommandEvent-Paste", "CommandEvent-Paste"]),
            RunKey::FullBase,
        );
        assert_eq!(rendered(&out), vec!["CommandEvent-Copy", "CommandEvent-Paste+"]);
        assert_eq!(removed, 1);
    }

    #[test]
    fn compress_type_only_merges_across_descriptors() {
        let (out, removed) = compress_runs(
            &stream(&["CommandEvent-Copy", "CommandEvent-Paste", "EditEvent"]),
            RunKey::TypeOnly,
        );
        // The run keeps the first token's descriptor.
        assert_eq!(rendered(&out), vec!["CommandEvent-Copy+", "EditEvent"]);
        assert_eq!(removed, 1);
    }

    #[test]
    fn compress_keeps_singleton_repeat_flags() {
        let (out, removed) = compress_runs(&stream(&["EditEvent+"]), RunKey::FullBase);
        assert_eq!(rendered(&out), vec!["EditEvent+"]);
        assert_eq!(removed, 0);
    }

    #[test]
    fn pipeline_orders_dedup_before_compression() {
        // Two records at the same instant are a duplicate (removed by dedup),
        // not a repeat run; the later third record is a genuine repeat.
        let s = session(vec![
            ev(10, "CommandEvent", Some("Copy")),
            ev(10, "CommandEvent", Some("Copy")),
            ev(12, "CommandEvent", Some("Copy")),
        ]);
        let (out, report) = cleanse_session(&s, &CleanseOptions::default());
        assert_eq!(rendered(&out), vec!["CommandEvent-Copy+"]);
        assert_eq!(report.removed_by_dedup, 1);
        assert_eq!(report.removed_by_compression, 1);
    }

    #[test]
    fn corpus_report_fills_stats() {
        let sessions = vec![
            session(vec![
                ev(1, "SystemEvent", None),
                ev(2, "EditEvent", None),
                ev(2, "EditEvent", None),
                ev(3, "EditEvent", None),
            ]),
            session(vec![ev(1, "EditEvent", None)]),
        ];
        let (streams, report) = cleanse_corpus(&sessions, &CleanseOptions::default());
        let mut stats = CorpusStats::tally(&sessions);
        report.apply_to_stats(&mut stats);
        assert_eq!(stats.total_events, 5);
        assert_eq!(stats.removed_by_filter, 1);
        assert_eq!(stats.removed_by_dedup, 1);
        assert_eq!(stats.removed_by_compression, 1);
        let kept: u64 = streams.iter().map(|s| s.tokens.len() as u64).sum();
        assert_eq!(kept + report.total_removed(), stats.total_events);
    }

    #[test]
    fn streams_round_trip_through_json_lines() {
        let streams = vec![
            stream(&["EditEvent", "CommandEvent-Copy+"]),
            TokenStream { session_id: "s2".into(), tokens: vec![] },
        ];
        let mut buf = Vec::new();
        write_streams(&streams, &mut buf).unwrap();
        let back = read_streams(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, streams);
    }

    fn arbitrary_stream() -> impl Strategy<Value = TokenStream> {
        proptest::collection::vec(
            ("[a-d]", any::<bool>()).prop_map(|(b, r)| Token::new(b, r)),
            0..60,
        )
        .prop_map(|tokens| TokenStream { session_id: "s".into(), tokens })
    }

    proptest! {
        #[test]
        fn compress_is_idempotent(stream in arbitrary_stream()) {
            let (once, _) = compress_runs(&stream, RunKey::FullBase);
            let (twice, removed_again) = compress_runs(&once, RunKey::FullBase);
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(removed_again, 0);
        }

        #[test]
        fn compress_accounts_for_every_token(stream in arbitrary_stream()) {
            let (out, removed) = compress_runs(&stream, RunKey::FullBase);
            prop_assert_eq!(out.tokens.len() as u64 + removed, stream.tokens.len() as u64);
            // No two consecutive output tokens share a key.
            for pair in out.tokens.windows(2) {
                prop_assert_ne!(&pair[0].base, &pair[1].base);
            }
        }
    }
}
