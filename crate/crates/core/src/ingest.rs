//! Reading interaction logs from their interchange form.
//!
//! A corpus is JSON-lines: one event object per line with keys `session_id`,
//! `triggered_at`, `event_type`, and optionally `descriptor`. Timestamps are
//! ISO-8601 with millisecond precision and a literal `Z` offset
//! (`2017-03-01T10:00:00.000Z`); nothing else is accepted, so a corpus only
//! ever has one timestamp notation. Blank lines are ignored.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::event::{EventType, RawEvent, Session};
use crate::{Error, Result};

// `%3f` (no dot) is fixed-width, so the milliseconds are mandatory;
// `%.3f` would accept a missing fractional part.
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S.%3fZ";

/// Parses a corpus timestamp into milliseconds since the Unix epoch.
pub fn parse_timestamp(text: &str) -> Result<i64> {
    let naive = NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT).map_err(|e| {
        Error::config(format!(
            "timestamp {text:?} is not ISO-8601 with milliseconds and a Z offset: {e}"
        ))
    })?;
    Ok(naive.and_utc().timestamp_millis())
}

/// Renders epoch milliseconds back into the corpus timestamp form.
pub fn format_timestamp(millis: i64) -> String {
    let dt = DateTime::from_timestamp_millis(millis)
        .expect("corpus timestamps stay within the representable datetime range");
    dt.format(TIMESTAMP_FORMAT).to_string()
}

/// How `parse_corpus` reacts to a malformed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Fail on the first malformed line, reporting its line number.
    Strict,
    /// Skip malformed lines and count them.
    Lenient,
}

/// The result of reading a corpus: parsed events in file order, plus how many
/// malformed lines were skipped (always 0 in strict mode).
#[derive(Debug)]
pub struct ParsedCorpus {
    pub events: Vec<RawEvent>,
    pub skipped_lines: usize,
}

#[derive(Serialize, Deserialize)]
struct WireEvent {
    session_id: String,
    triggered_at: String,
    event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor: Option<String>,
}

fn parse_line(line: &str) -> std::result::Result<RawEvent, String> {
    let wire: WireEvent = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if wire.session_id.is_empty() {
        return Err("session_id is empty".to_string());
    }
    let triggered_at = parse_timestamp(&wire.triggered_at).map_err(|e| e.to_string())?;
    Ok(RawEvent {
        session_id: wire.session_id,
        triggered_at,
        event_type: EventType::from_name(&wire.event_type),
        descriptor: wire.descriptor,
    })
}

/// Reads a JSON-lines corpus. Order is preserved exactly as read.
pub fn parse_corpus<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParsedCorpus> {
    let mut events = Vec::new();
    let mut skipped_lines = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(event) => events.push(event),
            Err(message) => match mode {
                ParseMode::Strict => return Err(Error::format(idx + 1, message)),
                ParseMode::Lenient => skipped_lines += 1,
            },
        }
    }
    Ok(ParsedCorpus { events, skipped_lines })
}

/// Writes events in the same JSON-lines form `parse_corpus` reads.
pub fn write_events<W: Write>(events: &[RawEvent], writer: &mut W) -> Result<()> {
    for event in events {
        let wire = WireEvent {
            session_id: event.session_id.clone(),
            triggered_at: format_timestamp(event.triggered_at),
            event_type: event.event_type.name().to_string(),
            descriptor: event.descriptor.clone(),
        };
        serde_json::to_writer(&mut *writer, &wire)
            .map_err(|e| Error::config(format!("serializing event: {e}")))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups a flat event list into sessions.
///
/// Sessions appear in order of each id's first appearance in the input, and
/// within a session events are sorted by `triggered_at` with input order
/// preserved among ties (stable sort).
pub fn group_sessions(events: Vec<RawEvent>) -> Vec<Session> {
    let mut order: HashMap<String, usize> = HashMap::new();
    let mut sessions: Vec<Session> = Vec::new();
    for event in events {
        let slot = match order.get(&event.session_id) {
            Some(&slot) => slot,
            None => {
                order.insert(event.session_id.clone(), sessions.len());
                sessions.push(Session {
                    session_id: event.session_id.clone(),
                    events: Vec::new(),
                });
                sessions.len() - 1
            }
        };
        sessions[slot].events.push(event);
    }
    for session in &mut sessions {
        session.sort_by_time();
    }
    sessions
}

/// Corpus-level accounting: raw volume plus what each cleansing stage
/// removed. The removal counters start at zero and are filled in from the
/// cleansing stage's report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_events: u64,
    pub events_per_type: BTreeMap<String, u64>,
    pub session_count: u64,
    pub removed_by_filter: u64,
    pub removed_by_dedup: u64,
    pub removed_by_compression: u64,
}

impl CorpusStats {
    /// Tallies the raw corpus; removal counters are left at zero.
    pub fn tally(sessions: &[Session]) -> CorpusStats {
        let mut events_per_type: BTreeMap<String, u64> = BTreeMap::new();
        let mut total_events = 0u64;
        for session in sessions {
            for event in &session.events {
                *events_per_type
                    .entry(event.event_type.name().to_string())
                    .or_insert(0) += 1;
                total_events += 1;
            }
        }
        CorpusStats {
            total_events,
            events_per_type,
            session_count: sessions.len() as u64,
            removed_by_filter: 0,
            removed_by_dedup: 0,
            removed_by_compression: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(session: &str, ts: &str, ty: &str, desc: Option<&str>) -> String {
        match desc {
            Some(d) => format!(
                r#"{{"session_id":"{session}","triggered_at":"{ts}","event_type":"{ty}","descriptor":"{d}"}}"#
            ),
            None => format!(
                r#"{{"session_id":"{session}","triggered_at":"{ts}","event_type":"{ty}"}}"#
            ),
        }
    }

    #[test]
    fn parses_three_line_corpus() {
        let text = [
            line("s1", "2017-03-01T10:00:00.000Z", "CommandEvent", Some("Copy")),
            line("s1", "2017-03-01T10:00:01.500Z", "EditEvent", None),
            line("s2", "2017-03-01T11:00:00.250Z", "WindowEvent", Some("Move")),
        ]
        .join("\n");
        let parsed = parse_corpus(Cursor::new(text), ParseMode::Strict).unwrap();
        assert_eq!(parsed.events.len(), 3);
        assert_eq!(parsed.skipped_lines, 0);
        assert_eq!(parsed.events[0].descriptor.as_deref(), Some("Copy"));
        assert_eq!(parsed.events[1].descriptor, None);
        assert_eq!(
            parsed.events[1].triggered_at - parsed.events[0].triggered_at,
            1500
        );
    }

    #[test]
    fn strict_mode_reports_offending_line_number() {
        let text = [
            line("s1", "2017-03-01T10:00:00.000Z", "CommandEvent", Some("Copy")),
            "{\"not\":\"an event\"}".to_string(),
            line("s1", "2017-03-01T10:00:02.000Z", "EditEvent", None),
        ]
        .join("\n");
        let err = parse_corpus(Cursor::new(text), ParseMode::Strict).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_skips_and_counts_malformed_lines() {
        let text = [
            line("s1", "2017-03-01T10:00:00.000Z", "CommandEvent", Some("Copy")),
            "not json at all".to_string(),
            line("", "2017-03-01T10:00:01.000Z", "EditEvent", None),
            line("s1", "2017-03-01T10:00", "EditEvent", None),
            line("s1", "2017-03-01T10:00:03.000Z", "EditEvent", None),
            "".to_string(),
        ]
        .join("\n");
        let parsed = parse_corpus(Cursor::new(text), ParseMode::Lenient).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.skipped_lines, 3);
    }

    #[test]
    fn timestamp_requires_millis_and_z() {
        assert!(parse_timestamp("2017-03-01T10:00:00.000Z").is_ok());
        assert!(parse_timestamp("2017-03-01T10:00:00Z").is_err());
        assert!(parse_timestamp("2017-03-01T10:00:00.000+00:00").is_err());
        assert!(parse_timestamp("2017-03-01 10:00:00.000Z").is_err());
    }

    #[test]
    fn events_round_trip_through_write_and_parse() {
        let events = vec![
            RawEvent {
                session_id: "s1".into(),
                triggered_at: 1488362400000,
                event_type: EventType::from_name("CommandEvent"),
                descriptor: Some("Copy".into()),
            },
            RawEvent {
                session_id: "s2".into(),
                triggered_at: 1488362401250,
                event_type: EventType::from_name("SomethingNew"),
                descriptor: None,
            },
        ];
        let mut buf = Vec::new();
        write_events(&events, &mut buf).unwrap();
        let parsed = parse_corpus(Cursor::new(buf), ParseMode::Strict).unwrap();
        assert_eq!(parsed.events, events);
    }

    #[test]
    fn group_sessions_keeps_first_appearance_order() {
        let mk = |sid: &str, ts: i64| RawEvent {
            session_id: sid.into(),
            triggered_at: ts,
            event_type: EventType::from_name("EditEvent"),
            descriptor: None,
        };
        // s2 appears first in the file even though s1 has earlier timestamps.
        let events = vec![mk("s2", 100), mk("s1", 5), mk("s2", 50), mk("s1", 1)];
        let sessions = group_sessions(events);
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].session_id, "s2");
        assert_eq!(sessions[1].session_id, "s1");
        // Within a session, time order wins over file order.
        assert_eq!(sessions[0].events[0].triggered_at, 50);
        assert_eq!(sessions[1].events[0].triggered_at, 1);
    }

    #[test]
    fn stats_field_names_are_the_wire_contract() {
        let stats = CorpusStats::tally(&[]);
        let value = serde_json::to_value(&stats).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec![
                "events_per_type",
                "removed_by_compression",
                "removed_by_dedup",
                "removed_by_filter",
                "session_count",
                "total_events",
            ]
        );
    }

    #[test]
    fn per_type_counts_sum_to_total() {
        let mk = |ty: &str, ts: i64| RawEvent {
            session_id: "s1".into(),
            triggered_at: ts,
            event_type: EventType::from_name(ty),
            descriptor: None,
        };
        let sessions = group_sessions(vec![
            mk("EditEvent", 1),
            mk("EditEvent", 2),
            mk("CommandEvent", 3),
            mk("MysteryEvent", 4),
        ]);
        let stats = CorpusStats::tally(&sessions);
        assert_eq!(stats.total_events, 4);
        assert_eq!(stats.events_per_type.values().sum::<u64>(), stats.total_events);
        assert_eq!(stats.events_per_type["EditEvent"], 2);
        assert_eq!(stats.events_per_type["MysteryEvent"], 1);
        assert_eq!(stats.session_count, 1);
    }
}
