//! Core vocabulary for IDE interaction streams: event types, raw events,
//! sessions, and the compact token form the rest of the pipeline consumes.
//!
//! The taxonomy is fixed: 18 known event types, of which 13 are
//! developer-induced (things a person did) and 5 describe IDE-internal
//! activity. Names outside the taxonomy are preserved verbatim as
//! [`EventType::Unknown`] so ingestion never loses data it does not
//! understand.

use std::fmt;

/// The 13 event types triggered directly by a developer's action.
pub const DEVELOPER_INDUCED: [&str; 13] = [
    "BuildEvent",
    "CommandEvent",
    "CompletionEvent",
    "DebuggerEvent",
    "DocumentEvent",
    "EditEvent",
    "FindEvent",
    "IDEStateEvent",
    "NavigationEvent",
    "SolutionEvent",
    "TestRunEvent",
    "VersionControlEvent",
    "WindowEvent",
];

/// The 5 event types that report IDE-internal activity rather than a
/// developer action; cleansing removes them.
pub const EXCLUDED: [&str; 5] = [
    "ActivityEvent",
    "ErrorEvent",
    "InfoEvent",
    "SystemEvent",
    "UserProfileEvent",
];

/// One of the 18 known event types, or an escape hatch for anything else.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventType {
    Known(&'static str),
    Unknown(String),
}

impl EventType {
    /// Maps a type name to its `EventType`. Total: unrecognized names become
    /// `Unknown` rather than an error. Matching is case-sensitive and exact.
    pub fn from_name(name: &str) -> EventType {
        for known in DEVELOPER_INDUCED.iter().chain(EXCLUDED.iter()) {
            if *known == name {
                return EventType::Known(known);
            }
        }
        EventType::Unknown(name.to_string())
    }

    pub fn name(&self) -> &str {
        match self {
            EventType::Known(name) => name,
            EventType::Unknown(name) => name,
        }
    }

    pub fn class(&self) -> EventClass {
        match self {
            EventType::Known(name) if DEVELOPER_INDUCED.contains(name) => {
                EventClass::DeveloperInduced
            }
            EventType::Known(_) => EventClass::Excluded,
            EventType::Unknown(_) => EventClass::Unknown,
        }
    }

    pub fn is_developer_induced(&self) -> bool {
        self.class() == EventClass::DeveloperInduced
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How cleansing treats an event type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventClass {
    DeveloperInduced,
    Excluded,
    Unknown,
}

/// Classifies a raw type name without constructing an `EventType`.
pub fn classify_event_type(name: &str) -> EventClass {
    EventType::from_name(name).class()
}

/// A single event as it arrives from an interaction log.
///
/// `triggered_at` is milliseconds since the Unix epoch, UTC. `descriptor`
/// refines the type (for `CommandEvent` it names the command invoked) and is
/// kept verbatim; not every event type carries one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEvent {
    pub session_id: String,
    pub triggered_at: i64,
    pub event_type: EventType,
    pub descriptor: Option<String>,
}

/// All events from one recording session, ordered by `triggered_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub events: Vec<RawEvent>,
}

impl Session {
    /// Sorts events by `triggered_at`, preserving input order among events
    /// with identical timestamps (stable sort).
    pub fn sort_by_time(&mut self) {
        self.events.sort_by_key(|e| e.triggered_at);
    }
}

/// The unit the models consume: an event flattened to text, plus a flag
/// marking it as a collapsed run of consecutive repeats.
///
/// `base` is either the bare type name or `"<type>-<descriptor>"`. The `"+"`
/// marking a repeat lives in `repeated`, not in `base`, so descriptors that
/// legitimately end in `'+'` would only become ambiguous at the serialized
/// boundary; `base` itself is never rewritten.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub base: String,
    pub repeated: bool,
}

impl Token {
    pub fn new(base: impl Into<String>, repeated: bool) -> Token {
        Token { base: base.into(), repeated }
    }

    /// Builds the token for an event: the type name, with the descriptor
    /// appended after `'-'` when present.
    pub fn from_event(event: &RawEvent) -> Token {
        let base = match &event.descriptor {
            Some(d) => format!("{}-{}", event.event_type.name(), d),
            None => event.event_type.name().to_string(),
        };
        Token { base, repeated: false }
    }

    /// Serialized form: `base`, with `'+'` appended when `repeated`.
    pub fn render(&self) -> String {
        if self.repeated {
            format!("{}+", self.base)
        } else {
            self.base.clone()
        }
    }

    /// Inverse of [`Token::render`]: one trailing `'+'` (if any) becomes the
    /// `repeated` flag. Errors on an empty string or a bare `"+"`, which has
    /// no base.
    pub fn parse(text: &str) -> crate::Result<Token> {
        let (base, repeated) = match text.strip_suffix('+') {
            Some(rest) => (rest, true),
            None => (text, false),
        };
        if base.is_empty() {
            return Err(crate::Error::format(
                0,
                format!("token {text:?} has an empty base"),
            ));
        }
        Ok(Token { base: base.to_string(), repeated })
    }

    /// The part of `base` before the first `'-'`, i.e. the event type name.
    pub fn type_part(&self) -> &str {
        match self.base.split_once('-') {
            Some((ty, _)) => ty,
            None => &self.base,
        }
    }

    /// The command descriptor, if this token is a `CommandEvent` with one.
    /// Splits on the first `'-'`, so descriptors containing `'-'` survive.
    pub fn command_descriptor(&self) -> Option<&str> {
        match self.base.split_once('-') {
            Some(("CommandEvent", desc)) if !desc.is_empty() => Some(desc),
            _ => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn taxonomy_covers_eighteen_types() {
        assert_eq!(DEVELOPER_INDUCED.len() + EXCLUDED.len(), 18);
        for name in DEVELOPER_INDUCED {
            assert_eq!(classify_event_type(name), EventClass::DeveloperInduced);
        }
        for name in EXCLUDED {
            assert_eq!(classify_event_type(name), EventClass::Excluded);
        }
    }

    #[test]
    fn unrecognized_names_classify_as_unknown() {
        assert_eq!(classify_event_type("TelemetryEvent"), EventClass::Unknown);
        // Case-sensitive: a lowercase variant is not the known type.
        assert_eq!(classify_event_type("commandevent"), EventClass::Unknown);
        assert_eq!(classify_event_type(""), EventClass::Unknown);
    }

    #[test]
    fn unknown_round_trips_its_name() {
        let ty = EventType::from_name("TelemetryEvent");
        assert_eq!(ty, EventType::Unknown("TelemetryEvent".to_string()));
        assert_eq!(ty.name(), "TelemetryEvent");
    }

    #[test]
    fn token_from_event_joins_type_and_descriptor() {
        let ev = RawEvent {
            session_id: "s1".into(),
            triggered_at: 0,
            event_type: EventType::from_name("CommandEvent"),
            descriptor: Some("Refresh".into()),
        };
        assert_eq!(Token::from_event(&ev).base, "CommandEvent-Refresh");

        let bare = RawEvent { descriptor: None, ..ev };
        assert_eq!(Token::from_event(&bare).base, "CommandEvent");
    }

    #[test]
    fn render_marks_repeats_with_plus() {
        assert_eq!(Token::new("EditEvent", false).render(), "EditEvent");
        assert_eq!(Token::new("EditEvent", true).render(), "EditEvent+");
    }

    #[test]
    fn parse_splits_trailing_plus() {
        assert_eq!(
            Token::parse("CommandEvent-Copy+").unwrap(),
            Token::new("CommandEvent-Copy", true)
        );
        assert_eq!(
            Token::parse("CommandEvent-Copy").unwrap(),
            Token::new("CommandEvent-Copy", false)
        );
    }

    #[test]
    fn parse_rejects_empty_and_bare_plus() {
        assert!(Token::parse("").is_err());
        assert!(Token::parse("+").is_err());
    }

    #[test]
    fn command_descriptor_splits_on_first_dash() {
        let t = Token::new("CommandEvent-Edit-Copy", false);
        assert_eq!(t.command_descriptor(), Some("Edit-Copy"));
        assert_eq!(t.type_part(), "CommandEvent");

        assert_eq!(Token::new("CommandEvent", false).command_descriptor(), None);
        assert_eq!(Token::new("WindowEvent-Move", false).command_descriptor(), None);
    }

    #[test]
    fn sort_by_time_is_stable_for_equal_timestamps() {
        // Reference: decorate with the original index and sort by
        // (timestamp, index); a stable sort must agree.
        let mk = |ts: i64, desc: &str| RawEvent {
            session_id: "s1".into(),
            triggered_at: ts,
            event_type: EventType::from_name("EditEvent"),
            descriptor: Some(desc.into()),
        };
        let events = vec![mk(5, "a"), mk(3, "b"), mk(5, "c"), mk(3, "d"), mk(5, "e")];

        let mut reference: Vec<(usize, RawEvent)> =
            events.iter().cloned().enumerate().collect();
        reference.sort_by_key(|(i, e)| (e.triggered_at, *i));
        let reference: Vec<RawEvent> = reference.into_iter().map(|(_, e)| e).collect();

        let mut session = Session { session_id: "s1".into(), events };
        session.sort_by_time();
        assert_eq!(session.events, reference);
    }

    proptest! {
        #[test]
        fn token_render_parse_round_trip(
            base in "[A-Za-z][A-Za-z-]{0,30}",
            repeated in any::<bool>(),
        ) {
            let token = Token::new(base, repeated);
            let back = Token::parse(&token.render()).unwrap();
            prop_assert_eq!(back, token);
        }

        #[test]
        fn classify_is_total(name in ".{0,40}") {
            // No panic on arbitrary input; result is one of the three classes.
            let _ = classify_event_type(&name);
        }

        #[test]
        fn sort_by_time_orders_and_preserves_multiset(
            timestamps in proptest::collection::vec(0i64..50, 0..40)
        ) {
            let events: Vec<RawEvent> = timestamps
                .iter()
                .enumerate()
                .map(|(i, &ts)| RawEvent {
                    session_id: "s".into(),
                    triggered_at: ts,
                    event_type: EventType::from_name("EditEvent"),
                    descriptor: Some(format!("d{i}")),
                })
                .collect();
            let mut session = Session { session_id: "s".into(), events: events.clone() };
            session.sort_by_time();
            prop_assert_eq!(session.events.len(), events.len());
            for pair in session.events.windows(2) {
                prop_assert!(pair[0].triggered_at <= pair[1].triggered_at);
            }
        }
    }
}
