//! Canonical event records shared by the collector, the store, the simulator
//! and the capture client.
//!
//! Every event carries the same [`CoreAttributes`] and belongs to exactly one
//! [`Family`]: window events (1xx), session events (2xx) or browsing events
//! (4xx). Records are plain values; [`EventRecord::validate`] checks the
//! per-family constraints and [`encode`]/[`decode`] implement the JSON wire
//! format (one flat object per event).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::url_privacy::UrlDigest;

/// Milliseconds since the Unix epoch, as read from the client clock.
pub type Millis = i64;

/// Attributes logged with every event, whatever its family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoreAttributes {
    pub time: Millis,
    /// UTC minus local time, in minutes (GMT+2 is -120).
    pub tz_offset: i16,
    pub user_id: u64,
    pub window_id: u64,
    pub session_id: u64,
    /// Unique within its window only; zero for events that are not tab-scoped.
    pub tab_id: u32,
}

/// The three event families, each persisted in its own table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Window,
    Session,
    Browsing,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Window, Family::Session, Family::Browsing];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Window => "window",
            Family::Session => "session",
            Family::Browsing => "browsing",
        }
    }

    /// Collector route accepting this family.
    pub fn route(self) -> &'static str {
        match self {
            Family::Window => "/log/window",
            Family::Session => "/log/session",
            Family::Browsing => "/log/browsing",
        }
    }

    pub fn from_route(route: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.route() == route)
    }

    /// File name used for this family in the JSON-Lines dataset layout.
    pub fn file_name(self) -> &'static str {
        match self {
            Family::Window => "window.jsonl",
            Family::Session => "session.jsonl",
            Family::Browsing => "browsing.jsonl",
        }
    }

    /// Family implied by an event id, if the id is known.
    pub fn of_event_id(id: u16) -> Option<Family> {
        if WindowEventId::try_from(id).is_ok() {
            Some(Family::Window)
        } else if SessionEventId::try_from(id).is_ok() {
            Some(Family::Session)
        } else if BrowsingEventId::try_from(id).is_ok() {
            Some(Family::Browsing)
        } else {
            None
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! event_ids {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $code:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[repr(u16)]
        pub enum $name {
            $($variant = $code),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> u16 {
                self as u16
            }
        }

        impl TryFrom<u16> for $name {
            type Error = u16;

            fn try_from(code: u16) -> Result<Self, u16> {
                match code {
                    $($code => Ok($name::$variant),)+
                    other => Err(other),
                }
            }
        }
    };
}

event_ids! {
    /// Window events (1xx).
    WindowEventId {
        Open = 100,
        Close = 101,
        TabOpen = 110,
        TabClose = 111,
        StateChange = 140,
        FocusLost = 150,
        FocusGained = 151,
    }
}

event_ids! {
    /// Session events (2xx).
    SessionEventId {
        Start = 200,
        End = 201,
        Inactive = 210,
        Active = 211,
        LoggingOff = 220,
        LoggingOn = 221,
        PrivateOn = 230,
        PrivateOff = 231,
    }
}

event_ids! {
    /// Browsing events (4xx).
    BrowsingEventId {
        PageLoaded = 400,
        PageUnloaded = 410,
        PageVisible = 420,
        PageHidden = 430,
    }
}

/// Window states reported with event 140.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum WindowState {
    Maximized = 1,
    Minimized = 2,
    Normal = 3,
    Fullscreen = 4,
}

impl TryFrom<u8> for WindowState {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(WindowState::Maximized),
            2 => Ok(WindowState::Minimized),
            3 => Ok(WindowState::Normal),
            4 => Ok(WindowState::Fullscreen),
            other => Err(format!("unknown window state {other}")),
        }
    }
}

impl From<WindowState> for u8 {
    fn from(s: WindowState) -> u8 {
        s as u8
    }
}

/// Cause codes for page loads (1..=9) and visibility gains (10, 11).
pub mod cause {
    pub const LINK: u8 = 1;
    pub const TYPED: u8 = 2;
    pub const BOOKMARK: u8 = 3;
    pub const INNER_CONTENT: u8 = 4;
    pub const PERMANENT_REDIRECT: u8 = 5;
    pub const TEMPORARY_REDIRECT: u8 = 6;
    pub const DOWNLOAD: u8 = 7;
    pub const FRAMED_LINK: u8 = 8;
    pub const HISTORY: u8 = 9;
    /// A new page was loaded in the active tab.
    pub const LOADED_IN_ACTIVE_TAB: u8 = 10;
    /// The user selected another tab.
    pub const TAB_SELECTED: u8 = 11;

    pub const LOAD: std::ops::RangeInclusive<u8> = LINK..=HISTORY;
    pub const VISIBILITY: std::ops::RangeInclusive<u8> = LOADED_IN_ACTIVE_TAB..=TAB_SELECTED;

    pub fn label(code: u8) -> &'static str {
        match code {
            LINK => "link",
            TYPED => "typed",
            BOOKMARK => "bookmark",
            INNER_CONTENT => "inner-content",
            PERMANENT_REDIRECT => "permanent-redirect",
            TEMPORARY_REDIRECT => "temporary-redirect",
            DOWNLOAD => "download",
            FRAMED_LINK => "framed-link",
            HISTORY => "history",
            LOADED_IN_ACTIVE_TAB => "loaded-in-active-tab",
            TAB_SELECTED => "tab-selected",
            _ => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowEvent {
    pub core: CoreAttributes,
    pub event_id: WindowEventId,
    pub window_state: Option<WindowState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionEvent {
    pub core: CoreAttributes,
    pub event_id: SessionEventId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BrowsingEvent {
    pub core: CoreAttributes,
    pub event_id: BrowsingEventId,
    pub load_id: Option<u64>,
    pub focus_id: Option<u64>,
    pub cause: Option<u8>,
    pub url: Option<UrlDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventRecord {
    Window(WindowEvent),
    Session(SessionEvent),
    Browsing(BrowsingEvent),
}

impl EventRecord {
    pub fn core(&self) -> &CoreAttributes {
        match self {
            EventRecord::Window(e) => &e.core,
            EventRecord::Session(e) => &e.core,
            EventRecord::Browsing(e) => &e.core,
        }
    }

    pub fn core_mut(&mut self) -> &mut CoreAttributes {
        match self {
            EventRecord::Window(e) => &mut e.core,
            EventRecord::Session(e) => &mut e.core,
            EventRecord::Browsing(e) => &mut e.core,
        }
    }

    pub fn time(&self) -> Millis {
        self.core().time
    }

    pub fn family(&self) -> Family {
        match self {
            EventRecord::Window(_) => Family::Window,
            EventRecord::Session(_) => Family::Session,
            EventRecord::Browsing(_) => Family::Browsing,
        }
    }

    pub fn event_code(&self) -> u16 {
        match self {
            EventRecord::Window(e) => e.event_id.code(),
            EventRecord::Session(e) => e.event_id.code(),
            EventRecord::Browsing(e) => e.event_id.code(),
        }
    }

    /// Position of this event among events sharing a timestamp: closing and
    /// hiding events sort before opening and showing ones.
    pub fn tie_rank(&self) -> u8 {
        match self.event_code() {
            430 => 0,
            410 => 1,
            111 => 2,
            150 => 3,
            101 => 4,
            220 | 230 => 5,
            201 => 6,
            200 => 10,
            221 | 231 => 11,
            100 => 12,
            151 => 13,
            140 => 14,
            110 => 15,
            400 => 16,
            420 => 17,
            210 => 18,
            211 => 19,
            _ => 20,
        }
    }

    /// Checks every per-family constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        validate_core(self.core(), &mut v);
        match self {
            EventRecord::Window(e) => {
                let tab_scoped = matches!(e.event_id, WindowEventId::TabOpen | WindowEventId::TabClose);
                if !tab_scoped && e.core.tab_id != 0 {
                    v.push(Violation::UnexpectedTabId(e.event_id.code()));
                }
                match (e.event_id, e.window_state) {
                    (WindowEventId::StateChange, None) => v.push(Violation::MissingField("window_state")),
                    (WindowEventId::StateChange, Some(_)) => {}
                    (_, Some(_)) => v.push(Violation::UnexpectedField("window_state")),
                    (_, None) => {}
                }
            }
            EventRecord::Session(e) => {
                if e.core.tab_id != 0 {
                    v.push(Violation::UnexpectedTabId(e.event_id.code()));
                }
            }
            EventRecord::Browsing(e) => validate_browsing(e, &mut v),
        }
        if v.is_empty() { Ok(()) } else { Err(v) }
    }
}

fn validate_core(core: &CoreAttributes, v: &mut Vec<Violation>) {
    if !(-840..=840).contains(&core.tz_offset) || core.tz_offset % 15 != 0 {
        v.push(Violation::TzOffset(core.tz_offset));
    }
    for (name, id) in [
        ("user_id", core.user_id),
        ("window_id", core.window_id),
        ("session_id", core.session_id),
    ] {
        if id == 0 {
            v.push(Violation::ZeroIdentifier(name));
        }
    }
}

fn validate_browsing(e: &BrowsingEvent, v: &mut Vec<Violation>) {
    use BrowsingEventId::*;
    let code = e.event_id.code();
    let (needs_load, needs_focus, causes, needs_url) = match e.event_id {
        PageLoaded => (true, false, Some(cause::LOAD), true),
        PageUnloaded => (true, false, None, false),
        PageVisible => (false, true, Some(cause::VISIBILITY), false),
        PageHidden => (false, true, None, false),
    };
    let presence = [
        ("load_id", needs_load, e.load_id.is_some()),
        ("focus_id", needs_focus, e.focus_id.is_some()),
        ("url", needs_url, e.url.is_some()),
    ];
    for (name, needed, present) in presence {
        match (needed, present) {
            (true, false) => v.push(Violation::MissingField(name)),
            (false, true) => v.push(Violation::UnexpectedField(name)),
            _ => {}
        }
    }
    match (causes, e.cause) {
        (Some(_), None) => v.push(Violation::MissingField("cause")),
        (Some(range), Some(c)) if !range.contains(&c) => {
            v.push(Violation::CauseOutOfRange { event_id: code, cause: c })
        }
        (None, Some(_)) => v.push(Violation::UnexpectedField("cause")),
        _ => {}
    }
    if let Some(url) = &e.url {
        for (name, d) in url.fields() {
            if !crate::url_privacy::is_canonical_digest(d) {
                v.push(Violation::InvalidDigest(name));
            }
        }
    }
}

/// One violated constraint found by [`EventRecord::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` not allowed for this event id")]
    UnexpectedField(&'static str),
    #[error("cause {cause} not allowed for event {event_id}")]
    CauseOutOfRange { event_id: u16, cause: u8 },
    #[error("tz_offset {0} outside [-840, 840] or not a multiple of 15")]
    TzOffset(i16),
    #[error("`{0}` must be nonzero")]
    ZeroIdentifier(&'static str),
    #[error("event {0} must carry tab_id 0")]
    UnexpectedTabId(u16),
    #[error("`{0}` is not a 40-char lowercase hex digest")]
    InvalidDigest(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("unknown event id {0}")]
    UnknownEventId(u16),
}

/// Flat wire representation; field order fixes the byte layout of [`encode`].
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent {
    time: Millis,
    tz_offset: i16,
    user_id: u64,
    window_id: u64,
    session_id: u64,
    tab_id: u32,
    event_id: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window_state: Option<WindowState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    load_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    focus_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cause: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url_domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url_subdomain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url_full: Option<String>,
}

impl WireEvent {
    fn from_record(record: &EventRecord) -> WireEvent {
        let c = *record.core();
        let mut w = WireEvent {
            time: c.time,
            tz_offset: c.tz_offset,
            user_id: c.user_id,
            window_id: c.window_id,
            session_id: c.session_id,
            tab_id: c.tab_id,
            event_id: record.event_code(),
            window_state: None,
            load_id: None,
            focus_id: None,
            cause: None,
            url_domain: None,
            url_subdomain: None,
            url_path: None,
            url_full: None,
        };
        match record {
            EventRecord::Window(e) => w.window_state = e.window_state,
            EventRecord::Session(_) => {}
            EventRecord::Browsing(e) => {
                w.load_id = e.load_id;
                w.focus_id = e.focus_id;
                w.cause = e.cause;
                if let Some(url) = &e.url {
                    w.url_domain = Some(url.domain_hash.clone());
                    w.url_subdomain = Some(url.subdomain_hash.clone());
                    w.url_path = Some(url.path_hash.clone());
                    w.url_full = Some(url.full_hash.clone());
                }
            }
        }
        w
    }

    fn into_record(self) -> Result<EventRecord, DecodeError> {
        let core = CoreAttributes {
            time: self.time,
            tz_offset: self.tz_offset,
            user_id: self.user_id,
            window_id: self.window_id,
            session_id: self.session_id,
            tab_id: self.tab_id,
        };
        let family = Family::of_event_id(self.event_id).ok_or(DecodeError::UnknownEventId(self.event_id))?;
        let foreign = |name: &str| DecodeError::MalformedPayload(format!("field `{name}` not allowed for {family} events"));
        let browsing_only = [
            ("load_id", self.load_id.is_some()),
            ("focus_id", self.focus_id.is_some()),
            ("cause", self.cause.is_some()),
            ("url_domain", self.url_domain.is_some()),
            ("url_subdomain", self.url_subdomain.is_some()),
            ("url_path", self.url_path.is_some()),
            ("url_full", self.url_full.is_some()),
        ];
        if family != Family::Browsing {
            if let Some((name, _)) = browsing_only.iter().find(|(_, present)| *present) {
                return Err(foreign(name));
            }
        }
        if family != Family::Window && self.window_state.is_some() {
            return Err(foreign("window_state"));
        }
        let record = match family {
            Family::Window => EventRecord::Window(WindowEvent {
                core,
                event_id: WindowEventId::try_from(self.event_id).map_err(DecodeError::UnknownEventId)?,
                window_state: self.window_state,
            }),
            Family::Session => EventRecord::Session(SessionEvent {
                core,
                event_id: SessionEventId::try_from(self.event_id).map_err(DecodeError::UnknownEventId)?,
            }),
            Family::Browsing => {
                let url = match (self.url_domain, self.url_subdomain, self.url_path, self.url_full) {
                    (None, None, None, None) => None,
                    (Some(domain_hash), Some(subdomain_hash), Some(path_hash), Some(full_hash)) => Some(UrlDigest {
                        domain_hash,
                        subdomain_hash,
                        path_hash,
                        full_hash,
                    }),
                    _ => {
                        return Err(DecodeError::MalformedPayload(
                            "url digests must be given for all four levels or none".into(),
                        ))
                    }
                };
                EventRecord::Browsing(BrowsingEvent {
                    core,
                    event_id: BrowsingEventId::try_from(self.event_id).map_err(DecodeError::UnknownEventId)?,
                    load_id: self.load_id,
                    focus_id: self.focus_id,
                    cause: self.cause,
                    url,
                })
            }
        };
        Ok(record)
    }
}

/// Serializes a record as one compact JSON object.
pub fn encode(record: &EventRecord) -> Vec<u8> {
    serde_json::to_vec(&WireEvent::from_record(record)).expect("wire event serializes")
}

pub fn encode_string(record: &EventRecord) -> String {
    String::from_utf8(encode(record)).expect("JSON is UTF-8")
}

pub fn decode(bytes: &[u8]) -> Result<EventRecord, DecodeError> {
    let wire: WireEvent =
        serde_json::from_slice(bytes).map_err(|e| DecodeError::MalformedPayload(e.to_string()))?;
    wire.into_record()
}

impl Serialize for EventRecord {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireEvent::from_record(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EventRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireEvent::deserialize(deserializer)?;
        wire.into_record().map_err(serde::de::Error::custom)
    }
}
