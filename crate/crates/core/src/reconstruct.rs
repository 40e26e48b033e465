//! Session reconstruction: from one session's raw events to a
//! [`SessionTimeline`] of paired, debounced and imputed intervals.
//!
//! Reconstruction is a sequential fold over the session's events sorted by
//! (time, tie rank, arrival). Data-quality problems never abort it; they are
//! collected as [`Anomaly`] values on the timeline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{
    cause, BrowsingEventId, EventRecord, Millis, SessionEventId, WindowEventId, WindowState,
};
use crate::interval::{Span, SpanSet, StepFunction};
use crate::url_privacy::UrlDigest;

pub const DEFAULT_DEBOUNCE_MS: Millis = 10_000;
pub const DEFAULT_INACTIVITY_BACKDATE_MS: Millis = 60_000;
pub const DEFAULT_IMPLICIT_GAP_MS: Millis = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum Imputation {
    /// Sessions without a recorded end are excluded from analytics.
    Filter,
    /// The end is the last recorded event time plus an offset.
    Estimate { offset_ms: Millis },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    /// Minimum focus gap counted as window background time (inclusive).
    pub debounce_ms: Millis,
    /// How far before an inactive event the user's last action lies.
    pub inactivity_backdate_ms: Millis,
    /// Event-free gap after which the user is implicitly idle (inclusive).
    pub implicit_gap_ms: Millis,
    pub imputation: Imputation,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            debounce_ms: DEFAULT_DEBOUNCE_MS,
            inactivity_backdate_ms: DEFAULT_INACTIVITY_BACKDATE_MS,
            implicit_gap_ms: DEFAULT_IMPLICIT_GAP_MS,
            imputation: Imputation::Estimate { offset_ms: 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    Loaded,
    Visible,
    WindowFocused,
    WindowBackground,
    Active,
    Inactive,
    ImplicitInactive,
    PrivateBrowsing,
    LoggingOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: Millis,
    pub end: Millis,
    pub kind: IntervalKind,
}

impl Interval {
    pub fn new(start: Millis, end: Millis, kind: IntervalKind) -> Interval {
        debug_assert!(start <= end);
        Interval { start, end, kind }
    }

    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    pub fn len(&self) -> Millis {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

fn to_set(intervals: &[Interval]) -> SpanSet {
    intervals.iter().map(Interval::span).collect()
}

fn from_set(set: &SpanSet, kind: IntervalKind) -> Vec<Interval> {
    set.spans().iter().map(|s| Interval::new(s.start, s.end, kind)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndSource {
    Recorded,
    Imputed,
    Excluded,
}

/// How the end of an interval was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    /// By its own closing event.
    Recorded,
    /// By an enclosing close (unload, tab close, window close, new visible page).
    Implied,
    /// Still open when the session ended.
    SessionEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Anomaly {
    OrphanUnload { load_id: u64, time: Millis },
    DuplicateLoadId { load_id: u64, time: Millis },
    DuplicateUnload { load_id: u64, time: Millis },
    OrphanHide { focus_id: u64, time: Millis },
    DuplicateFocusId { focus_id: u64, time: Millis },
    VisibleWithoutLoad { focus_id: u64, time: Millis },
    ImpliedClose { id: u64, time: Millis },
    FocusNotAlternating { window_id: u64, time: Millis, event_id: u16 },
    ActivityNotAlternating { time: Millis, event_id: u16 },
    InheritedWindow { window_id: u64, time: Millis },
    UnknownTab { window_id: u64, tab_id: u32, time: Millis },
    DuplicateWindowOpen { window_id: u64, time: Millis },
    DuplicateTabOpen { window_id: u64, tab_id: u32, time: Millis },
    EventAfterWindowClose { window_id: u64, time: Millis, event_id: u16 },
    EventOutsideSession { time: Millis, event_id: u16 },
    DuplicateSessionEnd { time: Millis },
    NegativeCount { time: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconstructError {
    #[error("session {session_id} has no session start event")]
    NoSessionStart { session_id: u64 },
    #[error("no events to reconstruct")]
    Empty,
    #[error("events from more than one session ({0} and {1})")]
    MixedSessions(u64, u64),
}

/// Sorts by (time, tie rank, original position).
pub fn sort_events(events: &mut [EventRecord]) {
    events.sort_by_key(|e| (e.time(), e.tie_rank()));
}

fn sorted(events: &[EventRecord]) -> Vec<EventRecord> {
    let mut v = events.to_vec();
    sort_events(&mut v);
    v
}

// ---------------------------------------------------------------- pairing

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedLoad {
    pub load_id: u64,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Option<Millis>,
    pub closed_by: Option<Closure>,
    pub cause: Option<u8>,
    pub url: Option<UrlDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedFocus {
    pub focus_id: u64,
    /// Load shown in the tab when it became visible.
    pub load_id: Option<u64>,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Option<Millis>,
    pub closed_by: Option<Closure>,
    pub cause: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    pub loads: Vec<PairedLoad>,
    pub focuses: Vec<PairedFocus>,
    pub anomalies: Vec<Anomaly>,
}

impl Pairing {
    /// Closes every interval still open at `end`.
    pub fn close_open(&mut self, end: Millis) {
        for l in self.loads.iter_mut().filter(|l| l.end.is_none()) {
            l.end = Some(end.max(l.start));
            l.closed_by = Some(Closure::SessionEnd);
        }
        for f in self.focuses.iter_mut().filter(|f| f.end.is_none()) {
            f.end = Some(end.max(f.start));
            f.closed_by = Some(Closure::SessionEnd);
        }
    }
}

/// Pairs 400/410 by `load_id` and 420/430 by `focus_id`. A visible interval is
/// attributed to the load current in its tab; it is closed early if its load
/// unloads, its tab or window closes, or another page of the same window
/// becomes visible. Intervals without a closing event stay open.
pub fn pair_intervals(events: &[EventRecord]) -> Pairing {
    let events = sorted(events);
    let mut p = Pairing::default();
    let mut load_index: HashMap<u64, usize> = HashMap::new();
    let mut focus_index: HashMap<u64, usize> = HashMap::new();
    let mut current_load: HashMap<(u64, u32), usize> = HashMap::new();
    let mut visible_in_window: HashMap<u64, usize> = HashMap::new();

    fn close_focus(p: &mut Pairing, idx: usize, t: Millis, how: Closure) {
        let f = &mut p.focuses[idx];
        if f.end.is_none() {
            f.end = Some(t);
            f.closed_by = Some(how);
            if how == Closure::Implied {
                p.anomalies.push(Anomaly::ImpliedClose { id: f.focus_id, time: t });
            }
        }
    }

    fn close_load(p: &mut Pairing, idx: usize, t: Millis, how: Closure) {
        let l = &mut p.loads[idx];
        if l.end.is_none() {
            l.end = Some(t);
            l.closed_by = Some(how);
            if how == Closure::Implied {
                p.anomalies.push(Anomaly::ImpliedClose { id: l.load_id, time: t });
            }
        }
    }

    for e in &events {
        let c = *e.core();
        let (t, w, tab) = (c.time, c.window_id, c.tab_id);
        match e {
            EventRecord::Browsing(b) => match b.event_id {
                BrowsingEventId::PageLoaded => {
                    let Some(id) = b.load_id else { continue };
                    if load_index.contains_key(&id) {
                        p.anomalies.push(Anomaly::DuplicateLoadId { load_id: id, time: t });
                        continue;
                    }
                    if let Some(&prev) = current_load.get(&(w, tab)) {
                        close_load(&mut p, prev, t, Closure::Implied);
                    }
                    load_index.insert(id, p.loads.len());
                    current_load.insert((w, tab), p.loads.len());
                    p.loads.push(PairedLoad {
                        load_id: id,
                        window_id: w,
                        tab_id: tab,
                        start: t,
                        end: None,
                        closed_by: None,
                        cause: b.cause,
                        url: b.url.clone(),
                    });
                }
                BrowsingEventId::PageUnloaded => {
                    let Some(id) = b.load_id else { continue };
                    let Some(&idx) = load_index.get(&id) else {
                        p.anomalies.push(Anomaly::OrphanUnload { load_id: id, time: t });
                        continue;
                    };
                    if p.loads[idx].end.is_some() {
                        if p.loads[idx].closed_by == Some(Closure::Recorded) {
                            p.anomalies.push(Anomaly::DuplicateUnload { load_id: id, time: t });
                        }
                        continue;
                    }
                    let open_focus: Vec<usize> = p
                        .focuses
                        .iter()
                        .enumerate()
                        .filter(|(_, f)| f.end.is_none() && f.load_id == Some(id))
                        .map(|(i, _)| i)
                        .collect();
                    for fi in open_focus {
                        close_focus(&mut p, fi, t, Closure::Implied);
                    }
                    close_load(&mut p, idx, t, Closure::Recorded);
                    let key = (p.loads[idx].window_id, p.loads[idx].tab_id);
                    if current_load.get(&key) == Some(&idx) {
                        current_load.remove(&key);
                    }
                }
                BrowsingEventId::PageVisible => {
                    let Some(id) = b.focus_id else { continue };
                    if focus_index.contains_key(&id) {
                        p.anomalies.push(Anomaly::DuplicateFocusId { focus_id: id, time: t });
                        continue;
                    }
                    if let Some(&other) = visible_in_window.get(&w) {
                        close_focus(&mut p, other, t, Closure::Implied);
                    }
                    let load_id = current_load.get(&(w, tab)).map(|&i| p.loads[i].load_id);
                    if load_id.is_none() {
                        p.anomalies.push(Anomaly::VisibleWithoutLoad { focus_id: id, time: t });
                    }
                    focus_index.insert(id, p.focuses.len());
                    visible_in_window.insert(w, p.focuses.len());
                    p.focuses.push(PairedFocus {
                        focus_id: id,
                        load_id,
                        window_id: w,
                        tab_id: tab,
                        start: t,
                        end: None,
                        closed_by: None,
                        cause: b.cause,
                    });
                }
                BrowsingEventId::PageHidden => {
                    let Some(id) = b.focus_id else { continue };
                    let Some(&idx) = focus_index.get(&id) else {
                        p.anomalies.push(Anomaly::OrphanHide { focus_id: id, time: t });
                        continue;
                    };
                    close_focus(&mut p, idx, t, Closure::Recorded);
                    if visible_in_window.get(&w) == Some(&idx) {
                        visible_in_window.remove(&w);
                    }
                }
            },
            EventRecord::Window(we) if matches!(we.event_id, WindowEventId::TabClose | WindowEventId::Close) => {
                let whole_window = we.event_id == WindowEventId::Close;
                let hit = |fw: u64, ftab: u32| fw == w && (whole_window || ftab == tab);
                let focus_hits: Vec<usize> = (0..p.focuses.len())
                    .filter(|&i| p.focuses[i].end.is_none() && hit(p.focuses[i].window_id, p.focuses[i].tab_id))
                    .collect();
                for fi in focus_hits {
                    close_focus(&mut p, fi, t, Closure::Implied);
                }
                let load_hits: Vec<usize> = (0..p.loads.len())
                    .filter(|&i| p.loads[i].end.is_none() && hit(p.loads[i].window_id, p.loads[i].tab_id))
                    .collect();
                for li in load_hits {
                    close_load(&mut p, li, t, Closure::Implied);
                }
                current_load.retain(|&(cw, ct), _| !hit(cw, ct));
                if visible_in_window.get(&w).is_some_and(|&i| p.focuses[i].end.is_some()) {
                    visible_in_window.remove(&w);
                }
            }
            _ => {}
        }
    }
    p
}

// ------------------------------------------------------- focus / activity

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FocusTransition {
    Lost,
    Gained,
}

/// Background intervals of one window open over `open`: every maximal
/// unfocused stretch of at least `threshold_ms`. Shorter stretches (moves,
/// resizes) are erased. The focus state before the first transition is the
/// opposite of that transition; with no transitions the window was never
/// focused. Consecutive duplicate transitions keep the first.
pub fn debounce_background(
    window_id: u64,
    transitions: &[(Millis, FocusTransition)],
    open: Span,
    threshold_ms: Millis,
) -> (Vec<Interval>, Vec<Anomaly>) {
    let mut anomalies = Vec::new();
    let mut clean: Vec<(Millis, FocusTransition)> = Vec::new();
    for &(t, tr) in transitions {
        if clean.last().is_some_and(|&(_, last)| last == tr) {
            let event_id = match tr {
                FocusTransition::Lost => 150,
                FocusTransition::Gained => 151,
            };
            anomalies.push(Anomaly::FocusNotAlternating { window_id, time: t, event_id });
            continue;
        }
        clean.push((t.clamp(open.start, open.end), tr));
    }
    let mut gaps = Vec::new();
    let mut unfocused_since = match clean.first() {
        Some((_, FocusTransition::Lost)) => None,
        _ => Some(open.start),
    };
    for &(t, tr) in &clean {
        match tr {
            FocusTransition::Lost => unfocused_since = Some(t),
            FocusTransition::Gained => {
                if let Some(s) = unfocused_since.take() {
                    gaps.push((s, t));
                }
            }
        }
    }
    if let Some(s) = unfocused_since {
        gaps.push((s, open.end));
    }
    let background = gaps
        .into_iter()
        .filter(|(s, e)| e > s && e - s >= threshold_ms)
        .map(|(s, e)| Interval::new(s, e, IntervalKind::WindowBackground))
        .collect();
    (background, anomalies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivityTransition {
    Inactive,
    Active,
}

/// Explicit inactive intervals `[t(210) - backdate, t(211)]` (an unmatched 210
/// lasts until the end of `frame`) and their complement as active intervals.
pub fn activity_intervals(
    transitions: &[(Millis, ActivityTransition)],
    frame: Span,
    backdate_ms: Millis,
) -> (Vec<Interval>, Vec<Interval>, Vec<Anomaly>) {
    let mut anomalies = Vec::new();
    let mut inactive = SpanSet::new();
    let mut since: Option<Millis> = None;
    for &(t, tr) in transitions {
        match (tr, since) {
            (ActivityTransition::Inactive, None) => since = Some((t - backdate_ms).clamp(frame.start, frame.end)),
            (ActivityTransition::Active, Some(s)) => {
                inactive.insert(Span::new(s, t.clamp(s, frame.end)));
                since = None;
            }
            (tr, _) => anomalies.push(Anomaly::ActivityNotAlternating {
                time: t,
                event_id: if tr == ActivityTransition::Inactive { 210 } else { 211 },
            }),
        }
    }
    if let Some(s) = since {
        inactive.insert(Span::new(s, frame.end));
    }
    let active = inactive.complement_within(frame);
    (from_set(&inactive, IntervalKind::Inactive), from_set(&active, IntervalKind::Active), anomalies)
}

/// Every gap of at least `gap_ms` between consecutive instants of `times`
/// (frame bounds included) yields `[t_prev + gap_ms, t_next]`. A gap of
/// exactly `gap_ms` yields an empty interval.
pub fn implicit_idle(times: &[Millis], frame: Span, gap_ms: Millis) -> Vec<Interval> {
    let mut ts: Vec<Millis> = times.iter().copied().filter(|t| frame.start <= *t && *t <= frame.end).collect();
    ts.push(frame.start);
    ts.push(frame.end);
    ts.sort_unstable();
    ts.dedup();
    ts.windows(2)
        .filter(|w| w[1] - w[0] >= gap_ms)
        .map(|w| Interval::new(w[0] + gap_ms, w[1], IntervalKind::ImplicitInactive))
        .collect()
}

/// Session bounds. A recorded 201 wins; otherwise the strategy decides.
pub fn impute_session_end(
    events: &[EventRecord],
    strategy: Imputation,
) -> Result<(Millis, Millis, EndSource), ReconstructError> {
    let first = events.first().ok_or(ReconstructError::Empty)?;
    let session_id = first.core().session_id;
    let is = |e: &EventRecord, id: SessionEventId| matches!(e, EventRecord::Session(s) if s.event_id == id);
    let start = events
        .iter()
        .filter(|e| is(e, SessionEventId::Start))
        .map(EventRecord::time)
        .min()
        .ok_or(ReconstructError::NoSessionStart { session_id })?;
    let last = events.iter().map(EventRecord::time).max().expect("nonempty");
    if let Some(end) = events.iter().filter(|e| is(e, SessionEventId::End)).map(EventRecord::time).min() {
        return Ok((start, end.max(start), EndSource::Recorded));
    }
    Ok(match strategy {
        Imputation::Filter => (start, last, EndSource::Excluded),
        Imputation::Estimate { offset_ms } => (start, last + offset_ms.max(0), EndSource::Imputed),
    })
}

// ------------------------------------------------------- windows and tabs

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabTimeline {
    pub window_id: u64,
    /// `None` for a window's initial tab that no event ever referenced.
    pub tab_id: Option<u32>,
    /// True for the tab implied by the window opening.
    pub initial: bool,
    pub start: Millis,
    pub end: Millis,
    pub closed_by: Closure,
}

impl TabTimeline {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTimeline {
    pub window_id: u64,
    pub start: Millis,
    pub end: Millis,
    pub closed_by: Closure,
    /// Opened before the session started (no open event in this session).
    pub inherited: bool,
    pub focus_transitions: Vec<(Millis, FocusTransition)>,
    pub background: Vec<Interval>,
    /// Open time minus background time.
    pub focused: SpanSet,
    pub minimized: SpanSet,
}

impl WindowTimeline {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Default)]
struct WindowBuild {
    start: Millis,
    end: Option<(Millis, Closure)>,
    inherited: bool,
    tabs: Vec<TabBuild>,
    initial_slot: Option<usize>,
    focus: Vec<(Millis, FocusTransition)>,
    states: Vec<(Millis, WindowState)>,
}

#[derive(Debug)]
struct TabBuild {
    tab_id: Option<u32>,
    initial: bool,
    start: Millis,
    end: Option<(Millis, Closure)>,
}

#[derive(Debug, Default)]
struct WindowTracker {
    order: Vec<u64>,
    windows: HashMap<u64, WindowBuild>,
    anomalies: Vec<Anomaly>,
}

impl WindowTracker {
    fn ensure_window(&mut self, w: u64, frame_start: Millis, t: Millis) -> Option<&mut WindowBuild> {
        if !self.windows.contains_key(&w) {
            self.anomalies.push(Anomaly::InheritedWindow { window_id: w, time: t });
            self.order.push(w);
            self.windows.insert(w, WindowBuild { start: frame_start, inherited: true, ..Default::default() });
        }
        let win = self.windows.get_mut(&w).expect("present");
        if win.end.is_some() {
            return None;
        }
        Some(win)
    }

    fn ensure_tab(&mut self, w: u64, tab: u32, frame_start: Millis, t: Millis, event_id: u16) -> Option<usize> {
        let Some(win) = self.ensure_window(w, frame_start, t) else {
            self.anomalies.push(Anomaly::EventAfterWindowClose { window_id: w, time: t, event_id });
            return None;
        };
        if let Some(i) = win.tabs.iter().position(|tb| tb.tab_id == Some(tab)) {
            return Some(i);
        }
        if let Some(slot) = win.initial_slot.take() {
            win.tabs[slot].tab_id = Some(tab);
            return Some(slot);
        }
        let inherited = win.inherited;
        let start = win.start;
        win.tabs.push(TabBuild { tab_id: Some(tab), initial: false, start, end: None });
        let idx = win.tabs.len() - 1;
        if !inherited {
            self.anomalies.push(Anomaly::UnknownTab { window_id: w, tab_id: tab, time: t });
        }
        Some(idx)
    }

    fn feed(&mut self, e: &EventRecord, frame_start: Millis) {
        let c = *e.core();
        let (t, w, tab) = (c.time, c.window_id, c.tab_id);
        match e {
            EventRecord::Window(we) => match we.event_id {
                WindowEventId::Open => {
                    if self.windows.contains_key(&w) {
                        self.anomalies.push(Anomaly::DuplicateWindowOpen { window_id: w, time: t });
                        return;
                    }
                    self.order.push(w);
                    self.windows.insert(
                        w,
                        WindowBuild {
                            start: t,
                            tabs: vec![TabBuild { tab_id: None, initial: true, start: t, end: None }],
                            initial_slot: Some(0),
                            ..Default::default()
                        },
                    );
                }
                WindowEventId::Close => {
                    let Some(win) = self.ensure_window(w, frame_start, t) else { return };
                    win.end = Some((t, Closure::Recorded));
                    for tb in win.tabs.iter_mut().filter(|tb| tb.end.is_none()) {
                        tb.end = Some((t, Closure::Implied));
                    }
                }
                WindowEventId::TabOpen => {
                    let Some(win) = self.ensure_window(w, frame_start, t) else {
                        self.anomalies.push(Anomaly::EventAfterWindowClose { window_id: w, time: t, event_id: 110 });
                        return;
                    };
                    if win.tabs.iter().any(|tb| tb.tab_id == Some(tab)) {
                        self.anomalies.push(Anomaly::DuplicateTabOpen { window_id: w, tab_id: tab, time: t });
                        return;
                    }
                    win.tabs.push(TabBuild { tab_id: Some(tab), initial: false, start: t, end: None });
                }
                WindowEventId::TabClose => {
                    if let Some(i) = self.ensure_tab(w, tab, frame_start, t, 111) {
                        let tb = &mut self.windows.get_mut(&w).expect("present").tabs[i];
                        if tb.end.is_none() {
                            tb.end = Some((t, Closure::Recorded));
                        }
                    }
                }
                WindowEventId::FocusLost | WindowEventId::FocusGained => {
                    let tr = if we.event_id == WindowEventId::FocusLost {
                        FocusTransition::Lost
                    } else {
                        FocusTransition::Gained
                    };
                    // a transition tied with the close would last 0 ms
                    let closed_now = self.windows.get(&w).and_then(|win| win.end).is_some_and(|(end, _)| end == t);
                    match self.ensure_window(w, frame_start, t) {
                        Some(win) => win.focus.push((t, tr)),
                        None if closed_now => {}
                        None => self.anomalies.push(Anomaly::EventAfterWindowClose {
                            window_id: w,
                            time: t,
                            event_id: we.event_id.code(),
                        }),
                    }
                }
                WindowEventId::StateChange => {
                    if let (Some(win), Some(state)) = (self.ensure_window(w, frame_start, t), we.window_state) {
                        win.states.push((t, state));
                    }
                }
            },
            EventRecord::Browsing(b) => {
                if tab != 0 {
                    self.ensure_tab(w, tab, frame_start, t, b.event_id.code());
                }
            }
            EventRecord::Session(_) => {}
        }
    }

    fn finish(self, frame: Span, debounce_ms: Millis) -> (Vec<WindowTimeline>, Vec<TabTimeline>, Vec<Anomaly>) {
        let mut anomalies = self.anomalies;
        let mut windows = Vec::new();
        let mut tabs = Vec::new();
        for w in self.order {
            let win = &self.windows[&w];
            let (end, closed_by) = win.end.unwrap_or((frame.end, Closure::SessionEnd));
            let start = win.start.clamp(frame.start, frame.end);
            let end = end.clamp(start, frame.end);
            let open = Span::new(start, end);
            for tb in &win.tabs {
                let (te, how) = tb.end.unwrap_or((end, Closure::SessionEnd));
                let ts = tb.start.clamp(start, end);
                tabs.push(TabTimeline {
                    window_id: w,
                    tab_id: tb.tab_id,
                    initial: tb.initial,
                    start: ts,
                    end: te.clamp(ts, end),
                    closed_by: how,
                });
            }
            let (background, mut a) = debounce_background(w, &win.focus, open, debounce_ms);
            anomalies.append(&mut a);
            let focused = SpanSet::from_span(open).subtract(&to_set(&background));
            let mut minimized = SpanSet::new();
            let mut min_since: Option<Millis> = None;
            for &(t, st) in &win.states {
                match (st == WindowState::Minimized, min_since) {
                    (true, None) => min_since = Some(t),
                    (false, Some(s)) => {
                        minimized.insert(Span::new(s, t.max(s)));
                        min_since = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = min_since {
                minimized.insert(Span::new(s, end.max(s)));
            }
            windows.push(WindowTimeline {
                window_id: w,
                start,
                end,
                closed_by,
                inherited: win.inherited,
                focus_transitions: win.focus.clone(),
                background,
                focused,
                minimized: minimized.clip(open),
            });
        }
        (windows, tabs, anomalies)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcurrencyProfile {
    pub windows: StepFunction,
    pub tabs: StepFunction,
    /// Instants covered by at least one session.
    pub covered: SpanSet,
}

impl ConcurrencyProfile {
    /// Combines profiles of several (possibly overlapping) sessions.
    pub fn merge<'a>(profiles: impl IntoIterator<Item = &'a ConcurrencyProfile>) -> ConcurrencyProfile {
        let mut out = ConcurrencyProfile::default();
        for p in profiles {
            out.windows = out.windows.sum(&p.windows);
            out.tabs = out.tabs.sum(&p.tabs);
            out.covered = out.covered.union(&p.covered);
        }
        out
    }
}

/// Open-window and open-tab counts over time from window and tab events.
/// Windows and tabs still open at `frame.end` close there; a window opening
/// counts one initial tab.
pub fn concurrency_profile(events: &[EventRecord], frame: Span) -> (ConcurrencyProfile, Vec<Anomaly>) {
    let mut tracker = WindowTracker::default();
    for e in sorted(events).iter() {
        tracker.feed(e, frame.start);
    }
    let (windows, tabs, anomalies) = tracker.finish(frame, DEFAULT_DEBOUNCE_MS);
    let profile = ConcurrencyProfile {
        windows: StepFunction::from_spans(&windows.iter().map(WindowTimeline::span).collect::<Vec<_>>()),
        tabs: StepFunction::from_spans(&tabs.iter().map(TabTimeline::span).collect::<Vec<_>>()),
        covered: SpanSet::from_span(frame),
    };
    (profile, anomalies)
}

// --------------------------------------------------------------- timeline

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadTimeline {
    pub load_id: u64,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Millis,
    pub closed_by: Closure,
    pub cause: Option<u8>,
    pub url: Option<UrlDigest>,
}

impl LoadTimeline {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleTimeline {
    pub focus_id: u64,
    pub load_id: Option<u64>,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Millis,
    pub closed_by: Closure,
    pub cause: Option<u8>,
}

impl VisibleTimeline {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTimeline {
    pub user_id: u64,
    pub session_id: u64,
    pub session_start: Millis,
    pub session_end: Millis,
    pub end_source: EndSource,
    pub loads: Vec<LoadTimeline>,
    pub visible: Vec<VisibleTimeline>,
    pub windows: Vec<WindowTimeline>,
    pub tabs: Vec<TabTimeline>,
    pub inactive: Vec<Interval>,
    pub active: Vec<Interval>,
    pub implicit_inactive: Vec<Interval>,
    pub private_browsing: Vec<Interval>,
    pub logging_off: Vec<Interval>,
    pub profile: ConcurrencyProfile,
    /// Visibility gains caused by the user selecting a tab (420, cause 11).
    pub tab_switches: u32,
    /// Window focus gains (151).
    pub window_focus_gains: u32,
    pub anomalies: Vec<Anomaly>,
}

impl SessionTimeline {
    pub fn frame(&self) -> Span {
        Span::new(self.session_start, self.session_end)
    }

    pub fn duration(&self) -> Millis {
        self.session_end - self.session_start
    }

    pub fn is_excluded(&self) -> bool {
        self.end_source == EndSource::Excluded
    }

    pub fn window(&self, window_id: u64) -> Option<&WindowTimeline> {
        self.windows.iter().find(|w| w.window_id == window_id)
    }

    pub fn load(&self, load_id: u64) -> Option<&LoadTimeline> {
        self.loads.iter().find(|l| l.load_id == load_id)
    }

    pub fn inactive_set(&self) -> SpanSet {
        to_set(&self.inactive)
    }
}

fn paired_span_intervals(
    events: &[EventRecord],
    on: SessionEventId,
    off: SessionEventId,
    frame: Span,
    kind: IntervalKind,
) -> Vec<Interval> {
    let mut set = SpanSet::new();
    let mut since = None;
    for e in events {
        if let EventRecord::Session(s) = e {
            if s.event_id == on && since.is_none() {
                since = Some(s.core.time);
            } else if s.event_id == off {
                if let Some(a) = since.take() {
                    set.insert(Span::new(a, s.core.time.max(a)));
                }
            }
        }
    }
    if let Some(a) = since {
        set.insert(Span::new(a, frame.end.max(a)));
    }
    from_set(&set.clip(frame), kind)
}

/// Reconstructs one session from its events (any order).
pub fn reconstruct(events: &[EventRecord], cfg: &ReconstructionConfig) -> Result<SessionTimeline, ReconstructError> {
    let first = events.first().ok_or(ReconstructError::Empty)?;
    let (user_id, session_id) = (first.core().user_id, first.core().session_id);
    if let Some(other) = events.iter().find(|e| e.core().session_id != session_id) {
        return Err(ReconstructError::MixedSessions(session_id, other.core().session_id));
    }
    let all = sorted(events);
    let (start, end, end_source) = impute_session_end(&all, cfg.imputation)?;
    let frame = Span::new(start, end);
    let mut anomalies = Vec::new();

    let mut seen_end = false;
    let mut in_frame: Vec<EventRecord> = Vec::with_capacity(all.len());
    for e in &all {
        let is_end = matches!(e, EventRecord::Session(s) if s.event_id == SessionEventId::End);
        if is_end {
            if seen_end {
                anomalies.push(Anomaly::DuplicateSessionEnd { time: e.time() });
                continue;
            }
            seen_end = true;
        }
        if e.time() < start || e.time() > end {
            anomalies.push(Anomaly::EventOutsideSession { time: e.time(), event_id: e.event_code() });
            continue;
        }
        in_frame.push(e.clone());
    }

    let mut pairing = pair_intervals(&in_frame);
    pairing.close_open(end);
    anomalies.append(&mut pairing.anomalies);

    let mut tracker = WindowTracker::default();
    for e in &in_frame {
        tracker.feed(e, start);
    }
    let (windows, tabs, mut a) = tracker.finish(frame, cfg.debounce_ms);
    anomalies.append(&mut a);

    let loads: Vec<LoadTimeline> = pairing
        .loads
        .into_iter()
        .map(|l| LoadTimeline {
            load_id: l.load_id,
            window_id: l.window_id,
            tab_id: l.tab_id,
            start: l.start,
            end: l.end.expect("closed"),
            closed_by: l.closed_by.expect("closed"),
            cause: l.cause,
            url: l.url,
        })
        .collect();
    let load_spans: HashMap<u64, Span> = loads.iter().map(|l| (l.load_id, l.span())).collect();
    let visible: Vec<VisibleTimeline> = pairing
        .focuses
        .into_iter()
        .map(|f| {
            let mut span = Span::new(f.start, f.end.expect("closed"));
            if let Some(ls) = f.load_id.and_then(|id| load_spans.get(&id)) {
                let s = span.start.clamp(ls.start, ls.end);
                span = Span::new(s, span.end.clamp(s, ls.end));
            }
            VisibleTimeline {
                focus_id: f.focus_id,
                load_id: f.load_id,
                window_id: f.window_id,
                tab_id: f.tab_id,
                start: span.start,
                end: span.end,
                closed_by: f.closed_by.expect("closed"),
                cause: f.cause,
            }
        })
        .collect();

    let activity: Vec<(Millis, ActivityTransition)> = in_frame
        .iter()
        .filter_map(|e| match e {
            EventRecord::Session(s) if s.event_id == SessionEventId::Inactive => {
                Some((s.core.time, ActivityTransition::Inactive))
            }
            EventRecord::Session(s) if s.event_id == SessionEventId::Active => Some((s.core.time, ActivityTransition::Active)),
            _ => None,
        })
        .collect();
    let (inactive, active, mut a) = activity_intervals(&activity, frame, cfg.inactivity_backdate_ms);
    anomalies.append(&mut a);

    let private_browsing = paired_span_intervals(
        &in_frame,
        SessionEventId::PrivateOn,
        SessionEventId::PrivateOff,
        frame,
        IntervalKind::PrivateBrowsing,
    );
    let logging_off = paired_span_intervals(
        &in_frame,
        SessionEventId::LoggingOff,
        SessionEventId::LoggingOn,
        frame,
        IntervalKind::LoggingOff,
    );
    let suspended = to_set(&private_browsing).union(&to_set(&logging_off));
    let times: Vec<Millis> = in_frame.iter().map(EventRecord::time).collect();
    let implicit_inactive: Vec<Interval> = implicit_idle(&times, frame, cfg.implicit_gap_ms)
        .into_iter()
        .flat_map(|iv| {
            if iv.is_empty() {
                vec![iv]
            } else {
                from_set(&SpanSet::from_span(iv.span()).subtract(&suspended), IntervalKind::ImplicitInactive)
            }
        })
        .collect();

    let profile = ConcurrencyProfile {
        windows: StepFunction::from_spans(&windows.iter().map(WindowTimeline::span).collect::<Vec<_>>()),
        tabs: StepFunction::from_spans(&tabs.iter().map(TabTimeline::span).collect::<Vec<_>>()),
        covered: SpanSet::from_span(frame),
    };
    let tab_switches = in_frame
        .iter()
        .filter(|e| {
            matches!(e, EventRecord::Browsing(b)
                if b.event_id == BrowsingEventId::PageVisible && b.cause == Some(cause::TAB_SELECTED))
        })
        .count() as u32;
    let window_focus_gains = in_frame
        .iter()
        .filter(|e| matches!(e, EventRecord::Window(w) if w.event_id == WindowEventId::FocusGained))
        .count() as u32;

    Ok(SessionTimeline {
        user_id,
        session_id,
        session_start: start,
        session_end: end,
        end_source,
        loads,
        visible,
        windows,
        tabs,
        inactive,
        active,
        implicit_inactive,
        private_browsing,
        logging_off,
        profile,
        tab_switches,
        window_focus_gains,
        anomalies,
    })
}

/// A session that could not be reconstructed, keyed by (user, session).
pub type Rejected = ((u64, u64), ReconstructError);

/// Reconstructs every session in `events`, grouped by (user, session).
/// Sessions that cannot be reconstructed are returned separately.
pub fn reconstruct_all(events: &[EventRecord], cfg: &ReconstructionConfig) -> (Vec<SessionTimeline>, Vec<Rejected>) {
    let mut groups: std::collections::BTreeMap<(u64, u64), Vec<EventRecord>> = Default::default();
    for e in events {
        groups.entry((e.core().user_id, e.core().session_id)).or_default().push(e.clone());
    }
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (key, evs) in groups {
        match reconstruct(&evs, cfg) {
            Ok(t) => ok.push(t),
            Err(e) => failed.push((key, e)),
        }
    }
    (ok, failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{BrowsingEvent, CoreAttributes, SessionEvent, WindowEvent};
    use crate::url_privacy::hash_url;

    const W: u64 = 22;

    fn core(time: Millis, tab: u32) -> CoreAttributes {
        CoreAttributes { time, tz_offset: 0, user_id: 1, window_id: W, session_id: 9, tab_id: tab }
    }

    fn sess(time: Millis, id: SessionEventId) -> EventRecord {
        EventRecord::Session(SessionEvent { core: core(time, 0), event_id: id })
    }

    fn win(time: Millis, id: WindowEventId, tab: u32) -> EventRecord {
        EventRecord::Window(WindowEvent { core: core(time, tab), event_id: id, window_state: None })
    }

    fn win_in(window: u64, time: Millis, id: WindowEventId, tab: u32) -> EventRecord {
        let mut e = win(time, id, tab);
        e.core_mut().window_id = window;
        e
    }

    fn state(time: Millis, st: WindowState) -> EventRecord {
        EventRecord::Window(WindowEvent { core: core(time, 0), event_id: WindowEventId::StateChange, window_state: Some(st) })
    }

    fn load(time: Millis, tab: u32, id: u64) -> EventRecord {
        EventRecord::Browsing(BrowsingEvent {
            core: core(time, tab),
            event_id: BrowsingEventId::PageLoaded,
            load_id: Some(id),
            focus_id: None,
            cause: Some(1),
            url: Some(hash_url("http://example.org/").unwrap()),
        })
    }

    fn unload(time: Millis, tab: u32, id: u64) -> EventRecord {
        EventRecord::Browsing(BrowsingEvent {
            core: core(time, tab),
            event_id: BrowsingEventId::PageUnloaded,
            load_id: Some(id),
            focus_id: None,
            cause: None,
            url: None,
        })
    }

    fn show(time: Millis, tab: u32, id: u64, c: u8) -> EventRecord {
        EventRecord::Browsing(BrowsingEvent {
            core: core(time, tab),
            event_id: BrowsingEventId::PageVisible,
            load_id: None,
            focus_id: Some(id),
            cause: Some(c),
            url: None,
        })
    }

    fn hide(time: Millis, tab: u32, id: u64) -> EventRecord {
        EventRecord::Browsing(BrowsingEvent {
            core: core(time, tab),
            event_id: BrowsingEventId::PageHidden,
            load_id: None,
            focus_id: Some(id),
            cause: None,
            url: None,
        })
    }

    #[test]
    fn load_pairs_with_unload() {
        let p = pair_intervals(&[load(10, 1, 5), unload(70, 1, 5)]);
        assert_eq!(p.loads.len(), 1);
        assert_eq!((p.loads[0].start, p.loads[0].end), (10, Some(70)));
        assert!(p.anomalies.is_empty());
    }

    #[test]
    fn two_visible_intervals() {
        let p = pair_intervals(&[
            load(0, 1, 5),
            show(10, 1, 1, 10),
            hide(25, 1, 1),
            show(40, 1, 2, 11),
            hide(55, 1, 2),
        ]);
        let lens: Vec<Millis> = p.focuses.iter().map(|f| f.end.unwrap() - f.start).collect();
        assert_eq!(lens, vec![15, 15]);
        assert!(p.focuses.iter().all(|f| f.load_id == Some(5)));
    }

    #[test]
    fn missing_unload_closes_at_session_end() {
        let events = [sess(0, SessionEventId::Start), win(0, WindowEventId::Open, 0), load(10, 1, 5), sess(100, SessionEventId::End)];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        assert_eq!((t.loads[0].start, t.loads[0].end), (10, 100));
        assert_eq!(t.loads[0].closed_by, Closure::SessionEnd);
        let p = pair_intervals(&events);
        assert_eq!(p.loads[0].end, None);
    }

    #[test]
    fn orphans_and_duplicates_are_anomalies() {
        let p = pair_intervals(&[unload(5, 1, 9), load(6, 1, 1), load(7, 2, 1), hide(8, 1, 4)]);
        assert!(p.anomalies.contains(&Anomaly::OrphanUnload { load_id: 9, time: 5 }));
        assert!(p.anomalies.contains(&Anomaly::DuplicateLoadId { load_id: 1, time: 7 }));
        assert!(p.anomalies.contains(&Anomaly::OrphanHide { focus_id: 4, time: 8 }));
    }

    #[test]
    fn one_visible_page_per_window() {
        let p = pair_intervals(&[load(0, 1, 1), load(0, 2, 2), show(0, 1, 10, 10), show(50, 2, 11, 11)]);
        assert_eq!(p.focuses[0].end, Some(50));
        assert_eq!(p.focuses[0].closed_by, Some(Closure::Implied));
        assert_eq!(p.focuses[1].load_id, Some(2));
    }

    #[test]
    fn same_timestamp_navigation_attributes_new_page() {
        // hide/unload of the old page and load/show of the new page share a timestamp,
        // arriving in an adversarial order
        let events = [load(0, 1, 1), show(0, 1, 10, 10), show(50, 1, 11, 10), load(50, 1, 2), unload(50, 1, 1), hide(50, 1, 10)];
        let p = pair_intervals(&events);
        assert_eq!(p.loads[0].end, Some(50));
        assert_eq!(p.focuses[1].load_id, Some(2));
        assert_eq!(p.focuses[0].end, Some(50));
        assert!(p.anomalies.is_empty(), "{:?}", p.anomalies);
    }

    fn focus(ts: &[(Millis, FocusTransition)]) -> Vec<Interval> {
        debounce_background(W, ts, Span::new(0, 1_000_000), DEFAULT_DEBOUNCE_MS).0
    }

    #[test]
    fn short_focus_gap_is_erased() {
        use FocusTransition::*;
        assert!(focus(&[(1000, Lost), (5000, Gained)]).is_empty());
        assert_eq!(
            focus(&[(1000, Lost), (61_000, Gained)]),
            vec![Interval::new(1000, 61_000, IntervalKind::WindowBackground)]
        );
    }

    #[test]
    fn focus_gap_threshold_is_inclusive() {
        use FocusTransition::*;
        assert!(focus(&[(0, Gained), (1000, Lost), (10_999, Gained)]).is_empty());
        assert_eq!(focus(&[(0, Gained), (1000, Lost), (11_000, Gained)]).len(), 1);
    }

    #[test]
    fn zero_threshold_reproduces_raw_gaps() {
        use FocusTransition::*;
        let ts = [(0, Gained), (100, Lost), (104, Gained), (300, Lost), (900, Gained)];
        let (bg, _) = debounce_background(W, &ts, Span::new(0, 1000), 0);
        let spans: Vec<(Millis, Millis)> = bg.iter().map(|i| (i.start, i.end)).collect();
        assert_eq!(spans, vec![(100, 104), (300, 900)]);
    }

    #[test]
    fn non_alternating_focus_keeps_first() {
        use FocusTransition::*;
        let (bg, an) = debounce_background(W, &[(0, Gained), (100, Lost), (50_000, Lost), (90_000, Gained)], Span::new(0, 100_000), 10_000);
        assert_eq!(bg, vec![Interval::new(100, 90_000, IntervalKind::WindowBackground)]);
        assert_eq!(an, vec![Anomaly::FocusNotAlternating { window_id: W, time: 50_000, event_id: 150 }]);
    }

    #[test]
    fn never_focused_window_is_background() {
        let (bg, _) = debounce_background(W, &[], Span::new(0, 50_000), 10_000);
        assert_eq!(bg, vec![Interval::new(0, 50_000, IntervalKind::WindowBackground)]);
    }

    #[test]
    fn inactivity_is_backdated() {
        use ActivityTransition::*;
        let frame = Span::new(0, 1_000_000);
        let (inactive, active, _) = activity_intervals(&[(120_000, Inactive), (300_000, Active)], frame, 60_000);
        assert_eq!(inactive, vec![Interval::new(60_000, 300_000, IntervalKind::Inactive)]);
        assert_eq!(active.iter().map(Interval::len).sum::<Millis>(), 1_000_000 - 240_000);
    }

    #[test]
    fn no_activity_events_means_active() {
        let frame = Span::new(0, 5000);
        let (inactive, active, _) = activity_intervals(&[], frame, 60_000);
        assert!(inactive.is_empty());
        assert_eq!(active, vec![Interval::new(0, 5000, IntervalKind::Active)]);
    }

    #[test]
    fn unmatched_inactive_runs_to_session_end() {
        let events = [sess(0, SessionEventId::Start), sess(200_000, SessionEventId::Inactive), sess(500_000, SessionEventId::End)];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        assert_eq!(t.inactive, vec![Interval::new(140_000, 500_000, IntervalKind::Inactive)]);
    }

    #[test]
    fn implicit_idle_gaps() {
        let iv = implicit_idle(&[0, 300_000], Span::new(0, 300_000), 60_000);
        assert_eq!(iv, vec![Interval::new(60_000, 300_000, IntervalKind::ImplicitInactive)]);
        assert_eq!(iv[0].len(), 240_000);
        let every_30s: Vec<Millis> = (0..20).map(|i| i * 30_000).collect();
        assert!(implicit_idle(&every_30s, Span::new(0, 570_000), 60_000).is_empty());
        assert!(implicit_idle(&[42], Span::new(42, 42), 60_000).is_empty());
        let exact = implicit_idle(&[0, 60_000], Span::new(0, 60_000), 60_000);
        assert_eq!(exact, vec![Interval::new(60_000, 60_000, IntervalKind::ImplicitInactive)]);
    }

    #[test]
    fn imputation_strategies() {
        let recorded = [sess(0, SessionEventId::Start), load(480, 1, 1), sess(500, SessionEventId::End)];
        assert_eq!(impute_session_end(&recorded, Imputation::Filter).unwrap(), (0, 500, EndSource::Recorded));
        let cut = [sess(0, SessionEventId::Start), win(0, WindowEventId::Open, 0), load(480, 1, 1)];
        assert_eq!(
            impute_session_end(&cut, Imputation::Estimate { offset_ms: 0 }).unwrap(),
            (0, 480, EndSource::Imputed)
        );
        assert_eq!(
            impute_session_end(&cut, Imputation::Estimate { offset_ms: 30 }).unwrap(),
            (0, 510, EndSource::Imputed)
        );
        assert_eq!(impute_session_end(&cut, Imputation::Filter).unwrap().2, EndSource::Excluded);
        assert_eq!(
            impute_session_end(&cut[1..], Imputation::Filter),
            Err(ReconstructError::NoSessionStart { session_id: 9 })
        );
    }

    #[test]
    fn window_counts() {
        let events = [
            win_in(1, 0, WindowEventId::Open, 0),
            win_in(2, 10, WindowEventId::Open, 0),
            win_in(1, 20, WindowEventId::Close, 0),
        ];
        let (p, _) = concurrency_profile(&events, Span::new(0, 30));
        assert_eq!(p.windows.values(), vec![1, 2, 1, 0]);
    }

    #[test]
    fn initial_tab_counts() {
        let events = [
            win(0, WindowEventId::Open, 0),
            win(10, WindowEventId::TabOpen, 2),
            win(20, WindowEventId::TabOpen, 3),
            win(30, WindowEventId::TabOpen, 4),
            win(40, WindowEventId::TabClose, 3),
        ];
        let (p, an) = concurrency_profile(&events, Span::new(0, 100));
        assert_eq!(p.tabs.max(), 4);
        assert_eq!(p.tabs.values(), vec![1, 2, 3, 4, 3, 0]);
        assert!(an.is_empty());
    }

    #[test]
    fn empty_profile() {
        let (p, _) = concurrency_profile(&[], Span::new(0, 0));
        assert!(p.windows.points.is_empty() && p.tabs.points.is_empty());
    }

    #[test]
    fn initial_tab_binds_to_first_unopened_tab_id_and_closes() {
        let events = [
            sess(0, SessionEventId::Start),
            win(0, WindowEventId::Open, 0),
            load(0, 7, 1),
            win(5, WindowEventId::TabOpen, 8),
            unload(50, 7, 1),
            win(50, WindowEventId::TabClose, 7),
            sess(100, SessionEventId::End),
        ];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        let initial = t.tabs.iter().find(|tb| tb.initial).unwrap();
        assert_eq!((initial.tab_id, initial.start, initial.end), (Some(7), 0, 50));
        assert!(t.anomalies.is_empty(), "{:?}", t.anomalies);
        assert_eq!(t.profile.tabs.values(), vec![1, 2, 1, 0]);
    }

    #[test]
    fn focus_tied_with_window_close_is_not_an_anomaly() {
        let events = [
            sess(0, SessionEventId::Start),
            win(0, WindowEventId::Open, 0),
            win(0, WindowEventId::FocusGained, 0),
            win(40, WindowEventId::FocusLost, 0),
            win(90, WindowEventId::FocusGained, 0),
            win(90, WindowEventId::Close, 0),
            sess(90, SessionEventId::End),
        ];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        assert!(t.anomalies.is_empty(), "{:?}", t.anomalies);
        let mut late = events.to_vec();
        late[4] = win(91, WindowEventId::FocusGained, 0);
        late[6] = sess(100, SessionEventId::End);
        let t = reconstruct(&late, &ReconstructionConfig::default()).unwrap();
        assert_eq!(t.anomalies, vec![Anomaly::EventAfterWindowClose { window_id: 22, time: 91, event_id: 151 }]);
    }

    #[test]
    fn minimized_window_and_background() {
        let events = [
            sess(0, SessionEventId::Start),
            win(0, WindowEventId::Open, 0),
            win(0, WindowEventId::FocusGained, 0),
            state(1000, WindowState::Minimized),
            win(1000, WindowEventId::FocusLost, 0),
            state(4000, WindowState::Normal),
            win(4000, WindowEventId::FocusGained, 0),
            sess(100_000, SessionEventId::End),
        ];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        let w = &t.windows[0];
        assert!(w.background.is_empty());
        assert_eq!(w.minimized.spans(), &[Span::new(1000, 4000)]);
        assert_eq!(w.focused.measure(), 100_000);
        assert_eq!(t.window_focus_gains, 2);
    }

    #[test]
    fn events_keep_nesting_and_bounds() {
        let events = [
            sess(0, SessionEventId::Start),
            win(0, WindowEventId::Open, 0),
            load(0, 1, 1),
            show(0, 1, 1, 10),
            sess(50, SessionEventId::End),
            load(70, 1, 2),
        ];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        assert_eq!(t.loads.len(), 1);
        assert_eq!(t.visible[0].end, 50);
        assert!(t.anomalies.contains(&Anomaly::EventOutsideSession { time: 70, event_id: 400 }));
    }

    #[test]
    fn private_browsing_is_excluded_from_implicit_idle() {
        let events = [
            sess(0, SessionEventId::Start),
            sess(10_000, SessionEventId::PrivateOn),
            sess(400_000, SessionEventId::PrivateOff),
            sess(400_000, SessionEventId::End),
        ];
        let t = reconstruct(&events, &ReconstructionConfig::default()).unwrap();
        assert_eq!(t.private_browsing, vec![Interval::new(10_000, 400_000, IntervalKind::PrivateBrowsing)]);
        let idle: Millis = t.implicit_inactive.iter().map(Interval::len).sum();
        assert_eq!(idle, 0);
    }

    #[test]
    fn mixed_sessions_are_rejected() {
        let mut other = sess(1, SessionEventId::Start);
        other.core_mut().session_id = 10;
        assert_eq!(
            reconstruct(&[sess(0, SessionEventId::Start), other], &ReconstructionConfig::default()),
            Err(ReconstructError::MixedSessions(9, 10))
        );
    }
}
