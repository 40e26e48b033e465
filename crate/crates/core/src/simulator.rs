//! Seeded synthetic users driving a model browser.
//!
//! The model keeps the exact state of every window, tab, page and focus
//! owner. Each action changes that state, emits the events a correct add-on
//! would send, and records the resulting intervals in a [`GroundTruth`].
//! Plaintext URLs stay in the ground truth; the event stream only carries
//! their digests.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{
    BrowsingEvent, BrowsingEventId, CoreAttributes, EventRecord, Millis, SessionEvent, SessionEventId, WindowEvent,
    WindowEventId, WindowState,
};
use crate::interval::Span;
use crate::url_privacy::{decompose, digest, UrlDigest, UrlLevels};

/// Activity is polled on this grid, so the active event lags the user's return.
pub const ACTIVITY_POLL_MS: Millis = 5_000;
/// The add-on reports inactivity after this long without input.
pub const INACTIVITY_DELAY_MS: Millis = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("scripted session {session}: action {index} at {at_ms} ms: {reason}")]
    Script { session: usize, index: usize, at_ms: Millis, reason: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeMs {
    pub min: Millis,
    pub max: Millis,
}

impl RangeMs {
    pub const fn new(min: Millis, max: Millis) -> RangeMs {
        RangeMs { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> Millis {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionWeights {
    pub navigate: f64,
    pub open_tab: f64,
    pub open_background_tab: f64,
    pub switch_tab: f64,
    pub close_tab: f64,
    pub open_window: f64,
    pub close_window: f64,
    pub switch_window: f64,
    pub away: f64,
    pub idle: f64,
    pub minimize: f64,
}

impl Default for ActionWeights {
    fn default() -> Self {
        ActionWeights {
            navigate: 10.0,
            open_tab: 3.0,
            open_background_tab: 2.0,
            switch_tab: 5.0,
            close_tab: 2.5,
            open_window: 0.4,
            close_window: 0.3,
            switch_window: 1.0,
            away: 1.5,
            idle: 1.0,
            minimize: 0.4,
        }
    }
}

impl ActionWeights {
    fn as_array(&self) -> [f64; 11] {
        [
            self.navigate,
            self.open_tab,
            self.open_background_tab,
            self.switch_tab,
            self.close_tab,
            self.open_window,
            self.close_window,
            self.switch_window,
            self.away,
            self.idle,
            self.minimize,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    pub drop_session_end_prob: f64,
    pub drop_random_event_prob: f64,
}

/// One user action. Durations belong to actions that keep the user busy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    Navigate {
        #[serde(default)]
        cause: Option<u8>,
        #[serde(default)]
        url: Option<String>,
    },
    OpenTab {
        #[serde(default)]
        background: bool,
        #[serde(default)]
        url: Option<String>,
    },
    /// Selects the tab at `index` in the focused window (default: the next one).
    SwitchTab {
        #[serde(default)]
        index: Option<usize>,
    },
    CloseTab,
    OpenWindow {
        #[serde(default)]
        url: Option<String>,
    },
    CloseWindow,
    SwitchWindow,
    /// Focus moves to another application and comes back.
    Away { duration_ms: Millis },
    /// The user stays but stops interacting.
    Idle { duration_ms: Millis },
    Minimize { duration_ms: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedAction {
    /// Offset from the session start.
    pub at_ms: Millis,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSession {
    #[serde(default = "default_user")]
    pub user_id: u64,
    /// Absolute start; defaults to following the user's previous session.
    #[serde(default)]
    pub start_ms: Option<Millis>,
    /// Offset of the session end from its start.
    pub end_ms: Millis,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
}

fn default_user() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub users: u32,
    pub sessions_per_user: u32,
    /// First session start (milliseconds since the epoch).
    pub start_ms: Millis,
    pub tz_offset: i16,
    pub session_duration_ms: RangeMs,
    pub session_gap_ms: RangeMs,
    /// Mean of the exponential pause between actions.
    pub dwell_mean_ms: Millis,
    pub actions: ActionWeights,
    pub away_ms: RangeMs,
    pub idle_ms: RangeMs,
    pub minimize_ms: RangeMs,
    pub max_windows: u32,
    pub max_tabs_per_window: u32,
    /// Weights of load causes 1 through 9.
    pub cause_weights: [f64; 9],
    pub urls: Vec<String>,
    pub faults: FaultConfig,
    /// When present, replaces the random sessions.
    #[serde(rename = "session")]
    pub scripted: Vec<ScriptedSession>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            users: 1,
            sessions_per_user: 1,
            start_ms: 1_338_508_800_000,
            tz_offset: -120,
            session_duration_ms: RangeMs::new(300_000, 1_200_000),
            session_gap_ms: RangeMs::new(600_000, 7_200_000),
            dwell_mean_ms: 20_000,
            actions: ActionWeights::default(),
            away_ms: RangeMs::new(2_000, 300_000),
            idle_ms: RangeMs::new(30_000, 400_000),
            minimize_ms: RangeMs::new(3_000, 200_000),
            max_windows: 3,
            max_tabs_per_window: 12,
            cause_weights: [40.0, 12.0, 6.0, 3.0, 4.0, 4.0, 1.0, 2.0, 8.0],
            urls: default_corpus(),
            faults: FaultConfig::default(),
            scripted: Vec::new(),
        }
    }
}

/// URLs spread over a few registrable domains, hosts, paths and queries.
pub fn default_corpus() -> Vec<String> {
    let mut urls = Vec::new();
    let sites = [
        ("https", "www.example.org"),
        ("https", "topic.example.org"),
        ("http", "news.example.com"),
        ("https", "shop.example.co.uk"),
        ("https", "example.net"),
        ("https", "video.example.io"),
        ("https", "docs.example.github.io"),
        ("http", "192.0.2.10"),
    ];
    for (scheme, host) in sites {
        urls.push(format!("{scheme}://{host}/"));
        for path in ["index.html", "dir/page.php", "a/b/c"] {
            urls.push(format!("{scheme}://{host}/{path}"));
            urls.push(format!("{scheme}://{host}/{path}?id=7&lang=en"));
        }
    }
    urls
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        for (name, p) in [
            ("drop_session_end_prob", self.faults.drop_session_end_prob),
            ("drop_random_event_prob", self.faults.drop_random_event_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        for (name, r) in [
            ("session_duration_ms", self.session_duration_ms),
            ("session_gap_ms", self.session_gap_ms),
            ("away_ms", self.away_ms),
            ("idle_ms", self.idle_ms),
            ("minimize_ms", self.minimize_ms),
        ] {
            if r.min <= 0 || r.min > r.max {
                return bad(format!("{name} needs 0 < min <= max, got {}..{}", r.min, r.max));
            }
        }
        if self.dwell_mean_ms <= 0 {
            return bad("dwell_mean_ms must be positive".into());
        }
        if self.max_windows == 0 || self.max_tabs_per_window == 0 {
            return bad("max_windows and max_tabs_per_window must be positive".into());
        }
        let weights_ok = |w: &[f64]| w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().sum::<f64>() > 0.0;
        if !weights_ok(&self.actions.as_array()) {
            return bad("action weights must be non-negative with a positive sum".into());
        }
        if !weights_ok(&self.cause_weights) {
            return bad("cause weights must be non-negative with a positive sum".into());
        }
        if self.urls.is_empty() {
            return bad("the URL corpus is empty".into());
        }
        let scripted_urls = self.scripted.iter().flat_map(|s| {
            s.url.iter().chain(s.actions.iter().filter_map(|a| match &a.action {
                Action::Navigate { url, .. } | Action::OpenTab { url, .. } | Action::OpenWindow { url } => url.as_ref(),
                _ => None,
            }))
        });
        for u in self.urls.iter().chain(scripted_urls) {
            if let Err(e) = decompose(u) {
                return bad(e.to_string());
            }
        }
        for (i, s) in self.scripted.iter().enumerate() {
            if s.user_id == 0 {
                return bad(format!("scripted session {i} has user id 0"));
            }
            if s.end_ms <= 0 {
                return bad(format!("scripted session {i} must have a positive end_ms"));
            }
        }
        Ok(())
    }
}

// ------------------------------------------------------------ ground truth

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLoad {
    pub load_id: u64,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Millis,
    pub url: String,
    pub levels: UrlLevels,
    pub digest: UrlDigest,
    pub cause: u8,
    /// Load the page was opened from; `None` for the browser-startup root.
    pub parent: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthVisible {
    pub focus_id: u64,
    pub load_id: u64,
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Millis,
    pub cause: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthWindow {
    pub window_id: u64,
    pub start: Millis,
    pub end: Millis,
    /// Periods the window really owned the focus, however short.
    pub focused: Vec<Span>,
    pub minimized: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTab {
    pub window_id: u64,
    pub tab_id: u32,
    pub start: Millis,
    pub end: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub user_id: u64,
    pub session_id: u64,
    pub start: Millis,
    pub end: Millis,
    pub loads: Vec<TruthLoad>,
    pub visible: Vec<TruthVisible>,
    pub windows: Vec<TruthWindow>,
    pub tabs: Vec<TruthTab>,
    /// When the user stopped interacting, until the monitor noticed the return.
    pub inactive: Vec<Span>,
    pub tab_switches: u32,
    pub window_focus_gains: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sessions: Vec<SessionTruth>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simulation {
    /// All events in emission order, sessions one after another.
    pub events: Vec<EventRecord>,
    pub truth: GroundTruth,
}

impl Simulation {
    pub fn session_events(&self, user_id: u64, session_id: u64) -> Vec<EventRecord> {
        self.events
            .iter()
            .filter(|e| e.core().user_id == user_id && e.core().session_id == session_id)
            .cloned()
            .collect()
    }
}

// ------------------------------------------------------------------ model

#[derive(Debug, Default)]
struct Ids {
    window: u64,
    load: u64,
    focus: u64,
}

impl Ids {
    fn next(counter: &mut u64) -> u64 {
        *counter += 1;
        *counter
    }
}

#[derive(Debug)]
struct ModelTab {
    tab_id: u32,
    truth: usize,
    /// (load id, index in truth loads)
    page: Option<(u64, usize)>,
    /// (focus id, index in truth visible)
    shown: Option<(u64, usize)>,
}

#[derive(Debug)]
struct ModelWindow {
    window_id: u64,
    truth: usize,
    next_tab: u32,
    tabs: Vec<ModelTab>,
    selected: usize,
    focus_since: Option<Millis>,
}

struct SessionModel<'a> {
    user_id: u64,
    session_id: u64,
    tz: i16,
    ids: &'a mut Ids,
    cause_dist: &'a WeightedIndex<f64>,
    corpus: &'a [(String, UrlLevels, UrlDigest)],
    events: Vec<EventRecord>,
    truth: SessionTruth,
    windows: Vec<ModelWindow>,
    focused: Option<u64>,
    anchor_window: u64,
}

fn snap_up(t: Millis, grid: Millis) -> Millis {
    t.div_euclid(grid) * grid + if t.rem_euclid(grid) == 0 { 0 } else { grid }
}

impl<'a> SessionModel<'a> {
    fn core(&self, time: Millis, window_id: u64, tab_id: u32) -> CoreAttributes {
        CoreAttributes { time, tz_offset: self.tz, user_id: self.user_id, window_id, session_id: self.session_id, tab_id }
    }

    fn emit_window(&mut self, t: Millis, window_id: u64, tab_id: u32, id: WindowEventId, state: Option<WindowState>) {
        let core = self.core(t, window_id, tab_id);
        self.events.push(EventRecord::Window(WindowEvent { core, event_id: id, window_state: state }));
    }

    fn emit_session(&mut self, t: Millis, id: SessionEventId) {
        let core = self.core(t, self.anchor_window, 0);
        self.events.push(EventRecord::Session(SessionEvent { core, event_id: id }));
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_browsing(
        &mut self,
        t: Millis,
        w: u64,
        tab: u32,
        id: BrowsingEventId,
        load_id: Option<u64>,
        focus_id: Option<u64>,
        cause: Option<u8>,
        url: Option<UrlDigest>,
    ) {
        let core = self.core(t, w, tab);
        self.events.push(EventRecord::Browsing(BrowsingEvent { core, event_id: id, load_id, focus_id, cause, url }));
    }

    fn widx(&self, window_id: u64) -> usize {
        self.windows.iter().position(|w| w.window_id == window_id).expect("open window")
    }

    fn focused_widx(&self) -> Option<usize> {
        self.focused.map(|w| self.widx(w))
    }

    fn pick_url(&self, rng: &mut impl Rng, explicit: Option<&str>) -> (String, UrlLevels, UrlDigest) {
        match explicit {
            Some(u) => {
                let levels = decompose(u).expect("validated URL");
                let d = digest(&levels);
                (u.to_owned(), levels, d)
            }
            None => self.corpus[rng.random_range(0..self.corpus.len())].clone(),
        }
    }

    fn pick_cause(&self, rng: &mut impl Rng) -> u8 {
        self.cause_dist.sample(rng) as u8 + 1
    }

    fn load(&mut self, t: Millis, wi: usize, ti: usize, page: (String, UrlLevels, UrlDigest), cause: u8, parent: Option<u64>) {
        let load_id = Ids::next(&mut self.ids.load);
        let (w, tab) = (self.windows[wi].window_id, self.windows[wi].tabs[ti].tab_id);
        let (url, levels, d) = page;
        self.emit_browsing(t, w, tab, BrowsingEventId::PageLoaded, Some(load_id), None, Some(cause), Some(d.clone()));
        self.truth.loads.push(TruthLoad {
            load_id,
            window_id: w,
            tab_id: tab,
            start: t,
            end: t,
            url,
            levels,
            digest: d,
            cause,
            parent,
        });
        self.windows[wi].tabs[ti].page = Some((load_id, self.truth.loads.len() - 1));
    }

    fn unload(&mut self, t: Millis, wi: usize, ti: usize) {
        let (w, tab) = (self.windows[wi].window_id, self.windows[wi].tabs[ti].tab_id);
        if let Some((load_id, idx)) = self.windows[wi].tabs[ti].page.take() {
            self.emit_browsing(t, w, tab, BrowsingEventId::PageUnloaded, Some(load_id), None, None, None);
            self.truth.loads[idx].end = t;
        }
    }

    fn show(&mut self, t: Millis, wi: usize, ti: usize, cause: u8) {
        let focus_id = Ids::next(&mut self.ids.focus);
        let (w, tab) = (self.windows[wi].window_id, self.windows[wi].tabs[ti].tab_id);
        let (load_id, _) = self.windows[wi].tabs[ti].page.expect("visible tab shows a page");
        self.emit_browsing(t, w, tab, BrowsingEventId::PageVisible, None, Some(focus_id), Some(cause), None);
        if cause == crate::event::cause::TAB_SELECTED {
            self.truth.tab_switches += 1;
        }
        self.truth.visible.push(TruthVisible { focus_id, load_id, window_id: w, tab_id: tab, start: t, end: t, cause });
        self.windows[wi].tabs[ti].shown = Some((focus_id, self.truth.visible.len() - 1));
        self.windows[wi].selected = ti;
    }

    fn hide(&mut self, t: Millis, wi: usize, ti: usize) {
        let (w, tab) = (self.windows[wi].window_id, self.windows[wi].tabs[ti].tab_id);
        if let Some((focus_id, idx)) = self.windows[wi].tabs[ti].shown.take() {
            self.emit_browsing(t, w, tab, BrowsingEventId::PageHidden, None, Some(focus_id), None, None);
            self.truth.visible[idx].end = t;
        }
    }

    fn gain_focus(&mut self, t: Millis, wi: usize) {
        let w = self.windows[wi].window_id;
        self.emit_window(t, w, 0, WindowEventId::FocusGained, None);
        self.truth.window_focus_gains += 1;
        self.windows[wi].focus_since = Some(t);
        self.focused = Some(w);
        self.anchor_window = w;
    }

    fn end_focus_period(&mut self, t: Millis, wi: usize) {
        if let Some(s) = self.windows[wi].focus_since.take() {
            let truth = self.windows[wi].truth;
            if t > s {
                self.truth.windows[truth].focused.push(Span::new(s, t));
            }
        }
        if self.focused == Some(self.windows[wi].window_id) {
            self.focused = None;
        }
    }

    fn lose_focus(&mut self, t: Millis, wi: usize) {
        let w = self.windows[wi].window_id;
        self.emit_window(t, w, 0, WindowEventId::FocusLost, None);
        self.end_focus_period(t, wi);
    }

    fn new_tab(&mut self, t: Millis, wi: usize, announce: bool) -> usize {
        let win = &mut self.windows[wi];
        win.next_tab += 1;
        let tab_id = win.next_tab;
        let w = win.window_id;
        self.truth.tabs.push(TruthTab { window_id: w, tab_id, start: t, end: t });
        let truth = self.truth.tabs.len() - 1;
        self.windows[wi].tabs.push(ModelTab { tab_id, truth, page: None, shown: None });
        if announce {
            self.emit_window(t, w, tab_id, WindowEventId::TabOpen, None);
        }
        self.windows[wi].tabs.len() - 1
    }

    fn close_tab_at(&mut self, t: Millis, wi: usize, ti: usize) {
        self.hide(t, wi, ti);
        self.unload(t, wi, ti);
        let (w, tab) = (self.windows[wi].window_id, self.windows[wi].tabs[ti].tab_id);
        self.emit_window(t, w, tab, WindowEventId::TabClose, None);
        let truth = self.windows[wi].tabs[ti].truth;
        self.truth.tabs[truth].end = t;
        self.windows[wi].tabs.remove(ti);
    }

    fn open_window(&mut self, t: Millis, page: (String, UrlLevels, UrlDigest), cause: u8) {
        if let Some(fi) = self.focused_widx() {
            self.lose_focus(t, fi);
        }
        let window_id = Ids::next(&mut self.ids.window);
        if self.windows.is_empty() {
            self.anchor_window = window_id;
        }
        self.truth.windows.push(TruthWindow { window_id, start: t, end: t, focused: vec![], minimized: vec![] });
        self.windows.push(ModelWindow {
            window_id,
            truth: self.truth.windows.len() - 1,
            next_tab: 0,
            tabs: vec![],
            selected: 0,
            focus_since: None,
        });
        if self.events.is_empty() {
            self.emit_session(t, SessionEventId::Start);
        }
        self.emit_window(t, window_id, 0, WindowEventId::Open, None);
        let wi = self.windows.len() - 1;
        self.gain_focus(t, wi);
        let ti = self.new_tab(t, wi, false);
        self.load(t, wi, ti, page, cause, None);
        self.show(t, wi, ti, crate::event::cause::LOADED_IN_ACTIVE_TAB);
    }

    fn close_window_at(&mut self, t: Millis, wi: usize) {
        let sel = self.windows[wi].selected;
        self.hide(t, wi, sel);
        while !self.windows[wi].tabs.is_empty() {
            self.close_tab_at(t, wi, 0);
        }
        self.end_focus_period(t, wi);
        let w = self.windows[wi].window_id;
        self.emit_window(t, w, 0, WindowEventId::Close, None);
        let truth = self.windows[wi].truth;
        self.truth.windows[truth].end = t;
        self.windows.remove(wi);
    }


    /// Inactivity spell of `duration` from `t`. A spell of at least a minute
    /// is reported one minute in and ends once a poll sees the user again.
    /// Returns the instant the user is back as far as the monitor knows.
    fn inactivity(&mut self, t: Millis, duration: Millis) -> Millis {
        let back = t + duration;
        if duration < INACTIVITY_DELAY_MS {
            return back;
        }
        let noticed = snap_up(back, ACTIVITY_POLL_MS);
        self.emit_session(t + INACTIVITY_DELAY_MS, SessionEventId::Inactive);
        self.emit_session(noticed, SessionEventId::Active);
        self.truth.inactive.push(Span::new(t, noticed));
        noticed
    }

    fn require_focus(&self) -> Result<usize, String> {
        self.focused_widx().ok_or_else(|| "no window has the focus".to_owned())
    }

    fn feasible(&self, kind: usize, cfg: &ScenarioConfig) -> bool {
        let Some(fi) = self.focused_widx() else { return false };
        let tabs = self.windows[fi].tabs.len();
        match kind {
            1 | 2 => tabs < cfg.max_tabs_per_window as usize,
            3 | 4 => tabs >= 2,
            5 => self.windows.len() < cfg.max_windows as usize,
            6 | 7 => self.windows.len() >= 2,
            _ => true,
        }
    }

    fn random_action(&self, rng: &mut impl Rng, cfg: &ScenarioConfig, dist: &WeightedIndex<f64>) -> Action {
        let kind = dist.sample(rng);
        let kind = if self.feasible(kind, cfg) { kind } else { 0 };
        match kind {
            0 => Action::Navigate { cause: None, url: None },
            1 => Action::OpenTab { background: false, url: None },
            2 => Action::OpenTab { background: true, url: None },
            3 => {
                let fi = self.focused_widx().expect("feasible");
                let n = self.windows[fi].tabs.len();
                let sel = self.windows[fi].selected;
                let pick = (sel + rng.random_range(1..n)) % n;
                Action::SwitchTab { index: Some(pick) }
            }
            4 => Action::CloseTab,
            5 => Action::OpenWindow { url: None },
            6 => Action::CloseWindow,
            7 => Action::SwitchWindow,
            8 => Action::Away { duration_ms: cfg.away_ms.sample(rng) },
            9 => Action::Idle { duration_ms: cfg.idle_ms.sample(rng) },
            _ => Action::Minimize { duration_ms: cfg.minimize_ms.sample(rng) },
        }
    }

    /// Applies `action` at `t`; returns when the user is free again.
    fn apply(&mut self, rng: &mut impl Rng, t: Millis, action: &Action) -> Result<Millis, String> {
        match action {
            Action::Navigate { cause, url } => {
                let fi = self.require_focus()?;
                let cause = match cause {
                    Some(c) if crate::event::cause::LOAD.contains(c) => *c,
                    Some(c) => return Err(format!("load cause {c} is outside 1..=9")),
                    None => self.pick_cause(rng),
                };
                let ti = self.windows[fi].selected;
                let parent = self.windows[fi].tabs[ti].page.map(|p| p.0);
                let page = self.pick_url(rng, url.as_deref());
                self.hide(t, fi, ti);
                self.unload(t, fi, ti);
                self.load(t, fi, ti, page, cause, parent);
                self.show(t, fi, ti, crate::event::cause::LOADED_IN_ACTIVE_TAB);
                Ok(t)
            }
            Action::OpenTab { background, url } => {
                let fi = self.require_focus()?;
                let sel = self.windows[fi].selected;
                let parent = self.windows[fi].tabs[sel].page.map(|p| p.0);
                let page = self.pick_url(rng, url.as_deref());
                let cause = self.pick_cause(rng);
                let ti = self.new_tab(t, fi, true);
                if !background {
                    self.hide(t, fi, sel);
                }
                self.load(t, fi, ti, page, cause, parent);
                if !background {
                    self.show(t, fi, ti, crate::event::cause::LOADED_IN_ACTIVE_TAB);
                }
                Ok(t)
            }
            Action::SwitchTab { index } => {
                let fi = self.require_focus()?;
                let n = self.windows[fi].tabs.len();
                let sel = self.windows[fi].selected;
                let target = index.unwrap_or((sel + 1) % n.max(1));
                if n < 2 || target >= n || target == sel {
                    return Err(format!("cannot switch from tab {sel} to tab {target} of {n}"));
                }
                self.hide(t, fi, sel);
                self.show(t, fi, target, crate::event::cause::TAB_SELECTED);
                Ok(t)
            }
            Action::CloseTab => {
                let fi = self.require_focus()?;
                let n = self.windows[fi].tabs.len();
                if n < 2 {
                    return Err("cannot close the last tab of a window".into());
                }
                let sel = self.windows[fi].selected;
                self.close_tab_at(t, fi, sel);
                self.show(t, fi, sel.saturating_sub(1), crate::event::cause::TAB_SELECTED);
                Ok(t)
            }
            Action::OpenWindow { url } => {
                let page = self.pick_url(rng, url.as_deref());
                let cause = self.pick_cause(rng);
                self.open_window(t, page, cause);
                Ok(t)
            }
            Action::CloseWindow => {
                let fi = self.require_focus()?;
                if self.windows.len() < 2 {
                    return Err("cannot close the last window; end the session instead".into());
                }
                self.close_window_at(t, fi);
                let next = self.windows.len() - 1;
                self.gain_focus(t, next);
                Ok(t)
            }
            Action::SwitchWindow => {
                let fi = self.require_focus()?;
                if self.windows.len() < 2 {
                    return Err("only one window is open".into());
                }
                let target = (fi + 1) % self.windows.len();
                self.lose_focus(t, fi);
                self.gain_focus(t, target);
                Ok(t)
            }
            Action::Away { duration_ms } | Action::Minimize { duration_ms } => {
                let d = *duration_ms;
                if d <= 0 {
                    return Err("duration must be positive".into());
                }
                let fi = self.require_focus()?;
                let w = self.windows[fi].window_id;
                let minimize = matches!(action, Action::Minimize { .. });
                if minimize {
                    self.emit_window(t, w, 0, WindowEventId::StateChange, Some(WindowState::Minimized));
                    let truth = self.windows[fi].truth;
                    self.truth.windows[truth].minimized.push(Span::new(t, t + d));
                }
                self.lose_focus(t, fi);
                if minimize {
                    self.emit_window(t + d, w, 0, WindowEventId::StateChange, Some(WindowState::Normal));
                }
                self.gain_focus(t + d, fi);
                Ok(self.inactivity(t, d))
            }
            Action::Idle { duration_ms } => {
                if *duration_ms <= 0 {
                    return Err("duration must be positive".into());
                }
                Ok(self.inactivity(t, *duration_ms))
            }
        }
    }

    /// Closes everything at `t` and ends the session.
    fn finish(mut self, t: Millis) -> (Vec<EventRecord>, SessionTruth) {
        while !self.windows.is_empty() {
            self.close_window_at(t, 0);
        }
        self.emit_session(t, SessionEventId::End);
        self.truth.end = t;
        // timed actions emit their return events ahead of time; a stable sort
        // restores chronological order and keeps emission order for ties
        self.events.sort_by_key(EventRecord::time);
        (self.events, self.truth)
    }
}

struct Shared {
    corpus: Vec<(String, UrlLevels, UrlDigest)>,
    causes: WeightedIndex<f64>,
    actions: WeightedIndex<f64>,
}

fn new_model<'a>(
    cfg: &ScenarioConfig,
    shared: &'a Shared,
    ids: &'a mut Ids,
    user_id: u64,
    session_id: u64,
    start: Millis,
) -> SessionModel<'a> {
    SessionModel {
        user_id,
        session_id,
        tz: cfg.tz_offset,
        ids,
        cause_dist: &shared.causes,
        corpus: &shared.corpus,
        events: Vec::new(),
        truth: SessionTruth {
            user_id,
            session_id,
            start,
            end: start,
            loads: vec![],
            visible: vec![],
            windows: vec![],
            tabs: vec![],
            inactive: vec![],
            tab_switches: 0,
            window_focus_gains: 0,
        },
        windows: Vec::new(),
        focused: None,
        anchor_window: 0,
    }
}

fn exponential(rng: &mut impl Rng, mean: Millis) -> Millis {
    let u: f64 = rng.random();
    (-(mean as f64) * (1.0 - u).ln()).round() as Millis
}

fn user_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the scenario. The same configuration always yields the same output.
pub fn generate(cfg: &ScenarioConfig) -> Result<Simulation, SimError> {
    cfg.validate()?;
    let corpus = cfg
        .urls
        .iter()
        .map(|u| {
            let levels = decompose(u).expect("validated URL");
            let d = digest(&levels);
            (u.clone(), levels, d)
        })
        .collect();
    let shared = Shared {
        corpus,
        causes: WeightedIndex::new(cfg.cause_weights).map_err(|e| SimError::InvalidConfig(e.to_string()))?,
        actions: WeightedIndex::new(cfg.actions.as_array()).map_err(|e| SimError::InvalidConfig(e.to_string()))?,
    };
    let mut sim = Simulation { events: Vec::new(), truth: GroundTruth::default() };
    if cfg.scripted.is_empty() {
        for user in 1..=cfg.users as u64 {
            run_random_user(cfg, &shared, user, &mut sim);
        }
    } else {
        run_scripts(cfg, &shared, &mut sim)?;
    }
    Ok(sim)
}

fn run_random_user(cfg: &ScenarioConfig, shared: &Shared, user_id: u64, sim: &mut Simulation) {
    let mut rng = user_rng(cfg.seed, user_id);
    let mut ids = Ids::default();
    let mut t = cfg.start_ms + rng.random_range(0..cfg.session_gap_ms.max);
    for session_id in 1..=cfg.sessions_per_user as u64 {
        let target_end = t + cfg.session_duration_ms.sample(&mut rng);
        let mut model = new_model(cfg, shared, &mut ids, user_id, session_id, t);
        let page = model.pick_url(&mut rng, None);
        let cause = model.pick_cause(&mut rng);
        model.open_window(t, page, cause);
        let mut now = t;
        loop {
            let next = now + exponential(&mut rng, cfg.dwell_mean_ms).max(1_000);
            if next >= target_end {
                break;
            }
            let action = model.random_action(&mut rng, cfg, &shared.actions);
            now = model.apply(&mut rng, next, &action).expect("random actions are feasible");
        }
        let end = target_end.max(now);
        let (events, truth) = model.finish(end);
        sim.events.extend(events);
        sim.truth.sessions.push(truth);
        t = end + cfg.session_gap_ms.sample(&mut rng);
    }
}

fn run_scripts(cfg: &ScenarioConfig, shared: &Shared, sim: &mut Simulation) -> Result<(), SimError> {
    let mut users: std::collections::BTreeMap<u64, (Ids, u64, Millis)> = Default::default();
    for (si, script) in cfg.scripted.iter().enumerate() {
        let mut rng = user_rng(cfg.seed, 1 << 32 | si as u64);
        let entry = users.entry(script.user_id).or_insert_with(|| (Ids::default(), 0, cfg.start_ms));
        entry.1 += 1;
        let session_id = entry.1;
        let start = script.start_ms.unwrap_or(entry.2);
        let mut model = new_model(cfg, shared, &mut entry.0, script.user_id, session_id, start);
        let page = model.pick_url(&mut rng, script.url.as_deref());
        let cause = model.pick_cause(&mut rng);
        model.open_window(start, page, cause);
        let mut free = start;
        for (index, step) in script.actions.iter().enumerate() {
            let fail = |reason: String| SimError::Script { session: si, index, at_ms: step.at_ms, reason };
            let at = start + step.at_ms;
            if at < free || (index > 0 && at == start) {
                return Err(fail("starts before the previous action finished".into()));
            }
            free = model.apply(&mut rng, at, &step.action).map_err(fail)?;
        }
        let end = start + script.end_ms;
        if end < free {
            return Err(SimError::Script {
                session: si,
                index: script.actions.len(),
                at_ms: script.end_ms,
                reason: "session ends before its last action finished".into(),
            });
        }
        let (events, truth) = model.finish(end);
        entry.2 = end + cfg.session_gap_ms.min;
        sim.events.extend(events);
        sim.truth.sessions.push(truth);
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReport {
    /// Sessions whose end cascade was removed, as (user, session).
    pub truncated_sessions: Vec<(u64, u64)>,
    pub dropped_events: usize,
}

/// Degrades a stream. A truncated session loses its 201 together with every
/// closing event (430, 410, 111, 101) sharing that timestamp, as when the
/// browser process is killed; independently, any event may be lost.
pub fn inject_faults(events: &[EventRecord], faults: &FaultConfig, seed: u64) -> (Vec<EventRecord>, FaultReport) {
    let mut rng = user_rng(seed, u64::MAX);
    let mut keys: Vec<(u64, u64)> = events.iter().map(|e| (e.core().user_id, e.core().session_id)).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut cut: std::collections::HashMap<(u64, u64), Millis> = Default::default();
    let mut report = FaultReport::default();
    for key in keys {
        if faults.drop_session_end_prob > 0.0 && rng.random_bool(faults.drop_session_end_prob) {
            let end = events.iter().find(|e| {
                (e.core().user_id, e.core().session_id) == key
                    && matches!(e, EventRecord::Session(s) if s.event_id == SessionEventId::End)
            });
            if let Some(end) = end {
                cut.insert(key, end.time());
                report.truncated_sessions.push(key);
            }
        }
    }
    let closing: HashSet<u16> = [430, 410, 111, 101, 201].into_iter().collect();
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        let key = (e.core().user_id, e.core().session_id);
        if cut.get(&key) == Some(&e.time()) && closing.contains(&e.event_code()) {
            report.dropped_events += 1;
            continue;
        }
        if faults.drop_random_event_prob > 0.0 && rng.random_bool(faults.drop_random_event_prob) {
            report.dropped_events += 1;
            continue;
        }
        out.push(e.clone());
    }
    (out, report)
}
