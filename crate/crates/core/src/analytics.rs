//! Measures computed from reconstructed timelines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{cause, BrowsingEventId, EventRecord, Millis};
use crate::interval::SpanSet;
use crate::reconstruct::{ConcurrencyProfile, SessionTimeline};
use crate::url_privacy::UrlLevel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("concurrency profile covers no time")]
    EmptyProfile,
    #[error("session {0} has zero duration")]
    ZeroDurationSession(u64),
    #[error("navigation tree has no page loads")]
    EmptyTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAccount {
    pub key: String,
    pub loaded_ms: Millis,
    pub display_ms: Millis,
    pub viewing_ms: Millis,
    pub load_count: u64,
}

#[derive(Default)]
struct AccountBuild {
    loaded: SpanSet,
    display: SpanSet,
    viewing: SpanSet,
    count: u64,
}

/// Per-key loaded, display and viewing time of one session at `level`.
///
/// Loaded time is the union of the key's load intervals. Display time is the
/// part of its visible intervals during which the window was focused and not
/// minimized; viewing time is display time outside explicit inactivity.
/// Overlapping intervals of the same key are counted once.
pub fn time_accounting(timeline: &SessionTimeline, level: UrlLevel) -> Vec<TimeAccount> {
    time_accounting_many(std::iter::once(timeline), level)
}

/// Like [`time_accounting`], summed over several sessions.
pub fn time_accounting_many<'a>(
    timelines: impl IntoIterator<Item = &'a SessionTimeline>,
    level: UrlLevel,
) -> Vec<TimeAccount> {
    let mut out: BTreeMap<String, TimeAccount> = BTreeMap::new();
    for t in timelines {
        for (key, b) in session_accounts(t, level) {
            let acc = out.entry(key.clone()).or_insert(TimeAccount {
                key,
                loaded_ms: 0,
                display_ms: 0,
                viewing_ms: 0,
                load_count: 0,
            });
            acc.loaded_ms += b.loaded.measure();
            acc.display_ms += b.display.measure();
            acc.viewing_ms += b.viewing.measure();
            acc.load_count += b.count;
        }
    }
    out.into_values().collect()
}

fn session_accounts(t: &SessionTimeline, level: UrlLevel) -> BTreeMap<String, AccountBuild> {
    let mut builds: BTreeMap<String, AccountBuild> = BTreeMap::new();
    let mut key_of = std::collections::HashMap::new();
    for l in &t.loads {
        let Some(url) = &l.url else { continue };
        let key = url.get(level).to_owned();
        key_of.insert(l.load_id, key.clone());
        let b = builds.entry(key).or_default();
        b.loaded.insert(l.span());
        b.count += 1;
    }
    let inactive = t.inactive_set();
    let mut seeable = std::collections::HashMap::new();
    for w in &t.windows {
        seeable.insert(w.window_id, w.focused.subtract(&w.minimized));
    }
    for v in &t.visible {
        let Some(key) = v.load_id.and_then(|id| key_of.get(&id)) else { continue };
        let Some(win) = seeable.get(&v.window_id) else { continue };
        let shown = SpanSet::from_span(v.span()).intersect(win);
        let viewed = shown.subtract(&inactive);
        let b = builds.get_mut(key).expect("key registered by its load");
        b.display = b.display.union(&shown);
        b.viewing = b.viewing.union(&viewed);
    }
    builds
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelFraction {
    pub k: u32,
    pub windows: f64,
    pub tabs: f64,
}

/// Fraction of covered time with at least `k` open windows and tabs, per `k`.
pub fn parallel_usage(profile: &ConcurrencyProfile, thresholds: &[u32]) -> Result<Vec<ParallelFraction>, AnalyticsError> {
    let total = profile.covered.measure();
    if total <= 0 {
        return Err(AnalyticsError::EmptyProfile);
    }
    Ok(thresholds
        .iter()
        .map(|&k| ParallelFraction {
            k,
            windows: profile.windows.at_least(k).intersect(&profile.covered).measure() as f64 / total as f64,
            tabs: profile.tabs.at_least(k).intersect(&profile.covered).measure() as f64 / total as f64,
        })
        .collect())
}

/// Merged profile of every non-excluded timeline.
pub fn merged_profile<'a>(timelines: impl IntoIterator<Item = &'a SessionTimeline>) -> ConcurrencyProfile {
    ConcurrencyProfile::merge(timelines.into_iter().filter(|t| !t.is_excluded()).map(|t| &t.profile))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InactivityRatios {
    pub explicit_inactive_ratio: f64,
    pub implicit_inactive_ratio: f64,
    /// Background time over open time, pooled across the session's windows.
    pub background_ratio: f64,
}

pub fn inactivity_ratios(t: &SessionTimeline) -> Result<InactivityRatios, AnalyticsError> {
    let d = t.duration();
    if d <= 0 {
        return Err(AnalyticsError::ZeroDurationSession(t.session_id));
    }
    let frame = t.frame();
    let sum = |spans: &[crate::reconstruct::Interval]| -> Millis {
        spans.iter().map(|i| i.span()).collect::<SpanSet>().clip(frame).measure()
    };
    let open: Millis = t.windows.iter().map(|w| w.span().len()).sum();
    let background: Millis = t
        .windows
        .iter()
        .map(|w| w.background.iter().map(|i| i.span()).collect::<SpanSet>().measure())
        .sum();
    Ok(InactivityRatios {
        explicit_inactive_ratio: sum(&t.inactive) as f64 / d as f64,
        implicit_inactive_ratio: sum(&t.implicit_inactive) as f64 / d as f64,
        background_ratio: if open > 0 { background as f64 / open as f64 } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauseCount {
    pub count: u64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CauseHistogram {
    pub loads: BTreeMap<u8, CauseCount>,
    pub visibility: BTreeMap<u8, CauseCount>,
}

fn normalize(counts: BTreeMap<u8, u64>) -> BTreeMap<u8, CauseCount> {
    let total: u64 = counts.values().sum();
    counts
        .into_iter()
        .map(|(c, n)| (c, CauseCount { count: n, frequency: n as f64 / total as f64 }))
        .collect()
}

/// Load causes (1-9, from 400 events) and visibility causes (10-11, from 420
/// events), counted separately.
pub fn cause_histogram<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> CauseHistogram {
    let mut loads = BTreeMap::new();
    let mut visibility = BTreeMap::new();
    for e in events {
        let EventRecord::Browsing(b) = e else { continue };
        let Some(c) = b.cause else { continue };
        match b.event_id {
            BrowsingEventId::PageLoaded if cause::LOAD.contains(&c) => *loads.entry(c).or_insert(0) += 1,
            BrowsingEventId::PageVisible if cause::VISIBILITY.contains(&c) => *visibility.entry(c).or_insert(0) += 1,
            _ => {}
        }
    }
    CauseHistogram { loads: normalize(loads), visibility: normalize(visibility) }
}

/// Cause histogram from timelines (one entry per load and visible interval).
pub fn cause_histogram_timelines<'a>(timelines: impl IntoIterator<Item = &'a SessionTimeline>) -> CauseHistogram {
    let mut loads = BTreeMap::new();
    let mut visibility = BTreeMap::new();
    for t in timelines {
        for c in t.loads.iter().filter_map(|l| l.cause).filter(|c| cause::LOAD.contains(c)) {
            *loads.entry(c).or_insert(0) += 1;
        }
        for c in t.visible.iter().filter_map(|v| v.cause).filter(|c| cause::VISIBILITY.contains(c)) {
            *visibility.entry(c).or_insert(0) += 1;
        }
    }
    CauseHistogram { loads: normalize(loads), visibility: normalize(visibility) }
}

/// Total time some window of the session was focused (sum over windows).
pub fn focused_time(t: &SessionTimeline) -> Millis {
    t.windows.iter().map(|w| w.focused.measure()).sum()
}
