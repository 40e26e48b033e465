//! Functions behind the static demo page. Each returns a JSON string so the
//! page needs no generated bindings beyond strings and numbers.

use browselog_core::analytics::{inactivity_ratios, merged_profile, parallel_usage, time_accounting, TimeAccount};
use browselog_core::event::Millis;
use browselog_core::interval::Span;
use browselog_core::navigation::{build_navigation_tree, tree_metrics, EdgeKind, FocusCounts, RootPolicy, TreeMetrics};
use browselog_core::reconstruct::{reconstruct, Interval, ReconstructionConfig, SessionTimeline};
use browselog_core::simulator::{generate, ScenarioConfig};
use browselog_core::url_privacy::{decompose, digest, UrlLevel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Level {
    level: &'static str,
    value: String,
    sha1: String,
}

/// The four URL levels of `url` with their digests.
pub fn hash_url_report(url: &str) -> Result<String, String> {
    let levels = decompose(url).map_err(|e| e.to_string())?;
    let d = digest(&levels);
    let values = [levels.domain.clone(), levels.subdomain.clone(), levels.path.clone(), levels.full.clone()];
    let rows: Vec<Level> = UrlLevel::ALL
        .iter()
        .zip(values)
        .map(|(l, value)| Level { level: l.as_str(), value, sha1: d.get(*l).to_owned() })
        .collect();
    Ok(serde_json::to_string(&rows).expect("rows serialize"))
}

/// Relative `[start, end)` pair in ms from the session start.
type Rel = (Millis, Millis);

#[derive(Serialize)]
struct WindowView {
    window_id: u64,
    span: Rel,
    background: Vec<Rel>,
    minimized: Vec<Rel>,
}

#[derive(Serialize)]
struct BarView {
    window_id: u64,
    tab_id: u32,
    load_id: Option<u64>,
    span: Rel,
    /// First eight hex digits of the domain digest, for colouring.
    domain: String,
}

#[derive(Serialize)]
struct Totals {
    duration_ms: Millis,
    loaded_ms: Millis,
    display_ms: Millis,
    viewing_ms: Millis,
    background_ms: Millis,
    implicit_idle_ms: Millis,
    explicit_inactive_ms: Millis,
    background_ratio: f64,
    tabs_2_plus: f64,
}

#[derive(Serialize)]
struct NodeView {
    load_id: u64,
    parent: Option<usize>,
    edge: &'static str,
    community: u32,
    domain: String,
}

#[derive(Serialize)]
struct TreeView {
    nodes: Vec<NodeView>,
    metrics: Option<TreeMetrics>,
}

#[derive(Serialize)]
struct Explorer {
    user_id: u64,
    session_id: u64,
    windows: Vec<WindowView>,
    loads: Vec<BarView>,
    visible: Vec<BarView>,
    inactive: Vec<Rel>,
    implicit_idle: Vec<Rel>,
    totals: Totals,
    domains: Vec<TimeAccount>,
    tree: TreeView,
}

fn rel(t0: Millis, s: Span) -> Rel {
    (s.start - t0, s.end - t0)
}

fn rel_all(t0: Millis, v: &[Interval]) -> Vec<Rel> {
    v.iter().map(|i| rel(t0, i.span())).collect()
}

fn short(d: Option<&browselog_core::url_privacy::UrlDigest>) -> String {
    d.map(|d| d.domain_hash[..8].to_owned()).unwrap_or_default()
}

/// Simulates one session from `seed` and reconstructs it with the given
/// debounce and idle thresholds.
pub fn explore_session(seed: u64, debounce_ms: Millis, idle_ms: Millis) -> Result<String, String> {
    if debounce_ms < 0 || idle_ms < 0 {
        return Err("thresholds must not be negative".into());
    }
    let scenario = ScenarioConfig { seed, users: 1, sessions_per_user: 1, ..Default::default() };
    let sim = generate(&scenario).map_err(|e| e.to_string())?;
    let cfg = ReconstructionConfig { debounce_ms, implicit_gap_ms: idle_ms, ..Default::default() };
    let t = reconstruct(&sim.events, &cfg).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&explorer(&t)).expect("view serializes"))
}

fn explorer(t: &SessionTimeline) -> Explorer {
    let t0 = t.session_start;
    let accounts = time_accounting(t, UrlLevel::Domain);
    let sum = |f: fn(&TimeAccount) -> Millis| accounts.iter().map(f).sum::<Millis>();
    let ratios = inactivity_ratios(t).ok();
    let parallel = parallel_usage(&merged_profile([t]), &[2]).ok();
    let tree = build_navigation_tree(t);
    let metrics = tree_metrics(&tree, FocusCounts::of(t), RootPolicy::Auto).ok();
    let nodes = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| NodeView {
            load_id: n.load_id,
            parent: n.parent,
            edge: match n.edge {
                EdgeKind::Root => "root",
                EdgeKind::SameTab => "same-tab",
                EdgeKind::NewTab => "new-tab",
            },
            community: metrics.as_ref().map_or(0, |m| m.communities[i]),
            domain: short(n.url.as_ref()),
        })
        .collect();
    let domain_of = |load: Option<u64>| short(load.and_then(|id| t.load(id)).and_then(|l| l.url.as_ref()));
    Explorer {
        user_id: t.user_id,
        session_id: t.session_id,
        windows: t
            .windows
            .iter()
            .map(|w| WindowView {
                window_id: w.window_id,
                span: (w.start - t0, w.end - t0),
                background: rel_all(t0, &w.background),
                minimized: w.minimized.spans().iter().map(|s| rel(t0, *s)).collect(),
            })
            .collect(),
        loads: t
            .loads
            .iter()
            .map(|l| BarView {
                window_id: l.window_id,
                tab_id: l.tab_id,
                load_id: Some(l.load_id),
                span: (l.start - t0, l.end - t0),
                domain: short(l.url.as_ref()),
            })
            .collect(),
        visible: t
            .visible
            .iter()
            .map(|v| BarView {
                window_id: v.window_id,
                tab_id: v.tab_id,
                load_id: v.load_id,
                span: (v.start - t0, v.end - t0),
                domain: domain_of(v.load_id),
            })
            .collect(),
        inactive: rel_all(t0, &t.inactive),
        implicit_idle: rel_all(t0, &t.implicit_inactive),
        totals: Totals {
            duration_ms: t.duration(),
            loaded_ms: sum(|a| a.loaded_ms),
            display_ms: sum(|a| a.display_ms),
            viewing_ms: sum(|a| a.viewing_ms),
            background_ms: t.windows.iter().flat_map(|w| &w.background).map(Interval::len).sum(),
            implicit_idle_ms: t.implicit_inactive.iter().map(Interval::len).sum(),
            explicit_inactive_ms: t.inactive.iter().map(Interval::len).sum(),
            background_ratio: ratios.map_or(0.0, |r| r.background_ratio),
            tabs_2_plus: parallel.map_or(0.0, |p| p[0].tabs),
        },
        domains: accounts,
        tree: TreeView { nodes, metrics },
    }
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hashUrl)]
pub fn hash_url_js(url: &str) -> Result<String, JsError> {
    js(hash_url_report(url))
}

#[wasm_bindgen(js_name = exploreSession)]
pub fn explore_session_js(seed: u32, debounce_ms: u32, idle_ms: u32) -> Result<String, JsError> {
    js(explore_session(seed as u64, debounce_ms as Millis, idle_ms as Millis))
}
