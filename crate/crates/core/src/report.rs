//! Report assembly: one JSON document plus flat CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    cause_histogram_timelines, inactivity_ratios, merged_profile, parallel_usage, time_accounting_many, CauseHistogram,
    InactivityRatios, ParallelFraction, TimeAccount,
};
use crate::event::cause;
use crate::navigation::{build_navigation_tree, tree_metrics, EdgeKind, FocusCounts, RootPolicy, TreeMetrics};
use crate::reconstruct::SessionTimeline;
use crate::url_privacy::UrlLevel;

pub const DEFAULT_THRESHOLDS: [u32; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub time_accounting: Option<UrlLevel>,
    pub parallel: bool,
    pub thresholds: Vec<u32>,
    pub inactivity: bool,
    pub causes: bool,
    pub tree_metrics: bool,
    pub root_policy: RootPolicy,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            time_accounting: Some(UrlLevel::Domain),
            parallel: true,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            inactivity: true,
            causes: true,
            tree_metrics: true,
            root_policy: RootPolicy::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub total: usize,
    pub analyzed: usize,
    /// Sessions without a recorded end under the filter strategy.
    pub excluded: usize,
    pub imputed: usize,
    pub anomalies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAccountingSection {
    pub level: UrlLevel,
    pub accounts: Vec<TimeAccount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSection {
    pub overall: Vec<ParallelFraction>,
    pub per_user: BTreeMap<u64, Vec<ParallelFraction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInactivity {
    pub user_id: u64,
    pub session_id: u64,
    #[serde(flatten)]
    pub ratios: InactivityRatios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub load_id: u64,
    pub parent_load_id: Option<u64>,
    pub edge: EdgeKind,
    pub window_id: u64,
    pub tab_id: u32,
    pub outdegree: u64,
    pub community: u32,
    pub visible_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTree {
    pub user_id: u64,
    pub session_id: u64,
    pub metrics: TreeMetrics,
    pub nodes: Vec<NodeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sessions: SessionSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_accounting: Option<TimeAccountingSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel: Option<ParallelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inactivity: Option<Vec<SessionInactivity>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub causes: Option<CauseHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_metrics: Option<Vec<SessionTree>>,
}

/// Runs the selected analyses over the non-excluded timelines. Sessions of
/// zero length and sessions without loads are skipped by the analyses that
/// cannot handle them.
pub fn build_report(timelines: &[SessionTimeline], opts: &ReportOptions) -> Report {
    let analyzed: Vec<&SessionTimeline> = timelines.iter().filter(|t| !t.is_excluded()).collect();
    let sessions = SessionSummary {
        total: timelines.len(),
        analyzed: analyzed.len(),
        excluded: timelines.len() - analyzed.len(),
        imputed: analyzed.iter().filter(|t| t.end_source == crate::reconstruct::EndSource::Imputed).count(),
        anomalies: analyzed.iter().map(|t| t.anomalies.len()).sum(),
    };
    let time_accounting = opts.time_accounting.map(|level| TimeAccountingSection {
        level,
        accounts: time_accounting_many(analyzed.iter().copied(), level),
    });
    let parallel = opts.parallel.then(|| {
        let overall = parallel_usage(&merged_profile(analyzed.iter().copied()), &opts.thresholds).unwrap_or_default();
        let mut per_user = BTreeMap::new();
        let mut users: Vec<u64> = analyzed.iter().map(|t| t.user_id).collect();
        users.sort_unstable();
        users.dedup();
        for u in users {
            let profile = merged_profile(analyzed.iter().copied().filter(|t| t.user_id == u));
            if let Ok(f) = parallel_usage(&profile, &opts.thresholds) {
                per_user.insert(u, f);
            }
        }
        ParallelSection { overall, per_user }
    });
    let inactivity = opts.inactivity.then(|| {
        analyzed
            .iter()
            .filter_map(|t| {
                inactivity_ratios(t).ok().map(|ratios| SessionInactivity { user_id: t.user_id, session_id: t.session_id, ratios })
            })
            .collect()
    });
    let causes = opts.causes.then(|| cause_histogram_timelines(analyzed.iter().copied()));
    let tree_metrics = opts.tree_metrics.then(|| {
        analyzed
            .iter()
            .filter_map(|t| {
                let tree = build_navigation_tree(t);
                let metrics = tree_metrics(&tree, FocusCounts::of(t), opts.root_policy).ok()?;
                let outdeg = tree.outdegrees();
                let nodes = tree
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| NodeRow {
                        load_id: n.load_id,
                        parent_load_id: n.parent.map(|p| tree.nodes[p].load_id),
                        edge: n.edge,
                        window_id: n.window_id,
                        tab_id: n.tab_id,
                        outdegree: outdeg[i + 1] as u64,
                        community: metrics.communities[i],
                        visible_ms: t
                            .visible
                            .iter()
                            .filter(|v| v.load_id == Some(n.load_id))
                            .map(|v| v.end - v.start)
                            .sum(),
                    })
                    .collect();
                Some(SessionTree { user_id: t.user_id, session_id: t.session_id, metrics, nodes })
            })
            .collect()
    });
    Report { sessions, time_accounting, parallel, inactivity, causes, tree_metrics }
}

fn edge_name(e: EdgeKind) -> &'static str {
    match e {
        EdgeKind::Root => "root",
        EdgeKind::SameTab => "same-tab",
        EdgeKind::NewTab => "new-tab",
    }
}

/// CSV tables keyed by file name.
pub fn csv_tables(r: &Report) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    if let Some(ta) = &r.time_accounting {
        let mut s = String::from("level,key,loaded_ms,display_ms,viewing_ms,load_count\n");
        for a in &ta.accounts {
            let _ = writeln!(s, "{},{},{},{},{},{}", ta.level.as_str(), a.key, a.loaded_ms, a.display_ms, a.viewing_ms, a.load_count);
        }
        out.insert("time_accounting.csv", s);
    }
    if let Some(p) = &r.parallel {
        let mut s = String::from("scope,k,windows_fraction,tabs_fraction\n");
        for f in &p.overall {
            let _ = writeln!(s, "all,{},{},{}", f.k, f.windows, f.tabs);
        }
        for (u, fs) in &p.per_user {
            for f in fs {
                let _ = writeln!(s, "user:{u},{},{},{}", f.k, f.windows, f.tabs);
            }
        }
        out.insert("parallel.csv", s);
    }
    if let Some(rows) = &r.inactivity {
        let mut s = String::from("user_id,session_id,explicit_inactive_ratio,implicit_inactive_ratio,background_ratio\n");
        for i in rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i.user_id, i.session_id, i.ratios.explicit_inactive_ratio, i.ratios.implicit_inactive_ratio, i.ratios.background_ratio
            );
        }
        out.insert("inactivity.csv", s);
    }
    if let Some(h) = &r.causes {
        let mut s = String::from("kind,cause,label,count,frequency\n");
        for (kind, map) in [("load", &h.loads), ("visibility", &h.visibility)] {
            for (c, n) in map {
                let _ = writeln!(s, "{kind},{c},{},{},{}", cause::label(*c), n.count, n.frequency);
            }
        }
        out.insert("causes.csv", s);
    }
    if let Some(trees) = &r.tree_metrics {
        let mut s = String::from(
            "user_id,session_id,tabs_used,page_loads,tabs_per_load,focus_changes,window_focus_changes,diameter,avg_path_length,max_outdegree,modularity\n",
        );
        let mut n = String::from("user_id,session_id,load_id,parent_load_id,edge,window_id,tab_id,outdegree,community,visible_ms\n");
        for t in trees {
            let m = &t.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.user_id,
                t.session_id,
                m.tabs_used,
                m.page_loads,
                m.tabs_per_load,
                m.focus_changes,
                m.window_focus_changes,
                m.diameter,
                m.avg_path_length,
                m.max_outdegree,
                m.modularity
            );
            for row in &t.nodes {
                let parent = row.parent_load_id.map(|p| p.to_string()).unwrap_or_default();
                let _ = writeln!(
                    n,
                    "{},{},{},{},{},{},{},{},{},{}",
                    t.user_id,
                    t.session_id,
                    row.load_id,
                    parent,
                    edge_name(row.edge),
                    row.window_id,
                    row.tab_id,
                    row.outdegree,
                    row.community,
                    row.visible_ms
                );
            }
        }
        out.insert("tree_metrics.csv", s);
        out.insert("tree_nodes.csv", n);
    }
    out
}

/// Writes `report.json` and the CSV tables into `dir`; returns the paths.
pub fn write_report(dir: &Path, r: &Report) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let json = serde_json::to_string_pretty(r).expect("report serializes");
    let p = dir.join("report.json");
    std::fs::write(&p, json + "\n")?;
    paths.push(p);
    for (name, body) in csv_tables(r) {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}
