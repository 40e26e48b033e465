//! Navigation trees: page loads of a session arranged under a synthetic
//! browser-startup root, and the graph measures computed on them.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::analytics::AnalyticsError;
use crate::event::Millis;
use crate::reconstruct::SessionTimeline;
use crate::url_privacy::UrlDigest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    /// Attached to the startup root.
    Root,
    SameTab,
    NewTab,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavNode {
    pub load_id: u64,
    pub window_id: u64,
    pub tab_id: u32,
    pub time: Millis,
    pub url: Option<UrlDigest>,
    /// Index of the parent node; `None` is the root.
    pub parent: Option<usize>,
    pub edge: EdgeKind,
    /// The first load of a tab opened mid-session whose opener could not be found.
    pub orphan: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationTree {
    pub nodes: Vec<NavNode>,
}

impl NavigationTree {
    /// Builds a tree from parent indices (`None` = root). Parents must precede
    /// their children.
    pub fn from_parents(parents: &[Option<usize>]) -> NavigationTree {
        let nodes = parents
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                assert!(p.is_none_or(|p| p < i), "parent of node {i} must precede it");
                NavNode {
                    load_id: i as u64 + 1,
                    window_id: 1,
                    tab_id: 1,
                    time: i as Millis,
                    url: None,
                    parent: p,
                    edge: if p.is_some() { EdgeKind::SameTab } else { EdgeKind::Root },
                    orphan: false,
                }
            })
            .collect();
        NavigationTree { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_children(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent.is_none()).count()
    }

    /// Children count per node, root first.
    pub fn outdegrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len() + 1];
        for n in &self.nodes {
            deg[n.parent.map_or(0, |p| p + 1)] += 1;
        }
        deg
    }

    /// Undirected adjacency over vertices `0 = root, i + 1 = nodes[i]`.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len() + 1];
        for (i, n) in self.nodes.iter().enumerate() {
            let p = n.parent.map_or(0, |p| p + 1);
            adj[p].push(i + 1);
            adj[i + 1].push(p);
        }
        adj
    }
}

/// Arranges the session's loads into a tree. A load's parent is the previous
/// load in the same tab. The first load of a tab opened during the session
/// hangs off the load that was visible in another tab of the same window when
/// the tab was opened. Everything else (first loads of initial or inherited
/// tabs, tabs with no visible opener) attaches to the root.
pub fn build_navigation_tree(t: &SessionTimeline) -> NavigationTree {
    let mut order: Vec<usize> = (0..t.loads.len()).collect();
    order.sort_by_key(|&i| (t.loads[i].start, i));
    let mut index_of_load: HashMap<u64, usize> = HashMap::new();
    let mut last_in_tab: HashMap<(u64, u32), usize> = HashMap::new();
    let mut nodes: Vec<NavNode> = Vec::with_capacity(order.len());
    for i in order {
        let l = &t.loads[i];
        let key = (l.window_id, l.tab_id);
        let (parent, edge, orphan) = if let Some(&prev) = last_in_tab.get(&key) {
            (Some(prev), EdgeKind::SameTab, false)
        } else {
            let opened = t
                .tabs
                .iter()
                .find(|tb| tb.window_id == l.window_id && tb.tab_id == Some(l.tab_id) && !tb.initial);
            match opened {
                Some(tb) if !t.window(l.window_id).is_some_and(|w| w.inherited && tb.start == w.start) => {
                    let at = tb.start;
                    let opener = t
                        .visible
                        .iter()
                        .filter(|v| v.window_id == l.window_id && v.tab_id != l.tab_id && v.start <= at && at <= v.end)
                        .filter_map(|v| v.load_id.and_then(|id| index_of_load.get(&id)).map(|&n| (v, n)))
                        .max_by_key(|(v, _)| (v.start < at, v.start));
                    match opener {
                        Some((_, n)) => (Some(n), EdgeKind::NewTab, false),
                        None => (None, EdgeKind::Root, true),
                    }
                }
                _ => (None, EdgeKind::Root, false),
            }
        };
        index_of_load.insert(l.load_id, nodes.len());
        last_in_tab.insert(key, nodes.len());
        nodes.push(NavNode {
            load_id: l.load_id,
            window_id: l.window_id,
            tab_id: l.tab_id,
            time: l.start,
            url: l.url.clone(),
            parent,
            edge,
            orphan,
        });
    }
    NavigationTree { nodes }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootPolicy {
    /// Root counts as a vertex only when it has at least two children.
    #[default]
    Auto,
    Always,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusCounts {
    /// Tab selections (420, cause 11).
    pub tab_switches: u32,
    /// Window focus gains (151).
    pub window_focus_gains: u32,
}

impl FocusCounts {
    pub fn of(t: &SessionTimeline) -> FocusCounts {
        FocusCounts { tab_switches: t.tab_switches, window_focus_gains: t.window_focus_gains }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMetrics {
    pub tabs_used: u64,
    pub page_loads: u64,
    pub tabs_per_load: f64,
    pub focus_changes: u64,
    pub window_focus_changes: u64,
    pub diameter: u64,
    pub avg_path_length: f64,
    pub max_outdegree: u64,
    pub modularity: f64,
    /// Community label per node (aligned with `NavigationTree::nodes`);
    /// the root, when counted, is reported separately.
    pub communities: Vec<u32>,
    pub root_community: Option<u32>,
    pub root_included: bool,
}

pub fn tree_metrics(tree: &NavigationTree, focus: FocusCounts, policy: RootPolicy) -> Result<TreeMetrics, AnalyticsError> {
    if tree.is_empty() {
        return Err(AnalyticsError::EmptyTree);
    }
    let mut tabs: Vec<(u64, u32)> = tree.nodes.iter().map(|n| (n.window_id, n.tab_id)).collect();
    tabs.sort_unstable();
    tabs.dedup();
    let root_included = policy == RootPolicy::Always || tree.root_children() >= 2;
    let (adj, offset) = path_graph(tree, root_included);
    let (diameter, avg_path_length) = path_metrics(&adj);
    let (modularity, labels) = greedy_modularity(&adj);
    let page_loads = tree.len() as u64;
    Ok(TreeMetrics {
        tabs_used: tabs.len() as u64,
        page_loads,
        tabs_per_load: tabs.len() as f64 / page_loads as f64,
        focus_changes: focus.tab_switches as u64,
        window_focus_changes: focus.window_focus_gains as u64,
        diameter,
        avg_path_length,
        max_outdegree: tree.outdegrees().into_iter().max().unwrap_or(0) as u64,
        modularity,
        communities: labels[offset..].to_vec(),
        root_community: root_included.then(|| labels[0]),
        root_included,
    })
}

/// Adjacency of the graph used for path measures and the index of the first
/// load vertex in it.
fn path_graph(tree: &NavigationTree, root_included: bool) -> (Vec<Vec<usize>>, usize) {
    let full = tree.adjacency();
    if root_included {
        return (full, 1);
    }
    // without the root every vertex shifts down by one; the root's only child
    // becomes the new hub of the remaining tree
    let adj = full[1..]
        .iter()
        .map(|ns| ns.iter().filter(|&&v| v != 0).map(|&v| v - 1).collect())
        .collect();
    (adj, 0)
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Diameter by double sweep and mean pairwise distance by edge contribution
/// (each edge lies on `s * (n - s)` paths). Requires a tree.
pub fn path_metrics(adj: &[Vec<usize>]) -> (u64, f64) {
    let n = adj.len();
    if n < 2 {
        return (0, 0.0);
    }
    let d0 = bfs(adj, 0);
    let far = (0..n).max_by_key(|&v| (d0[v], std::cmp::Reverse(v))).expect("nonempty");
    let diameter = *bfs(adj, far).iter().max().expect("nonempty") as u64;

    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0];
    parent[0] = 0;
    while let Some(u) = stack.pop() {
        order.push(u);
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                stack.push(v);
            }
        }
    }
    let mut size = vec![1u64; n];
    let mut total: u128 = 0;
    for &u in order.iter().rev() {
        if u != 0 {
            let s = size[u];
            total += (s * (n as u64 - s)) as u128;
            size[parent[u]] += s;
        }
    }
    let pairs = (n as u128) * (n as u128 - 1) / 2;
    (diameter, total as f64 / pairs as f64)
}

/// Agglomerative greedy modularity (Clauset-Newman-Moore). Every step merges
/// the adjacent community pair with the largest gain, ties going to the pair
/// with the smallest indices; merging stops when no gain is positive. Gains
/// are compared in exact integer arithmetic, so the result is deterministic.
/// Returns the modularity and a community label per vertex, numbered in
/// order of each community's lowest vertex.
pub fn greedy_modularity(adj: &[Vec<usize>]) -> (f64, Vec<u32>) {
    let n = adj.len();
    let two_m: i128 = adj.iter().map(|a| a.len() as i128).sum();
    let mut member: Vec<usize> = (0..n).collect();
    if two_m == 0 {
        return (0.0, (0..n as u32).collect());
    }
    // links[c][d] = number of edges between communities c and d (c != d)
    let mut links: Vec<BTreeMap<usize, i128>> = vec![BTreeMap::new(); n];
    let mut degree: Vec<i128> = adj.iter().map(|a| a.len() as i128).collect();
    for (u, ns) in adj.iter().enumerate() {
        for &v in ns {
            if u != v {
                *links[u].entry(v).or_insert(0) += 1;
            }
        }
    }
    let mut alive = vec![true; n];
    loop {
        // gain of merging c and d, scaled by 2m^2: 2m * l_cd - deg_c * deg_d
        let mut best: Option<(i128, usize, usize)> = None;
        for c in 0..n {
            if !alive[c] {
                continue;
            }
            for (&d, &l) in links[c].range(c + 1..) {
                let gain = two_m * l - degree[c] * degree[d];
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, c, d));
                }
            }
        }
        let Some((gain, c, d)) = best else { break };
        if gain <= 0 {
            break;
        }
        let moved = std::mem::take(&mut links[d]);
        for (e, l) in moved {
            if e == c {
                continue;
            }
            links[e].remove(&d);
            *links[e].entry(c).or_insert(0) += l;
            *links[c].entry(e).or_insert(0) += l;
        }
        links[c].remove(&d);
        degree[c] += degree[d];
        alive[d] = false;
        for m in member.iter_mut() {
            if *m == d {
                *m = c;
            }
        }
    }
    let m = two_m as f64 / 2.0;
    let mut q = 0.0;
    let mut l_in: BTreeMap<usize, f64> = BTreeMap::new();
    let mut deg: BTreeMap<usize, f64> = BTreeMap::new();
    for (u, ns) in adj.iter().enumerate() {
        *deg.entry(member[u]).or_insert(0.0) += ns.len() as f64;
        for &v in ns {
            if member[u] == member[v] {
                *l_in.entry(member[u]).or_insert(0.0) += 0.5;
            }
        }
    }
    for (c, d) in &deg {
        q += l_in.get(c).copied().unwrap_or(0.0) / m - (d / (2.0 * m)).powi(2);
    }
    let mut label_of: HashMap<usize, u32> = HashMap::new();
    let labels = member
        .iter()
        .map(|c| {
            let next = label_of.len() as u32;
            *label_of.entry(*c).or_insert(next)
        })
        .collect();
    (q, labels)
}
