//! Brute-force oracles shared by the integration and acceptance tests. They
//! work directly on simulator ground truth, one millisecond or one vertex
//! pair at a time, and share no code with the library's algorithms.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use browselog_core::event::Millis;
use browselog_core::navigation::NavigationTree;
use browselog_core::reconstruct::SessionTimeline;
use browselog_core::simulator::{SessionTruth, TruthWindow};
use browselog_core::url_privacy::UrlLevel;

/// Per-millisecond mask over `[start, end)`.
pub struct Mask {
    start: Millis,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(start: Millis, end: Millis) -> Mask {
        Mask { start, bits: vec![false; (end - start).max(0) as usize] }
    }

    pub fn paint(&mut self, a: Millis, b: Millis) {
        for t in a.max(self.start)..b.min(self.start + self.bits.len() as Millis) {
            self.bits[(t - self.start) as usize] = true;
        }
    }

    pub fn get(&self, t: Millis) -> bool {
        t >= self.start && ((t - self.start) as usize) < self.bits.len() && self.bits[(t - self.start) as usize]
    }

    pub fn count(&self) -> Millis {
        self.bits.iter().filter(|b| **b).count() as Millis
    }
}

/// Instants a window counts as background: inside a run of unfocused
/// milliseconds, within its open time, lasting at least `threshold` ms.
pub fn background_mask(w: &TruthWindow, threshold: Millis) -> Mask {
    let mut focused = Mask::new(w.start, w.end);
    for p in &w.focused {
        focused.paint(p.start, p.end);
    }
    let mut out = Mask::new(w.start, w.end);
    let mut t = w.start;
    while t < w.end {
        if focused.get(t) {
            t += 1;
            continue;
        }
        let run_start = t;
        while t < w.end && !focused.get(t) {
            t += 1;
        }
        if t - run_start >= threshold {
            out.paint(run_start, t);
        }
    }
    out
}

pub fn background_runs(w: &TruthWindow, threshold: Millis) -> Vec<(Millis, Millis)> {
    let m = background_mask(w, threshold);
    let mut runs = Vec::new();
    let mut t = w.start;
    while t < w.end {
        if m.get(t) {
            let s = t;
            while t < w.end && m.get(t) {
                t += 1;
            }
            runs.push((s, t));
        } else {
            t += 1;
        }
    }
    runs
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepAccount {
    pub loaded: Millis,
    pub display: Millis,
    pub viewing: Millis,
    pub loads: u64,
}

/// Time accounting by painting every millisecond of the session.
pub fn sweep_accounting(s: &SessionTruth, level: UrlLevel, threshold: Millis) -> BTreeMap<String, SweepAccount> {
    let mut seeable: HashMap<u64, Mask> = HashMap::new();
    for w in &s.windows {
        let bg = background_mask(w, threshold);
        let mut m = Mask::new(s.start, s.end);
        for t in w.start..w.end {
            let minimized = w.minimized.iter().any(|p| p.start <= t && t < p.end);
            if !bg.get(t) && !minimized {
                m.paint(t, t + 1);
            }
        }
        seeable.insert(w.window_id, m);
    }
    let mut inactive = Mask::new(s.start, s.end);
    for p in &s.inactive {
        inactive.paint(p.start, p.end);
    }
    let key_of = |l: &browselog_core::simulator::TruthLoad| l.digest.get(level).to_owned();
    let mut keys: Vec<String> = s.loads.iter().map(key_of).collect();
    keys.sort();
    keys.dedup();
    let mut out = BTreeMap::new();
    for key in keys {
        let mut loaded = Mask::new(s.start, s.end);
        let mut display = Mask::new(s.start, s.end);
        let mut viewing = Mask::new(s.start, s.end);
        let mut loads = 0;
        for l in s.loads.iter().filter(|l| key_of(l) == key) {
            loads += 1;
            loaded.paint(l.start, l.end);
            for v in s.visible.iter().filter(|v| v.load_id == l.load_id) {
                let win = &seeable[&v.window_id];
                for t in v.start..v.end {
                    if win.get(t) {
                        display.paint(t, t + 1);
                        if !inactive.get(t) {
                            viewing.paint(t, t + 1);
                        }
                    }
                }
            }
        }
        out.insert(
            key,
            SweepAccount { loaded: loaded.count(), display: display.count(), viewing: viewing.count(), loads },
        );
    }
    out
}

/// All-pairs BFS over an undirected adjacency list.
pub fn all_pairs(adj: &[Vec<usize>]) -> (u64, f64) {
    let n = adj.len();
    if n < 2 {
        return (0, 0.0);
    }
    let mut max = 0usize;
    let mut sum = 0usize;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        for (t, &d) in dist.iter().enumerate() {
            assert_ne!(d, usize::MAX, "graph is disconnected");
            if t > s {
                max = max.max(d);
                sum += d;
            }
        }
    }
    (max as u64, sum as f64 / (n * (n - 1) / 2) as f64)
}

/// Vertices used for path measures: root included when it has two or more
/// children, loads numbered after it.
pub fn oracle_graph(parents: &[Option<usize>]) -> Vec<Vec<usize>> {
    let root_children = parents.iter().filter(|p| p.is_none()).count();
    let with_root = root_children >= 2;
    let off = usize::from(with_root);
    let mut adj = vec![Vec::new(); parents.len() + off];
    for (i, p) in parents.iter().enumerate() {
        match p {
            Some(p) => {
                adj[i + off].push(p + off);
                adj[p + off].push(i + off);
            }
            None if with_root => {
                adj[i + 1].push(0);
                adj[0].push(i + 1);
            }
            None => {}
        }
    }
    adj
}

pub fn max_outdegree(parents: &[Option<usize>]) -> u64 {
    let mut count: HashMap<Option<usize>, u64> = HashMap::new();
    for p in parents {
        *count.entry(*p).or_default() += 1;
    }
    count.values().copied().max().unwrap_or(0)
}

/// Checks a reconstructed timeline against the trajectory it came from.
pub fn compare(truth: &SessionTruth, t: &SessionTimeline, tree: &NavigationTree, threshold: Millis) -> Result<(), String> {
    let err = |what: &str, a: String, b: String| Err(format!("{what}: reconstructed {a} vs truth {b}"));
    if (t.session_start, t.session_end) != (truth.start, truth.end) {
        return err("session bounds", format!("{:?}", t.frame()), format!("{}..{}", truth.start, truth.end));
    }
    if !t.anomalies.is_empty() {
        return Err(format!("anomalies on a clean stream: {:?}", t.anomalies));
    }
    let loads: Vec<_> = t
        .loads
        .iter()
        .map(|l| (l.load_id, l.window_id, l.tab_id, l.start, l.end, l.cause, l.url.clone()))
        .collect();
    let want: Vec<_> = truth
        .loads
        .iter()
        .map(|l| (l.load_id, l.window_id, l.tab_id, l.start, l.end, Some(l.cause), Some(l.digest.clone())))
        .collect();
    if loads != want {
        return err("loads", format!("{loads:?}"), format!("{want:?}"));
    }
    let mut vis: Vec<_> =
        t.visible.iter().map(|v| (v.focus_id, v.load_id, v.window_id, v.tab_id, v.start, v.end, v.cause)).collect();
    let mut want: Vec<_> = truth
        .visible
        .iter()
        .map(|v| (v.focus_id, Some(v.load_id), v.window_id, v.tab_id, v.start, v.end, Some(v.cause)))
        .collect();
    vis.sort();
    want.sort();
    if vis != want {
        return err("visible", format!("{vis:?}"), format!("{want:?}"));
    }
    let mut wins: Vec<_> = t.windows.iter().map(|w| (w.window_id, w.start, w.end)).collect();
    let mut want: Vec<_> = truth.windows.iter().map(|w| (w.window_id, w.start, w.end)).collect();
    wins.sort();
    want.sort();
    if wins != want {
        return err("windows", format!("{wins:?}"), format!("{want:?}"));
    }
    for tw in &truth.windows {
        let w = t.window(tw.window_id).expect("window present");
        let got: Vec<(Millis, Millis)> = w.background.iter().map(|i| (i.start, i.end)).collect();
        let want = background_runs(tw, threshold);
        if got != want {
            return err(&format!("background of window {}", tw.window_id), format!("{got:?}"), format!("{want:?}"));
        }
        let got: Vec<(Millis, Millis)> = w.minimized.spans().iter().map(|s| (s.start, s.end)).collect();
        let want: Vec<(Millis, Millis)> = tw.minimized.iter().map(|s| (s.start, s.end)).collect();
        if got != want {
            return err(&format!("minimized of window {}", tw.window_id), format!("{got:?}"), format!("{want:?}"));
        }
    }
    let mut tabs: Vec<_> = t.tabs.iter().map(|tb| (tb.window_id, tb.tab_id, tb.start, tb.end)).collect();
    let mut want: Vec<_> = truth.tabs.iter().map(|tb| (tb.window_id, Some(tb.tab_id), tb.start, tb.end)).collect();
    tabs.sort();
    want.sort();
    if tabs != want {
        return err("tabs", format!("{tabs:?}"), format!("{want:?}"));
    }
    let inactive: Vec<(Millis, Millis)> = t.inactive.iter().map(|i| (i.start, i.end)).collect();
    let want: Vec<(Millis, Millis)> = truth.inactive.iter().map(|s| (s.start, s.end)).collect();
    if inactive != want {
        return err("inactive", format!("{inactive:?}"), format!("{want:?}"));
    }
    if (t.tab_switches, t.window_focus_gains) != (truth.tab_switches, truth.window_focus_gains) {
        return err(
            "focus counts",
            format!("{:?}", (t.tab_switches, t.window_focus_gains)),
            format!("{:?}", (truth.tab_switches, truth.window_focus_gains)),
        );
    }
    let parent_of: HashMap<u64, Option<u64>> = truth.loads.iter().map(|l| (l.load_id, l.parent)).collect();
    for n in &tree.nodes {
        let got = n.parent.map(|p| tree.nodes[p].load_id);
        if got != parent_of[&n.load_id] {
            return err(&format!("parent of load {}", n.load_id), format!("{got:?}"), format!("{:?}", parent_of[&n.load_id]));
        }
    }
    Ok(())
}
