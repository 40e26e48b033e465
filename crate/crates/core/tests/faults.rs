use browselog_core::analytics::{cause_histogram, inactivity_ratios, merged_profile, parallel_usage, time_accounting};
use browselog_core::event::{BrowsingEventId, EventRecord};
use browselog_core::interval::SpanSet;
use browselog_core::navigation::{build_navigation_tree, tree_metrics, FocusCounts, RootPolicy};
use browselog_core::reconstruct::{reconstruct_all, EndSource, Imputation, ReconstructionConfig};
use browselog_core::simulator::{generate, inject_faults, FaultConfig, ScenarioConfig};
use browselog_core::url_privacy::UrlLevel;
use proptest::prelude::*;

fn corpus(seed: u64, users: u32, sessions: u32) -> browselog_core::simulator::Simulation {
    generate(&ScenarioConfig { seed, users, sessions_per_user: sessions, ..Default::default() }).unwrap()
}

#[test]
fn dropped_session_ends_count_is_binomial() {
    let sim = corpus(5, 10, 10);
    let faults = FaultConfig { drop_session_end_prob: 0.3, drop_random_event_prob: 0.0 };
    let (_, report) = inject_faults(&sim.events, &faults, 11);
    // 100 sessions, p = 0.3: mean 30, sd 4.6; 4 sd either way
    let n = report.truncated_sessions.len();
    assert!((12..=48).contains(&n), "{n}");
}

#[test]
fn filter_and_estimate_on_truncated_sessions() {
    let sim = corpus(6, 10, 10);
    let faults = FaultConfig { drop_session_end_prob: 0.3, drop_random_event_prob: 0.0 };
    let (events, report) = inject_faults(&sim.events, &faults, 12);

    let filter = ReconstructionConfig { imputation: Imputation::Filter, ..Default::default() };
    let (timelines, failed) = reconstruct_all(&events, &filter);
    assert!(failed.is_empty());
    let kept: Vec<_> = timelines.iter().filter(|t| !t.is_excluded()).collect();
    assert_eq!(kept.len(), 100 - report.truncated_sessions.len());
    assert!(kept.iter().all(|t| t.end_source == EndSource::Recorded));

    let estimate = ReconstructionConfig::default();
    let (timelines, failed) = reconstruct_all(&events, &estimate);
    assert!(failed.is_empty());
    for t in &timelines {
        let key = (t.user_id, t.session_id);
        let last = events
            .iter()
            .filter(|e| (e.core().user_id, e.core().session_id) == key)
            .map(EventRecord::time)
            .max()
            .unwrap();
        if report.truncated_sessions.contains(&key) {
            assert_eq!(t.end_source, EndSource::Imputed);
            assert!(t.session_end >= last);
        }
        inactivity_ratios(t).unwrap();
        time_accounting(t, UrlLevel::Domain);
        let tree = build_navigation_tree(t);
        if !tree.is_empty() {
            tree_metrics(&tree, FocusCounts::of(t), RootPolicy::Auto).unwrap();
        }
    }
    parallel_usage(&merged_profile(&timelines), &[1, 2, 4]).unwrap();
}

#[test]
fn hierarchy_consistency() {
    let cfg = ReconstructionConfig::default();
    let sim = corpus(21, 3, 4);
    let (timelines, _) = reconstruct_all(&sim.events, &cfg);
    for (t, truth) in timelines.iter().zip(&sim.truth.sessions) {
        assert_eq!((t.user_id, t.session_id), (truth.user_id, truth.session_id));
        let domains = time_accounting(t, UrlLevel::Domain);
        let subs = time_accounting(t, UrlLevel::Subdomain);
        // plaintext lets us group subdomain keys by their parent domain
        let parent: std::collections::HashMap<String, String> = truth
            .loads
            .iter()
            .map(|l| (l.digest.subdomain_hash.clone(), l.digest.domain_hash.clone()))
            .collect();
        for d in &domains {
            let children: Vec<_> = subs.iter().filter(|s| parent[&s.key] == d.key).collect();
            assert_eq!(d.load_count, children.iter().map(|s| s.load_count).sum::<u64>());
            assert!(d.loaded_ms <= children.iter().map(|s| s.loaded_ms).sum::<i64>());
            assert!(d.loaded_ms >= children.iter().map(|s| s.loaded_ms).max().unwrap());
        }
    }
}

#[test]
fn display_time_fits_in_focused_time() {
    let cfg = ReconstructionConfig::default();
    let sim = corpus(22, 4, 3);
    let (timelines, _) = reconstruct_all(&sim.events, &cfg);
    for t in &timelines {
        let display: i64 = time_accounting(t, UrlLevel::Full).iter().map(|a| a.display_ms).sum();
        assert!(display <= browselog_core::analytics::focused_time(t));
    }
}

#[test]
fn parallel_usage_is_monotone() {
    let (timelines, _) = reconstruct_all(&corpus(23, 5, 3).events, &ReconstructionConfig::default());
    let f = parallel_usage(&merged_profile(&timelines), &(1..=20).collect::<Vec<_>>()).unwrap();
    assert_eq!(f[0].windows, 1.0);
    for w in f.windows(2) {
        assert!(w[1].tabs <= w[0].tabs && w[1].windows <= w[0].windows);
    }
}

#[test]
fn cause_histogram_follows_generator_weights() {
    let cfg = ScenarioConfig { seed: 31, users: 10, sessions_per_user: 10, ..Default::default() };
    let sim = generate(&cfg).unwrap();
    let h = cause_histogram(&sim.events);
    let total: u64 = h.loads.values().map(|c| c.count).sum();
    let wsum: f64 = cfg.cause_weights.iter().sum();
    let mut chi2 = 0.0;
    for (i, w) in cfg.cause_weights.iter().enumerate() {
        let expected = total as f64 * w / wsum;
        let observed = h.loads.get(&(i as u8 + 1)).map_or(0, |c| c.count) as f64;
        chi2 += (observed - expected).powi(2) / expected;
    }
    // 8 degrees of freedom; 26.12 is the 0.999 quantile
    assert!(chi2 < 26.12, "chi2 = {chi2} over {total} loads");
    let freq: f64 = h.loads.values().map(|c| c.frequency).sum();
    assert!((freq - 1.0).abs() < 1e-9);
    let vis = sim
        .events
        .iter()
        .filter(|e| matches!(e, EventRecord::Browsing(b) if b.event_id == BrowsingEventId::PageVisible))
        .count() as u64;
    assert_eq!(h.visibility.values().map(|c| c.count).sum::<u64>(), vis);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    /// Whatever is lost, reconstruction never fails on sessions that kept
    /// their start, and every interval stays nested and inside the session.
    #[test]
    fn lossy_streams_keep_invariants(seed in 0u64..1000, p_end in 0.0f64..1.0, p_drop in 0.0f64..0.2) {
        let sim = corpus(seed, 2, 2);
        let (events, _) = inject_faults(&sim.events, &FaultConfig { drop_session_end_prob: p_end, drop_random_event_prob: p_drop }, seed);
        let (timelines, _) = reconstruct_all(&events, &ReconstructionConfig::default());
        for t in &timelines {
            let frame = t.frame();
            for l in &t.loads {
                prop_assert!(frame.contains_span(&l.span()));
            }
            for v in &t.visible {
                prop_assert!(frame.contains_span(&v.span()));
                if let Some(l) = v.load_id.and_then(|id| t.load(id)) {
                    prop_assert!(l.span().contains_span(&v.span()));
                }
            }
            for w in &t.windows {
                prop_assert!(frame.contains_span(&w.span()));
                let vis: Vec<_> = t.visible.iter().filter(|v| v.window_id == w.window_id).map(|v| v.span()).collect();
                let union: SpanSet = vis.iter().copied().collect();
                prop_assert_eq!(union.measure(), vis.iter().map(|s| s.len()).sum::<i64>(), "overlapping visible pages");
            }
            for i in t.inactive.iter().chain(&t.implicit_inactive) {
                prop_assert!(frame.contains_span(&i.span()));
            }
            for a in time_accounting(t, UrlLevel::Path) {
                prop_assert!(a.viewing_ms <= a.display_ms && a.display_ms <= a.loaded_ms);
            }
        }
    }
}
