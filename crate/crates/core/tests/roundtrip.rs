mod support;

use browselog_core::analytics::time_accounting;
use browselog_core::navigation::build_navigation_tree;
use browselog_core::reconstruct::{reconstruct, ReconstructionConfig};
use browselog_core::simulator::{generate, ScenarioConfig};
use browselog_core::url_privacy::UrlLevel;

fn corpus(seed: u64) -> browselog_core::simulator::Simulation {
    generate(&ScenarioConfig { seed, users: 3, sessions_per_user: 2, ..Default::default() }).unwrap()
}

#[test]
fn clean_streams_reproduce_the_trajectory() {
    let cfg = ReconstructionConfig::default();
    for seed in 0..10 {
        let sim = corpus(seed);
        for truth in &sim.truth.sessions {
            let events = sim.session_events(truth.user_id, truth.session_id);
            let t = reconstruct(&events, &cfg).unwrap();
            let tree = build_navigation_tree(&t);
            if let Err(e) = support::compare(truth, &t, &tree, cfg.debounce_ms) {
                panic!("seed {seed} user {} session {}: {e}", truth.user_id, truth.session_id);
            }
        }
    }
}

#[test]
fn arrival_order_does_not_matter() {
    let cfg = ReconstructionConfig::default();
    let sim = corpus(42);
    let truth = &sim.truth.sessions[0];
    let events = sim.session_events(truth.user_id, truth.session_id);
    let expected = reconstruct(&events, &cfg).unwrap();
    let mut reversed = events.clone();
    reversed.reverse();
    assert_eq!(reconstruct(&reversed, &cfg).unwrap(), expected);
}

#[test]
fn time_accounting_matches_millisecond_sweep() {
    let cfg = ReconstructionConfig::default();
    for seed in 100..104 {
        let sim = corpus(seed);
        for truth in &sim.truth.sessions {
            let t = reconstruct(&sim.session_events(truth.user_id, truth.session_id), &cfg).unwrap();
            for level in UrlLevel::ALL {
                let got = time_accounting(&t, level);
                let want = support::sweep_accounting(truth, level, cfg.debounce_ms);
                assert_eq!(got.len(), want.len());
                for acc in &got {
                    let w = want[&acc.key];
                    assert_eq!(
                        (acc.loaded_ms, acc.display_ms, acc.viewing_ms, acc.load_count),
                        (w.loaded, w.display, w.viewing, w.loads),
                        "seed {seed} level {level:?}"
                    );
                    assert!(acc.viewing_ms <= acc.display_ms && acc.display_ms <= acc.loaded_ms);
                }
            }
        }
    }
}

#[test]
fn random_corpus_exercises_the_semantics() {
    let cfg = ReconstructionConfig::default();
    let (mut multi_window, mut background, mut flicker, mut minimized, mut inactive, mut switches, mut new_tab) =
        (0, 0, 0, 0, 0, 0, 0);
    for seed in 0..10 {
        let sim = corpus(seed);
        for truth in &sim.truth.sessions {
            let t = reconstruct(&sim.session_events(truth.user_id, truth.session_id), &cfg).unwrap();
            multi_window += usize::from(t.profile.windows.max() >= 2);
            background += t.windows.iter().map(|w| w.background.len()).sum::<usize>();
            minimized += t.windows.iter().map(|w| w.minimized.spans().len()).sum::<usize>();
            inactive += t.inactive.len();
            switches += t.tab_switches as usize;
            new_tab += build_navigation_tree(&t)
                .nodes
                .iter()
                .filter(|n| n.edge == browselog_core::navigation::EdgeKind::NewTab)
                .count();
            for w in &truth.windows {
                let gaps = w.focused.windows(2).filter(|p| p[1].start - p[0].end < cfg.debounce_ms).count();
                flicker += gaps;
            }
        }
    }
    for (what, n) in [
        ("multi-window sessions", multi_window),
        ("background spells", background),
        ("short focus gaps", flicker),
        ("minimized spells", minimized),
        ("inactive spells", inactive),
        ("tab switches", switches),
        ("new-tab edges", new_tab),
    ] {
        assert!(n > 0, "corpus has no {what}");
    }
}
