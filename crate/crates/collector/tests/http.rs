use std::collections::HashSet;
use std::sync::Arc;

use browselog_collector::{serve, Collector, CollectorConfig, IdKind, TOKEN_HEADER};
use browselog_core::event::{encode, EventRecord};
use browselog_core::simulator::{generate, ScenarioConfig};
use browselog_core::store::EventFilter;

async fn start(c: Arc<Collector>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, c));
    format!("http://{addr}")
}

fn events() -> Vec<EventRecord> {
    generate(&ScenarioConfig { seed: 8, users: 1, sessions_per_user: 2, ..Default::default() }).unwrap().events
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn routes_and_status_codes() {
    let c = Arc::new(Collector::in_memory(CollectorConfig::default()));
    let base = start(c.clone()).await;
    let http = reqwest::Client::new();
    let evs = events();
    for e in &evs {
        let r = http.post(format!("{base}{}", e.family().route())).body(encode(e)).send().await.unwrap();
        assert_eq!(r.status().as_u16(), 204);
        assert!(r.bytes().await.unwrap().is_empty());
    }
    let b = evs.iter().find(|e| e.event_code() == 400).unwrap();
    let r = http.post(format!("{base}/log/window")).body(encode(b)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 409);
    let r = http.post(format!("{base}/log/browsing")).body("[]").send().await.unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let r = http.post(format!("{base}/log/other")).body(encode(b)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 404);
    let r = http.get(format!("{base}/log/browsing")).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 405);

    assert_eq!(c.store().len(), evs.len());
    let core = evs[0].core();
    let got = c.store().query(&EventFilter::session(core.user_id, core.session_id)).unwrap();
    let want: Vec<_> = evs.iter().filter(|e| e.core().session_id == core.session_id).collect();
    assert_eq!(got.len(), want.len());
    for e in want {
        assert_eq!(got.iter().filter(|g| *g == e).count(), 1);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn id_route_returns_fresh_ids() {
    let c = Arc::new(Collector::in_memory(CollectorConfig { token: Some("t".into()), fsync: false }));
    let base = start(c.clone()).await;
    let http = reqwest::Client::new();
    let r = http.post(format!("{base}/id/user")).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 403);
    let mut seen = HashSet::new();
    for _ in 0..50 {
        let r = http.post(format!("{base}/id/session")).header(TOKEN_HEADER, "t").send().await.unwrap();
        assert_eq!(r.status().as_u16(), 200);
        let v: serde_json::Value = serde_json::from_slice(&r.bytes().await.unwrap()).unwrap();
        let id = v["id"].as_u64().unwrap();
        assert!(c.ids().contains(IdKind::Session, id));
        assert!(seen.insert(id));
    }
    let r = http.post(format!("{base}/id/tab")).header(TOKEN_HEADER, "t").send().await.unwrap();
    assert_eq!(r.status().as_u16(), 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients_lose_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let c = Arc::new(Collector::open_dir(dir.path(), CollectorConfig::default()).unwrap());
    let base = start(c.clone()).await;
    let evs = Arc::new(events());
    let clients = 8;
    let mut tasks = Vec::new();
    for k in 0..clients {
        let (base, evs) = (base.clone(), evs.clone());
        tasks.push(tokio::spawn(async move {
            let http = reqwest::Client::new();
            for e in evs.iter() {
                let mut e = e.clone();
                e.core_mut().user_id += 1000 * (k + 1);
                let r = http.post(format!("{base}{}", e.family().route())).body(encode(&e)).send().await.unwrap();
                assert_eq!(r.status().as_u16(), 204);
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    assert_eq!(c.store().len(), evs.len() * clients as usize);
    drop(c);
    let reopened = Collector::open_dir(dir.path(), CollectorConfig::default()).unwrap();
    assert_eq!(reopened.store().len(), evs.len() * clients as usize);
    assert_eq!(reopened.ids().len(IdKind::User), clients as usize);
}
