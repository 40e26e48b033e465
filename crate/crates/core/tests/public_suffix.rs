//! Registrable-domain extraction against a direct reading of the bundled list.

use std::collections::HashSet;

use browselog_core::url_privacy::{registrable_domain, PUBLIC_SUFFIX_SNAPSHOT};
use proptest::prelude::*;

struct Rules {
    normal: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
    ascii: Vec<String>,
}

fn rules() -> &'static Rules {
    static RULES: std::sync::OnceLock<Rules> = std::sync::OnceLock::new();
    RULES.get_or_init(parse)
}

fn parse() -> Rules {
    let mut r = Rules { normal: HashSet::new(), wildcard: HashSet::new(), exception: HashSet::new(), ascii: Vec::new() };
    for line in PUBLIC_SUFFIX_SNAPSHOT.lines() {
        let Some(rule) = line.split_whitespace().next() else { continue };
        if rule.starts_with("//") || !rule.is_ascii() {
            continue;
        }
        if let Some(rest) = rule.strip_prefix('!') {
            r.exception.insert(rest.to_owned());
        } else if let Some(rest) = rule.strip_prefix("*.") {
            r.wildcard.insert(rest.to_owned());
            r.ascii.push(rest.to_owned());
        } else {
            r.normal.insert(rule.to_owned());
            r.ascii.push(rule.to_owned());
        }
    }
    r.ascii.sort();
    r
}

/// Longest matching rule wins, exceptions beat everything, unlisted TLDs
/// act as one-label suffixes.
fn oracle(r: &Rules, host: &str) -> String {
    let labels: Vec<&str> = host.split('.').collect();
    let n = labels.len();
    let mut suffix_len = 1;
    for i in 0..n {
        let cand = labels[i..].join(".");
        if r.exception.contains(&cand) {
            suffix_len = n - i - 1;
            break;
        }
        let len = n - i;
        if r.normal.contains(&cand) {
            suffix_len = suffix_len.max(len);
        }
        if i + 1 < n && r.wildcard.contains(&labels[i + 1..].join(".")) {
            suffix_len = suffix_len.max(len);
        }
    }
    if suffix_len >= n {
        host.to_owned()
    } else {
        labels[n - suffix_len - 1..].join(".")
    }
}

#[test]
fn list_shape() {
    let r = rules();
    assert!(r.normal.contains("co.uk"));
    assert!(r.normal.contains("github.io"));
    assert!(r.wildcard.contains("ck") && r.exception.contains("www.ck"));
    assert!(r.ascii.len() > 5_000);
}

#[test]
fn hand_picked_hosts() {
    let r = rules();
    for host in [
        "example.org",
        "topic.example.org",
        "a.b.example.co.uk",
        "co.uk",
        "www.ck",
        "x.www.ck",
        "foo.bar.ck",
        "user.github.io",
        "deep.user.github.io",
        "localhost",
        "host.notarealtld",
    ] {
        assert_eq!(registrable_domain(host), oracle(r, host), "{host}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]
    #[test]
    fn random_hosts_under_listed_suffixes(idx in any::<prop::sample::Index>(), labels in prop::collection::vec("[a-z][a-z0-9]{0,6}", 0..3)) {
        let r = rules();
        let suffix = idx.get(&r.ascii);
        let mut host = labels.join(".");
        if !host.is_empty() {
            host.push('.');
        }
        host.push_str(suffix);
        prop_assert_eq!(registrable_domain(&host), oracle(r, &host), "{}", host);
    }
}
