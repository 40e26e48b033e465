//! Client-side URL anonymization.
//!
//! A URL is split into four nested levels (registrable domain, full host,
//! host + path, host + path + query) and each level is replaced by the SHA-1
//! digest of its UTF-8 bytes, spelled as 40 lowercase hex characters. The
//! digest is a pure renaming: grouping by digest equals grouping by the
//! plaintext level. Plain SHA-1 of low-entropy strings can be reversed with a
//! dictionary; no salt is applied.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

/// Pinned public-suffix list snapshot (ICANN and private sections). The file
/// is distributed under the MPL-2.0.
pub const PUBLIC_SUFFIX_SNAPSHOT: &str = include_str!("../data/public_suffix_list.dat");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrlLevel {
    Domain,
    Subdomain,
    Path,
    Full,
}

impl UrlLevel {
    pub const ALL: [UrlLevel; 4] = [UrlLevel::Domain, UrlLevel::Subdomain, UrlLevel::Path, UrlLevel::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            UrlLevel::Domain => "domain",
            UrlLevel::Subdomain => "subdomain",
            UrlLevel::Path => "path",
            UrlLevel::Full => "full",
        }
    }
}

impl std::str::FromStr for UrlLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        UrlLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown URL level `{s}` (expected domain, subdomain, path or full)"))
    }
}

/// Plaintext URL levels. Never leaves the client.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UrlLevels {
    pub domain: String,
    pub subdomain: String,
    pub path: String,
    pub full: String,
}

impl UrlLevels {
    pub fn get(&self, level: UrlLevel) -> &str {
        match level {
            UrlLevel::Domain => &self.domain,
            UrlLevel::Subdomain => &self.subdomain,
            UrlLevel::Path => &self.path,
            UrlLevel::Full => &self.full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UrlDigest {
    pub domain_hash: String,
    pub subdomain_hash: String,
    pub path_hash: String,
    pub full_hash: String,
}

impl UrlDigest {
    pub fn get(&self, level: UrlLevel) -> &str {
        match level {
            UrlLevel::Domain => &self.domain_hash,
            UrlLevel::Subdomain => &self.subdomain_hash,
            UrlLevel::Path => &self.path_hash,
            UrlLevel::Full => &self.full_hash,
        }
    }

    pub fn fields(&self) -> [(&'static str, &str); 4] {
        [
            ("domain_hash", &self.domain_hash),
            ("subdomain_hash", &self.subdomain_hash),
            ("path_hash", &self.path_hash),
            ("full_hash", &self.full_hash),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrlError {
    #[error("invalid URL `{url}`: {reason}")]
    InvalidUrl { url: String, reason: String },
}

#[derive(Debug, Default)]
struct RuleNode {
    children: std::collections::HashMap<String, RuleNode>,
    /// A rule ends at this node.
    rule: bool,
    /// `*.` rule below this node.
    wildcard: bool,
    /// `!` rule ending at this node.
    exception: bool,
}

/// Rules keyed by labels from the right (`co.uk` is `uk` -> `co`).
#[derive(Debug, Default)]
struct SuffixTrie {
    root: RuleNode,
}

impl SuffixTrie {
    fn parse(text: &str) -> SuffixTrie {
        let mut trie = SuffixTrie::default();
        for line in text.lines() {
            let Some(rule) = line.split_whitespace().next() else { continue };
            if rule.starts_with("//") {
                continue;
            }
            let (rule, exception) = match rule.strip_prefix('!') {
                Some(r) => (r, true),
                None => (rule, false),
            };
            let (rule, wildcard) = match rule.strip_prefix("*.") {
                Some(r) => (r, true),
                None => (rule, false),
            };
            let ascii = if rule.is_ascii() {
                rule.to_ascii_lowercase()
            } else {
                match idna::domain_to_ascii(rule) {
                    Ok(a) => a,
                    Err(_) => continue,
                }
            };
            let mut node = &mut trie.root;
            for label in ascii.rsplit('.') {
                node = node.children.entry(label.to_owned()).or_default();
            }
            if exception {
                node.exception = true;
            } else if wildcard {
                node.wildcard = true;
            } else {
                node.rule = true;
            }
        }
        trie
    }

    /// Number of labels in the public suffix of `labels` (right to left).
    fn suffix_len(&self, host: &str) -> usize {
        let labels: Vec<&str> = host.rsplit('.').collect();
        // an unlisted top-level label is a suffix on its own
        let mut best = 1;
        let mut node = &self.root;
        for (depth, label) in labels.iter().enumerate() {
            if node.wildcard {
                best = best.max(depth + 1);
            }
            let Some(next) = node.children.get(*label) else { break };
            node = next;
            if node.exception {
                return depth;
            }
            if node.rule {
                best = best.max(depth + 1);
            }
        }
        best
    }
}

fn suffix_trie() -> &'static SuffixTrie {
    static TRIE: OnceLock<SuffixTrie> = OnceLock::new();
    TRIE.get_or_init(|| SuffixTrie::parse(PUBLIC_SUFFIX_SNAPSHOT))
}

/// Registrable domain (public suffix plus one label) of a lowercase host name.
/// Hosts that are themselves public suffixes are returned unchanged. IP
/// literals are not host names and must not be passed here.
pub fn registrable_domain(host: &str) -> String {
    let n = host.split('.').count();
    let suffix = suffix_trie().suffix_len(host);
    if suffix >= n {
        return host.to_owned();
    }
    let labels: Vec<&str> = host.split('.').collect();
    labels[n - suffix - 1..].join(".")
}

/// Splits an absolute http(s) URL into its four levels. The scheme, port,
/// userinfo and fragment are dropped.
pub fn decompose(raw: &str) -> Result<UrlLevels, UrlError> {
    let invalid = |reason: &str| UrlError::InvalidUrl { url: raw.to_owned(), reason: reason.to_owned() };
    let parsed = url::Url::parse(raw).map_err(|e| invalid(&e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(invalid("unsupported scheme"));
    }
    let host = match parsed.host() {
        Some(url::Host::Domain(d)) => d.trim_end_matches('.').to_owned(),
        Some(url::Host::Ipv4(ip)) => ip.to_string(),
        Some(url::Host::Ipv6(ip)) => format!("[{ip}]"),
        None => return Err(invalid("no host")),
    };
    if host.is_empty() {
        return Err(invalid("no host"));
    }
    let domain = match parsed.host() {
        Some(url::Host::Domain(_)) => registrable_domain(&host),
        _ => host.clone(),
    };
    let path = format!("{host}{}", parsed.path());
    let full = match parsed.query() {
        Some(q) if !q.is_empty() => format!("{path}?{q}"),
        _ => path.clone(),
    };
    Ok(UrlLevels { domain, subdomain: host, path, full })
}

pub fn sha1_hex(bytes: &[u8]) -> String {
    let out = Sha1::digest(bytes);
    let mut s = String::with_capacity(40);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn digest(levels: &UrlLevels) -> UrlDigest {
    UrlDigest {
        domain_hash: sha1_hex(levels.domain.as_bytes()),
        subdomain_hash: sha1_hex(levels.subdomain.as_bytes()),
        path_hash: sha1_hex(levels.path.as_bytes()),
        full_hash: sha1_hex(levels.full.as_bytes()),
    }
}

pub fn hash_url(raw: &str) -> Result<UrlDigest, UrlError> {
    decompose(raw).map(|levels| digest(&levels))
}

/// True for exactly 40 lowercase hex characters.
pub fn is_canonical_digest(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}
