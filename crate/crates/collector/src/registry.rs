//! Persistent sets of identifiers handed out or seen by the collector.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::CollectorError;

/// Largest id plus one. Kept within the range a JavaScript number holds exactly.
pub const ID_LIMIT: u64 = 1 << 53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdKind {
    User,
    Window,
    Session,
}

impl IdKind {
    pub const ALL: [IdKind; 3] = [IdKind::User, IdKind::Window, IdKind::Session];

    pub fn as_str(self) -> &'static str {
        match self {
            IdKind::User => "user",
            IdKind::Window => "window",
            IdKind::Session => "session",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for IdKind {
    type Err = CollectorError;

    fn from_str(s: &str) -> Result<IdKind, CollectorError> {
        IdKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CollectorError::UnknownIdKind(s.to_owned()))
    }
}

struct Inner {
    sets: [HashSet<u64>; 3],
    log: Option<(PathBuf, File)>,
}

/// Registered ids are never removed. One lock covers the sets and the log
/// so every registration is atomic.
pub struct IdRegistry {
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for IdRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let counts = IdKind::ALL.map(|k| self.len(k));
        f.debug_struct("IdRegistry").field("users", &counts[0]).field("windows", &counts[1]).field("sessions", &counts[2]).finish()
    }
}

impl IdRegistry {
    pub fn in_memory() -> IdRegistry {
        IdRegistry { inner: Mutex::new(Inner { sets: Default::default(), log: None }) }
    }

    /// Loads `path` (lines of `<kind> <id>`) and appends new ids to it.
    pub fn open(path: impl Into<PathBuf>) -> Result<IdRegistry, CollectorError> {
        let path = path.into();
        let io = |source| CollectorError::Io { path: path.clone(), source };
        let mut sets: [HashSet<u64>; 3] = Default::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let (kind, id) = parse_line(&line).ok_or_else(|| CollectorError::MalformedRegistry {
                    path: path.clone(),
                    line: n + 1,
                })?;
                sets[kind.index()].insert(id);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(IdRegistry { inner: Mutex::new(Inner { sets, log: Some((path, file)) }) })
    }

    pub fn contains(&self, kind: IdKind, id: u64) -> bool {
        self.lock().sets[kind.index()].contains(&id)
    }

    pub fn len(&self, kind: IdKind) -> usize {
        self.lock().sets[kind.index()].len()
    }

    pub fn ids(&self, kind: IdKind) -> Vec<u64> {
        let mut v: Vec<u64> = self.lock().sets[kind.index()].iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Records an id; false when it was already known.
    pub fn register(&self, kind: IdKind, id: u64) -> Result<bool, CollectorError> {
        let mut inner = self.lock();
        register_locked(&mut inner, kind, id)
    }

    /// Draws candidates until one is unregistered, then registers it.
    pub fn allocate_with(&self, kind: IdKind, mut draw: impl FnMut() -> u64) -> Result<u64, CollectorError> {
        let mut inner = self.lock();
        loop {
            let id = draw();
            if id == 0 || id >= ID_LIMIT {
                continue;
            }
            if register_locked(&mut inner, kind, id)? {
                return Ok(id);
            }
        }
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.lock().log.as_ref().map(|(p, _)| p.clone())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn register_locked(inner: &mut Inner, kind: IdKind, id: u64) -> Result<bool, CollectorError> {
    if inner.sets[kind.index()].contains(&id) {
        return Ok(false);
    }
    if let Some((path, file)) = &mut inner.log {
        writeln!(file, "{} {id}", kind.as_str()).map_err(|source| CollectorError::Io { path: path.clone(), source })?;
    }
    inner.sets[kind.index()].insert(id);
    Ok(true)
}

fn parse_line(line: &str) -> Option<(IdKind, u64)> {
    let (kind, id) = line.split_once(' ')?;
    Some((kind.parse().ok()?, id.trim().parse().ok()?))
}

pub(crate) fn registry_path(dir: &Path) -> PathBuf {
    dir.join("ids.log")
}
