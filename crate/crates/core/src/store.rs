//! Append-only event persistence, one log per event family.
//!
//! Appends to a family are serialized by a per-family writer lock and become
//! visible to readers only after the backend has persisted them, so readers
//! always observe a consistent prefix. Query results are ordered by client
//! time, then family, then arrival order within the family; this order is
//! reproduced exactly by an export/import round trip.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventRecord, Family, Millis, Violation};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed line: {reason}")]
    MalformedLine { file: PathBuf, line: usize, reason: String },
    #[error("record rejected: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("invalid filter: time range start {0} after end {1}")]
    InvalidFilter(Millis, Millis),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

/// An event as held by the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredEvent {
    /// Arrival position within the family log.
    #[serde(skip)]
    pub seq: u64,
    /// Server receive time, kept for diagnostics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_ms: Option<Millis>,
    pub event: EventRecord,
}

/// Selects events by identity, family and inclusive client-time range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    pub user_id: Option<u64>,
    pub session_id: Option<u64>,
    pub window_id: Option<u64>,
    pub family: Option<Family>,
    pub time_range: Option<(Millis, Millis)>,
}

impl EventFilter {
    pub fn all() -> EventFilter {
        EventFilter::default()
    }

    pub fn session(user_id: u64, session_id: u64) -> EventFilter {
        EventFilter { user_id: Some(user_id), session_id: Some(session_id), ..Default::default() }
    }

    pub fn matches(&self, e: &EventRecord) -> bool {
        let c = e.core();
        self.user_id.is_none_or(|u| u == c.user_id)
            && self.session_id.is_none_or(|s| s == c.session_id)
            && self.window_id.is_none_or(|w| w == c.window_id)
            && self.family.is_none_or(|f| f == e.family())
            && self.time_range.is_none_or(|(a, b)| a <= c.time && c.time <= b)
    }

    fn check(&self) -> Result<(), StoreError> {
        match self.time_range {
            Some((a, b)) if a > b => Err(StoreError::InvalidFilter(a, b)),
            _ => Ok(()),
        }
    }
}

/// Durable side of the store.
pub trait Backend: Send + Sync {
    /// Persists one entry; must not return before the entry is durable.
    fn persist(&self, family: Family, entry: &StoredEvent) -> Result<(), StoreError>;
    /// Reloads every persisted entry, per family in arrival order.
    fn recover(&self) -> Result<[Vec<StoredEvent>; 3], StoreError>;
}

/// Keeps nothing beyond the in-memory index.
#[derive(Debug, Default)]
pub struct MemoryBackend;

impl Backend for MemoryBackend {
    fn persist(&self, _: Family, _: &StoredEvent) -> Result<(), StoreError> {
        Ok(())
    }

    fn recover(&self) -> Result<[Vec<StoredEvent>; 3], StoreError> {
        Ok([Vec::new(), Vec::new(), Vec::new()])
    }
}

/// One JSON-Lines log per family under a data directory, each line holding
/// the event and its receive time. A torn final line (no trailing newline)
/// left by a crash is discarded on recovery.
#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    files: [Mutex<File>; 3],
    fsync: bool,
}

impl FileBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<FileBackend, StoreError> {
        FileBackend::open_with(dir, true)
    }

    /// With `fsync` off, appends are flushed to the OS but not synced.
    pub fn open_with(dir: impl Into<PathBuf>, fsync: bool) -> Result<FileBackend, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let open = |f: Family| -> Result<Mutex<File>, StoreError> {
            let path = FileBackend::log_path(&dir, f);
            truncate_torn_tail(&path)?;
            let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
            Ok(Mutex::new(file))
        };
        let files = [open(Family::Window)?, open(Family::Session)?, open(Family::Browsing)?];
        Ok(FileBackend { dir, files, fsync })
    }

    fn log_path(dir: &Path, family: Family) -> PathBuf {
        dir.join(format!("{}.log", family.as_str()))
    }
}

fn truncate_torn_tail(path: &Path) -> Result<(), StoreError> {
    let Ok(bytes) = fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

impl Backend for FileBackend {
    fn persist(&self, family: Family, entry: &StoredEvent) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| StoreError::Storage(e.to_string()))?;
        line.push(b'\n');
        let path = FileBackend::log_path(&self.dir, family);
        let mut file = self.files[family as usize].lock().map_err(|_| StoreError::Storage("poisoned log lock".into()))?;
        file.write_all(&line).map_err(io_err(&path))?;
        if self.fsync {
            file.sync_data().map_err(io_err(&path))?;
        }
        Ok(())
    }

    fn recover(&self) -> Result<[Vec<StoredEvent>; 3], StoreError> {
        let mut out: [Vec<StoredEvent>; 3] = Default::default();
        for family in Family::ALL {
            let path = FileBackend::log_path(&self.dir, family);
            let file = File::open(&path).map_err(io_err(&path))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.is_empty() {
                    continue;
                }
                let mut entry: StoredEvent = serde_json::from_str(&line).map_err(|e| StoreError::MalformedLine {
                    file: path.clone(),
                    line: n + 1,
                    reason: e.to_string(),
                })?;
                entry.seq = out[family as usize].len() as u64;
                out[family as usize].push(entry);
            }
        }
        Ok(out)
    }
}

pub struct EventStore {
    backend: Box<dyn Backend>,
    writers: [Mutex<()>; 3],
    logs: [RwLock<Vec<StoredEvent>>; 3],
}

impl std::fmt::Debug for EventStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventStore").field("len", &self.len()).finish_non_exhaustive()
    }
}

impl EventStore {
    pub fn in_memory() -> EventStore {
        EventStore::with_backend(Box::new(MemoryBackend)).expect("memory backend cannot fail")
    }

    pub fn open_dir(dir: impl Into<PathBuf>) -> Result<EventStore, StoreError> {
        EventStore::with_backend(Box::new(FileBackend::open(dir)?))
    }

    pub fn with_backend(backend: Box<dyn Backend>) -> Result<EventStore, StoreError> {
        let [w, s, b] = backend.recover()?;
        Ok(EventStore {
            backend,
            writers: Default::default(),
            logs: [RwLock::new(w), RwLock::new(s), RwLock::new(b)],
        })
    }

    pub fn append(&self, record: EventRecord) -> Result<(), StoreError> {
        self.append_received(record, None)
    }

    /// Appends a validated record; durable before return.
    pub fn append_received(&self, record: EventRecord, received_ms: Option<Millis>) -> Result<(), StoreError> {
        record.validate().map_err(StoreError::Invalid)?;
        let family = record.family();
        let idx = family as usize;
        let _writer = self.writers[idx].lock().map_err(|_| StoreError::Storage("poisoned writer lock".into()))?;
        let seq = self.logs[idx].read().map_err(|_| StoreError::Storage("poisoned log".into()))?.len() as u64;
        let entry = StoredEvent { seq, received_ms, event: record };
        self.backend.persist(family, &entry)?;
        self.logs[idx].write().map_err(|_| StoreError::Storage("poisoned log".into()))?.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.logs.iter().map(|l| l.read().map(|v| v.len()).unwrap_or(0)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len_family(&self, family: Family) -> usize {
        self.logs[family as usize].read().map(|v| v.len()).unwrap_or(0)
    }

    /// Matching events ordered by (time, family, arrival).
    pub fn query(&self, filter: &EventFilter) -> Result<Vec<EventRecord>, StoreError> {
        Ok(self.query_stored(filter)?.into_iter().map(|s| s.event).collect())
    }

    pub fn query_stored(&self, filter: &EventFilter) -> Result<Vec<StoredEvent>, StoreError> {
        filter.check()?;
        let mut out: Vec<(Family, StoredEvent)> = Vec::new();
        for family in Family::ALL {
            if filter.family.is_some_and(|f| f != family) {
                continue;
            }
            let log = self.logs[family as usize].read().map_err(|_| StoreError::Storage("poisoned log".into()))?;
            out.extend(log.iter().filter(|s| filter.matches(&s.event)).map(|s| (family, s.clone())));
        }
        out.sort_by_key(|(f, s)| (s.event.time(), *f, s.seq));
        Ok(out.into_iter().map(|(_, s)| s).collect())
    }

    /// Distinct (user_id, session_id) pairs, sorted.
    pub fn session_keys(&self) -> Vec<(u64, u64)> {
        let mut keys: Vec<(u64, u64)> = Vec::new();
        for log in &self.logs {
            if let Ok(log) = log.read() {
                keys.extend(log.iter().map(|s| (s.event.core().user_id, s.event.core().session_id)));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// Writes `window.jsonl`, `session.jsonl` and `browsing.jsonl`, one
    /// event per line in arrival order.
    pub fn export(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for family in Family::ALL {
            let path = dir.join(family.file_name());
            let log = self.logs[family as usize].read().map_err(|_| StoreError::Storage("poisoned log".into()))?;
            let mut buf = Vec::new();
            for s in log.iter() {
                buf.extend_from_slice(&crate::event::encode(&s.event));
                buf.push(b'\n');
            }
            fs::write(&path, buf).map_err(io_err(&path))?;
        }
        Ok(())
    }

    /// Appends every event of an exported dataset. Nothing is appended unless
    /// all three files parse and validate.
    pub fn import(&self, dir: &Path) -> Result<usize, StoreError> {
        let batches = read_dataset(dir)?;
        let mut n = 0;
        for batch in batches {
            for record in batch {
                self.append(record)?;
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Parses an exported dataset directory, per family in file order.
pub fn read_dataset(dir: &Path) -> Result<[Vec<EventRecord>; 3], StoreError> {
    let mut out: [Vec<EventRecord>; 3] = Default::default();
    for family in Family::ALL {
        let path = dir.join(family.file_name());
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| StoreError::MalformedLine { file: path.clone(), line: n + 1, reason };
            let record = crate::event::decode(line.as_bytes()).map_err(|e| malformed(e.to_string()))?;
            if record.family() != family {
                return Err(malformed(format!("{} event in {}", record.family(), family.file_name())));
            }
            record.validate().map_err(|v| malformed(format!("{v:?}")))?;
            out[family as usize].push(record);
        }
    }
    Ok(out)
}

/// Writes events to a dataset directory in the export layout, preserving the
/// given order within each family.
pub fn write_dataset<'a>(dir: &Path, events: impl IntoIterator<Item = &'a EventRecord>) -> Result<(), StoreError> {
    let store = EventStore::in_memory();
    for e in events {
        store.append(e.clone())?;
    }
    store.export(dir)
}
