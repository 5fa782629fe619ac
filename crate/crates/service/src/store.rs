//! Single-file JSON-lines journal. Every write appends the full current
//! value of one record; on load the last line per `(kind, id)` wins. The
//! file is rewritten with only live records once it has grown to more than
//! twice their number.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use souschef_core::{PantrySession, ProfileId, SessionId, TimerId, UserProfile};
use thiserror::Error;

use crate::timers::Timer;

/// Journals shorter than this are never compacted.
const COMPACT_MIN_LINES: usize = 256;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(id) = &self.id {
            write!(f, " (id {id})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Loaded {
    pub profiles: BTreeMap<ProfileId, UserProfile>,
    pub sessions: BTreeMap<SessionId, PantrySession>,
    pub timers: BTreeMap<TimerId, Timer>,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Profile { id: ProfileId, data: UserProfile },
    Session { id: SessionId, data: PantrySession },
    Timer { id: TimerId, data: Timer },
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RecordRef<'a> {
    Profile { id: &'a ProfileId, data: &'a UserProfile },
    Session { id: &'a SessionId, data: &'a PantrySession },
    Timer { id: &'a TimerId, data: &'a Timer },
}

impl RecordRef<'_> {
    fn key(&self) -> (&'static str, String) {
        match self {
            RecordRef::Profile { id, .. } => ("profile", id.to_string()),
            RecordRef::Session { id, .. } => ("session", id.to_string()),
            RecordRef::Timer { id, .. } => ("timer", id.to_string()),
        }
    }
}

struct Journal {
    file: File,
    lines: usize,
    /// Latest encoded line per record, used for compaction.
    live: BTreeMap<(&'static str, String), String>,
}

pub struct Store {
    path: PathBuf,
    journal: Mutex<Journal>,
}

impl Store {
    /// Opens (creating if needed) the journal at `path` and loads it.
    /// Undecodable lines are reported in [`Loaded::errors`] and skipped.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Loaded), StoreError> {
        let path = path.into();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let mut loaded = Loaded::default();
        let mut live = BTreeMap::new();
        let mut lines = 0;
        match File::open(&path) {
            Ok(file) => {
                for (idx, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(io_err)?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    lines += 1;
                    match serde_json::from_str::<Record>(&line) {
                        Ok(record) => {
                            let key = apply(&mut loaded, record);
                            live.insert(key, line);
                        }
                        Err(e) => loaded.errors.push(RecordError {
                            line: idx + 1,
                            id: salvage_id(&line),
                            message: e.to_string(),
                        }),
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(e)),
        }
        for err in &loaded.errors {
            tracing::error!(store = %path.display(), "skipping corrupt record at {err}");
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        let store = Store {
            path,
            journal: Mutex::new(Journal { file, lines, live }),
        };
        Ok((store, loaded))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn put_profile(&self, id: &ProfileId, profile: &UserProfile) -> Result<(), StoreError> {
        self.append(RecordRef::Profile { id, data: profile })
    }

    pub fn put_session(&self, session: &PantrySession) -> Result<(), StoreError> {
        self.append(RecordRef::Session {
            id: &session.id,
            data: session,
        })
    }

    pub fn put_timer(&self, timer: &Timer) -> Result<(), StoreError> {
        self.append(RecordRef::Timer {
            id: &timer.id,
            data: timer,
        })
    }

    fn append(&self, record: RecordRef<'_>) -> Result<(), StoreError> {
        let line = serde_json::to_string(&record)?;
        let mut journal = self.journal.lock().expect("journal lock poisoned");
        writeln!(journal.file, "{line}")
            .and_then(|_| journal.file.flush())
            .map_err(|source| self.io_err(source))?;
        journal.lines += 1;
        journal.live.insert(record.key(), line);
        if journal.lines >= COMPACT_MIN_LINES && journal.lines > 2 * journal.live.len() {
            self.compact_locked(&mut journal)?;
        }
        Ok(())
    }

    /// Rewrites the journal with one line per live record.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut journal = self.journal.lock().expect("journal lock poisoned");
        self.compact_locked(&mut journal)
    }

    fn compact_locked(&self, journal: &mut Journal) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("compact.tmp");
        let write = || -> io::Result<File> {
            let mut out = File::create(&tmp)?;
            for line in journal.live.values() {
                writeln!(out, "{line}")?;
            }
            out.sync_all()?;
            fs::rename(&tmp, &self.path)?;
            OpenOptions::new().append(true).open(&self.path)
        };
        journal.file = write().map_err(|source| self.io_err(source))?;
        journal.lines = journal.live.len();
        tracing::debug!(records = journal.lines, "compacted store");
        Ok(())
    }

    pub fn line_count(&self) -> usize {
        self.journal.lock().expect("journal lock poisoned").lines
    }

    fn io_err(&self, source: io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }
}

fn apply(loaded: &mut Loaded, record: Record) -> (&'static str, String) {
    match record {
        Record::Profile { id, data } => {
            let key = ("profile", id.to_string());
            loaded.profiles.insert(id, data);
            key
        }
        Record::Session { id, data } => {
            let key = ("session", id.to_string());
            loaded.sessions.insert(id, data);
            key
        }
        Record::Timer { id, data } => {
            let key = ("timer", id.to_string());
            loaded.timers.insert(id, data);
            key
        }
    }
}

/// Best-effort record id from a line that failed to decode.
fn salvage_id(line: &str) -> Option<String> {
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(line) {
        if let Some(id) = value.get("id").and_then(|v| v.as_str()) {
            return Some(id.to_string());
        }
    }
    let start = line.find("\"id\":\"")? + 6;
    let len = line[start..].find('"')?;
    Some(line[start..start + len].to_string())
}
