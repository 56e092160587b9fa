//! On-disk layout of one session: `events.jsonl`, `snapshot.json` and
//! `datasets/`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Event, SessionError, SessionState, SCHEMA_VERSION};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DATASETS_DIR: &str = "datasets";

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    schema_version: u32,
    last_seq: u64,
    state: SessionState,
}

#[derive(Debug, Clone)]
pub struct SessionDir {
    root: PathBuf,
}

impl SessionDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        fs::create_dir_all(root.join(DATASETS_DIR))?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        if !root.join(EVENTS_FILE).is_file() {
            return Err(SessionError::Io(format!("{} has no event log", root.display())));
        }
        fs::create_dir_all(root.join(DATASETS_DIR))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn datasets_dir(&self) -> PathBuf {
        self.root.join(DATASETS_DIR)
    }

    pub fn append_event(&self, ev: &Event) -> Result<(), SessionError> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join(EVENTS_FILE))?;
        let mut line = serde_json::to_string(ev).map_err(|e| SessionError::Io(e.to_string()))?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn write_snapshot(&self, state: &SessionState, last_seq: u64) -> Result<(), SessionError> {
        let snap = Snapshot {
            schema_version: SCHEMA_VERSION,
            last_seq,
            state: state.clone(),
        };
        let tmp = self.root.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, &snap).map_err(|e| SessionError::Io(e.to_string()))?;
        f.flush()?;
        fs::rename(tmp, self.root.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn read_events(&self) -> Result<Vec<Event>, SessionError> {
        let f = File::open(self.root.join(EVENTS_FILE))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev = serde_json::from_str(&line)
                .map_err(|e| SessionError::SchemaViolation(format!("{EVENTS_FILE} line {}: {e}", i + 1)))?;
            out.push(ev);
        }
        Ok(out)
    }

    /// Loads the session by replaying its log. A snapshot that disagrees with
    /// the log is ignored with a warning.
    pub fn load(&self) -> Result<(SessionState, Vec<Event>), SessionError> {
        let events = self.read_events()?;
        let state = SessionState::replay(&events)?;
        if let Ok(text) = fs::read_to_string(self.root.join(SNAPSHOT_FILE)) {
            match serde_json::from_str::<Snapshot>(&text) {
                Ok(snap) if snap.state.state_hash() == state.state_hash() => {}
                _ => tracing::warn!(dir = %self.root.display(), "snapshot is stale or unreadable; using the event log"),
            }
        }
        Ok((state, events))
    }

    /// Removes everything except the datasets, e.g. before an import.
    pub fn clear_log(&self) -> Result<(), SessionError> {
        for name in [EVENTS_FILE, SNAPSHOT_FILE] {
            match fs::remove_file(self.root.join(name)) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}
