//! Append-only event log, one canonical JSON event per line.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use coaug_core::session::{canonical_json, encode_log_line, SessionConfig, SessionEvent};

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.events.jsonl"))
}

/// Where the session config used by a log is stored, next to the log.
pub fn config_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.config.json"))
}

/// Finds the config stored next to an event log, if the log follows the
/// `<id>.events.jsonl` naming.
pub fn sibling_config(log: &Path) -> Option<PathBuf> {
    let name = log.file_name()?.to_str()?;
    let id = name.strip_suffix(".events.jsonl")?;
    Some(log.with_file_name(format!("{id}.config.json")))
}

#[derive(Debug)]
pub struct EventLog {
    file: File,
    path: PathBuf,
}

impl EventLog {
    pub fn open(path: &Path) -> io::Result<EventLog> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            file,
            path: path.to_owned(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes the line with a single unbuffered write, so the event is in the
    /// OS before anything is broadcast.
    pub fn append(&mut self, e: &SessionEvent) -> io::Result<()> {
        self.file.write_all(&encode_log_line(e))
    }

    pub fn sync(&self) -> io::Result<()> {
        self.file.sync_all()
    }
}

pub fn write_config(path: &Path, config: &SessionConfig) -> io::Result<()> {
    let mut bytes = canonical_json(config);
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}
