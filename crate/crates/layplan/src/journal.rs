//! Append-only session journals, one JSON-lines file per session.
//!
//! The first line opens the session (`{"event":"open", "session_id", "spec",
//! "revision"}`); each later line adds one revision
//! (`{"event":"revision", "revision"}`). A torn final line is ignored on
//! load.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use layplan_core::planner::{PromptSpec, Revision, Session};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::read_lines;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Open { session_id: String, spec: PromptSpec, revision: Revision },
    Revision { revision: Revision },
}

#[derive(Debug, Clone)]
pub struct Journal {
    dir: PathBuf,
}

impl Journal {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, JournalError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| JournalError::Io { path: dir.clone(), source })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn append(&self, id: &str, event: &Event, create: bool) -> Result<(), JournalError> {
        let path = self.path(id);
        let io = |source| JournalError::Io { path: path.clone(), source };
        let mut f: File = OpenOptions::new()
            .append(true)
            .create_new(create)
            .open(&path)
            .map_err(io)?;
        let mut line = serde_json::to_string(event).expect("serializable event");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    /// Writes the opening line for a new session with its revision 0.
    pub fn create(&self, session: &Session) -> Result<(), JournalError> {
        let event = Event::Open {
            session_id: session.id.clone(),
            spec: session.spec.clone(),
            revision: session.revisions()[0].clone(),
        };
        self.append(&session.id, &event, true)
    }

    pub fn record(&self, session_id: &str, revision: &Revision) -> Result<(), JournalError> {
        self.append(session_id, &Event::Revision { revision: revision.clone() }, false)
    }

    /// Rebuilds every journaled session, sorted by id.
    pub fn load_all(&self) -> Result<Vec<Session>, JournalError> {
        let entries = std::fs::read_dir(&self.dir).map_err(|source| JournalError::Io { path: self.dir.clone(), source })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths.iter().map(|p| load(p)).collect()
    }
}

fn load(path: &Path) -> Result<Session, JournalError> {
    let lines = read_lines(path).map_err(|e| JournalError::Corrupt {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let corrupt = |line: usize, message: String| JournalError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };
    let last = lines.len();
    let mut head: Option<(String, PromptSpec)> = None;
    let mut revisions = Vec::new();
    for (i, (n, text)) in lines.into_iter().enumerate() {
        let event: Event = match serde_json::from_str(&text) {
            Ok(e) => e,
            Err(e) if i + 1 == last && i > 0 => {
                log::warn!("{}:{n}: ignoring torn final line ({e})", path.display());
                break;
            }
            Err(e) => return Err(corrupt(n, e.to_string())),
        };
        match (event, &head) {
            (Event::Open { session_id, spec, revision }, None) => {
                head = Some((session_id, spec));
                revisions.push(revision);
            }
            (Event::Revision { revision }, Some(_)) => revisions.push(revision),
            _ => return Err(corrupt(n, "unexpected event order".into())),
        }
    }
    let (id, spec) = head.ok_or_else(|| corrupt(0, "empty journal".into()))?;
    Session::from_revisions(id, spec, revisions).map_err(|e| corrupt(0, e.to_string()))
}
