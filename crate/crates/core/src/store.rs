//! Embedded file store: an append-only JSON-lines commit log plus a periodic
//! snapshot of the whole state.
//!
//! A commit is durable once its line has been written and synced. On open the
//! snapshot is loaded and the log replayed over it; a torn final line (the
//! process died mid-write) is cut off. Replaying a record twice is harmless,
//! so a crash between writing a snapshot and truncating the log loses nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::article::Publication;
use crate::person::PersonRef;
use crate::workflow::{Submission, SubmissionId};

pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const LOG_FILE: &str = "commits.jsonl";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt snapshot {path}: {message}")]
    CorruptSnapshot { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Everything the journal needs to come back after a restart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedState {
    /// Next sequence number to hand out.
    pub sequence_counter: u64,
    pub submissions: BTreeMap<SubmissionId, Submission>,
    pub people: BTreeMap<String, PersonRef>,
    pub processed_events: BTreeSet<String>,
    pub publications: BTreeMap<SubmissionId, Publication>,
    pub idempotency_keys: BTreeMap<String, SubmissionId>,
}

impl PersistedState {
    pub fn apply(&mut self, commit: &Commit) {
        if let Some(next) = commit.sequence_counter {
            self.sequence_counter = self.sequence_counter.max(next);
        }
        for s in &commit.submissions {
            self.sequence_counter = self.sequence_counter.max(s.sequence_number() + 1);
            self.submissions.insert(s.id(), s.clone());
        }
        for p in &commit.people {
            self.people.insert(p.handle.to_ascii_lowercase(), p.clone());
        }
        self.processed_events
            .extend(commit.processed_events.iter().cloned());
        for (id, publication) in &commit.publications {
            self.publications.insert(*id, publication.clone());
        }
        for (key, id) in &commit.idempotency_keys {
            self.idempotency_keys.insert(key.clone(), *id);
        }
    }

    /// Highest sequence number held by any stored submission.
    pub fn max_sequence_number(&self) -> u64 {
        self.submissions
            .values()
            .map(Submission::sequence_number)
            .max()
            .unwrap_or(0)
    }
}

/// The changes made by one operation. Every field is an upsert.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_counter: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub submissions: Vec<Submission>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub people: Vec<PersonRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processed_events: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub publications: Vec<(SubmissionId, Publication)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub idempotency_keys: Vec<(String, SubmissionId)>,
}

impl Commit {
    pub fn is_empty(&self) -> bool {
        self == &Commit::default()
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    state: PersistedState,
}

#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    log: File,
    snapshot_every: u32,
    since_snapshot: u32,
}

impl FileStore {
    /// Opens (creating if needed) the store in `dir` and returns the recovered state.
    pub fn open(dir: impl Into<PathBuf>, snapshot_every: u32) -> Result<(Self, PersistedState), StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut state = match fs::read_to_string(&snapshot_path) {
            Ok(text) => {
                let snap: Snapshot =
                    serde_json::from_str(&text).map_err(|e| StoreError::CorruptSnapshot {
                        path: snapshot_path.clone(),
                        message: e.to_string(),
                    })?;
                snap.state
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => PersistedState::default(),
            Err(e) => return Err(io_err(&snapshot_path)(e)),
        };

        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let (valid_len, replayed) = replay(&mut log, &mut state).map_err(io_err(&log_path))?;
        let file_len = log.metadata().map_err(io_err(&log_path))?.len();
        if valid_len < file_len {
            tracing::warn!(
                path = %log_path.display(),
                dropped = file_len - valid_len,
                "discarding torn tail of commit log"
            );
            log.set_len(valid_len).map_err(io_err(&log_path))?;
            log.sync_all().map_err(io_err(&log_path))?;
        }
        state.sequence_counter = state
            .sequence_counter
            .max(state.max_sequence_number() + 1);
        let store = FileStore {
            dir,
            log,
            snapshot_every: snapshot_every.max(1),
            since_snapshot: replayed,
        };
        Ok((store, state))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends and syncs one commit. `state` must already include it; it is
    /// used when the log is due for compaction into a snapshot.
    pub fn commit(&mut self, commit: &Commit, state: &PersistedState) -> Result<(), StoreError> {
        if commit.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_string(commit).expect("commit records always serialize");
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.log.sync_data().map_err(io_err(&path))?;
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot(state)?;
        }
        Ok(())
    }

    /// Writes a full snapshot atomically and empties the log.
    pub fn snapshot(&mut self, state: &PersistedState) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let path = self.dir.join(SNAPSHOT_FILE);
        let body = serde_json::to_vec(&Snapshot {
            version: SNAPSHOT_VERSION,
            state: state.clone(),
        })
        .expect("state always serializes");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&body).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        let log_path = self.dir.join(LOG_FILE);
        self.log.set_len(0).map_err(io_err(&log_path))?;
        self.log.sync_all().map_err(io_err(&log_path))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

/// Applies every complete record; returns the byte length of the valid prefix.
fn replay(log: &mut File, state: &mut PersistedState) -> io::Result<(u64, u32)> {
    log.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*log);
    let mut valid = 0u64;
    let mut count = 0u32;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 || line.last() != Some(&b'\n') {
            break;
        }
        match serde_json::from_slice::<Commit>(&line) {
            Ok(commit) => state.apply(&commit),
            Err(_) => break,
        }
        valid += n as u64;
        count += 1;
    }
    Ok((valid, count))
}
