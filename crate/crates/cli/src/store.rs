//! On-disk debugging sessions.
//!
//! A session directory holds `session.json` (model and solver settings),
//! an optional copy of the chunk database, and `records.jsonl`, the
//! append-only run log. Session state is rebuilt by replaying the log.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use resid_core::chunker::ChunkDb;
use resid_core::estimator::SolverConfig;
use resid_core::model::ModelParams;
use resid_core::records::{process_run, RecordError, RunRecord, SessionState};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SESSION_FORMAT: &str = "resid-session/1";
pub const RECORDS_FORMAT: &str = "resid-records/1";

pub const CONFIG_FILE: &str = "session.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CHUNK_DB_FILE: &str = "chunks.db";
pub const ESTIMATE_FILE: &str = "estimate.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub format: String,
    pub params: ModelParams,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_db_digest: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordsHeader {
    format: String,
}

/// Exclusive lock on a session directory, released on drop.
#[derive(Debug)]
pub struct SessionLock {
    path: PathBuf,
}

impl SessionLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl SessionLock {
    /// Like [`SessionLock::acquire`], for commands that need an existing session.
    pub fn acquire_existing(dir: &Path) -> Result<Self, CliError> {
        if !dir.join(CONFIG_FILE).exists() {
            return Err(no_session(dir));
        }
        Self::acquire(dir)
    }
}

fn no_session(dir: &Path) -> CliError {
    CliError::Usage(format!(
        "no session at {} (create one with `resid session new`)",
        dir.display()
    ))
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug)]
pub struct SessionStore {
    path: PathBuf,
    config: SessionConfig,
    chunk_db: Option<ChunkDb>,
    records: Vec<RunRecord>,
    state: SessionState,
}

impl SessionStore {
    pub fn create(
        path: &Path,
        params: ModelParams,
        solver: SolverConfig,
        chunk_db: Option<ChunkDb>,
    ) -> Result<Self, CliError> {
        solver.validate()?;
        if path.join(CONFIG_FILE).exists() {
            return Err(CliError::Usage(format!(
                "{} already holds a session",
                path.display()
            )));
        }
        fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        let config = SessionConfig {
            format: SESSION_FORMAT.to_string(),
            params,
            solver,
            chunk_db_digest: chunk_db.as_ref().map(|db| db.source_digest().to_string()),
        };
        if let Some(db) = &chunk_db {
            write_atomic(&path.join(CHUNK_DB_FILE), db.to_text().as_bytes())?;
        }
        let store = Self {
            path: path.to_path_buf(),
            config,
            chunk_db,
            records: Vec::new(),
            state: SessionState::new(),
        };
        store.write_records(&[])?;
        let json = serde_json::to_string_pretty(&store.config).expect("config serializes");
        write_atomic(&path.join(CONFIG_FILE), format!("{json}\n").as_bytes())?;
        Ok(store)
    }

    pub fn open(path: &Path) -> Result<Self, CliError> {
        let config_path = path.join(CONFIG_FILE);
        if !config_path.exists() {
            return Err(no_session(path));
        }
        let config: SessionConfig =
            serde_json::from_str(&read_to_string(&config_path)?).map_err(|e| CliError::Parse {
                path: config_path.clone(),
                message: e.to_string(),
            })?;
        if config.format != SESSION_FORMAT {
            return Err(CliError::Parse {
                path: config_path,
                message: format!(
                    "unsupported format {:?}, expected {SESSION_FORMAT:?}",
                    config.format
                ),
            });
        }

        let chunk_db = match &config.chunk_db_digest {
            None => None,
            Some(expected) => {
                let db = ChunkDb::from_text(&read_to_string(&path.join(CHUNK_DB_FILE))?)?;
                if db.source_digest() != expected {
                    return Err(CliError::StaleSession {
                        expected: expected.clone(),
                        found: db.source_digest().to_string(),
                    });
                }
                Some(db)
            }
        };

        let records_path = path.join(RECORDS_FILE);
        let records = parse_records(&records_path, &read_to_string(&records_path)?, true)?;
        let mut store = Self {
            path: path.to_path_buf(),
            config,
            chunk_db,
            records: Vec::new(),
            state: SessionState::new(),
        };
        for r in records {
            store.state = store.apply(&store.state, &r)?;
            store.records.push(r);
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.config.params
    }

    pub fn chunk_db(&self) -> Option<&ChunkDb> {
        self.chunk_db.as_ref()
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn next_seq(&self) -> u64 {
        self.state.last_seq.map_or(1, |s| s + 1)
    }

    fn apply(&self, state: &SessionState, record: &RunRecord) -> Result<SessionState, CliError> {
        let expected = state.last_seq.map_or(1, |s| s + 1);
        match record.seq {
            Some(seq) if seq == expected => {}
            Some(seq) => {
                return Err(RecordError::OutOfOrder {
                    run_id: record.run_id.clone(),
                    seq,
                    last: expected - 1,
                }
                .into())
            }
            None => {
                return Err(CliError::Other(format!(
                    "run {}: stored record has no sequence number",
                    record.run_id
                )))
            }
        }
        Ok(process_run(
            state,
            record,
            &self.config.params,
            self.chunk_db.as_ref(),
        )?)
    }

    /// Applies `batch` in order and persists it, or changes nothing if any
    /// record is rejected. Records without `seq` get the next number; run ids
    /// must be unique within the session.
    pub fn ingest(&mut self, batch: Vec<RunRecord>) -> Result<&SessionState, CliError> {
        let mut state = self.state.clone();
        let mut accepted = Vec::with_capacity(batch.len());
        let mut run_ids: HashSet<&str> = self.records.iter().map(|r| r.run_id.as_str()).collect();
        for r in &batch {
            if !run_ids.insert(&r.run_id) {
                return Err(CliError::DuplicateRun(r.run_id.clone()));
            }
        }
        for mut r in batch {
            if r.seq.is_none() {
                r.seq = Some(state.last_seq.map_or(1, |s| s + 1));
            }
            state = self.apply(&state, &r)?;
            accepted.push(r);
        }
        let mut all = self.records.clone();
        all.extend(accepted);
        self.write_records(&all)?;
        self.records = all;
        self.state = state;
        Ok(&self.state)
    }

    fn write_records(&self, records: &[RunRecord]) -> Result<(), CliError> {
        let header = RecordsHeader {
            format: RECORDS_FORMAT.to_string(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        write_atomic(&self.path.join(RECORDS_FILE), out.as_bytes())
    }
}

/// Parses JSON-lines run records. Blank lines are skipped; a leading format
/// header is required when `require_header` is set and tolerated otherwise.
pub fn parse_records(
    path: &Path,
    text: &str,
    require_header: bool,
) -> Result<Vec<RunRecord>, CliError> {
    let malformed = |line: usize, message: String| CliError::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header && records.is_empty() {
            if let Ok(h) = serde_json::from_str::<RecordsHeader>(line) {
                if h.format != RECORDS_FORMAT {
                    return Err(malformed(n, format!("unsupported format {:?}", h.format)));
                }
                seen_header = true;
                continue;
            }
            if require_header {
                return Err(malformed(
                    n,
                    format!("expected header {{\"format\":\"{RECORDS_FORMAT}\"}}"),
                ));
            }
        }
        let record: RunRecord =
            serde_json::from_str(line).map_err(|e| malformed(n, e.to_string()))?;
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}
