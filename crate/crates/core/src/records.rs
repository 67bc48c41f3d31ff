//! Debugging-run records and the session bookkeeping built from them.
//!
//! Each run is truncated at the first visit to any chunk reported buggy,
//! since everything after that point is unreliable, and deduplicated so a
//! chunk contributes at most one likelihood factor per run. Chunks that ran
//! cleanly add a perfect traversal at their current debug count; reported
//! chunks add to the bug count `m` and, when the bug was removed, advance
//! their debug count.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chunker::ChunkDb;
use crate::model::{
    ModelError, ModelParams, PerClassStats, PerLineStats, SufficientStats, Variant,
};

pub type ChunkId = String;

/// Class label for chunks the database leaves unclassified.
pub const DEFAULT_CLASS: &str = "default";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("run {run_id}: buggy chunk(s) {missing:?} never visited")]
    BugNotVisited {
        run_id: String,
        missing: Vec<ChunkId>,
    },
    #[error("run {run_id}: bug report lists no chunks")]
    EmptyBugSet { run_id: String },
    #[error("run {run_id}: no visits recorded")]
    NoVisits { run_id: String },
    #[error("run {run_id}: chunk {chunk:?} is not in the chunk database")]
    UnknownChunk { run_id: String, chunk: ChunkId },
    #[error("run {run_id}: {variant} sessions need a chunk database")]
    MissingChunkDb { run_id: String, variant: Variant },
    #[error("run {run_id}: sequence {seq} does not follow {last}")]
    OutOfOrder { run_id: String, seq: u64, last: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    BugFound {
        buggy_chunks: BTreeSet<ChunkId>,
        removed: bool,
    },
}

impl Outcome {
    pub fn bug(chunk: impl Into<ChunkId>) -> Self {
        Outcome::BugFound {
            buggy_chunks: BTreeSet::from([chunk.into()]),
            removed: true,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OutcomeRepr {
    Tag(String),
    Bug {
        bugs: Vec<ChunkId>,
        #[serde(default = "default_removed")]
        removed: bool,
    },
}

fn default_removed() -> bool {
    true
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Outcome::Success => OutcomeRepr::Tag("ok".into()),
            Outcome::BugFound {
                buggy_chunks,
                removed,
            } => OutcomeRepr::Bug {
                bugs: buggy_chunks.iter().cloned().collect(),
                removed: *removed,
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match OutcomeRepr::deserialize(deserializer)? {
            OutcomeRepr::Tag(t) if t == "ok" => Ok(Outcome::Success),
            OutcomeRepr::Tag(t) => Err(serde::de::Error::custom(format!(
                "outcome must be \"ok\" or {{\"bugs\": [...], \"removed\": bool}}, got {t:?}"
            ))),
            OutcomeRepr::Bug { bugs, removed } => Ok(Outcome::BugFound {
                buggy_chunks: bugs.into_iter().collect(),
                removed,
            }),
        }
    }
}

/// One debugging run: chunk visits in execution order plus its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub run_id: String,
    pub visits: Vec<ChunkId>,
    pub outcome: Outcome,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, visits: Vec<ChunkId>, outcome: Outcome) -> Self {
        Self {
            seq: None,
            run_id: run_id.into(),
            visits,
            outcome,
        }
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.visits.is_empty() {
            return Err(RecordError::NoVisits {
                run_id: self.run_id.clone(),
            });
        }
        if let Outcome::BugFound { buggy_chunks, .. } = &self.outcome {
            if buggy_chunks.is_empty() {
                return Err(RecordError::EmptyBugSet {
                    run_id: self.run_id.clone(),
                });
            }
            let missing: Vec<_> = buggy_chunks
                .iter()
                .filter(|c| !self.visits.contains(c))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(RecordError::BugNotVisited {
                    run_id: self.run_id.clone(),
                    missing,
                });
            }
        }
        Ok(())
    }
}

/// Visits up to and including the first visit to any reported buggy chunk.
pub fn truncate(record: &RunRecord) -> Result<&[ChunkId], RecordError> {
    match &record.outcome {
        Outcome::Success => Ok(&record.visits),
        Outcome::BugFound { buggy_chunks, .. } => record
            .visits
            .iter()
            .position(|c| buggy_chunks.contains(c))
            .map(|at| &record.visits[..=at])
            .ok_or_else(|| RecordError::BugNotVisited {
                run_id: record.run_id.clone(),
                missing: buggy_chunks.iter().cloned().collect(),
            }),
    }
}

fn dedup_first(visits: &[ChunkId]) -> Vec<&ChunkId> {
    let mut seen = HashSet::new();
    visits.iter().filter(|c| seen.insert(c.as_str())).collect()
}

/// Accumulated bookkeeping for one debugging session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub debug_counts: BTreeMap<ChunkId, u32>,
    pub stats: SufficientStats,
    pub per_line_stats: PerLineStats,
    pub per_class_stats: PerClassStats,
    pub processed_runs: u64,
    pub removed_bugs: u64,
    pub unremoved_bugs: u64,
    pub last_seq: Option<u64>,
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn debug_count(&self, chunk: &str) -> u32 {
        self.debug_counts.get(chunk).copied().unwrap_or(0)
    }
}

fn chunk_class<'a>(db: &'a ChunkDb, chunk: &str) -> &'a str {
    db.get(chunk)
        .and_then(|c| c.class_label.as_deref())
        .unwrap_or(DEFAULT_CLASS)
}

/// Applies one run to the session and returns the new state.
///
/// A bug that was detected but not removed still counts toward `m`, but the
/// chunk's debug count is left as is.
pub fn process_run(
    state: &SessionState,
    record: &RunRecord,
    params: &ModelParams,
    chunk_db: Option<&ChunkDb>,
) -> Result<SessionState, RecordError> {
    record.validate()?;
    if let (Some(seq), Some(last)) = (record.seq, state.last_seq) {
        if seq <= last {
            return Err(RecordError::OutOfOrder {
                run_id: record.run_id.clone(),
                seq,
                last,
            });
        }
    }

    let variant = params.variant();
    let db = match (variant, chunk_db) {
        (Variant::Homogeneous, db) => db,
        (_, Some(db)) => Some(db),
        (variant, None) => {
            return Err(RecordError::MissingChunkDb {
                run_id: record.run_id.clone(),
                variant,
            })
        }
    };
    if let Some(db) = db {
        if let Some(unknown) = record.visits.iter().find(|c| db.get(c).is_none()) {
            return Err(RecordError::UnknownChunk {
                run_id: record.run_id.clone(),
                chunk: unknown.clone(),
            });
        }
    }

    let mut next = state.clone();
    let (buggy, removed) = match &record.outcome {
        Outcome::Success => (None, false),
        Outcome::BugFound {
            buggy_chunks,
            removed,
        } => (Some(buggy_chunks), *removed),
    };
    let is_buggy = |c: &str| buggy.is_some_and(|b| b.contains(c));

    for chunk in dedup_first(truncate(record)?) {
        if is_buggy(chunk) {
            continue;
        }
        let i = state.debug_count(chunk);
        next.stats.add_successes(i, 1);
        match (variant, db) {
            (Variant::PerLine, Some(db)) => {
                let lines = db.get(chunk).map(|c| c.line_count).unwrap_or(0);
                next.per_line_stats.push(i, lines)?;
            }
            (Variant::PerClass, Some(db)) => {
                next.per_class_stats
                    .entry(chunk_class(db, chunk).to_string())
                    .or_default()
                    .add_successes(i, 1);
            }
            _ => {}
        }
        next.debug_counts.entry(chunk.clone()).or_insert(0);
    }

    for chunk in buggy.into_iter().flatten() {
        next.stats.m += 1;
        next.per_line_stats.m += 1;
        if let (Variant::PerClass, Some(db)) = (variant, db) {
            next.per_class_stats
                .entry(chunk_class(db, chunk).to_string())
                .or_default()
                .m += 1;
        }
        let count = next.debug_counts.entry(chunk.clone()).or_insert(0);
        if removed {
            *count += 1;
            next.removed_bugs += 1;
        } else {
            next.unremoved_bugs += 1;
        }
    }

    next.processed_runs += 1;
    if record.seq.is_some() {
        next.last_seq = record.seq;
    }
    Ok(next)
}

/// Replays runs in order from a fresh session.
pub fn process_session<'a>(
    records: impl IntoIterator<Item = &'a RunRecord>,
    params: &ModelParams,
    chunk_db: Option<&ChunkDb>,
) -> Result<SessionState, RecordError> {
    records
        .into_iter()
        .try_fold(SessionState::new(), |state, r| {
            process_run(&state, r, params, chunk_db)
        })
}

pub fn extract_statistics(state: &SessionState) -> SufficientStats {
    let mut stats = state.stats.clone();
    stats.n.retain(|_, c| *c > 0);
    stats
}
