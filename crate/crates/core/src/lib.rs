//! Reliability estimation for software under imperfect debugging.
//!
//! A program is split into chunks of straight-line code. Each chunk is buggy
//! with probability `p`, scaled by `alpha` every time it is debugged. The
//! crate estimates `p` by maximum likelihood from debugging-session records,
//! identifies and instruments chunks in a small C-like language, and
//! simulates debugging sessions on control-flow graphs.

pub mod chunker;
pub mod estimator;
pub mod model;
pub mod records;
pub mod simulator;

pub use chunker::{Chunk, ChunkDb};
pub use estimator::{
    chunk_unreliability, estimate_mle, estimate_session, Estimate, EstimateStatus, SolverConfig,
};
pub use model::{
    log_likelihood, mle_diagnosis, per_line_log_likelihood, score, MleDiagnosis, ModelParams,
    PerClassStats, PerLineStats, SufficientStats, Variant,
};
pub use records::{Outcome, RunRecord, SessionState};
pub use simulator::{ExperimentConfig, ProgramGraph};
