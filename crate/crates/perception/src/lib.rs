//! Backend for blind perceptual comparisons of generated map tiles.
//!
//! Participants get anonymous sessions. Each question shows an input image and
//! its ground truth, plus every model's output under opaque candidate ids in a
//! per-question shuffled order. Votes go to an append-only JSON-lines log and
//! the per-model statistics are always recomputed from it.

mod service;
mod study;
mod votes;

use std::path::PathBuf;

use sha2::{Digest, Sha256};

pub use service::{
    router, serve, AppState, Candidate, ErrorBody, Question, QuestionResponse, SessionResponse,
    VoteAck, VoteRequest,
};
pub use study::{ImageRole, Study, StudyConfig, StudySample, GROUND_TRUTH};
pub use votes::{compute_stats, replay_log, ModelShare, StatsReport, VoteLog, VoteRecord};

/// Value of the `v` field carried by every payload.
pub const API_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid study: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// SHA-256 over `|`-joined parts, as lowercase hex.
pub(crate) fn hex_digest(parts: &[&str]) -> String {
    let digest = Sha256::digest(parts.join("|").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
