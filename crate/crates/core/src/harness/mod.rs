//! Deterministic simulator: scenario config, world state, the end-to-end
//! workflow, decision verification and fault injection.

mod config;
mod workflow;
mod world;

use thiserror::Error;

use crate::access::AccessError;
use crate::canonical::CanonicalError;
use crate::crypto::CryptoError;
use crate::explain::ExplainError;
use crate::learning::LearningError;
use crate::ledger::LedgerError;
use crate::trust::TrustError;

pub use config::{
    generated_id, FederationSettings, Generator, InlineRow, Institution, RecordSource, ScenarioConfig, TrustSettings,
    User,
};
pub use workflow::{
    run_workflow, score, tamper, tamper_len, verify_decision, DecisionVerdict, MismatchKind, RunReport, StepSummary,
    TamperTarget, TAMPER_MASK,
};
pub use world::{Event, StoredDecision, WorldState, LEDGER_FILE, REPORT_FILE, SCENARIO_FILE, WORLD_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("integrity alarm on record {record_id:?}: {detail}")]
    IntegrityAlarm { record_id: String, detail: String },
    #[error("unknown decision {0}")]
    UnknownDecision(String),
    #[error("bad tamper target {0:?}")]
    BadTarget(String),
    #[error("offset {offset} out of range (target has {len} bytes)")]
    OffsetOutOfRange { offset: usize, len: usize },
    #[error("world has no trained model yet")]
    NotRun,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
