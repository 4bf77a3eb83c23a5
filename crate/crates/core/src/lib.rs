//! Artificial Age Score (AAS) evaluation engine.
//!
//! The score of a session is a weighted, redundancy-masked sum of per-channel
//! surprisal penalties `log2((1+ε)/(x+ε))`. On top of the base score this crate
//! provides the clause families that constrain or extend it:
//!
//! - [`kernel`]: the penalty kernel, session breakdowns and trajectory summaries.
//! - [`ontology`]: refinement/embedding invariance, compounds, windowlessness
//!   audits, intrinsic signatures and deduplication.
//! - [`dynamics`]: rate caps, appetition steps, trajectory metrics and
//!   counterfactual replay audits.
//! - [`representation`]: dizziness, memory traces, reason score, truth floors.
//! - [`coherence`]: contradiction, sufficient-reason, harmony and alignment
//!   penalties.
//! - [`hierarchy`]: multi-scale rollups, dominance and whole–part accounting.
//! - [`teleology`]: variety/order/perfection, windowed drift and governance.
//!
//! Everything is pure and deterministic; snapshots are immutable inputs.

pub mod audit;
pub mod coherence;
pub mod dynamics;
pub mod error;
pub mod hierarchy;
pub mod info;
pub mod kernel;
pub mod ontology;
pub mod representation;
pub mod teleology;

pub use audit::{AuditReport, Finding, ProbeResult};
pub use error::{AasError, Result};
pub use kernel::{
    eval_kernel, score_session, trajectory_summary, ChannelState, KernelConfig, ScoreBreakdown,
    SessionSnapshot, TrajectorySummary,
};
