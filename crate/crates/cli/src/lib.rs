//! Session ingestion, clause configuration, synthetic generation and the
//! scoring pipeline behind the `aas` binary.

pub mod config;
pub mod error;
pub mod generate;
pub mod pipeline;
pub mod report;
pub mod session;

pub use config::{ClauseConfig, Plan};
pub use error::{CliError, Result};
pub use generate::{generate, Generated, GeneratorSpec, Scenario};
pub use pipeline::run_pipeline;
pub use report::{Format, Report};
pub use session::{load_sessions, SessionFile};
