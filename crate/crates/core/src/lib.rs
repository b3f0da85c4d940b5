//! G-BAM bandwidth allocation engine, a DS-TE network simulator built on it
//! and an autonomic controller that switches BAM behaviors at runtime.
//!
//! Layering, bottom up: [`model`] types, the single-link [`gbam`] engine,
//! the multi-link [`network`], the discrete-event [`sim`] with its
//! [`telemetry`] fold and [`autonomic`] controller, and the [`batch`] and
//! [`report`] layers used by the command line tool.

pub mod autonomic;
pub mod batch;
pub mod gbam;
pub mod model;
pub mod network;
pub mod report;
pub mod sim;
pub mod telemetry;

pub use gbam::{build_preset, feasible, AdmissionDecision, LinkState};
pub use model::{Bandwidth, ClassId, GBamLinkConfig, LinkId, LspId, ScenarioConfig};
pub use network::{Network, SetupOutcome};
pub use sim::{run, RunConfig, RunResult};
pub use telemetry::{MetricsWindow, RunSummary};
