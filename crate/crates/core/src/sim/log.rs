//! The run's event log. Telemetry is a fold over this stream and the
//! NDJSON export is one [`LogEntry`] per line.

use serde::{Deserialize, Serialize};

use crate::model::{Bandwidth, ClassId, LinkId, LspId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Why an LSP was preempted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreemptionCause {
    /// Displaced by a higher-class setup.
    Sharing,
    /// Removed by a hard reconfiguration.
    Forced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Arrival {
        lsp: LspId,
        class: ClassId,
        bandwidth: Bandwidth,
        route: usize,
        holding: f64,
    },
    Established {
        lsp: LspId,
        /// First link funding the LSP with a loan, if any.
        loan_link: Option<LinkId>,
    },
    Blocked {
        lsp: LspId,
        class: ClassId,
        /// First link that refused.
        link: LinkId,
    },
    Preempted {
        lsp: LspId,
        class: ClassId,
        link: LinkId,
        cause: PreemptionCause,
    },
    Devolved {
        lsp: LspId,
        class: ClassId,
        link: LinkId,
    },
    Departed {
        lsp: LspId,
    },
    HorizonEnd {
        lsp: LspId,
    },
    WindowClosed {
        index: usize,
        start: f64,
    },
    ControllerEval {
        window: usize,
        mode: String,
        preemptions: u64,
        utilization: f64,
        action: String,
    },
    ModeSwitch {
        from: String,
        to: String,
        approach: String,
        steps: u32,
    },
    ConfigApplied {
        mode: String,
        step: u32,
        of: u32,
        forced_preemptions: usize,
        overhang: Bandwidth,
    },
    /// Grandfathered bandwidth left by soft steps is fully funded again.
    OverhangCleared,
}
