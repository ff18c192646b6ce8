//! Deterministic discrete-event simulator of a WiMAX point-to-multipoint
//! uplink carrying UGS service flows.
//!
//! Five constant-bit-rate subscriber stations feed per-flow queues; a base
//! station issues per-frame grants from a capacity-limited uplink. Two
//! scheduling modes are compared on identical configurations: a fixed-rate
//! baseline, and a QoE-driven controller that steps every flow toward its
//! minimum subjective rate while losses persist and resets to maximum on a
//! fixed period. Runs emit a per-packet trace that can be re-analyzed into
//! the same per-flow throughput / loss / delay / jitter metrics.

pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod time;
pub mod trace;
pub mod traffic;

pub use engine::{Event, EventKind, EventQueue};
pub use error::SimError;
pub use mac::{allocate_grants, FlowQueue, Grant, MacConfig};
pub use metrics::{FlowMetrics, MetricsCollector};
pub use report::{analyze, compare, run_to_files, AnalysisOutcome, ComparisonReport};
pub use scenario::ScenarioConfig;
pub use scheduler::{ControllerConfig, LossScope, RateController, RateState, SchedulerMode};
pub use sim::{simulate, RunOutcome};
pub use time::SimTime;
pub use trace::{TraceAnalyzer, TraceError, TraceEvent, TraceKind};
pub use traffic::{CbrSource, FlowId, FlowSpec, Packet, ServiceClass};
