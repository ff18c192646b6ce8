//! Run / compare / analyze entry points and the CSV report.
//!
//! CSV schema (documented in `docs/formats.md`):
//!
//! ```text
//! flow_id,mode,avg_throughput,loss_rate,avg_delay,avg_jitter
//! ```
//!
//! Throughput is bits/s, delay and jitter are seconds, loss_rate is a
//! fraction. Rows are ordered flow_id ascending with baseline before qoe,
//! so reports are byte-stable for golden-file comparison. A flow with no
//! deliveries reports an empty avg_delay field.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::SimError;
use crate::metrics::FlowMetrics;
use crate::scenario::ScenarioConfig;
use crate::scheduler::SchedulerMode;
use crate::sim::{simulate, RunOutcome};
use crate::time::SimTime;
use crate::trace::TraceAnalyzer;
use crate::traffic::FlowId;

pub const CSV_HEADER: &str = "flow_id,mode,avg_throughput,loss_rate,avg_delay,avg_jitter";

fn mode_label(mode: SchedulerMode) -> &'static str {
    match mode {
        SchedulerMode::Baseline => "baseline",
        SchedulerMode::Qoe => "qoe",
    }
}

fn csv_row(m: &FlowMetrics, mode: &str) -> String {
    let delay = m.avg_delay_s.map(|d| d.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{}",
        m.flow_id, mode, m.avg_throughput_bps, m.loss_rate, delay, m.avg_jitter_s
    )
}

pub fn render_csv<'a>(rows: impl IntoIterator<Item = (&'a FlowMetrics, &'a str)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (m, mode) in rows {
        out.push_str(&csv_row(m, mode));
        out.push('\n');
    }
    out
}

/// Execute one run, writing the trace to `trace_path` and, if given, the
/// per-flow CSV to `report_path`.
pub fn run_to_files(
    config: &ScenarioConfig,
    mode: SchedulerMode,
    trace_path: &Path,
    report_path: Option<&Path>,
) -> Result<RunOutcome, SimError> {
    let mut sink = BufWriter::new(File::create(trace_path)?);
    let outcome = simulate(config, mode, &mut sink)?;
    if let Some(report_path) = report_path {
        let label = mode_label(mode);
        let csv = render_csv(outcome.metrics.iter().map(|m| (m, label)));
        std::fs::write(report_path, csv)?;
    }
    Ok(outcome)
}

/// Side-by-side metrics for one flow under both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowComparison {
    pub flow_id: FlowId,
    pub baseline: FlowMetrics,
    pub qoe: FlowMetrics,
}

impl FlowComparison {
    pub fn throughput_delta_bps(&self) -> f64 {
        self.qoe.avg_throughput_bps - self.baseline.avg_throughput_bps
    }
    pub fn loss_rate_delta(&self) -> f64 {
        self.qoe.loss_rate - self.baseline.loss_rate
    }
    pub fn delay_delta_s(&self) -> f64 {
        self.qoe.avg_delay_s.unwrap_or(0.0) - self.baseline.avg_delay_s.unwrap_or(0.0)
    }
    pub fn jitter_delta_s(&self) -> f64 {
        self.qoe.avg_jitter_s - self.baseline.avg_jitter_s
    }
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub flows: Vec<FlowComparison>,
    pub baseline: RunOutcome,
    pub qoe: RunOutcome,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        render_csv(self.flows.iter().flat_map(|f| {
            [(&f.baseline, "baseline"), (&f.qoe, "qoe")]
        }))
    }
}

/// Run baseline and QoE with the identical config and seed; any metric
/// divergence is attributable solely to the controller mode.
pub fn compare(
    config: &ScenarioConfig,
    baseline_trace: &Path,
    qoe_trace: &Path,
    report_path: Option<&Path>,
) -> Result<ComparisonReport, SimError> {
    let baseline = run_to_files(config, SchedulerMode::Baseline, baseline_trace, None)?;
    let qoe = run_to_files(config, SchedulerMode::Qoe, qoe_trace, None)?;

    let flows = baseline
        .metrics
        .iter()
        .map(|b| {
            let q = qoe
                .metrics
                .iter()
                .find(|q| q.flow_id == b.flow_id)
                .expect("same config covers the same flows in both modes");
            FlowComparison {
                flow_id: b.flow_id,
                baseline: *b,
                qoe: *q,
            }
        })
        .collect();
    let report = ComparisonReport {
        flows,
        baseline,
        qoe,
    };
    if let Some(path) = report_path {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(report)
}

#[derive(Debug)]
pub struct AnalysisOutcome {
    pub metrics: Vec<FlowMetrics>,
    /// Throughput averaging window actually used.
    pub window: SimTime,
}

/// Recompute per-flow metrics from a trace file, the role of the original
/// extraction script. `window` defaults to the last trace timestamp.
pub fn analyze(trace_path: &Path, window: Option<SimTime>) -> Result<AnalysisOutcome, SimError> {
    let reader = BufReader::new(File::open(trace_path)?);
    let mut analyzer = TraceAnalyzer::new();
    let last = analyzer.read_from(reader)?;
    let window = window.unwrap_or(last);
    let metrics = if window == SimTime::ZERO {
        Vec::new()
    } else {
        analyzer.collector().finalize(window)?
    };
    Ok(AnalysisOutcome { metrics, window })
}

pub fn analysis_to_csv(outcome: &AnalysisOutcome) -> String {
    render_csv(outcome.metrics.iter().map(|m| (m, "trace")))
}
