//! Per-packet event trace: emission during a run and re-analysis afterwards.
//!
//! One ASCII line per event, `<kind> <time> <flow_id> <seq> <size>`:
//!
//! ```text
//! s 0.001500 1 0 200
//! r 0.005000 1 0 200
//! d 0.013500 2 41 200
//! ```
//!
//! `s` marks a packet leaving its source, `r` its delivery, `d` a queue
//! drop. Times are seconds with six decimal digits, exactly the engine's
//! microsecond clock, so parse(emit(run)) is lossless.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::metrics::MetricsCollector;
use crate::time::{SimTime, MICROS_PER_SEC};
use crate::traffic::FlowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Sent,
    Received,
    Dropped,
}

impl TraceKind {
    fn letter(self) -> char {
        match self {
            TraceKind::Sent => 's',
            TraceKind::Received => 'r',
            TraceKind::Dropped => 'd',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub kind: TraceKind,
    pub time: SimTime,
    pub flow_id: FlowId,
    pub seq: u64,
    pub size: u32,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("failed to write trace: {0}")]
    SinkWrite(#[from] io::Error),
    #[error("malformed trace line {0}")]
    MalformedLine(u64),
    #[error("event for flow {flow_id} seq {seq} has no prior send")]
    OrphanEvent { flow_id: FlowId, seq: u64 },
}

/// Append one trace line to `sink`.
pub fn emit<W: Write>(event: &TraceEvent, sink: &mut W) -> Result<(), TraceError> {
    writeln!(
        sink,
        "{} {} {} {} {}",
        event.kind.letter(),
        event.time,
        event.flow_id,
        event.seq,
        event.size
    )?;
    Ok(())
}

fn parse_time(field: &str) -> Option<SimTime> {
    let (secs, frac) = field.split_once('.')?;
    if frac.is_empty() || frac.len() > 6 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = secs.parse().ok()?;
    let micros: u64 = frac.parse::<u64>().ok()? * 10u64.pow(6 - frac.len() as u32);
    Some(SimTime::from_micros(secs * MICROS_PER_SEC + micros))
}

pub fn parse_line(line: &str, line_no: u64) -> Result<TraceEvent, TraceError> {
    let mut fields = line.split_ascii_whitespace();
    let bad = || TraceError::MalformedLine(line_no);
    let kind = match fields.next().ok_or_else(bad)? {
        "s" => TraceKind::Sent,
        "r" => TraceKind::Received,
        "d" => TraceKind::Dropped,
        _ => return Err(bad()),
    };
    let time = parse_time(fields.next().ok_or_else(bad)?).ok_or_else(bad)?;
    let flow_id: FlowId = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let seq: u64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let size: u32 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if fields.next().is_some() {
        return Err(bad());
    }
    Ok(TraceEvent {
        kind,
        time,
        flow_id,
        seq,
        size,
    })
}

/// Streaming trace analyzer. Joins `r`/`d` lines to their `s` line by
/// `(flow, seq)`, keeping only open packets in memory, and feeds the shared
/// metrics collector.
#[derive(Debug, Default)]
pub struct TraceAnalyzer {
    collector: MetricsCollector,
    // open (flow, seq) -> send time; FIFO delivery keeps this small
    open: std::collections::HashMap<(FlowId, u64), SimTime>,
}

impl TraceAnalyzer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, event: &TraceEvent) -> Result<(), TraceError> {
        match event.kind {
            TraceKind::Sent => {
                self.collector.record_sent(event.flow_id);
                self.open.insert((event.flow_id, event.seq), event.time);
            }
            TraceKind::Received => {
                let sent_at = self.take_open(event)?;
                let delay_us = event.time.as_micros() - sent_at.as_micros();
                self.collector
                    .record_delivered(event.flow_id, delay_us, event.size as u64 * 8);
            }
            TraceKind::Dropped => {
                self.take_open(event)?;
                self.collector.record_dropped(event.flow_id);
            }
        }
        Ok(())
    }

    fn take_open(&mut self, event: &TraceEvent) -> Result<SimTime, TraceError> {
        self.open
            .remove(&(event.flow_id, event.seq))
            .ok_or(TraceError::OrphanEvent {
                flow_id: event.flow_id,
                seq: event.seq,
            })
    }

    /// Last event timestamp makes a natural throughput window when the
    /// configured duration is not known to the analyzer.
    pub fn read_from<R: BufRead>(&mut self, reader: R) -> Result<SimTime, TraceError> {
        let mut last_time = SimTime::ZERO;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = parse_line(&line, idx as u64 + 1)?;
            last_time = last_time.max(event.time);
            self.feed(&event)?;
        }
        Ok(last_time)
    }

    pub fn into_collector(self) -> MetricsCollector {
        self.collector
    }

    pub fn collector(&self) -> &MetricsCollector {
        &self.collector
    }
}
