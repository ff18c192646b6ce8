//! Constant-bit-rate packet sources, one per subscriber station.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimTime, MICROS_PER_SEC};

pub type FlowId = u32;

/// 802.16 service classes. Only UGS is schedulable here; the others are
/// declared so configs naming them fail loudly instead of silently running
/// with the wrong discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Ugs,
    RtPs,
    ErtPs,
    NrtPs,
    Be,
}

/// QoS parameter names attached to a service class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QosParam {
    MaximumSustainedRate,
    MaximumLatencyTolerance,
    JitterTolerance,
    TrafficPriority,
    MaximumReservedRate,
    MinimumReservedRate,
}

impl ServiceClass {
    pub fn qos_params(&self) -> &'static [QosParam] {
        use QosParam::*;
        match self {
            ServiceClass::Ugs => &[MaximumSustainedRate, MaximumLatencyTolerance, JitterTolerance],
            ServiceClass::RtPs => &[TrafficPriority, MaximumLatencyTolerance, MaximumReservedRate],
            ServiceClass::ErtPs => &[
                MinimumReservedRate,
                MaximumSustainedRate,
                MaximumLatencyTolerance,
                JitterTolerance,
                TrafficPriority,
            ],
            ServiceClass::NrtPs => &[TrafficPriority, MaximumReservedRate, MaximumSustainedRate],
            ServiceClass::Be => &[MaximumSustainedRate, TrafficPriority],
        }
    }

    pub fn is_schedulable(&self) -> bool {
        matches!(self, ServiceClass::Ugs)
    }
}

/// A user's traffic contract.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    pub packet_size: u32,
    pub send_interval: SimTime,
    /// Initial (maximum) transmission rate in bits/s, derived from
    /// `packet_size` and `send_interval`.
    pub max_rate_bps: f64,
    /// Minimum subjective rate requirement in bits/s.
    pub min_rate_bps: f64,
    pub service_class: ServiceClass,
    pub priority: u8,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("send interval must be positive")]
    ZeroInterval,
}

impl FlowSpec {
    pub fn new(
        flow_id: FlowId,
        packet_size: u32,
        send_interval: SimTime,
        min_rate_bps: f64,
        service_class: ServiceClass,
        priority: u8,
    ) -> Result<Self, TrafficError> {
        if send_interval == SimTime::ZERO {
            return Err(TrafficError::ZeroInterval);
        }
        let max_rate_bps =
            packet_size as f64 * 8.0 * MICROS_PER_SEC as f64 / send_interval.as_micros() as f64;
        Ok(FlowSpec {
            flow_id,
            packet_size,
            send_interval,
            max_rate_bps,
            min_rate_bps,
            service_class,
            priority,
        })
    }

    pub fn packet_bits(&self) -> u64 {
        self.packet_size as u64 * 8
    }
}

/// One unit of traffic, timestamped for delay/jitter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow_id: FlowId,
    pub seq: u64,
    pub size: u32,
    pub created_at: SimTime,
    pub delivered_at: Option<SimTime>,
}

impl Packet {
    pub fn bits(&self) -> u64 {
        self.size as u64 * 8
    }
}

/// Rate in the configuration's unit: kilobytes per second, the arithmetic the
/// source tables actually use under a "Kbps" label (200 bytes / 0.001 s is
/// written as 200). Internally everything is bits/s; the conversion factor
/// between the two is 8000.
pub fn rate_of(packet_size: u32, interval: SimTime) -> Result<f64, TrafficError> {
    if interval == SimTime::ZERO {
        return Err(TrafficError::ZeroInterval);
    }
    Ok(packet_size as f64 / interval.as_secs_f64() / 1000.0)
}

pub const BPS_PER_CONFIG_RATE_UNIT: f64 = 8000.0;

/// Inter-packet gap at `rate_bps`, rounded half-up to whole microseconds.
pub fn emission_gap(packet_bits: u64, rate_bps: f64) -> SimTime {
    assert!(rate_bps > 0.0, "emission rate must be positive");
    SimTime::from_micros((packet_bits as f64 * MICROS_PER_SEC as f64 / rate_bps).round() as u64)
}

/// Per-flow CBR emitter. Rate changes take effect at the next emission; the
/// in-flight gap is never rescheduled.
#[derive(Debug)]
pub struct CbrSource {
    spec: FlowSpec,
    next_seq: u64,
}

impl CbrSource {
    pub fn new(spec: FlowSpec) -> Self {
        CbrSource { spec, next_seq: 0 }
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    /// Emit one packet now and report when the following one is due at
    /// `current_rate_bps`.
    pub fn next_emission(&mut self, current_rate_bps: f64, now: SimTime) -> (Packet, SimTime) {
        let packet = Packet {
            flow_id: self.spec.flow_id,
            seq: self.next_seq,
            size: self.spec.packet_size,
            created_at: now,
            delivered_at: None,
        };
        self.next_seq += 1;
        let next = now + emission_gap(self.spec.packet_bits(), current_rate_bps);
        (packet, next)
    }
}
