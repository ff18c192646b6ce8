//! Per-flow performance metrics: average throughput, packet loss rate,
//! average delay and average jitter.
//!
//! Jitter is the mean absolute difference between consecutive delivered
//! packets' one-way delays, taken over the delivered subsequence (gaps left
//! by drops are bridged). Accumulation is integer microseconds throughout so
//! live engine metrics and trace re-analysis agree bit-exactly.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::time::{SimTime, MICROS_PER_SEC};
use crate::traffic::FlowId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("throughput window must be positive")]
    ZeroWindow,
}

/// Aggregate results for one flow over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    pub flow_id: FlowId,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Packets still queued (or in-trace open) at the end of the window.
    pub residual: u64,
    pub avg_throughput_bps: f64,
    pub loss_rate: f64,
    /// `None` when nothing was delivered.
    pub avg_delay_s: Option<f64>,
    pub avg_jitter_s: f64,
}

/// Delivered payload bits over the window.
pub fn avg_throughput(delivered_bits: u64, window: SimTime) -> Result<f64, MetricsError> {
    if window == SimTime::ZERO {
        return Err(MetricsError::ZeroWindow);
    }
    Ok(delivered_bits as f64 / window.as_secs_f64())
}

/// Dropped over sent; 0 for an empty flow.
pub fn loss_rate(sent: u64, dropped: u64) -> f64 {
    debug_assert!(dropped <= sent);
    if sent == 0 {
        0.0
    } else {
        dropped as f64 / sent as f64
    }
}

/// Mean one-way delay in seconds; `None` when nothing was delivered.
pub fn avg_delay(delays_us: &[u64]) -> Option<f64> {
    if delays_us.is_empty() {
        return None;
    }
    let sum: u64 = delays_us.iter().sum();
    Some(mean_us(sum, delays_us.len() as u64))
}

/// Mean absolute consecutive delay difference in seconds; 0 below two
/// deliveries. Input must be in seq order.
pub fn avg_jitter(delays_us: &[u64]) -> f64 {
    if delays_us.len() < 2 {
        return 0.0;
    }
    let sum: u64 = delays_us.windows(2).map(|w| w[0].abs_diff(w[1])).sum();
    mean_us(sum, delays_us.len() as u64 - 1)
}

fn mean_us(sum_us: u64, n: u64) -> f64 {
    sum_us as f64 / n as f64 / MICROS_PER_SEC as f64
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
struct FlowAccumulator {
    sent: u64,
    delivered: u64,
    dropped: u64,
    delivered_bits: u64,
    delay_sum_us: u64,
    jitter_sum_us: u64,
    last_delay_us: Option<u64>,
}

/// Streams per-packet outcomes into per-flow aggregates. Fed identically by
/// the live engine and by the trace parser.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct MetricsCollector {
    flows: BTreeMap<FlowId, FlowAccumulator>,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    fn acc(&mut self, flow_id: FlowId) -> &mut FlowAccumulator {
        self.flows.entry(flow_id).or_default()
    }

    pub fn record_sent(&mut self, flow_id: FlowId) {
        self.acc(flow_id).sent += 1;
    }

    pub fn record_dropped(&mut self, flow_id: FlowId) {
        self.acc(flow_id).dropped += 1;
    }

    /// Deliveries must arrive in per-flow seq order (FIFO guarantees this).
    pub fn record_delivered(&mut self, flow_id: FlowId, delay_us: u64, payload_bits: u64) {
        let acc = self.acc(flow_id);
        acc.delivered += 1;
        acc.delivered_bits += payload_bits;
        acc.delay_sum_us += delay_us;
        if let Some(prev) = acc.last_delay_us {
            acc.jitter_sum_us += prev.abs_diff(delay_us);
        }
        acc.last_delay_us = Some(delay_us);
    }

    pub fn flow_ids(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.flows.keys().copied()
    }

    /// Finalize metrics for every flow, throughput averaged over `window`.
    pub fn finalize(&self, window: SimTime) -> Result<Vec<FlowMetrics>, MetricsError> {
        if window == SimTime::ZERO {
            return Err(MetricsError::ZeroWindow);
        }
        Ok(self
            .flows
            .iter()
            .map(|(&flow_id, acc)| {
                let outcomes = acc.delivered + acc.dropped;
                FlowMetrics {
                    flow_id,
                    sent: acc.sent,
                    delivered: acc.delivered,
                    dropped: acc.dropped,
                    residual: acc.sent - outcomes,
                    avg_throughput_bps: acc.delivered_bits as f64 / window.as_secs_f64(),
                    loss_rate: loss_rate(acc.sent, acc.dropped),
                    avg_delay_s: if acc.delivered == 0 {
                        None
                    } else {
                        Some(mean_us(acc.delay_sum_us, acc.delivered))
                    },
                    avg_jitter_s: if acc.delivered < 2 {
                        0.0
                    } else {
                        mean_us(acc.jitter_sum_us, acc.delivered - 1)
                    },
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn throughput_examples() {
        assert_eq!(avg_throughput(0, SimTime::from_secs(1)).unwrap(), 0.0);
        // 1000 packets x 1600 bits over 1 s
        assert_eq!(avg_throughput(1_600_000, SimTime::from_secs(1)).unwrap(), 1.6e6);
        assert_eq!(avg_throughput(1, SimTime::ZERO), Err(MetricsError::ZeroWindow));
    }

    #[test]
    fn loss_rate_examples() {
        assert_eq!(loss_rate(100, 0), 0.0);
        assert_eq!(loss_rate(100, 5), 0.05);
        assert_eq!(loss_rate(0, 0), 0.0);
    }

    #[test]
    fn delay_examples() {
        assert_eq!(avg_delay(&[10_000, 10_000, 10_000]), Some(0.010));
        assert_relative_eq!(avg_delay(&[10_000, 14_000, 12_000]).unwrap(), 0.012);
        assert_eq!(avg_delay(&[]), None);
    }

    #[test]
    fn jitter_examples() {
        assert_eq!(avg_jitter(&[10_000, 10_000, 10_000]), 0.0);
        // (|10-14| + |14-12|) / 2 = 3 ms
        assert_relative_eq!(avg_jitter(&[10_000, 14_000, 12_000]), 0.003);
        assert_eq!(avg_jitter(&[10_000]), 0.0);
        assert_eq!(avg_jitter(&[]), 0.0);
    }

    #[test]
    fn jitter_invariant_under_constant_delay_shift() {
        let base = [10_000u64, 14_000, 12_000, 9_000, 20_000];
        let shifted: Vec<u64> = base.iter().map(|d| d + 5_000).collect();
        assert_eq!(avg_jitter(&base), avg_jitter(&shifted));
        let d0 = avg_delay(&base).unwrap();
        let d1 = avg_delay(&shifted).unwrap();
        assert_relative_eq!(d1 - d0, 0.005, max_relative = 1e-12);
    }

    #[test]
    fn collector_matches_pure_functions() {
        let mut c = MetricsCollector::new();
        let delays = [10_000u64, 14_000, 12_000];
        for (i, &d) in delays.iter().enumerate() {
            c.record_sent(7);
            let _ = i;
            c.record_delivered(7, d, 1_600);
        }
        c.record_sent(7);
        c.record_dropped(7);
        let m = &c.finalize(SimTime::from_secs(2)).unwrap()[0];
        assert_eq!(m.flow_id, 7);
        assert_eq!((m.sent, m.delivered, m.dropped, m.residual), (4, 3, 1, 0));
        assert_eq!(m.avg_delay_s, avg_delay(&delays));
        assert_eq!(m.avg_jitter_s, avg_jitter(&delays));
        assert_eq!(m.loss_rate, 0.25);
        assert_eq!(m.avg_throughput_bps, 4_800.0 / 2.0);
    }

    #[test]
    fn empty_flow_conventions() {
        let mut c = MetricsCollector::new();
        c.record_sent(1);
        let m = &c.finalize(SimTime::from_secs(1)).unwrap()[0];
        assert_eq!(m.avg_delay_s, None);
        assert_eq!(m.avg_jitter_s, 0.0);
        assert_eq!(m.loss_rate, 0.0);
        assert_eq!(m.residual, 1);
    }
}
