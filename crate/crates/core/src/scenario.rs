//! Scenario configuration: flows, MAC, controller, run length and outputs.
//!
//! The on-disk format is TOML. Rates are accepted in the source tables'
//! unit (kilobytes/s, see [`crate::traffic::rate_of`]) and converted to
//! bits/s internally. The built-in default reproduces the five-user
//! scenario: two 133.33-unit flows (200 B / 1.5 ms) with a 120-unit floor
//! and three 200-unit flows (200 B / 1 ms) with a 150-unit floor, 200 s of
//! simulated time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::mac::MacConfig;
use crate::scheduler::{ControllerConfig, LossScope, SchedulerMode};
use crate::time::SimTime;
use crate::traffic::{FlowId, FlowSpec, ServiceClass, BPS_PER_CONFIG_RATE_UNIT};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Simulated duration in seconds.
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    pub mac: MacSection,
    pub controller: ControllerSection,
    pub flows: Vec<FlowSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacSection {
    pub frame_duration_ms: f64,
    pub uplink_capacity_mbps: f64,
    pub queue_limit: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub mode: SchedulerMode,
    pub reset_period_s: f64,
    pub descent_duration_s: f64,
    pub control_epoch_s: f64,
    #[serde(default = "default_loss_scope")]
    pub loss_scope: LossScope,
}

fn default_loss_scope() -> LossScope {
    LossScope::All
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub id: FlowId,
    pub packet_size_bytes: u32,
    /// Inter-packet interval at the maximum rate, in seconds.
    pub interval_s: f64,
    /// Minimum subjective rate requirement, table units (kilobytes/s).
    pub min_rate: f64,
    #[serde(default = "default_service_class")]
    pub service_class: ServiceClass,
    #[serde(default)]
    pub priority: u8,
}

fn default_service_class() -> ServiceClass {
    ServiceClass::Ugs
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let flow = |id, interval_s, min_rate| FlowSection {
            id,
            packet_size_bytes: 200,
            interval_s,
            min_rate,
            service_class: ServiceClass::Ugs,
            priority: 0,
        };
        ScenarioConfig {
            duration_s: 200.0,
            seed: 42,
            trace_path: None,
            report_path: None,
            mac: MacSection {
                // 4 ms frame: capacity 24_000 bits is exactly 15 of the
                // default 1600-bit packets, so no capacity is lost to
                // whole-packet quantization (see [`MacConfig`]).
                frame_duration_ms: 4.0,
                uplink_capacity_mbps: 6.0,
                queue_limit: 50,
            },
            controller: ControllerSection {
                mode: SchedulerMode::Qoe,
                reset_period_s: 20.0,
                descent_duration_s: 18.0,
                control_epoch_s: 0.5,
                loss_scope: LossScope::All,
            },
            flows: vec![
                flow(1, 0.0015, 120.0),
                flow(2, 0.001, 150.0),
                flow(3, 0.001, 150.0),
                flow(4, 0.001, 150.0),
                flow(5, 0.0015, 120.0),
            ],
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn mac_config(&self) -> MacConfig {
        MacConfig {
            frame_duration: SimTime::from_secs_f64(self.mac.frame_duration_ms / 1_000.0),
            uplink_capacity_bps: self.mac.uplink_capacity_mbps * 1e6,
            queue_limit: self.mac.queue_limit,
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            mode: self.controller.mode,
            reset_period: SimTime::from_secs_f64(self.controller.reset_period_s),
            descent_duration: SimTime::from_secs_f64(self.controller.descent_duration_s),
            control_epoch: SimTime::from_secs_f64(self.controller.control_epoch_s),
            loss_scope: self.controller.loss_scope,
        }
    }

    pub fn flow_specs(&self) -> Result<Vec<FlowSpec>, SimError> {
        self.flows
            .iter()
            .map(|f| {
                FlowSpec::new(
                    f.id,
                    f.packet_size_bytes,
                    SimTime::from_secs_f64(f.interval_s),
                    f.min_rate * BPS_PER_CONFIG_RATE_UNIT,
                    f.service_class,
                    f.priority,
                )
                .map_err(|e| SimError::ConfigInvalid(format!("flow {}: {e}", f.id)))
            })
            .collect()
    }

    // `!(x > 0.0)` (rather than `x <= 0.0`) is deliberate: it also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::ConfigInvalid(msg));
        if !(self.duration_s > 0.0) {
            return invalid("duration must be positive".into());
        }
        if !(self.mac.frame_duration_ms > 0.0) {
            return invalid("frame duration must be positive".into());
        }
        if !(self.mac.uplink_capacity_mbps > 0.0) {
            return invalid("uplink capacity must be positive".into());
        }
        if self.mac.queue_limit < 1 {
            return invalid("queue limit must be at least 1".into());
        }
        if self.flows.is_empty() {
            return invalid("at least one flow is required".into());
        }
        let mut ids: Vec<FlowId> = self.flows.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.flows.len() {
            return invalid("flow ids must be unique".into());
        }
        for f in &self.flows {
            if f.packet_size_bytes == 0 {
                return invalid(format!("flow {}: packet size must be positive", f.id));
            }
            if !(f.interval_s > 0.0) {
                return invalid(format!("flow {}: interval must be positive", f.id));
            }
            if !f.service_class.is_schedulable() {
                return invalid(format!(
                    "flow {}: service class {:?} is declared but not schedulable; only UGS flows are supported",
                    f.id, f.service_class
                ));
            }
        }
        let specs = self.flow_specs()?;
        for s in &specs {
            if s.min_rate_bps > s.max_rate_bps {
                return invalid(format!(
                    "flow {}: minimum rate {} exceeds maximum rate {}",
                    s.flow_id, s.min_rate_bps, s.max_rate_bps
                ));
            }
        }
        self.controller_config()
            .validate()
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }
}
