//! Loss-triggered rate controller for UGS flows, plus the fixed-rate
//! baseline mode.
//!
//! Each flow starts at its maximum rate. When any flow sees a packet loss,
//! every flow above its minimum subjective rate steps down at the next
//! control epoch; flows already at their minimum hold. Rates snap back to
//! maximum every `reset_period`. The per-flow step is sized so a flow under
//! sustained loss lands exactly on its minimum `descent_duration` after a
//! reset, for all flows simultaneously.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;
use crate::traffic::{FlowId, FlowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerMode {
    /// Fixed-rate reference: every flow transmits at max_rate for the whole
    /// run, losses are ignored.
    Baseline,
    /// The adaptive controller described above.
    Qoe,
}

/// Which flows a loss event flags for reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossScope {
    /// A loss on any flow flags every flow (default).
    All,
    /// Only the flow that dropped the packet is flagged.
    Culprit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub mode: SchedulerMode,
    pub reset_period: SimTime,
    pub descent_duration: SimTime,
    pub control_epoch: SimTime,
    pub loss_scope: LossScope,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            mode: SchedulerMode::Qoe,
            reset_period: SimTime::from_secs(20),
            descent_duration: SimTime::from_secs(18),
            control_epoch: SimTime::from_secs_f64(0.5),
            loss_scope: LossScope::All,
        }
    }
}

impl ControllerConfig {
    /// Number of control epochs in one full descent.
    pub fn descent_epochs(&self) -> u64 {
        self.descent_duration.div_duration(self.control_epoch)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.control_epoch == SimTime::ZERO {
            return Err(ControllerError::InvalidConfig("control_epoch must be positive"));
        }
        if self.descent_duration >= self.reset_period {
            return Err(ControllerError::InvalidConfig(
                "descent_duration must be shorter than reset_period",
            ));
        }
        if !self.descent_duration.is_multiple_of(self.control_epoch) {
            return Err(ControllerError::InvalidConfig(
                "control_epoch must divide descent_duration evenly",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControllerError {
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("invalid controller config: {0}")]
    InvalidConfig(&'static str),
}

/// A packet loss signal, published by the MAC when a queue overflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossEvent {
    pub flow_id: FlowId,
    pub at: SimTime,
}

/// Live per-flow controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct RateState {
    pub flow_id: FlowId,
    pub current_rate_bps: f64,
    pub max_rate_bps: f64,
    pub min_rate_bps: f64,
    /// Rate removed per lossy control epoch.
    pub step_bps: f64,
    pub loss_seen_this_epoch: bool,
    steps_taken: u64,
}

#[derive(Debug)]
pub struct RateController {
    cfg: ControllerConfig,
    // sorted by flow_id
    states: Vec<RateState>,
}

impl RateController {
    pub fn new(cfg: ControllerConfig, flows: &[FlowSpec]) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let epochs = cfg.descent_epochs();
        let mut states: Vec<RateState> = flows
            .iter()
            .map(|f| RateState {
                flow_id: f.flow_id,
                current_rate_bps: f.max_rate_bps,
                max_rate_bps: f.max_rate_bps,
                min_rate_bps: f.min_rate_bps,
                step_bps: (f.max_rate_bps - f.min_rate_bps) / epochs as f64,
                loss_seen_this_epoch: false,
                steps_taken: 0,
            })
            .collect();
        states.sort_by_key(|s| s.flow_id);
        Ok(RateController { cfg, states })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn states(&self) -> &[RateState] {
        &self.states
    }

    fn state(&self, flow_id: FlowId) -> Result<&RateState, ControllerError> {
        self.states
            .iter()
            .find(|s| s.flow_id == flow_id)
            .ok_or(ControllerError::UnknownFlow(flow_id))
    }

    /// Record a loss. In QoE mode this flags flows for reduction at the next
    /// control epoch; the baseline ignores losses entirely.
    pub fn on_loss(&mut self, loss: LossEvent) {
        if self.cfg.mode == SchedulerMode::Baseline {
            return;
        }
        match self.cfg.loss_scope {
            LossScope::All => {
                for s in &mut self.states {
                    s.loss_seen_this_epoch = true;
                }
            }
            LossScope::Culprit => {
                if let Some(s) = self.states.iter_mut().find(|s| s.flow_id == loss.flow_id) {
                    s.loss_seen_this_epoch = true;
                }
            }
        }
    }

    /// Apply one control epoch: flagged flows above their minimum step down,
    /// flows at the minimum hold, flags clear. Without a flagged loss the
    /// epoch is a no-op (there is no upward recovery between resets).
    pub fn on_control_epoch(&mut self) {
        if self.cfg.mode == SchedulerMode::Baseline {
            return;
        }
        for s in &mut self.states {
            if s.loss_seen_this_epoch {
                if s.current_rate_bps > s.min_rate_bps {
                    s.steps_taken += 1;
                    // Recompute from the reset point so the final step lands
                    // exactly on min_rate.
                    s.current_rate_bps = if s.steps_taken >= descent_epochs_of(s) {
                        s.min_rate_bps
                    } else {
                        s.max_rate_bps - s.steps_taken as f64 * s.step_bps
                    };
                }
                s.loss_seen_this_epoch = false;
            }
        }
    }

    /// Return every flow to its maximum rate.
    pub fn on_reset(&mut self) {
        if self.cfg.mode == SchedulerMode::Baseline {
            return;
        }
        for s in &mut self.states {
            s.current_rate_bps = s.max_rate_bps;
            s.steps_taken = 0;
            s.loss_seen_this_epoch = false;
        }
    }

    /// Rate the MAC should grant (and the source should emit at) right now.
    pub fn current_grant_rate(&self, flow_id: FlowId) -> Result<f64, ControllerError> {
        let s = self.state(flow_id)?;
        Ok(match self.cfg.mode {
            SchedulerMode::Baseline => s.max_rate_bps,
            SchedulerMode::Qoe => s.current_rate_bps,
        })
    }

    /// Snapshot of (flow, grant rate) pairs in flow-id order.
    pub fn grant_rates(&self) -> Vec<(FlowId, f64)> {
        self.states
            .iter()
            .map(|s| {
                let r = match self.cfg.mode {
                    SchedulerMode::Baseline => s.max_rate_bps,
                    SchedulerMode::Qoe => s.current_rate_bps,
                };
                (s.flow_id, r)
            })
            .collect()
    }
}

fn descent_epochs_of(s: &RateState) -> u64 {
    if s.step_bps <= 0.0 {
        return 0;
    }
    ((s.max_rate_bps - s.min_rate_bps) / s.step_bps).round() as u64
}
