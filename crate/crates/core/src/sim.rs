//! Run orchestration: wires sources, MAC, controller, trace emission and
//! metrics into one deterministic event loop.
//!
//! Periodic events are pre-scheduled at setup in a fixed order (frame
//! boundaries, then control epochs, then rate resets, then end-of-run), so
//! coincident timestamps always resolve the same way: at a shared instant a
//! frame starts with the pre-epoch rates, the epoch applies, and a reset
//! lands last. Packet arrivals and deliveries are scheduled while running
//! and therefore sort after the pre-scheduled events of the same instant.
//!
//! A frame boundary at time t snapshots the queues and grants for the frame
//! [t, t + frame); each served packet is handed back to the event queue as
//! a delivery at the instant its slot on the serial channel ends, so trace
//! lines come out in global time order.

use std::collections::BTreeMap;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Event, EventKind, EventQueue};
use crate::error::SimError;
use crate::mac::{allocate_grants, EnqueueOutcome, FlowQueue, MacConfig, UplinkChannel};
use crate::metrics::{FlowMetrics, MetricsCollector};
use crate::scenario::ScenarioConfig;
use crate::scheduler::{RateController, SchedulerMode};
use crate::time::SimTime;
use crate::trace::{emit, TraceEvent, TraceKind};
use crate::traffic::{CbrSource, FlowId, Packet};

/// Per-flow packet accounting straight from the MAC queues, independent of
/// the metrics path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowConservation {
    pub flow_id: FlowId,
    pub created: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub residual: u64,
}

impl FlowConservation {
    pub fn holds(&self) -> bool {
        self.created == self.delivered + self.dropped + self.residual
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub metrics: Vec<FlowMetrics>,
    pub events_processed: u64,
    pub final_clock: SimTime,
    pub conservation: Vec<FlowConservation>,
}

struct Simulation<'a, W: Write> {
    queue: EventQueue,
    duration: SimTime,
    mac_cfg: MacConfig,
    sources: BTreeMap<FlowId, CbrSource>,
    flow_queues: BTreeMap<FlowId, FlowQueue>,
    controller: RateController,
    collector: MetricsCollector,
    sink: &'a mut W,
    channel: UplinkChannel,
    // seeded for reproducibility; the CBR scenario itself draws nothing,
    // stochastic channel models would draw from here
    _rng: ChaCha8Rng,
}

/// Execute one deterministic run of `config` in `mode`, streaming the trace
/// into `trace_sink`.
pub fn simulate<W: Write>(
    config: &ScenarioConfig,
    mode: SchedulerMode,
    trace_sink: &mut W,
) -> Result<RunOutcome, SimError> {
    config.validate()?;
    let duration = config.duration();
    let mac_cfg = config.mac_config();
    let specs = config.flow_specs()?;
    let mut controller_cfg = config.controller_config();
    controller_cfg.mode = mode;
    let controller = RateController::new(controller_cfg, &specs)?;

    let mut sim = Simulation {
        queue: EventQueue::new(),
        duration,
        mac_cfg,
        sources: specs
            .iter()
            .map(|s| (s.flow_id, CbrSource::new(s.clone())))
            .collect(),
        flow_queues: specs
            .iter()
            .map(|s| (s.flow_id, FlowQueue::new(s.flow_id, mac_cfg.queue_limit)))
            .collect(),
        controller,
        collector: MetricsCollector::new(),
        sink: trace_sink,
        channel: UplinkChannel::new(
            mac_cfg,
            &specs
                .iter()
                .map(|s| (s.flow_id, s.min_rate_bps))
                .collect::<Vec<_>>(),
        ),
        _rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    sim.schedule_periodic_events(mode)?;
    sim.schedule_initial_arrivals()?;
    sim.run()
}

impl<W: Write> Simulation<'_, W> {
    fn schedule_periodic_events(&mut self, mode: SchedulerMode) -> Result<(), SimError> {
        let schedule = |queue: &mut EventQueue, at: SimTime, kind: EventKind| {
            queue
                .schedule(Event { fire_at: at, kind })
                .expect("setup scheduling starts at t=0");
        };
        let frame = self.mac_cfg.frame_duration;
        for k in 0..self.duration.div_duration(frame) {
            schedule(&mut self.queue, frame.scaled(k), EventKind::FrameBoundary);
        }
        if mode == SchedulerMode::Qoe {
            let cfg = *self.controller.config();
            for k in 1..=self.duration.div_duration(cfg.control_epoch) {
                schedule(
                    &mut self.queue,
                    cfg.control_epoch.scaled(k),
                    EventKind::ControlEpoch,
                );
            }
            let mut k = 1;
            while cfg.reset_period.scaled(k) < self.duration {
                schedule(&mut self.queue, cfg.reset_period.scaled(k), EventKind::RateReset);
                k += 1;
            }
        }
        schedule(&mut self.queue, self.duration, EventKind::EndOfSimulation);
        Ok(())
    }

    fn schedule_initial_arrivals(&mut self) -> Result<(), SimError> {
        let flows: Vec<FlowId> = self.sources.keys().copied().collect();
        for flow in flows {
            let rate = self.controller.current_grant_rate(flow)?;
            let gap = crate::traffic::emission_gap(
                self.sources[&flow].spec().packet_bits(),
                rate,
            );
            self.queue
                .schedule(Event {
                    fire_at: gap,
                    kind: EventKind::PacketArrival { flow },
                })
                .expect("setup scheduling starts at t=0");
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutcome, SimError> {
        let mut processed = 0u64;
        while let Some(ev) = self.queue.pop_due(self.duration) {
            self.handle(ev)?;
            processed += 1;
        }
        self.queue.advance_to(self.duration);
        self.sink.flush()?;

        let conservation = self
            .flow_queues
            .values()
            .map(|q| FlowConservation {
                flow_id: q.flow_id,
                created: q.enqueue_count,
                delivered: q.delivered_count,
                dropped: q.drop_count,
                residual: q.len() as u64,
            })
            .collect();
        Ok(RunOutcome {
            metrics: self.collector.finalize(self.duration)?,
            events_processed: processed,
            final_clock: self.queue.clock(),
            conservation,
        })
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        let now = ev.fire_at;
        match ev.kind {
            EventKind::PacketArrival { flow } => self.on_arrival(flow, now),
            EventKind::FrameBoundary => self.on_frame_start(now),
            EventKind::Delivery { packet } => self.on_delivery(packet, now),
            EventKind::ControlEpoch => {
                self.controller.on_control_epoch();
                Ok(())
            }
            EventKind::RateReset => {
                self.controller.on_reset();
                Ok(())
            }
            EventKind::EndOfSimulation => Ok(()),
        }
    }

    fn on_arrival(&mut self, flow: FlowId, now: SimTime) -> Result<(), SimError> {
        let rate = self.controller.current_grant_rate(flow)?;
        let source = self.sources.get_mut(&flow).expect("known flow");
        let (packet, next) = source.next_emission(rate, now);
        self.trace(TraceKind::Sent, now, &packet)?;
        self.collector.record_sent(flow);

        let queue = self.flow_queues.get_mut(&flow).expect("known flow");
        let (outcome, loss) = queue.enqueue(packet, now);
        if outcome == EnqueueOutcome::Dropped {
            self.trace(TraceKind::Dropped, now, &packet)?;
            self.collector.record_dropped(flow);
            self.controller.on_loss(loss.expect("drop carries a loss event"));
        }

        if next <= self.duration {
            self.queue
                .schedule(Event {
                    fire_at: next,
                    kind: EventKind::PacketArrival { flow },
                })
                .expect("next emission is in the future");
        }
        Ok(())
    }

    fn on_frame_start(&mut self, now: SimTime) -> Result<(), SimError> {
        let rates = self.controller.grant_rates();
        let grants = allocate_grants(&rates, &self.mac_cfg);
        let mut queues: Vec<&mut FlowQueue> = self.flow_queues.values_mut().collect();
        for packet in self.channel.transmit_frame(&mut queues, &grants, now) {
            self.queue
                .schedule(Event {
                    fire_at: packet.delivered_at.expect("stamped by the channel"),
                    kind: EventKind::Delivery { packet },
                })
                .expect("slot times lie within the frame just started");
        }
        Ok(())
    }

    fn on_delivery(&mut self, packet: Packet, now: SimTime) -> Result<(), SimError> {
        self.trace(TraceKind::Received, now, &packet)?;
        let delay_us = now.as_micros() - packet.created_at.as_micros();
        self.collector
            .record_delivered(packet.flow_id, delay_us, packet.bits());
        Ok(())
    }

    fn trace(&mut self, kind: TraceKind, time: SimTime, packet: &Packet) -> Result<(), SimError> {
        emit(
            &TraceEvent {
                kind,
                time,
                flow_id: packet.flow_id,
                seq: packet.seq,
                size: packet.size,
            },
            self.sink,
        )?;
        Ok(())
    }
}
