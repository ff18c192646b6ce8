//! Deterministic discrete-event core: virtual clock and ordered event queue.
//!
//! Events dequeue in `(fire_at, insertion sequence)` order, so simultaneous
//! events replay identically across runs and platforms. A single queue is
//! strictly single-threaded; independent runs each own their engine.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::time::SimTime;
use crate::traffic::{FlowId, Packet};

/// What an event does when it fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A subscriber station emits the next packet of `flow`.
    PacketArrival { flow: FlowId },
    /// Uplink frame boundary: allocate grants and transmit queued packets.
    FrameBoundary,
    /// `packet` finishes its transmission slot on the serial channel.
    Delivery { packet: Packet },
    /// Rate-controller epoch tick.
    ControlEpoch,
    /// Periodic reset of all flows back to their maximum rate.
    RateReset,
    /// Marks the simulation horizon.
    EndOfSimulation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub fire_at: SimTime,
    pub kind: EventKind,
}

/// Handle returned by [`EventQueue::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule event at {fire_at} behind the clock at {clock}")]
    SchedulingInPast { fire_at: SimTime, clock: SimTime },
}

#[derive(Debug)]
struct QueuedEvent {
    fire_at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    clock: SimTime,
    next_seq: u64,
    heap: BinaryHeap<QueuedEvent>,
    cancelled: HashSet<u64>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Pending events, cancelled ones included until they surface.
    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: Event) -> Result<EventHandle, EngineError> {
        if event.fire_at < self.clock {
            return Err(EngineError::SchedulingInPast {
                fire_at: event.fire_at,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(QueuedEvent {
            fire_at: event.fire_at,
            seq,
            kind: event.kind,
        });
        Ok(EventHandle(seq))
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop the next non-cancelled event with `fire_at <= until`, advancing the
    /// clock to its fire time. Returns `None` when nothing is due.
    pub fn pop_due(&mut self, until: SimTime) -> Option<Event> {
        loop {
            let due = matches!(self.heap.peek(), Some(ev) if ev.fire_at <= until);
            if !due {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.clock);
            self.clock = ev.fire_at;
            return Some(Event {
                fire_at: ev.fire_at,
                kind: ev.kind,
            });
        }
    }

    /// Land the clock on `t` after the queue has drained up to it.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.clock, "clock never decreases");
        self.clock = t;
    }

    /// Process every due event through `handler`, then land the clock on
    /// `until`. Returns the number of events processed.
    pub fn run(
        &mut self,
        until: SimTime,
        mut handler: impl FnMut(&mut EventQueue, Event),
    ) -> u64 {
        let mut processed = 0;
        while let Some(ev) = self.pop_due(until) {
            handler(self, ev);
            processed += 1;
        }
        self.clock = until;
        processed
    }
}
