//! Deterministic discrete-event engine.
//!
//! A single binary heap keyed by `(fire_time, sequence_no)`. Events that share
//! a fire time are dispatched in insertion order.

use alloc::collections::{BTreeSet, BinaryHeap};
use core::cmp::Ordering;
use core::time::Duration;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Clone, Debug)]
pub struct Event<P> {
    pub fire_time: SimTime,
    pub sequence_no: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence_no == other.sequence_no
    }
}

impl<P> Eq for Event<P> {}

impl<P> Ord for Event<P> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence_no.cmp(&self.sequence_no))
    }
}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Handle returned by [`Engine::schedule`], usable to cancel the event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("cannot schedule event at {at} while clock is at {now}")]
    InPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub end: SimTime,
    pub events_dispatched: u64,
    /// Filled in by callers that have access to a wall clock.
    pub wall_time: Option<Duration>,
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<P>>,
    cancelled: BTreeSet<u64>,
    dispatched: u64,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn events_dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<EventHandle, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            fire_time: at,
            sequence_no: seq,
            payload,
        });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> EventHandle {
        let at = self.now + delay;
        // cannot be in the past
        self.schedule(at, payload).expect("relative schedule")
    }

    /// Returns `false` if the event already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let live = self.queue.iter().any(|e| e.sequence_no == handle.0);
        live && self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_time <= end`, advancing the clock.
    pub fn pop_due(&mut self, end: SimTime) -> Option<Event<P>> {
        loop {
            let head = self.queue.peek()?;
            if head.fire_time > end {
                return None;
            }
            let ev = self.queue.pop()?;
            if self.cancelled.remove(&ev.sequence_no) {
                continue;
            }
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            self.dispatched += 1;
            return Some(ev);
        }
    }

    /// Dispatches every event with `fire_time <= end` and leaves the clock at `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> RunReport
    where
        F: FnMut(&mut Self, Event<P>),
    {
        let start_count = self.dispatched;
        while let Some(ev) = self.pop_due(end) {
            handler(self, ev);
        }
        if end > self.now {
            self.now = end;
        }
        RunReport {
            end: self.now,
            events_dispatched: self.dispatched - start_count,
            wall_time: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn schedule_at_now_fires() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::ZERO, 'a').unwrap();
        let mut seen = Vec::new();
        let rep = eng.run_until(SimTime::from_secs(1), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, ['a']);
        assert_eq!(rep.events_dispatched, 1);
    }

    #[test]
    fn equal_times_are_fifo() {
        let mut eng = Engine::new();
        let t = SimTime::from_micros(100);
        eng.schedule(t, 'A').unwrap();
        eng.schedule(t, 'B').unwrap();
        let mut seen = Vec::new();
        eng.run_until(t, |_, ev| seen.push(ev.payload));
        assert_eq!(seen, ['A', 'B']);
    }

    #[test]
    fn past_schedule_rejected() {
        let mut eng: Engine<()> = Engine::new();
        eng.schedule(SimTime::from_micros(60), ()).unwrap();
        eng.run_until(SimTime::from_micros(60), |_, _| {});
        let err = eng.schedule(SimTime::from_micros(50), ()).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::InPast {
                at: SimTime::from_micros(50),
                now: SimTime::from_micros(60)
            }
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut eng: Engine<()> = Engine::new();
        let rep = eng.run_until(SimTime::from_secs(80), |_, _| {});
        assert_eq!(rep.end, SimTime::from_secs(80));
        assert_eq!(rep.events_dispatched, 0);
        assert_eq!(eng.now(), SimTime::from_secs(80));
    }

    #[test]
    fn one_event_dispatched_and_later_ones_kept() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::from_millis(100), 1).unwrap();
        eng.schedule(SimTime::from_secs(81), 2).unwrap();
        let rep = eng.run_until(SimTime::from_secs(80), |_, _| {});
        assert_eq!(rep.events_dispatched, 1);
        assert_eq!(eng.pending(), 1);
    }

    #[test]
    fn cancelled_event_skipped() {
        let mut eng = Engine::new();
        let h = eng.schedule(SimTime::from_micros(5), 'x').unwrap();
        eng.schedule(SimTime::from_micros(6), 'y').unwrap();
        assert!(eng.cancel(h));
        assert!(!eng.cancel(h));
        let mut seen = Vec::new();
        eng.run_until(SimTime::from_micros(10), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, ['y']);
    }

    #[test]
    fn handlers_reschedule_and_clock_is_monotone() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::ZERO, 0u32).unwrap();
        let mut last = SimTime::ZERO;
        let mut n = 0;
        eng.run_until(SimTime::from_millis(10), |eng, ev| {
            assert!(eng.now() >= last);
            last = eng.now();
            n += 1;
            eng.schedule_in(SimTime::from_millis(1), ev.payload + 1);
        });
        assert_eq!(n, 11);
    }
}
