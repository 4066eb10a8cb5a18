//! Expands pulse trains into timestamped emissions against an injected clock.
//!
//! Each channel plays one train at a time. A train that arrives while its
//! channel is busy is deferred to the end of the busy interval, trailing gap
//! included, so the silence after a success signal is never interrupted.
//! Cadence pulses that would be deferred by more than their own interval are
//! dropped instead: a late distance pulse carries outdated information.

use std::cell::Cell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoders::{Channel, Meaning};
use crate::error::{Error, Result};
use crate::PulseTrain;

/// Which part of the guidance logic produced a signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    Compass,
    Approach,
    Junction,
    Adjust,
    OffCourse,
}

/// One pulse, placed on the timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub t_start: f64,
    pub length_ms: f64,
    pub channel: Channel,
    pub meaning: Meaning,
    pub source: SignalSource,
    /// Route waypoint the signal refers to.
    pub waypoint: Option<usize>,
    /// Sequence number of the train this pulse belongs to.
    pub train: u64,
}

impl Emission {
    pub fn end(&self) -> f64 {
        self.t_start + self.length_ms / 1000.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRequest {
    pub train: PulseTrain,
    pub at: f64,
    pub source: SignalSource,
    pub waypoint: Option<usize>,
    /// Maximum tolerated deferral in seconds; beyond it the train is dropped.
    pub stale_after_s: Option<f64>,
}

/// A train discarded because it could only have played too late.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedTrain {
    pub requested_at: f64,
    pub earliest_start: f64,
    pub meaning: Meaning,
    pub source: SignalSource,
    pub waypoint: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Enqueued {
    Scheduled { train: u64, start: f64 },
    Dropped(DroppedTrain),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scheduler {
    now: f64,
    busy_until: [f64; 2],
    pending: Vec<Emission>,
    next_train: u64,
    dropped: usize,
}

fn channel_slot(c: Channel) -> usize {
    match c {
        Channel::Haptic => 0,
        Channel::Audio => 1,
    }
}

impl Scheduler {
    pub fn new(start: f64) -> Self {
        Scheduler {
            now: start,
            busy_until: [start; 2],
            pending: Vec::new(),
            next_train: 0,
            dropped: 0,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// End of the current busy interval on a channel.
    pub fn busy_until(&self, channel: Channel) -> f64 {
        self.busy_until[channel_slot(channel)]
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped
    }

    pub fn enqueue(&mut self, req: ScheduleRequest) -> Result<Enqueued> {
        if !req.at.is_finite() {
            return Err(Error::invalid("enqueue time must be finite"));
        }
        if req.at < self.now {
            return Err(Error::invalid(format!(
                "cannot enqueue at {} before the clock ({})",
                req.at, self.now
            )));
        }
        let slot = channel_slot(req.train.channel());
        let start = req.at.max(self.busy_until[slot]);
        if let Some(limit) = req.stale_after_s {
            if start - req.at > limit {
                self.dropped += 1;
                return Ok(Enqueued::Dropped(DroppedTrain {
                    requested_at: req.at,
                    earliest_start: start,
                    meaning: req.train.meaning,
                    source: req.source,
                    waypoint: req.waypoint,
                }));
            }
        }
        let train_id = self.next_train;
        self.next_train += 1;
        let mut offset_ms = 0.0;
        for pulse in &req.train.pulses {
            self.pending.push(Emission {
                t_start: start + offset_ms / 1000.0,
                length_ms: pulse.length_ms,
                channel: pulse.channel,
                meaning: req.train.meaning,
                source: req.source,
                waypoint: req.waypoint,
                train: train_id,
            });
            offset_ms += pulse.length_ms + pulse.gap_after_ms;
        }
        self.busy_until[slot] = start + offset_ms / 1000.0;
        Ok(Enqueued::Scheduled {
            train: train_id,
            start,
        })
    }

    /// Removes and returns every emission due at `now`, ordered by start time.
    pub fn drain_due(&mut self, now: f64) -> Result<Vec<Emission>> {
        if !(now >= self.now) {
            return Err(Error::invalid(format!(
                "clock went backwards: {now} < {}",
                self.now
            )));
        }
        self.now = now;
        let (mut due, rest): (Vec<_>, Vec<_>) =
            self.pending.drain(..).partition(|e| e.t_start <= now);
        self.pending = rest;
        due.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        Ok(due)
    }

    /// Drains everything still queued, regardless of time.
    pub fn drain_all(&mut self) -> Vec<Emission> {
        let mut all = std::mem::take(&mut self.pending);
        all.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        if let Some(last) = all.last() {
            self.now = self.now.max(last.t_start);
        }
        all
    }

    pub fn drain_with(&mut self, clock: &impl Clock) -> Result<Vec<Emission>> {
        self.drain_due(clock.now())
    }
}

/// Source of the current time in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock advanced explicitly; used for simulated time.
#[derive(Debug, Default)]
pub struct ManualClock(Cell<f64>);

impl ManualClock {
    pub fn new(t: f64) -> Self {
        ManualClock(Cell::new(t))
    }

    pub fn set(&self, t: f64) {
        self.0.set(t);
    }

    pub fn advance(&self, dt: f64) {
        self.0.set(self.0.get() + dt);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        self.0.get()
    }
}

/// Wall clock mapped onto session time: `offset + rate * elapsed`.
#[derive(Clone, Debug)]
pub struct WallClock {
    origin: Instant,
    offset: f64,
    rate: f64,
}

impl WallClock {
    pub fn new(offset: f64) -> Self {
        Self::with_rate(offset, 1.0)
    }

    /// A clock running `rate` times faster than real time.
    pub fn with_rate(offset: f64, rate: f64) -> Self {
        WallClock {
            origin: Instant::now(),
            offset,
            rate,
        }
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.offset + self.rate * self.origin.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{self, Pulse};
    use crate::DirectionConfig;

    fn train(n: usize, len: f64, gap: f64, meaning: Meaning) -> PulseTrain {
        let pulses = (0..n)
            .map(|i| Pulse {
                length_ms: len,
                gap_after_ms: if i + 1 < n { gap } else { 0.0 },
                channel: Channel::Haptic,
            })
            .collect();
        PulseTrain::new(pulses, meaning).unwrap()
    }

    fn req(train: PulseTrain, at: f64) -> ScheduleRequest {
        ScheduleRequest {
            train,
            at,
            source: SignalSource::Adjust,
            waypoint: Some(1),
            stale_after_s: None,
        }
    }

    #[test]
    fn three_pulse_train_expands() {
        let mut s = Scheduler::new(0.0);
        s.enqueue(req(train(3, 450.0, 250.0, Meaning::Direction), 10.0))
            .unwrap();
        let out = s.drain_due(12.0).unwrap();
        let starts: Vec<f64> = out.iter().map(|e| e.t_start).collect();
        assert_eq!(starts.len(), 3);
        for (got, want) in starts.iter().zip([10.0, 10.7, 11.4]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(out.iter().all(|e| e.train == out[0].train));
    }

    #[test]
    fn single_ping_on_empty_channel() {
        let mut s = Scheduler::new(0.0);
        let ping = encoders::encode_direction_b(&DirectionConfig::default()).unwrap();
        let r = s.enqueue(req(ping, 3.0)).unwrap();
        assert_eq!(r, Enqueued::Scheduled { train: 0, start: 3.0 });
        assert!(s.drain_due(2.9).unwrap().is_empty());
        let out = s.drain_due(3.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].t_start, 3.0);
    }

    #[test]
    fn train_during_success_gap_is_deferred() {
        let cfg = DirectionConfig::default();
        let mut s = Scheduler::new(0.0);
        s.enqueue(req(encoders::success_signal(&cfg).unwrap(), 1.0))
            .unwrap();
        let r = s
            .enqueue(req(encoders::encode_direction_b(&cfg).unwrap(), 2.0))
            .unwrap();
        match r {
            Enqueued::Scheduled { start, .. } => assert!((start - 2.5).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stale_cadence_pulse_is_dropped() {
        let cfg = DirectionConfig::default();
        let mut s = Scheduler::new(0.0);
        s.enqueue(req(encoders::success_signal(&cfg).unwrap(), 0.0))
            .unwrap();
        let mut r = req(train(1, 80.0, 0.0, Meaning::Distance), 0.1);
        r.stale_after_s = Some(0.5);
        assert!(matches!(s.enqueue(r.clone()).unwrap(), Enqueued::Dropped(_)));
        assert_eq!(s.dropped_count(), 1);
        r.at = 1.2;
        assert!(matches!(
            s.enqueue(r).unwrap(),
            Enqueued::Scheduled { .. }
        ));
    }

    #[test]
    fn drain_is_exactly_once_and_ordered() {
        let mut s = Scheduler::new(0.0);
        assert!(s.drain_due(0.0).unwrap().is_empty());
        let mut audio = train(1, 60.0, 0.0, Meaning::Direction);
        audio.pulses[0].channel = Channel::Audio;
        s.enqueue(req(train(1, 60.0, 0.0, Meaning::Direction), 1.5))
            .unwrap();
        s.enqueue(req(audio, 1.0)).unwrap();
        let out = s.drain_due(2.0).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].t_start <= out[1].t_start);
        assert_eq!(out[0].channel, Channel::Audio);
        assert!(s.drain_due(2.0).unwrap().is_empty());
    }

    #[test]
    fn time_regressions_are_rejected() {
        let mut s = Scheduler::new(0.0);
        s.drain_due(5.0).unwrap();
        assert!(matches!(s.drain_due(4.0), Err(Error::InvalidArgument(_))));
        let r = req(train(1, 60.0, 0.0, Meaning::Direction), 4.0);
        assert!(matches!(s.enqueue(r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn manual_clock_drives_drain() {
        let clock = ManualClock::new(0.0);
        let mut s = Scheduler::new(0.0);
        s.enqueue(req(train(2, 100.0, 100.0, Meaning::Direction), 0.5))
            .unwrap();
        clock.advance(0.6);
        assert_eq!(s.drain_with(&clock).unwrap().len(), 1);
        clock.advance(0.1);
        assert_eq!(s.drain_with(&clock).unwrap().len(), 1);
    }
}
