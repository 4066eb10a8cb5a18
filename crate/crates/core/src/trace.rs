//! JSON Lines trace files.
//!
//! The first line is a [`TraceHeader`]; every following line is one
//! [`TraceEvent`] tagged by `kind`. Floats go through `serde_json`'s shortest
//! round-trip formatting, so a reloaded trace replays bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{Channel, Meaning};
use crate::error::{Error, Result};
use crate::fsm::{GuidanceMode, GuidanceParams, Phase};
use crate::map::RouteFile;
use crate::scheduler::{DroppedTrain, Emission, SignalSource};
use crate::sim::WalkerModel;
use crate::Pose;

pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub v: u32,
    pub map: String,
    pub route: String,
    pub mode: String,
    pub voice: bool,
    pub announce_doors: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walker: Option<WalkerModel>,
    pub seed: u64,
    pub tick_s: f64,
    pub params: GuidanceParams,
    /// The route itself, so a trace can be replayed and scored without its map.
    pub route_def: RouteFile,
}

impl TraceHeader {
    pub fn guidance_mode(&self) -> Result<GuidanceMode> {
        Ok(self
            .mode
            .parse::<GuidanceMode>()?
            .with_voice(self.voice)
            .with_door_announcements(self.announce_doors))
    }
}

/// Phase names as written to traces; `timeout` marks a run that never arrived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseName {
    Idle,
    Following,
    Approaching,
    Adjusting,
    OffCourse,
    Arrived,
    Timeout,
}

impl From<Phase> for PhaseName {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Idle => PhaseName::Idle,
            Phase::Following(_) => PhaseName::Following,
            Phase::Approaching(_) => PhaseName::Approaching,
            Phase::Adjusting(_) => PhaseName::Adjusting,
            Phase::OffCourse(_) => PhaseName::OffCourse,
            Phase::Arrived => PhaseName::Arrived,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Pose {
        t: f64,
        x: f64,
        y: f64,
        floor: String,
        heading: f64,
    },
    Pulse {
        t: f64,
        channel: Channel,
        length_ms: f64,
        meaning: Meaning,
        source: SignalSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
        train: u64,
    },
    Voice {
        t: f64,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
    },
    State {
        t: f64,
        phase: PhaseName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
    },
    /// A cadence train the scheduler discarded as stale.
    Dropped {
        t: f64,
        meaning: Meaning,
        source: SignalSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
    },
}

impl TraceEvent {
    pub fn t(&self) -> f64 {
        match *self {
            TraceEvent::Pose { t, .. }
            | TraceEvent::Pulse { t, .. }
            | TraceEvent::Voice { t, .. }
            | TraceEvent::State { t, .. }
            | TraceEvent::Dropped { t, .. } => t,
        }
    }

    pub fn from_pose(p: &Pose) -> Self {
        TraceEvent::Pose {
            t: p.t,
            x: p.position.x,
            y: p.position.y,
            floor: p.position.floor.clone(),
            heading: p.heading,
        }
    }

    pub fn from_emission(e: &Emission) -> Self {
        TraceEvent::Pulse {
            t: e.t_start,
            channel: e.channel,
            length_ms: e.length_ms,
            meaning: e.meaning,
            source: e.source,
            waypoint: e.waypoint,
            train: e.train,
        }
    }

    pub fn from_phase(t: f64, phase: Phase) -> Self {
        TraceEvent::State {
            t,
            phase: phase.into(),
            waypoint: phase.waypoint(),
        }
    }

    pub fn from_dropped(d: &DroppedTrain) -> Self {
        TraceEvent::Dropped {
            t: d.requested_at,
            meaning: d.meaning,
            source: d.source,
            waypoint: d.waypoint,
        }
    }

    pub fn is_pose(&self) -> bool {
        matches!(self, TraceEvent::Pose { .. })
    }

    pub fn as_pose(&self) -> Option<Result<Pose>> {
        match self {
            TraceEvent::Pose {
                t,
                x,
                y,
                floor,
                heading,
            } => Some(Pose::new(
                crate::Point::new(*x, *y, floor.clone()),
                *heading,
                *t,
            )),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl SimTrace {
    pub fn arrived(&self) -> bool {
        self.events.iter().any(|e| {
            matches!(
                e,
                TraceEvent::State {
                    phase: PhaseName::Arrived,
                    ..
                }
            )
        })
    }

    pub fn poses(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.is_pose())
    }

    pub fn pulses(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Pulse { .. }))
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let io = |e: std::io::Error| Error::Io {
            path: "<trace>".into(),
            source: e,
        };
        serde_json::to_writer(&mut w, &self.header).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev).map_err(|e| io(e.into()))?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    column: 0,
                    message: "empty trace: missing header line".into(),
                });
            };
            let line = line.map_err(|e| Error::Io {
                path: "<trace>".into(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            break parse_header(&line, i + 1)?;
        };
        let mut events: Vec<TraceEvent> = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Io {
                path: "<trace>".into(),
                source: e,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: TraceEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            if let Some(prev) = events.last() {
                if ev.t() < prev.t() {
                    return Err(Error::Validation(format!(
                        "line {}: event time {} precedes {}",
                        i + 1,
                        ev.t(),
                        prev.t()
                    )));
                }
            }
            events.push(ev);
        }
        Ok(SimTrace { header, events })
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_from(s.as_bytes())
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<TraceHeader> {
    let parse_err = |e: serde_json::Error| Error::Parse {
        line: lineno,
        column: e.column(),
        message: e.to_string(),
    };
    let raw: serde_json::Value = serde_json::from_str(line).map_err(parse_err)?;
    let version = raw.get("v").and_then(|v| v.as_u64()).ok_or_else(|| Error::Parse {
        line: lineno,
        column: 0,
        message: "header lacks a numeric \"v\" field".into(),
    })?;
    if version != u64::from(TRACE_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: TRACE_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(parse_err)
}

pub fn write_trace(trace: &SimTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    trace.write_to(file).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.into(),
            source,
        },
        other => other,
    })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<SimTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    SimTrace::read_from(BufReader::new(file))
}
