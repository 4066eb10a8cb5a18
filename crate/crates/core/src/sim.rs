//! Closed-loop simulation: a walker model driven by the guidance it receives.
//!
//! The ideal walker traces the route polyline at constant speed and ignores
//! all feedback. The reactive walker only knows its own heading and what it
//! perceives: it walks straight, drifts by a seeded Gaussian random walk, and
//! changes heading `reaction_latency_s` after a signal:
//!
//! | signal                    | response                                             |
//! |---------------------------|------------------------------------------------------|
//! | completion                | stop walking                                         |
//! | success                   | walk on                                              |
//! | clock train (option A)    | decode once the train has ended, rotate by the angle |
//! | ping (option B)           | rotate towards the target until the success signal   |
//! | compass click             | steer towards the target while walking, until silent |
//!
//! Floor changes are taken instantly once the walker comes within the
//! announcement distance of the stairs or elevator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoders::{self, DirectionOption, Meaning};
use crate::error::{Error, Result};
use crate::fsm::{GuidanceMode, GuidanceParams, ModeKind};
use crate::geo::{normalize_angle, signed_deviation, WaypointKind};
use crate::map::RouteFile;
use crate::session::GuidanceSession;
use crate::trace::{PhaseName, SimTrace, TraceEvent, TraceHeader, TRACE_VERSION};
use crate::{DirectionConfig, Point, Pose, Pulse, PulseTrain, Route};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkerKind {
    Ideal,
    Reactive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkerModel {
    pub kind: WalkerKind,
    pub speed_mps: f64,
    pub reaction_latency_s: f64,
    pub heading_noise_deg_std: f64,
    pub turn_rate_dps: f64,
    pub rng_seed: u64,
}

impl Default for WalkerModel {
    fn default() -> Self {
        WalkerModel {
            kind: WalkerKind::Reactive,
            speed_mps: 1.2,
            reaction_latency_s: 0.6,
            heading_noise_deg_std: 3.0,
            turn_rate_dps: 120.0,
            rng_seed: 0,
        }
    }
}

impl WalkerModel {
    pub fn ideal() -> Self {
        WalkerModel {
            kind: WalkerKind::Ideal,
            ..Default::default()
        }
    }

    pub fn reactive(seed: u64) -> Self {
        WalkerModel {
            rng_seed: seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(Error::invalid(format!("walker speed must be positive, got {}", self.speed_mps)));
        }
        if !(self.reaction_latency_s.is_finite() && self.reaction_latency_s >= 0.0) {
            return Err(Error::invalid("reaction latency must be non-negative"));
        }
        if !(self.heading_noise_deg_std.is_finite() && self.heading_noise_deg_std >= 0.0) {
            return Err(Error::invalid("heading noise must be non-negative"));
        }
        if !(self.turn_rate_dps.is_finite() && self.turn_rate_dps > 0.0) {
            return Err(Error::invalid("turn rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub tick_s: f64,
    pub timeout_s: f64,
    /// Recorded in the trace header.
    pub map_name: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tick_s: 0.1,
            timeout_s: 600.0,
            map_name: String::new(),
        }
    }
}

/// Simulates one walk from the first waypoint until arrival or timeout.
pub fn run(
    route: &Route,
    walker: &WalkerModel,
    mode: GuidanceMode,
    params: &GuidanceParams,
    opts: &RunOptions,
) -> Result<SimTrace> {
    if !(opts.tick_s.is_finite() && opts.tick_s > 0.0) {
        return Err(Error::invalid(format!("tick must be positive, got {}", opts.tick_s)));
    }
    if !(opts.timeout_s.is_finite() && opts.timeout_s > 0.0) {
        return Err(Error::invalid("timeout must be positive"));
    }
    walker.validate()?;
    let header = TraceHeader {
        v: TRACE_VERSION,
        map: opts.map_name.clone(),
        route: route.id().to_string(),
        mode: mode.label().to_string(),
        voice: mode.voice_enabled,
        announce_doors: mode.announce_doors,
        walker: Some(walker.clone()),
        seed: walker.rng_seed,
        tick_s: opts.tick_s,
        params: params.clone(),
        route_def: RouteFile::from(route),
    };
    let (mut session, mut events) =
        GuidanceSession::start(route.clone(), mode, params.clone(), 0.0)?;
    let mut body = Body::new(route, walker, mode, params);
    let mut k: u64 = 0;
    loop {
        let t = k as f64 * opts.tick_s;
        let pose = body.pose(t)?;
        let fresh = session.feed(&pose)?;
        body.perceive(&fresh, t);
        events.extend(fresh);
        if session.is_arrived() {
            break;
        }
        if t + opts.tick_s > opts.timeout_s + 1e-9 {
            events.push(TraceEvent::State {
                t,
                phase: PhaseName::Timeout,
                waypoint: None,
            });
            break;
        }
        k += 1;
        body.advance(t, k as f64 * opts.tick_s, &session);
    }
    Ok(SimTrace { header, events })
}

enum Body {
    Ideal(Ideal),
    Reactive(Box<Reactive>),
}

impl Body {
    fn new(route: &Route, model: &WalkerModel, mode: GuidanceMode, params: &GuidanceParams) -> Self {
        match model.kind {
            WalkerKind::Ideal => Body::Ideal(Ideal {
                route: route.clone(),
                speed: model.speed_mps,
                s: 0.0,
            }),
            WalkerKind::Reactive => Body::Reactive(Box::new(Reactive::new(route, model, mode, params))),
        }
    }

    fn pose(&self, t: f64) -> Result<Pose> {
        match self {
            Body::Ideal(w) => w.pose(t),
            Body::Reactive(w) => Pose::new(w.pos.clone(), w.heading, t),
        }
    }

    fn perceive(&mut self, events: &[TraceEvent], t: f64) {
        if let Body::Reactive(w) = self {
            w.perceive(events, t);
        }
    }

    fn advance(&mut self, t: f64, t_next: f64, session: &GuidanceSession) {
        match self {
            Body::Ideal(w) => w.s += w.speed * (t_next - t),
            Body::Reactive(w) => w.advance(t, t_next, session),
        }
    }
}

struct Ideal {
    route: Route,
    speed: f64,
    s: f64,
}

impl Ideal {
    fn pose(&self, t: f64) -> Result<Pose> {
        let (p, seg) = self.route.point_at(self.s);
        let n = self.route.segment_count();
        let heading = (seg..n)
            .chain((0..seg).rev())
            .find_map(|i| self.route.segment_bearing(i))
            .unwrap_or(0.0);
        Pose::new(p, heading, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Reaction {
    Halt,
    /// `heard` is when the success train started.
    Resume { heard: f64 },
    /// Turn by a decoded clock angle; `heard` is when the train ended.
    Turn { angle: f64, heard: f64 },
    Seek,
    Correct { until: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Motion {
    Walking,
    Turning(f64),
    Seeking,
}

struct Reactive {
    route: Route,
    model: WalkerModel,
    mode: GuidanceMode,
    direction: DirectionConfig,
    floor_change_radius: f64,
    /// A compass click keeps the walker correcting for one slowest click period.
    correct_window: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    pos: Point,
    heading: f64,
    halted: bool,
    motion: Motion,
    correct_until: f64,
    /// Clock trains heard before this describe a heading already abandoned.
    stale_before: f64,
    reactions: Vec<(f64, Reaction)>,
    /// Pulses of the clock train being listened to.
    heard: Vec<(f64, f64)>,
    floor_cursor: usize,
}

impl Reactive {
    fn new(route: &Route, model: &WalkerModel, mode: GuidanceMode, params: &GuidanceParams) -> Self {
        let start = &route.waypoints()[0].point;
        let heading = (0..route.segment_count())
            .find_map(|i| route.segment_bearing(i))
            .unwrap_or(0.0);
        let noise = (model.heading_noise_deg_std > 0.0)
            .then(|| Normal::new(0.0, model.heading_noise_deg_std).expect("validated std"));
        Reactive {
            route: route.clone(),
            model: model.clone(),
            mode,
            direction: DirectionConfig {
                channel: mode.channel,
                ..params.direction
            },
            floor_change_radius: params.announce_distance_m.max(params.reach_radius_m),
            correct_window: (params.compass.interval_max_ms + params.compass.pulse_length_ms) / 1000.0
                + 0.05,
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
            noise,
            pos: start.clone(),
            heading,
            halted: false,
            motion: Motion::Walking,
            correct_until: f64::NEG_INFINITY,
            stale_before: f64::NEG_INFINITY,
            reactions: Vec::new(),
            heard: Vec::new(),
            floor_cursor: 0,
        }
    }

    fn react(&mut self, at: f64, r: Reaction) {
        let idx = self.reactions.partition_point(|(t, _)| *t <= at);
        self.reactions.insert(idx, (at, r));
    }

    fn perceive(&mut self, events: &[TraceEvent], t: f64) {
        let latency = self.model.reaction_latency_s;
        for ev in events {
            let TraceEvent::Pulse {
                t: start,
                length_ms,
                meaning,
                ..
            } = ev
            else {
                continue;
            };
            let end = start + length_ms / 1000.0;
            match (meaning, self.mode.kind) {
                (Meaning::Completion, _) => self.react(end + latency, Reaction::Halt),
                (Meaning::Success, _) => {
                    self.react(end + latency, Reaction::Resume { heard: *start })
                }
                (Meaning::Direction, ModeKind::Compass) => {
                    let window = self.correct_window;
                    self.react(
                        start + latency,
                        Reaction::Correct {
                            until: start + latency + window,
                        },
                    )
                }
                (Meaning::Ping, _) => self.react(end + latency, Reaction::Seek),
                (Meaning::Direction, ModeKind::EventBased(DirectionOption::CountingClock)) => {
                    self.heard.push((*start, *length_ms))
                }
                _ => {}
            }
        }
        // A clock train is over once the inter-pulse gap passes in silence.
        if let Some(&(s, len)) = self.heard.last() {
            let silent_from = s + (len + self.direction.inter_pulse_gap_ms) / 1000.0;
            if t + 1e-9 >= silent_from {
                if let Some(angle) = self.decode_heard() {
                    self.react(t + latency, Reaction::Turn { angle, heard: t });
                }
                self.heard.clear();
            }
        }
    }

    fn decode_heard(&self) -> Option<f64> {
        let n = self.heard.len();
        let pulses = self
            .heard
            .iter()
            .enumerate()
            .map(|(i, &(_, len))| Pulse {
                length_ms: len,
                gap_after_ms: if i + 1 < n {
                    self.direction.inter_pulse_gap_ms
                } else {
                    0.0
                },
                channel: self.mode.channel,
            })
            .collect();
        let train = PulseTrain::new(pulses, Meaning::Direction).ok()?;
        encoders::decode_direction_a(&train, &self.direction)
            .ok()
            .map(|turn| turn.angle_deg)
    }

    fn deviation_to_target(&self, session: &GuidanceSession) -> f64 {
        let Some(idx) = session.steering_target() else {
            return 0.0;
        };
        let target = &self.route.waypoint(idx).point;
        let Ok(pose) = Pose::new(self.pos.clone(), self.heading, 0.0) else {
            return 0.0;
        };
        signed_deviation(&pose, target).unwrap_or(0.0)
    }

    fn rotate(&mut self, by: f64) {
        self.heading = normalize_angle(self.heading + by).unwrap_or(self.heading);
    }

    fn advance(&mut self, t: f64, t_next: f64, session: &GuidanceSession) {
        let dt = t_next - t;
        while self.reactions.first().is_some_and(|(at, _)| *at <= t + 1e-9) {
            let (_, r) = self.reactions.remove(0);
            match r {
                Reaction::Halt => self.halted = true,
                Reaction::Resume { heard } => {
                    self.halted = false;
                    self.stale_before = self.stale_before.max(heard);
                    if self.motion == Motion::Seeking {
                        self.motion = Motion::Walking;
                    }
                }
                Reaction::Turn { angle, heard } => {
                    if heard >= self.stale_before {
                        self.stale_before = t;
                        self.motion = Motion::Turning(angle);
                    }
                }
                Reaction::Seek => self.motion = Motion::Seeking,
                Reaction::Correct { until } => self.correct_until = self.correct_until.max(until),
            }
        }
        let max_turn = self.model.turn_rate_dps * dt;
        match self.motion {
            Motion::Turning(remaining) => {
                let step = remaining.clamp(-max_turn, max_turn);
                self.rotate(step);
                let left = remaining - step;
                self.motion = if left.abs() < 1e-9 {
                    Motion::Walking
                } else {
                    Motion::Turning(left)
                };
                return;
            }
            Motion::Seeking => {
                let dev = self.deviation_to_target(session);
                self.rotate(dev.clamp(-max_turn, max_turn));
                return;
            }
            Motion::Walking => {}
        }
        if self.halted {
            return;
        }
        if t < self.correct_until {
            let dev = self.deviation_to_target(session);
            self.rotate(dev.clamp(-max_turn, max_turn));
        }
        if let Some(noise) = self.noise {
            let d = noise.sample(&mut self.rng);
            self.rotate(d);
        }
        let h = self.heading.to_radians();
        let step = self.model.speed_mps * dt;
        self.pos.x += step * h.sin();
        self.pos.y += step * h.cos();
        self.take_floor_change();
    }

    fn take_floor_change(&mut self) {
        let wps = self.route.waypoints();
        while let Some(f) = (self.floor_cursor..wps.len().saturating_sub(1)).find(|&i| {
            matches!(wps[i].kind, WaypointKind::FloorChange(_))
                && !wps[i].point.same_floor(&wps[i + 1].point)
        }) {
            let near = self
                .pos
                .distance(&wps[f].point)
                .is_some_and(|d| d <= self.floor_change_radius);
            if !near {
                return;
            }
            self.pos = wps[f + 1].point.clone();
            self.floor_cursor = f + 1;
        }
    }
}
