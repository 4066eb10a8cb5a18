//! Guidance state machine.
//!
//! Two modes share one pose-driven transition function:
//!
//! * **Compass**: a click whenever the time since the previous click exceeds
//!   [`compass_interval`] for the current deviation from the next steering
//!   target. Voice still fires at junctions.
//! * **Event based**: silent while following a segment; distance pulses once
//!   the next junction is within the (speed adjusted) trigger distance; a
//!   completion signal on reaching it; direction trains until the pedestrian
//!   faces the outgoing segment; then a success signal.
//!
//! Doors and floor changes are spoken only. They never produce distance,
//! completion or success pulses.
//!
//! The transition function never starts a pulse train while the previous one
//! (trailing gap included) is still playing, so the scheduler only has to
//! defer trains that other producers inject.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoders::{
    self, compass_interval, distance_interval, Channel, DirectionOption, VoiceEvent,
};
use crate::error::{Error, Result};
use crate::geo::{
    distance_to_waypoint, project_progress, signed_deviation, WaypointKind,
};
use crate::scheduler::SignalSource;
use crate::{
    CompassConfig, DirectionConfig, DistanceConfig, Pose, Progress, PulseTrain, Route,
    TurnClassification,
};

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Compass,
    EventBased(DirectionOption),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuidanceMode {
    pub kind: ModeKind,
    pub channel: Channel,
    pub voice_enabled: bool,
    pub announce_doors: bool,
}

impl GuidanceMode {
    pub fn compass(channel: Channel) -> Self {
        GuidanceMode {
            kind: ModeKind::Compass,
            channel,
            voice_enabled: false,
            announce_doors: true,
        }
    }

    /// Event-based vibration with the given direction encoding.
    pub fn event_based(option: DirectionOption) -> Self {
        GuidanceMode {
            kind: ModeKind::EventBased(option),
            channel: Channel::Haptic,
            voice_enabled: false,
            announce_doors: true,
        }
    }

    pub fn with_voice(mut self, on: bool) -> Self {
        self.voice_enabled = on;
        self
    }

    pub fn with_door_announcements(mut self, on: bool) -> Self {
        self.announce_doors = on;
        self
    }

    /// The four pulse modes, by their command-line names.
    pub fn all() -> [GuidanceMode; 4] {
        [
            GuidanceMode::compass(Channel::Haptic),
            GuidanceMode::compass(Channel::Audio),
            GuidanceMode::event_based(DirectionOption::CountingClock),
            GuidanceMode::event_based(DirectionOption::Ping),
        ]
    }

    pub fn label(&self) -> &'static str {
        match (self.kind, self.channel) {
            (ModeKind::Compass, Channel::Haptic) => "compass-haptic",
            (ModeKind::Compass, Channel::Audio) => "compass-audio",
            (ModeKind::EventBased(DirectionOption::CountingClock), Channel::Haptic) => "event-a",
            (ModeKind::EventBased(DirectionOption::Ping), Channel::Haptic) => "event-b",
            (ModeKind::EventBased(DirectionOption::CountingClock), Channel::Audio) => {
                "event-a-audio"
            }
            (ModeKind::EventBased(DirectionOption::Ping), Channel::Audio) => "event-b-audio",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use DirectionOption::*;
        let (kind, channel) = match s {
            "compass-haptic" => (ModeKind::Compass, Channel::Haptic),
            "compass-audio" => (ModeKind::Compass, Channel::Audio),
            "event-a" => (ModeKind::EventBased(CountingClock), Channel::Haptic),
            "event-b" => (ModeKind::EventBased(Ping), Channel::Haptic),
            "event-a-audio" => (ModeKind::EventBased(CountingClock), Channel::Audio),
            "event-b-audio" => (ModeKind::EventBased(Ping), Channel::Audio),
            other => return Err(Error::invalid(format!("unknown guidance mode {other:?}"))),
        };
        Ok(GuidanceMode {
            kind,
            channel,
            voice_enabled: false,
            announce_doors: true,
        })
    }
}

/// Thresholds and encoder settings for one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceParams {
    pub compass: CompassConfig,
    pub distance: DistanceConfig,
    pub direction: DirectionConfig,
    pub reach_radius_m: f64,
    pub align_tol_deg: f64,
    pub off_course_deg: f64,
    pub off_course_hold_s: f64,
    pub repeat_gap_s: f64,
    pub speed_window_s: f64,
    pub lookahead_s: f64,
    /// Doors and floor changes are announced this far ahead.
    pub announce_distance_m: f64,
    /// Off-course detection is suspended this close to the steering target,
    /// where small lateral offsets read as large bearing errors.
    pub off_course_guard_m: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams {
            compass: CompassConfig::default(),
            distance: DistanceConfig::default(),
            direction: DirectionConfig::default(),
            reach_radius_m: 1.0,
            align_tol_deg: 15.0,
            off_course_deg: 30.0,
            off_course_hold_s: 2.0,
            repeat_gap_s: 2.5,
            speed_window_s: 2.0,
            lookahead_s: 4.0,
            announce_distance_m: 3.0,
            off_course_guard_m: 3.0,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<()> {
        self.compass.validate()?;
        self.distance.validate()?;
        self.direction.validate()?;
        let positive = [
            ("reach_radius_m", self.reach_radius_m),
            ("align_tol_deg", self.align_tol_deg),
            ("off_course_deg", self.off_course_deg),
            ("repeat_gap_s", self.repeat_gap_s),
            ("speed_window_s", self.speed_window_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("off_course_hold_s", self.off_course_hold_s),
            ("lookahead_s", self.lookahead_s),
            ("announce_distance_m", self.announce_distance_m),
            ("off_course_guard_m", self.off_course_guard_m),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.align_tol_deg >= 180.0 || self.off_course_deg >= 180.0 {
            return Err(Error::Validation("angle thresholds must be below 180°".into()));
        }
        Ok(())
    }

    /// Approach trigger extended so fast walkers still get `lookahead_s` of warning.
    pub fn effective_trigger_m(&self, speed_mps: f64) -> f64 {
        self.distance
            .trigger_distance_m
            .max(speed_mps * self.lookahead_s)
    }

    fn direction_on(&self, channel: Channel) -> DirectionConfig {
        DirectionConfig {
            channel,
            ..self.direction
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "phase", content = "waypoint", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    /// Walking the route; the index is the segment entered last.
    Following(usize),
    Approaching(usize),
    Adjusting(usize),
    OffCourse(usize),
    Arrived,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Following(_) => "following",
            Phase::Approaching(_) => "approaching",
            Phase::Adjusting(_) => "adjusting",
            Phase::OffCourse(_) => "off_course",
            Phase::Arrived => "arrived",
        }
    }

    pub fn waypoint(&self) -> Option<usize> {
        match *self {
            Phase::Following(i)
            | Phase::Approaching(i)
            | Phase::Adjusting(i)
            | Phase::OffCourse(i) => Some(i),
            Phase::Idle | Phase::Arrived => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sample {
    t: f64,
    x: f64,
    y: f64,
    floor: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceState {
    pub phase: Phase,
    hint: usize,
    last_t: f64,
    /// The channel is silent from this time on.
    channel_free_at: f64,
    last_distance_t: Option<f64>,
    last_compass_t: Option<f64>,
    next_direction_t: f64,
    completion_pending: bool,
    off_since: Option<f64>,
    resume: Phase,
    announce_cursor: usize,
    history: VecDeque<Sample>,
    speed: f64,
}

impl GuidanceState {
    /// Segment search hint; never decreases.
    pub fn hint(&self) -> usize {
        self.hint
    }

    pub fn last_time(&self) -> f64 {
        self.last_t
    }

    pub fn speed_estimate(&self) -> f64 {
        self.speed
    }

    pub fn is_arrived(&self) -> bool {
        self.phase == Phase::Arrived
    }

    /// Waypoint the pedestrian is currently being steered towards.
    pub fn steering_target(&self, route: &Route, mode: &GuidanceMode) -> Option<usize> {
        match (self.phase, mode.kind) {
            (Phase::Arrived | Phase::Idle, _) => None,
            (Phase::Adjusting(j), _) => Some(j + 1),
            (Phase::OffCourse(w), _) => Some(w),
            _ => route.next_waypoint_where(self.hint, WaypointKind::is_steer_target),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GuidanceEvent {
    Voice {
        text: String,
        waypoint: Option<usize>,
    },
    Signal {
        train: PulseTrain,
        source: SignalSource,
        waypoint: Option<usize>,
        /// Tolerated deferral before the scheduler drops the train.
        stale_after_s: Option<f64>,
    },
    Phase(Phase),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    pub event: GuidanceEvent,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GuidanceOutput {
    pub events: Vec<TimedEvent>,
}

impl GuidanceOutput {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn signals(&self) -> impl Iterator<Item = &PulseTrain> {
        self.events.iter().filter_map(|e| match &e.event {
            GuidanceEvent::Signal { train, .. } => Some(train),
            _ => None,
        })
    }

    pub fn voices(&self) -> impl Iterator<Item = &str> {
        self.events.iter().filter_map(|e| match &e.event {
            GuidanceEvent::Voice { text, .. } => Some(text.as_str()),
            _ => None,
        })
    }
}

/// Opens a guidance session at time `t0`.
pub fn start(
    route: &Route,
    mode: &GuidanceMode,
    params: &GuidanceParams,
    t0: f64,
) -> Result<(GuidanceState, GuidanceOutput)> {
    params.validate()?;
    if !t0.is_finite() {
        return Err(Error::invalid("start time must be finite"));
    }
    let state = GuidanceState {
        phase: Phase::Following(0),
        hint: 0,
        last_t: t0,
        channel_free_at: t0,
        last_distance_t: None,
        last_compass_t: None,
        next_direction_t: t0,
        completion_pending: false,
        off_since: None,
        resume: Phase::Following(0),
        announce_cursor: 1,
        history: VecDeque::new(),
        speed: 0.0,
    };
    let mut out = GuidanceOutput::default();
    out.events.push(TimedEvent {
        t: t0,
        event: GuidanceEvent::Phase(state.phase),
    });
    if mode.voice_enabled {
        let first = route
            .next_waypoint_where(0, WaypointKind::is_event_target)
            .expect("route ends in a destination");
        let to_first: f64 = (0..first).map(|s| route.segment_length(s)).sum();
        out.events.push(TimedEvent {
            t: t0,
            event: GuidanceEvent::Voice {
                text: encoders::voice_instruction::<f64>(VoiceEvent::Depart, None, Some(to_first))?,
                waypoint: Some(0),
            },
        });
    }
    Ok((state, out))
}

/// Mean ground speed over the speed window ending at `pose`.
pub fn estimate_speed(state: &GuidanceState, pose: &Pose, window_s: f64) -> f64 {
    let from = pose.t - window_s;
    let mut samples: Vec<(f64, f64, f64, &str)> = state
        .history
        .iter()
        .filter(|s| s.t >= from - TIME_EPS)
        .map(|s| (s.t, s.x, s.y, s.floor.as_str()))
        .collect();
    samples.push((
        pose.t,
        pose.position.x,
        pose.position.y,
        pose.position.floor.as_str(),
    ));
    let span = samples.last().unwrap().0 - samples[0].0;
    if samples.len() < 2 || span <= 0.0 {
        return 0.0;
    }
    let path: f64 = samples
        .windows(2)
        .filter(|w| w[0].3 == w[1].3)
        .map(|w| (w[1].1 - w[0].1).hypot(w[1].2 - w[0].2))
        .sum();
    path / span
}

/// Advances the session by one pose.
pub fn step(
    state: &GuidanceState,
    pose: &Pose,
    route: &Route,
    mode: &GuidanceMode,
    params: &GuidanceParams,
) -> Result<(GuidanceState, GuidanceOutput)> {
    match state.phase {
        Phase::Arrived => return Err(Error::invalid("session already arrived")),
        Phase::Idle => return Err(Error::invalid("session not started")),
        _ => {}
    }
    if !(pose.t.is_finite() && pose.t >= state.last_t) {
        return Err(Error::invalid(format!(
            "pose time {} precedes previous time {}",
            pose.t, state.last_t
        )));
    }
    if !route.has_floor(&pose.position.floor) {
        return Err(Error::invalid(format!(
            "pose on floor {:?} which the route never visits",
            pose.position.floor
        )));
    }
    let mut stepper = Stepper {
        s: state.clone(),
        out: GuidanceOutput::default(),
        pose,
        route,
        mode,
        params,
    };
    stepper.run()?;
    Ok((stepper.s, stepper.out))
}

struct Stepper<'a> {
    s: GuidanceState,
    out: GuidanceOutput,
    pose: &'a Pose,
    route: &'a Route,
    mode: &'a GuidanceMode,
    params: &'a GuidanceParams,
}

impl Stepper<'_> {
    fn t(&self) -> f64 {
        self.pose.t
    }

    fn run(&mut self) -> Result<()> {
        self.s.speed = estimate_speed(&self.s, self.pose, self.params.speed_window_s);
        self.record_sample();
        self.s.last_t = self.pose.t;

        let progress = self.locate()?;
        self.announce(&progress)?;
        match self.mode.kind {
            ModeKind::Compass => self.compass_step(&progress),
            ModeKind::EventBased(option) => self.event_step(&progress, option),
        }
    }

    fn record_sample(&mut self) {
        let keep_from = self.pose.t - self.params.speed_window_s;
        while self
            .s
            .history
            .front()
            .is_some_and(|h| h.t < keep_from - TIME_EPS)
        {
            self.s.history.pop_front();
        }
        self.s.history.push_back(Sample {
            t: self.pose.t,
            x: self.pose.position.x,
            y: self.pose.position.y,
            floor: self.pose.position.floor.clone(),
        });
    }

    /// Projects the pose and advances the hint, never past the active target.
    fn locate(&mut self) -> Result<Progress> {
        let progress = project_progress(self.pose, self.route, self.s.hint)?;
        // The segment leading into the active target is as far as the hint may
        // go until that target has been handled.
        let cap = match self.s.phase {
            Phase::Adjusting(j) => j,
            _ => match self.mode.kind {
                ModeKind::Compass => self.steer_target() - 1,
                ModeKind::EventBased(_) => self.event_target() - 1,
            },
        };
        let cap = cap.min(self.route.segment_count() - 1);
        self.s.hint = self.s.hint.max(progress.segment.min(cap));
        Ok(progress)
    }

    fn event_target(&self) -> usize {
        self.route
            .next_waypoint_where(self.s.hint, WaypointKind::is_event_target)
            .expect("route ends in a destination")
    }

    fn steer_target(&self) -> usize {
        self.route
            .next_waypoint_where(self.s.hint, WaypointKind::is_steer_target)
            .expect("route ends in a destination")
    }

    fn emit(&mut self, event: GuidanceEvent) {
        let t = self.t();
        self.out.events.push(TimedEvent { t, event });
    }

    fn set_phase(&mut self, phase: Phase) {
        if self.s.phase != phase {
            self.s.phase = phase;
            self.emit(GuidanceEvent::Phase(phase));
        }
    }

    fn say(
        &mut self,
        event: VoiceEvent,
        turn: Option<&TurnClassification>,
        distance: Option<f64>,
        waypoint: usize,
    ) -> Result<()> {
        let text = encoders::voice_instruction(event, turn, distance)?;
        self.emit(GuidanceEvent::Voice {
            text,
            waypoint: Some(waypoint),
        });
        Ok(())
    }

    fn channel_free(&self) -> bool {
        self.t() + TIME_EPS >= self.s.channel_free_at
    }

    fn signal(
        &mut self,
        train: PulseTrain,
        source: SignalSource,
        waypoint: usize,
        stale_after_s: Option<f64>,
    ) {
        self.s.channel_free_at = self.s.channel_free_at.max(self.t()) + train.duration_ms() / 1000.0;
        self.emit(GuidanceEvent::Signal {
            train,
            source,
            waypoint: Some(waypoint),
            stale_after_s,
        });
    }

    /// Whether the walker has reached or passed waypoint `idx`.
    fn reached(&self, progress: &Progress, idx: usize) -> bool {
        let wp = &self.route.waypoint(idx).point;
        let within = self
            .pose
            .position
            .distance(wp)
            .is_some_and(|d| d <= self.params.reach_radius_m);
        if within && !matches!(self.route.waypoint(idx).kind, WaypointKind::FloorChange(_)) {
            return true;
        }
        match self.route.waypoint(idx).kind {
            WaypointKind::Destination => return false,
            // Only the far side of the transition counts.
            WaypointKind::FloorChange(_) => return progress.segment > idx,
            _ => {}
        }
        progress.segment >= idx
            || (progress.segment + 1 == idx
                && progress.along >= self.route.segment_length(progress.segment) - 1e-9)
    }

    fn near(&self, idx: usize, radius: f64) -> bool {
        self.pose
            .position
            .distance(&self.route.waypoint(idx).point)
            .is_some_and(|d| d <= radius)
    }

    /// Deviation towards a waypoint, `None` across floors. A pose sitting on
    /// the target counts as aligned.
    fn deviation_to(&self, idx: usize) -> Result<Option<f64>> {
        let target = &self.route.waypoint(idx).point;
        if !self.pose.position.same_floor(target) {
            return Ok(None);
        }
        match signed_deviation(self.pose, target) {
            Ok(d) => Ok(Some(d)),
            Err(Error::DegenerateGeometry(_)) => Ok(Some(0.0)),
            Err(e) => Err(e),
        }
    }

    fn announce(&mut self, progress: &Progress) -> Result<()> {
        let n = self.route.waypoints().len();
        while self.s.announce_cursor < n {
            let cursor = self.s.announce_cursor;
            let Some(idx) = (cursor..n).find(|&i| {
                matches!(
                    self.route.waypoint(i).kind,
                    WaypointKind::Door | WaypointKind::FloorChange(_)
                )
            }) else {
                self.s.announce_cursor = n;
                break;
            };
            let due = progress.segment >= idx
                || distance_to_waypoint(self.route, progress, idx)?
                    <= self.params.announce_distance_m;
            if !due {
                break;
            }
            self.s.announce_cursor = idx + 1;
            match self.route.waypoint(idx).kind {
                WaypointKind::Door if self.mode.announce_doors => {
                    self.say(VoiceEvent::Door, None, None, idx)?
                }
                WaypointKind::FloorChange(via) if self.mode.voice_enabled => {
                    self.say(VoiceEvent::FloorChange(via), None, None, idx)?
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn arrive(&mut self) -> Result<()> {
        self.set_phase(Phase::Arrived);
        if self.mode.voice_enabled {
            let dest = self.route.destination_index();
            self.say(VoiceEvent::Arrived, None, None, dest)?;
        }
        Ok(())
    }

    fn compass_step(&mut self, progress: &Progress) -> Result<()> {
        let mut target = self.steer_target();
        let kind = self.route.waypoint(target).kind;
        if self.reached(progress, target) {
            match kind {
                WaypointKind::Destination => return self.arrive(),
                WaypointKind::Junction => {
                    if self.mode.voice_enabled {
                        if let Some(turn) = self.route.turn_at(target) {
                            self.say(VoiceEvent::AtTurn, Some(&turn), None, target)?;
                        }
                    }
                    self.s.hint = self.s.hint.max(target);
                    self.set_phase(Phase::Following(target));
                    target = self.steer_target();
                }
                // Floor changes count once the pose is on the far side.
                _ if !self.pose.position.same_floor(&self.route.waypoint(target).point) => {
                    self.s.hint = self.s.hint.max(target);
                    target = self.steer_target();
                }
                _ => {}
            }
        }
        let Some(dev) = self.deviation_to(target)? else {
            return Ok(());
        };
        let cfg = CompassConfig {
            channel: self.mode.channel,
            ..self.params.compass
        };
        let Some(interval_ms) = compass_interval(dev, &cfg)? else {
            return Ok(());
        };
        let due = self
            .s
            .last_compass_t
            .is_none_or(|last| self.t() - last + TIME_EPS >= interval_ms / 1000.0);
        if due && self.channel_free() {
            self.s.last_compass_t = Some(self.t());
            self.signal(
                encoders::compass_pulse(&cfg)?,
                SignalSource::Compass,
                target,
                None,
            );
        }
        Ok(())
    }

    fn event_step(&mut self, progress: &Progress, option: DirectionOption) -> Result<()> {
        match self.s.phase {
            Phase::Adjusting(j) => self.adjust(j, option),
            Phase::OffCourse(w) => self.off_course(w, progress, option),
            _ => self.follow(progress, option, true),
        }
    }

    fn follow(
        &mut self,
        progress: &Progress,
        option: DirectionOption,
        watch_heading: bool,
    ) -> Result<()> {
        let target = self.event_target();
        if self.reached(progress, target) {
            if self.route.waypoint(target).kind == WaypointKind::Destination {
                return self.arrive();
            }
            self.s.completion_pending = true;
            self.s.last_distance_t = None;
            self.s.off_since = None;
            self.set_phase(Phase::Adjusting(target));
            if self.mode.voice_enabled {
                if let Some(turn) = self.route.turn_at(target) {
                    self.say(VoiceEvent::AtTurn, Some(&turn), None, target)?;
                }
            }
            return self.adjust(target, option);
        }

        let remaining = distance_to_waypoint(self.route, progress, target)?;
        let trigger = self.params.effective_trigger_m(self.s.speed);
        if matches!(self.s.phase, Phase::Following(_)) && remaining <= trigger {
            self.s.last_distance_t = None;
            self.set_phase(Phase::Approaching(target));
            if self.mode.voice_enabled {
                if let Some(turn) = self.route.turn_at(target) {
                    self.say(VoiceEvent::ApproachTurn, Some(&turn), Some(remaining), target)?;
                }
            }
        }

        if watch_heading && self.check_off_course()? {
            return self.off_course(self.steer_target_for_phase(), progress, option);
        }

        if let Phase::Approaching(_) = self.s.phase {
            let cfg = DistanceConfig {
                trigger_distance_m: trigger,
                channel: self.mode.channel,
                ..self.params.distance
            };
            if let Some(interval_ms) = distance_interval(remaining, &cfg)? {
                let interval_s = interval_ms / 1000.0;
                let due = self
                    .s
                    .last_distance_t
                    .is_none_or(|last| self.t() - last + TIME_EPS >= interval_s);
                if due && self.channel_free() {
                    self.s.last_distance_t = Some(self.t());
                    self.signal(
                        encoders::distance_pulse(&cfg)?,
                        SignalSource::Approach,
                        target,
                        Some(interval_s),
                    );
                }
            }
        }
        Ok(())
    }

    fn steer_target_for_phase(&self) -> usize {
        match self.s.phase {
            Phase::OffCourse(w) => w,
            _ => self.steer_target(),
        }
    }

    /// Tracks sustained deviation; switches to off-course once it has lasted long enough.
    fn check_off_course(&mut self) -> Result<bool> {
        let target = self.steer_target();
        if self.near(target, self.params.off_course_guard_m) {
            self.s.off_since = None;
            return Ok(false);
        }
        let Some(dev) = self.deviation_to(target)? else {
            self.s.off_since = None;
            return Ok(false);
        };
        if dev.abs() <= self.params.off_course_deg {
            self.s.off_since = None;
            return Ok(false);
        }
        let since = *self.s.off_since.get_or_insert(self.t());
        if self.t() - since + TIME_EPS < self.params.off_course_hold_s {
            return Ok(false);
        }
        self.s.off_since = None;
        self.s.resume = self.s.phase;
        self.s.next_direction_t = self.t();
        self.set_phase(Phase::OffCourse(target));
        if self.mode.voice_enabled {
            self.say(VoiceEvent::OffCourse, None, None, target)?;
        }
        Ok(true)
    }

    fn direction_train(&self, dev: f64, option: DirectionOption) -> Result<PulseTrain> {
        let cfg = self.params.direction_on(self.mode.channel);
        match option {
            DirectionOption::Ping => encoders::encode_direction_b(&cfg),
            DirectionOption::CountingClock => {
                let mut turn = TurnClassification::from_angle(dev)?;
                if turn.is_straight() {
                    // Only reachable with an alignment tolerance below half a clock hour.
                    turn.clock_hour = 1;
                    turn.side = if dev >= 0.0 {
                        crate::geo::Side::Right
                    } else {
                        crate::geo::Side::Left
                    };
                }
                encoders::encode_direction_a(&turn, &cfg)
            }
        }
    }

    /// Shared by adjusting and off-course: returns true once aligned and confirmed.
    fn orient(
        &mut self,
        target: usize,
        dev: f64,
        source: SignalSource,
        signal_waypoint: usize,
        option: DirectionOption,
    ) -> Result<bool> {
        if !self.channel_free() {
            return Ok(false);
        }
        let cfg = self.params.direction_on(self.mode.channel);
        if dev.abs() <= self.params.align_tol_deg {
            self.signal(encoders::success_signal(&cfg)?, source, signal_waypoint, None);
            return Ok(true);
        }
        if self.t() + TIME_EPS >= self.s.next_direction_t {
            let train = self.direction_train(dev, option)?;
            let source = if source == SignalSource::Junction {
                SignalSource::Adjust
            } else {
                source
            };
            self.signal(train, source, target, None);
            self.s.next_direction_t = self.s.channel_free_at + self.params.repeat_gap_s;
        }
        Ok(false)
    }

    fn adjust(&mut self, junction: usize, option: DirectionOption) -> Result<()> {
        if self.s.completion_pending {
            if self.channel_free() {
                let cfg = self.params.direction_on(self.mode.channel);
                self.signal(
                    encoders::completion_signal(&cfg)?,
                    SignalSource::Junction,
                    junction,
                    None,
                );
                self.s.completion_pending = false;
                self.s.next_direction_t = self.s.channel_free_at;
            }
            return Ok(());
        }
        let next = junction + 1;
        let dev = self.deviation_to(next)?.unwrap_or(0.0);
        if self.orient(next, dev, SignalSource::Junction, junction, option)? {
            self.s.hint = self.s.hint.max(junction);
            self.s.last_distance_t = None;
            self.s.off_since = None;
            self.set_phase(Phase::Following(junction));
        }
        Ok(())
    }

    fn off_course(&mut self, target: usize, progress: &Progress, option: DirectionOption) -> Result<()> {
        let Some(dev) = self.deviation_to(target)? else {
            return self.resume(progress, option);
        };
        if self.reached(progress, target) {
            return self.resume(progress, option);
        }
        if self.orient(target, dev, SignalSource::OffCourse, target, option)? {
            let resume = self.s.resume;
            self.s.last_distance_t = None;
            self.set_phase(resume);
        }
        Ok(())
    }

    /// Leaves off-course because the target was passed or left the floor, then
    /// re-runs the following logic. The success signal still closes the episode.
    fn resume(&mut self, progress: &Progress, option: DirectionOption) -> Result<()> {
        if let Phase::OffCourse(w) = self.s.phase {
            let cfg = self.params.direction_on(self.mode.channel);
            self.signal(encoders::success_signal(&cfg)?, SignalSource::OffCourse, w, None);
        }
        let resume = self.s.resume;
        self.s.last_distance_t = None;
        self.set_phase(resume);
        self.follow(progress, option, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::Meaning;
    use crate::{Point, Waypoint};

    fn wp(x: f64, y: f64, kind: WaypointKind) -> Waypoint {
        Waypoint::new(Point::new(x, y, "0"), kind)
    }

    /// 20 m north, right turn, 15 m east with a door at 5 m.
    fn l_route() -> Route {
        Route::new(
            "l",
            "a",
            "b",
            vec![
                wp(0.0, 0.0, WaypointKind::Plain),
                wp(0.0, 20.0, WaypointKind::Junction),
                wp(5.0, 20.0, WaypointKind::Door),
                wp(15.0, 20.0, WaypointKind::Destination),
            ],
        )
        .unwrap()
    }

    fn pose(x: f64, y: f64, heading: f64, t: f64) -> Pose {
        Pose::new(Point::new(x, y, "0"), heading, t).unwrap()
    }

    #[test]
    fn start_enters_following() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::event_based(DirectionOption::CountingClock);
        let (s, out) = start(&r, &mode, &params, 0.0).unwrap();
        assert_eq!(s.phase, Phase::Following(0));
        assert_eq!(out.voices().count(), 0);

        let (_, out) = start(&r, &mode.with_voice(true), &params, 0.0).unwrap();
        let voices: Vec<_> = out.voices().collect();
        assert_eq!(voices, vec!["go straight 20 meters"]);
    }

    #[test]
    fn quiet_when_nothing_is_due() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::event_based(DirectionOption::CountingClock);
        let (s, _) = start(&r, &mode, &params, 0.0).unwrap();
        let mut s = s;
        for k in 0..20 {
            let (next, out) = step(&s, &pose(0.0, 2.0, 0.0, k as f64 * 0.1), &r, &mode, &params)
                .unwrap();
            assert!(out.is_empty(), "unexpected output {out:?}");
            s = next;
        }
        assert_eq!(s.phase, Phase::Following(0));
    }

    #[test]
    fn rejects_time_regression_and_unknown_floor() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::compass(Channel::Audio);
        let (s, _) = start(&r, &mode, &params, 5.0).unwrap();
        assert!(step(&s, &pose(0.0, 1.0, 0.0, 4.0), &r, &mode, &params).is_err());
        let upstairs = Pose::new(Point::new(0.0, 1.0, "9"), 0.0, 6.0).unwrap();
        assert!(matches!(
            step(&s, &upstairs, &r, &mode, &params),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn speed_estimate() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::event_based(DirectionOption::Ping);
        let (mut s, _) = start(&r, &mode, &params, 0.0).unwrap();
        assert_eq!(estimate_speed(&s, &pose(0.0, 0.0, 0.0, 0.0), 2.0), 0.0);
        for k in 0..5 {
            let p = pose(0.0, 1.4 * k as f64, 0.0, k as f64);
            s = step(&s, &p, &r, &mode, &params).unwrap().0;
        }
        assert!((s.speed_estimate() - 1.4).abs() < 1e-9);

        let (mut still, _) = start(&r, &mode, &params, 0.0).unwrap();
        for k in 0..5 {
            still = step(&still, &pose(0.0, 1.0, 0.0, k as f64), &r, &mode, &params)
                .unwrap()
                .0;
        }
        assert_eq!(still.speed_estimate(), 0.0);
        assert_eq!(params.effective_trigger_m(3.0), 12.0);
        assert_eq!(params.effective_trigger_m(1.0), 10.0);
    }

    #[test]
    fn compass_silent_when_aligned_and_clicks_when_not() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::compass(Channel::Audio);
        let (s, _) = start(&r, &mode, &params, 0.0).unwrap();
        let (s, out) = step(&s, &pose(0.0, 1.0, 0.0, 0.1), &r, &mode, &params).unwrap();
        assert!(out.is_empty());
        let (s, out) = step(&s, &pose(0.0, 1.0, 95.0, 0.2), &r, &mode, &params).unwrap();
        let trains: Vec<_> = out.signals().collect();
        assert_eq!(trains.len(), 1);
        assert_eq!(trains[0].channel(), Channel::Audio);
        // next click only after the interval for ~95° (≈ 0.58 s)
        let (s, out) = step(&s, &pose(0.0, 1.0, 95.0, 0.5), &r, &mode, &params).unwrap();
        assert!(out.is_empty());
        let (_, out) = step(&s, &pose(0.0, 1.0, 95.0, 0.8), &r, &mode, &params).unwrap();
        assert_eq!(out.signals().count(), 1);
    }

    #[test]
    fn door_is_spoken_not_pulsed() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::event_based(DirectionOption::CountingClock);
        let (mut s, _) = start(&r, &mode, &params, 0.0).unwrap();
        s.phase = Phase::Following(1);
        s.hint = 1;
        s.announce_cursor = 2;
        let mut door_voices = 0;
        let mut t = 0.0;
        for k in 0..=12 {
            t += 0.5;
            let (next, out) =
                step(&s, &pose(1.0 + k as f64 * 0.5, 20.0, 90.0, t), &r, &mode, &params).unwrap();
            for e in &out.events {
                match &e.event {
                    GuidanceEvent::Voice { waypoint, .. } if *waypoint == Some(2) => door_voices += 1,
                    GuidanceEvent::Signal { waypoint, .. } => assert_ne!(*waypoint, Some(2)),
                    _ => {}
                }
            }
            s = next;
        }
        assert_eq!(door_voices, 1);
    }

    #[test]
    fn junction_sequence_completion_direction_success() {
        let r = l_route();
        let params = GuidanceParams::default();
        let mode = GuidanceMode::event_based(DirectionOption::CountingClock);
        let (mut s, _) = start(&r, &mode, &params, 0.0).unwrap();
        let mut meanings = Vec::new();
        let mut t = 0.0;
        // walk up to the junction, stop there facing north
        for k in 0..=46 {
            t = k as f64 * 0.5;
            let y = (k as f64 * 0.5).min(19.5);
            let (next, out) = step(&s, &pose(0.0, y, 0.0, t), &r, &mode, &params).unwrap();
            meanings.extend(out.signals().map(|tr| tr.meaning));
            s = next;
        }
        assert_eq!(s.phase, Phase::Adjusting(1));
        assert!(meanings.contains(&Meaning::Distance));
        assert!(meanings.contains(&Meaning::Completion));
        assert!(meanings.contains(&Meaning::Direction));
        // turn east: success
        for k in 1..=10 {
            let (next, out) =
                step(&s, &pose(0.0, 19.5, 90.0, t + k as f64 * 0.5), &r, &mode, &params).unwrap();
            meanings.extend(out.signals().map(|tr| tr.meaning));
            s = next;
        }
        assert_eq!(s.phase, Phase::Following(1));
        let completion = meanings.iter().position(|m| *m == Meaning::Completion).unwrap();
        let success = meanings.iter().position(|m| *m == Meaning::Success).unwrap();
        assert!(completion < success);
    }

    #[test]
    fn mode_labels_round_trip() {
        for m in GuidanceMode::all() {
            assert_eq!(m.label().parse::<GuidanceMode>().unwrap(), m);
        }
        assert!("sonar".parse::<GuidanceMode>().is_err());
    }
}
