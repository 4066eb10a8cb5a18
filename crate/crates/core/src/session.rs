//! One guidance session: the state machine driving a scheduler.
//!
//! `feed` is the single entry point for poses, shared by the simulator, trace
//! replay and the network service, which is what makes their emissions agree.

use crate::error::{Error, Result};
use crate::fsm::{self, GuidanceEvent, GuidanceMode, GuidanceParams, GuidanceState, Phase};
use crate::scheduler::{Enqueued, ScheduleRequest, Scheduler};
use crate::trace::{PhaseName, SimTrace, TraceEvent};
use crate::{Pose, Route};

#[derive(Clone, Debug)]
pub struct GuidanceSession {
    route: Route,
    mode: GuidanceMode,
    params: GuidanceParams,
    state: GuidanceState,
    scheduler: Scheduler,
}

impl GuidanceSession {
    /// Starts a session at `t0`, returning the opening events.
    pub fn start(
        route: Route,
        mode: GuidanceMode,
        params: GuidanceParams,
        t0: f64,
    ) -> Result<(Self, Vec<TraceEvent>)> {
        let (state, out) = fsm::start(&route, &mode, &params, t0)?;
        let mut session = GuidanceSession {
            route,
            mode,
            params,
            state,
            scheduler: Scheduler::new(t0),
        };
        let events = session.absorb(out.events)?;
        Ok((session, events))
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn mode(&self) -> &GuidanceMode {
        &self.mode
    }

    pub fn params(&self) -> &GuidanceParams {
        &self.params
    }

    pub fn state(&self) -> &GuidanceState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn is_arrived(&self) -> bool {
        self.state.is_arrived()
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn steering_target(&self) -> Option<usize> {
        self.state.steering_target(&self.route, &self.mode)
    }

    /// Emissions due by `now`.
    pub fn drain(&mut self, now: f64) -> Result<Vec<TraceEvent>> {
        let now = now.max(self.scheduler.now());
        Ok(self
            .scheduler
            .drain_due(now)?
            .iter()
            .map(TraceEvent::from_emission)
            .collect())
    }

    /// Processes one pose: earlier emissions that fell due, the pose itself,
    /// then whatever the state machine produced for it.
    pub fn feed(&mut self, pose: &Pose) -> Result<Vec<TraceEvent>> {
        let mut events = self.drain(pose.t)?;
        events.push(TraceEvent::from_pose(pose));
        let (state, out) = fsm::step(&self.state, pose, &self.route, &self.mode, &self.params)?;
        self.state = state;
        events.extend(self.absorb(out.events)?);
        if self.state.is_arrived() {
            // Nothing more to guide; queued pulses would only confuse.
            self.scheduler = Scheduler::new(self.scheduler.now());
        } else {
            events.extend(self.drain(pose.t)?);
        }
        Ok(events)
    }

    fn absorb(&mut self, out: Vec<fsm::TimedEvent>) -> Result<Vec<TraceEvent>> {
        let mut events = Vec::new();
        for fsm::TimedEvent { t, event } in out {
            match event {
                GuidanceEvent::Phase(p) => events.push(TraceEvent::from_phase(t, p)),
                GuidanceEvent::Voice { text, waypoint } => {
                    events.push(TraceEvent::Voice { t, text, waypoint })
                }
                GuidanceEvent::Signal {
                    train,
                    source,
                    waypoint,
                    stale_after_s,
                } => {
                    let req = ScheduleRequest {
                        train,
                        at: t.max(self.scheduler.now()),
                        source,
                        waypoint,
                        stale_after_s,
                    };
                    if let Enqueued::Dropped(d) = self.scheduler.enqueue(req)? {
                        events.push(TraceEvent::from_dropped(&d));
                    }
                }
            }
        }
        Ok(events)
    }
}

/// Re-runs the stored poses of a trace through a fresh session and returns
/// every non-pose event it produces, in order.
pub fn replay(trace: &SimTrace) -> Result<Vec<TraceEvent>> {
    let header = &trace.header;
    let route = Route::try_from(header.route_def.to_parts())?;
    let t0 = trace
        .events
        .first()
        .map(TraceEvent::t)
        .ok_or_else(|| Error::invalid("trace has no events"))?;
    let (mut session, mut events) =
        GuidanceSession::start(route, header.guidance_mode()?, header.params.clone(), t0)?;
    for ev in &trace.events {
        match ev.as_pose() {
            Some(pose) => {
                if session.is_arrived() {
                    return Err(Error::invalid("trace has poses after arrival"));
                }
                events.extend(session.feed(&pose?)?.into_iter().filter(|e| !e.is_pose()));
            }
            None => {
                if let TraceEvent::State {
                    phase: PhaseName::Timeout,
                    ..
                } = ev
                {
                    events.push(ev.clone());
                }
            }
        }
    }
    Ok(events)
}
