//! Quality metrics computed from a finished trace.

use serde::{Deserialize, Serialize};

use crate::encoders::Meaning;
use crate::error::{Error, Result};
use crate::geo::{normalize_angle, project_progress, WaypointKind};
use crate::map::RouteFile;
use crate::trace::{PhaseName, SimTrace, TraceEvent};
use crate::{Pose, Route};

/// Heading rates at or above this count as turning on the spot (deg/s).
pub const REORIENT_RATE_DPS: f64 = 60.0;
/// A turning run must sweep at least this much to count (deg).
pub const REORIENT_MIN_SWEEP_DEG: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionOvershoot {
    pub waypoint: usize,
    /// `None` when the walker never reached the junction.
    pub overshoot_m: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseCounts {
    pub direction: usize,
    pub distance: usize,
    pub completion: usize,
    pub success: usize,
    pub ping: usize,
}

impl PulseCounts {
    pub fn get(&self, m: Meaning) -> usize {
        match m {
            Meaning::Direction => self.direction,
            Meaning::Distance => self.distance,
            Meaning::Completion => self.completion,
            Meaning::Success => self.success,
            Meaning::Ping => self.ping,
        }
    }

    fn bump(&mut self, m: Meaning) {
        *match m {
            Meaning::Direction => &mut self.direction,
            Meaning::Distance => &mut self.distance,
            Meaning::Completion => &mut self.completion,
            Meaning::Success => &mut self.success,
            Meaning::Ping => &mut self.ping,
        } += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub completed: bool,
    pub completion_time_s: Option<f64>,
    pub route_length_m: f64,
    pub overshoot_m: Vec<JunctionOvershoot>,
    pub reorientation_count: usize,
    pub pulses_emitted: PulseCounts,
    pub stale_dropped: usize,
    pub deviation_rms_deg: f64,
}

pub fn metrics(trace: &SimTrace, route: &Route) -> Result<MetricsReport> {
    if trace.header.route != route.id() || trace.header.route_def != RouteFile::from(route) {
        return Err(Error::invalid(format!(
            "trace was recorded on route {:?}, not {:?}",
            trace.header.route,
            route.id()
        )));
    }
    let poses: Vec<Pose> = trace
        .events
        .iter()
        .filter_map(TraceEvent::as_pose)
        .collect::<Result<_>>()?;
    if let Some(p) = poses.iter().find(|p| !route.has_floor(&p.position.floor)) {
        return Err(Error::invalid(format!(
            "trace pose at t={} is on floor {:?}, which the route never visits",
            p.t, p.position.floor
        )));
    }
    let t0 = trace.events.first().map(TraceEvent::t).unwrap_or(0.0);
    let arrived_at = trace.events.iter().find_map(|e| match e {
        TraceEvent::State {
            t,
            phase: PhaseName::Arrived,
            ..
        } => Some(*t),
        _ => None,
    });
    let mut pulses = PulseCounts::default();
    let mut stale = 0;
    for e in &trace.events {
        match e {
            TraceEvent::Pulse { meaning, .. } => pulses.bump(*meaning),
            TraceEvent::Dropped { .. } => stale += 1,
            _ => {}
        }
    }
    Ok(MetricsReport {
        completed: arrived_at.is_some(),
        completion_time_s: arrived_at.map(|t| t - t0),
        route_length_m: route.total_length(),
        overshoot_m: overshoots(&poses, route, trace.header.params.reach_radius_m)?,
        reorientation_count: reorientations(&poses),
        pulses_emitted: pulses,
        stale_dropped: stale,
        deviation_rms_deg: deviation_rms(&poses, route)?,
    })
}

/// Overshoot at each junction: the furthest the walker got past the vertex,
/// measured along the incoming segment, before first heading closer to the
/// outgoing bearing than to the incoming one. The measurement starts once the
/// walker is within `reach` of the vertex along the incoming direction, or
/// projects onto the outgoing segment after cutting the corner.
fn overshoots(poses: &[Pose], route: &Route, reach: f64) -> Result<Vec<JunctionOvershoot>> {
    let mut segments = Vec::with_capacity(poses.len());
    let mut hint = 0;
    for p in poses {
        hint = project_progress(p, route, hint)?.segment;
        segments.push(hint);
    }
    let mut out = Vec::new();
    let mut cursor = 0;
    for j in 1..route.segment_count() {
        if route.waypoint(j).kind != WaypointKind::Junction {
            continue;
        }
        let (Some(b_in), Some(b_out)) = (route.segment_bearing(j - 1), route.segment_bearing(j))
        else {
            continue;
        };
        let vertex = &route.waypoint(j).point;
        let (ux, uy) = (b_in.to_radians().sin(), b_in.to_radians().cos());
        let along = |p: &Pose| (p.position.x - vertex.x) * ux + (p.position.y - vertex.y) * uy;
        let across = |p: &Pose| ((p.position.x - vertex.x) * uy - (p.position.y - vertex.y) * ux).abs();
        let lateral_limit = route.segment_length(j - 1).max(reach);
        let open = (cursor..poses.len()).find(|&i| {
            let p = &poses[i];
            segments[i] >= j
                || (p.position.same_floor(vertex) && along(p) >= -reach && across(p) <= lateral_limit)
        });
        let Some(open) = open else {
            out.push(JunctionOvershoot {
                waypoint: j,
                overshoot_m: None,
            });
            continue;
        };
        let turned = |p: &Pose| {
            let d_out = normalize_angle(p.heading - b_out).map_or(180.0, f64::abs);
            let d_in = normalize_angle(p.heading - b_in).map_or(180.0, f64::abs);
            d_out < d_in
        };
        let close = poses[open..]
            .iter()
            .position(turned)
            .map_or(poses.len(), |i| i + open);
        let worst = poses[open..close]
            .iter()
            .filter(|p| p.position.same_floor(vertex))
            .map(|p| along(p).max(0.0))
            .fold(0.0, f64::max);
        out.push(JunctionOvershoot {
            waypoint: j,
            overshoot_m: Some(worst),
        });
        cursor = close.min(poses.len().saturating_sub(1));
    }
    Ok(out)
}

/// Counts bursts of fast heading change sweeping at least the minimum angle.
fn reorientations(poses: &[Pose]) -> usize {
    let mut count = 0;
    let mut sweep = 0.0;
    for w in poses.windows(2) {
        let dt = w[1].t - w[0].t;
        let dh = normalize_angle(w[1].heading - w[0].heading).unwrap_or(0.0).abs();
        if dt > 0.0 && dh / dt >= REORIENT_RATE_DPS {
            sweep += dh;
        } else {
            if sweep >= REORIENT_MIN_SWEEP_DEG {
                count += 1;
            }
            sweep = 0.0;
        }
    }
    if sweep >= REORIENT_MIN_SWEEP_DEG {
        count += 1;
    }
    count
}

/// RMS of the heading error relative to the segment the walker is on.
fn deviation_rms(poses: &[Pose], route: &Route) -> Result<f64> {
    let mut hint = 0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in poses {
        let progress = project_progress(p, route, hint)?;
        hint = progress.segment;
        if let Some(b) = route.segment_bearing(progress.segment) {
            let d = normalize_angle(p.heading - b)?;
            sum += d * d;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::DirectionOption;
    use crate::fixtures;
    use crate::fsm::{GuidanceMode, GuidanceParams};
    use crate::map::MapDocument;
    use crate::sim::{run, RunOptions, WalkerModel};

    fn reference() -> Route {
        MapDocument::parse(fixtures::REFERENCE_MAP).unwrap().routes[0].clone()
    }

    fn simulate(route: &Route, walker: WalkerModel, opts: RunOptions) -> SimTrace {
        run(
            route,
            &walker,
            GuidanceMode::event_based(DirectionOption::CountingClock),
            &GuidanceParams::default(),
            &opts,
        )
        .unwrap()
    }

    #[test]
    fn ideal_walker_has_no_overshoot() {
        let route = reference();
        let trace = simulate(&route, WalkerModel::ideal(), RunOptions::default());
        let m = metrics(&trace, &route).unwrap();
        assert!(m.completed);
        assert_eq!(m.overshoot_m.len(), 3);
        for o in &m.overshoot_m {
            let v = o.overshoot_m.unwrap();
            assert!(v <= 1.2 * 0.1 + 1e-9, "junction {}: {v}", o.waypoint);
        }
        // The ideal walker snaps to each outgoing bearing.
        assert_eq!(m.reorientation_count, 3);
    }

    #[test]
    fn incomplete_trace_has_no_completion_time() {
        let route = reference();
        let opts = RunOptions {
            timeout_s: 5.0,
            ..Default::default()
        };
        let m = metrics(&simulate(&route, WalkerModel::ideal(), opts), &route).unwrap();
        assert!(!m.completed);
        assert_eq!(m.completion_time_s, None);
    }

    #[test]
    fn pulse_counts_are_a_recount() {
        let route = reference();
        let trace = simulate(&route, WalkerModel::reactive(4), RunOptions::default());
        let m = metrics(&trace, &route).unwrap();
        let distance = trace
            .pulses()
            .filter(|e| matches!(e, TraceEvent::Pulse { meaning: Meaning::Distance, .. }))
            .count();
        assert_eq!(m.pulses_emitted.distance, distance);
        assert!(distance > 0);
    }

    #[test]
    fn route_mismatch_is_rejected() {
        let route = reference();
        let trace = simulate(&route, WalkerModel::ideal(), RunOptions::default());
        let other = MapDocument::parse(fixtures::CORRIDOR_MAP).unwrap().routes[0].clone();
        assert!(matches!(metrics(&trace, &other), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn long_latency_overshoots() {
        let route = MapDocument::parse(fixtures::CORRIDOR_MAP).unwrap().routes[0].clone();
        let walker = WalkerModel {
            reaction_latency_s: 5.0,
            heading_noise_deg_std: 0.0,
            ..WalkerModel::reactive(1)
        };
        let m = metrics(&simulate(&route, walker, RunOptions::default()), &route).unwrap();
        let first = m.overshoot_m[0].overshoot_m.unwrap();
        // Stops only after the completion pulse plus the latency.
        assert!(first > 5.0 * 1.2 - 1.0 - 0.2, "{first}");
    }
}
