//! Route and pose geometry.
//!
//! Positions live in floor-local 2-D frames (x east, y north, meters). Headings
//! and bearings are compass style: 0° points along +y, positive angles turn
//! clockwise, and every angle is kept in the half-open interval (-180, 180].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Turns smaller than this (degrees) are treated as going straight; half a clock hour.
pub const STRAIGHT_THRESHOLD_DEG: f64 = 15.0;

/// Degrees per clock hour.
pub const CLOCK_HOUR_DEG: f64 = 30.0;

pub const MAX_CLOCK_HOUR: u8 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
    pub floor: String,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T, floor: impl Into<String>) -> Self {
        Point {
            x,
            y,
            floor: floor.into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn same_floor(&self, other: &Point<T>) -> bool {
        self.floor == other.floor
    }

    /// Planar distance, ignoring floors.
    pub fn planar_distance(&self, other: &Point<T>) -> T {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Distance on the same floor; `None` across floors.
    pub fn distance(&self, other: &Point<T>) -> Option<T> {
        self.same_floor(other).then(|| self.planar_distance(other))
    }
}

/// Timestamped position and heading of the pedestrian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub position: Point<T>,
    pub heading: T,
    pub t: T,
}

impl<T: Scalar> Pose<T> {
    /// Builds a pose, normalizing the heading into (-180, 180].
    pub fn new(position: Point<T>, heading: T, t: T) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::invalid("pose position must be finite"));
        }
        if !t.is_finite() {
            return Err(Error::invalid("pose time must be finite"));
        }
        Ok(Pose {
            position,
            heading: normalize_angle(heading)?,
            t,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorChangeVia {
    Stairs,
    Elevator,
}

/// What a route vertex means for guidance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WaypointKind {
    Plain,
    Junction,
    Door,
    FloorChange(FloorChangeVia),
    Destination,
}

impl WaypointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WaypointKind::Plain => "plain",
            WaypointKind::Junction => "junction",
            WaypointKind::Door => "door",
            WaypointKind::FloorChange(FloorChangeVia::Stairs) => "stairs",
            WaypointKind::FloorChange(FloorChangeVia::Elevator) => "elevator",
            WaypointKind::Destination => "destination",
        }
    }

    /// Junctions and the destination drive distance encoding and turn events.
    pub fn is_event_target(&self) -> bool {
        matches!(self, WaypointKind::Junction | WaypointKind::Destination)
    }

    /// Vertices the pedestrian has to be steered towards.
    pub fn is_steer_target(&self) -> bool {
        matches!(
            self,
            WaypointKind::Junction | WaypointKind::Destination | WaypointKind::FloorChange(_)
        )
    }
}

impl fmt::Display for WaypointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WaypointKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "plain" => WaypointKind::Plain,
            "junction" => WaypointKind::Junction,
            "door" => WaypointKind::Door,
            "stairs" => WaypointKind::FloorChange(FloorChangeVia::Stairs),
            "elevator" => WaypointKind::FloorChange(FloorChangeVia::Elevator),
            "destination" => WaypointKind::Destination,
            other => return Err(Error::invalid(format!("unknown waypoint kind {other:?}"))),
        })
    }
}

impl TryFrom<String> for WaypointKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WaypointKind> for String {
    fn from(k: WaypointKind) -> String {
        k.as_str().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint<T> {
    pub point: Point<T>,
    pub kind: WaypointKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl<T: Scalar> Waypoint<T> {
    pub fn new(point: Point<T>, kind: WaypointKind) -> Self {
        Waypoint {
            point,
            kind,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// The unchecked pieces of a route, as read from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteParts<T> {
    pub id: String,
    pub from_poi: String,
    pub to_poi: String,
    pub waypoints: Vec<Waypoint<T>>,
}

/// A validated polyline route.
///
/// Segment `i` runs from waypoint `i` to waypoint `i + 1`. A segment whose
/// endpoints sit on different floors is a floor transition: it has length zero
/// and no bearing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RouteParts<T>",
    into = "RouteParts<T>",
    bound(
        serialize = "T: Scalar + Serialize",
        deserialize = "T: Scalar + Deserialize<'de>"
    )
)]
pub struct Route<T: Scalar> {
    id: String,
    from_poi: String,
    to_poi: String,
    waypoints: Vec<Waypoint<T>>,
    lengths: Vec<T>,
    bearings: Vec<Option<T>>,
}

impl<T: Scalar> Route<T> {
    pub fn new(
        id: impl Into<String>,
        from_poi: impl Into<String>,
        to_poi: impl Into<String>,
        waypoints: Vec<Waypoint<T>>,
    ) -> Result<Self> {
        Self::try_from(RouteParts {
            id: id.into(),
            from_poi: from_poi.into(),
            to_poi: to_poi.into(),
            waypoints,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn from_poi(&self) -> &str {
        &self.from_poi
    }

    pub fn to_poi(&self) -> &str {
        &self.to_poi
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    pub fn waypoint(&self, idx: usize) -> &Waypoint<T> {
        &self.waypoints[idx]
    }

    pub fn segment_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn segment_length(&self, segment: usize) -> T {
        self.lengths[segment]
    }

    /// Bearing of a segment, `None` for a floor transition.
    pub fn segment_bearing(&self, segment: usize) -> Option<T> {
        self.bearings[segment]
    }

    pub fn total_length(&self) -> T {
        self.lengths.iter().fold(T::zero(), |acc, &l| acc + l)
    }

    pub fn destination_index(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn has_floor(&self, floor: &str) -> bool {
        self.waypoints.iter().any(|w| w.point.floor == floor)
    }

    /// First waypoint after `after` whose kind satisfies `pred`.
    pub fn next_waypoint_where(
        &self,
        after: usize,
        pred: impl Fn(&WaypointKind) -> bool,
    ) -> Option<usize> {
        (after + 1..self.waypoints.len()).find(|&i| pred(&self.waypoints[i].kind))
    }

    /// Turn taken at an interior vertex, when both adjacent segments lie on one floor.
    pub fn turn_at(&self, vertex: usize) -> Option<TurnClassification<T>> {
        if vertex == 0 || vertex + 1 >= self.waypoints.len() {
            return None;
        }
        let incoming = self.bearings[vertex - 1]?;
        let outgoing = self.bearings[vertex]?;
        classify_turn(incoming, outgoing).ok()
    }

    /// Position at arc length `s` from the start, clamped to the route.
    ///
    /// Returns the point together with the segment it lies on. At a vertex the
    /// later segment wins, so floor transitions are crossed instantly.
    pub fn point_at(&self, s: T) -> (Point<T>, usize) {
        let mut remaining = s.max(T::zero());
        let last = self.segment_count() - 1;
        for seg in 0..self.segment_count() {
            let len = self.lengths[seg];
            if remaining < len || seg == last {
                let a = &self.waypoints[seg].point;
                let b = &self.waypoints[seg + 1].point;
                if len <= T::zero() {
                    return (b.clone(), seg);
                }
                let f = (remaining / len).min(T::one());
                let p = Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, a.floor.clone());
                return (p, seg);
            }
            remaining = remaining - len;
        }
        unreachable!("route has at least one segment")
    }
}

impl<T: Scalar> TryFrom<RouteParts<T>> for Route<T> {
    type Error = Error;

    fn try_from(parts: RouteParts<T>) -> Result<Self> {
        let RouteParts {
            id,
            from_poi,
            to_poi,
            waypoints,
        } = parts;
        let bad = |msg: String| Error::Validation(format!("route {id:?}: {msg}"));
        if waypoints.len() < 2 {
            return Err(bad("needs at least 2 waypoints".into()));
        }
        let last = waypoints.len() - 1;
        for (i, w) in waypoints.iter().enumerate() {
            if !w.point.is_finite() {
                return Err(bad(format!("waypoint {i} has non-finite coordinates")));
            }
            if w.point.floor.is_empty() {
                return Err(bad(format!("waypoint {i} has an empty floor id")));
            }
            match (i == last, w.kind == WaypointKind::Destination) {
                (true, false) => return Err(bad("last waypoint must be a destination".into())),
                (false, true) => {
                    return Err(bad(format!("waypoint {i} is a destination before the end")))
                }
                _ => {}
            }
        }
        let mut lengths = Vec::with_capacity(last);
        let mut bearings = Vec::with_capacity(last);
        for i in 0..last {
            let a = &waypoints[i];
            let b = &waypoints[i + 1];
            if a.point.same_floor(&b.point) {
                let len = a.point.planar_distance(&b.point);
                if !(len > T::zero()) {
                    return Err(bad(format!("waypoints {i} and {} coincide", i + 1)));
                }
                lengths.push(len);
                bearings.push(Some(bearing(&a.point, &b.point)));
            } else {
                if !matches!(a.kind, WaypointKind::FloorChange(_)) {
                    return Err(bad(format!(
                        "waypoint {i} changes floor ({} -> {}) without being stairs or elevator",
                        a.point.floor, b.point.floor
                    )));
                }
                lengths.push(T::zero());
                bearings.push(None);
            }
        }
        if !(lengths.iter().fold(T::zero(), |acc, &l| acc + l) > T::zero()) {
            return Err(bad("total length must be positive".into()));
        }
        Ok(Route {
            id,
            from_poi,
            to_poi,
            waypoints,
            lengths,
            bearings,
        })
    }
}

impl<T: Scalar> From<Route<T>> for RouteParts<T> {
    fn from(r: Route<T>) -> Self {
        RouteParts {
            id: r.id,
            from_poi: r.from_poi,
            to_poi: r.to_poi,
            waypoints: r.waypoints,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    #[serde(rename = "none")]
    Straight,
}

/// A turn quantized to clock hours: 3 o'clock is a right angle to the right,
/// 9 o'clock (encoded as hour 3, left) a right angle to the left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnClassification<T> {
    pub clock_hour: u8,
    pub side: Side,
    pub angle_deg: T,
}

impl<T: Scalar> TurnClassification<T> {
    /// Classifies a signed turn angle (degrees, any range).
    pub fn from_angle(angle: T) -> Result<Self> {
        let angle = normalize_angle(angle)?;
        let magnitude = angle.abs();
        if magnitude < T::lit(STRAIGHT_THRESHOLD_DEG) {
            return Ok(TurnClassification {
                clock_hour: 0,
                side: Side::Straight,
                angle_deg: angle,
            });
        }
        let hour = (magnitude / T::lit(CLOCK_HOUR_DEG))
            .round()
            .min(T::lit(f64::from(MAX_CLOCK_HOUR)));
        let side = if angle > T::zero() {
            Side::Right
        } else {
            Side::Left
        };
        Ok(TurnClassification {
            clock_hour: hour.to_u8().unwrap_or(MAX_CLOCK_HOUR),
            side,
            angle_deg: angle,
        })
    }

    pub fn is_straight(&self) -> bool {
        self.clock_hour == 0
    }
}

fn check_finite<T: Scalar>(v: T, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite, got {v}")))
    }
}

/// Wraps an angle into (-180, 180].
pub fn normalize_angle<T: Scalar>(a: T) -> Result<T> {
    check_finite(a, "angle")?;
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let mut r = a % full;
    if r > half {
        r = r - full;
    } else if r <= -half {
        r = r + full;
    }
    Ok(r)
}

/// Compass bearing from `from` to `to`, ignoring floors.
pub fn bearing<T: Scalar>(from: &Point<T>, to: &Point<T>) -> T {
    let deg = (to.x - from.x).atan2(to.y - from.y).to_degrees();
    // atan2 is already in [-180, 180]; only -180 needs folding.
    if deg <= T::lit(-180.0) {
        deg + T::lit(360.0)
    } else {
        deg
    }
}

/// Angle the pedestrian has to turn to face `target`; positive means clockwise.
pub fn signed_deviation<T: Scalar>(pose: &Pose<T>, target: &Point<T>) -> Result<T> {
    if !pose.position.same_floor(target) {
        return Err(Error::invalid(format!(
            "target on floor {} but pose on floor {}",
            target.floor, pose.position.floor
        )));
    }
    if pose.position.planar_distance(target) <= T::zero() {
        return Err(Error::DegenerateGeometry(
            "pose coincides with deviation target".into(),
        ));
    }
    normalize_angle(bearing(&pose.position, target) - pose.heading)
}

/// Route-local position of a pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress<T> {
    pub segment: usize,
    /// Distance from the segment start to the clamped projection.
    pub along: T,
    /// Distance from the pose to the clamped projection.
    pub cross_track: T,
}

/// Projects `p` onto segment `a`→`b`, returning (along, distance).
pub fn project_onto_segment<T: Scalar>(p: &Point<T>, a: &Point<T>, b: &Point<T>) -> (T, T) {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    let len = len2.sqrt();
    let f = if len2 > T::zero() {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2)
            .max(T::zero())
            .min(T::one())
    } else {
        T::zero()
    };
    let qx = a.x + dx * f;
    let qy = a.y + dy * f;
    (f * len, (p.x - qx).hypot(p.y - qy))
}

/// Locates a pose on the route, searching segments from `hint` onwards only.
///
/// Only segments lying on the pose's floor are candidates. Ties go to the
/// earliest segment.
pub fn project_progress<T: Scalar>(
    pose: &Pose<T>,
    route: &Route<T>,
    hint: usize,
) -> Result<Progress<T>> {
    if route.segment_count() == 0 {
        return Err(Error::invalid("route has no segments"));
    }
    if hint >= route.segment_count() {
        return Err(Error::invalid(format!(
            "segment hint {hint} out of bounds ({} segments)",
            route.segment_count()
        )));
    }
    let p = &pose.position;
    let mut best: Option<Progress<T>> = None;
    for seg in hint..route.segment_count() {
        let a = &route.waypoints[seg].point;
        let b = &route.waypoints[seg + 1].point;
        if !(a.same_floor(p) && b.same_floor(p)) {
            continue;
        }
        let (along, cross) = project_onto_segment(p, a, b);
        if best.is_none_or(|cur| cross < cur.cross_track) {
            best = Some(Progress {
                segment: seg,
                along,
                cross_track: cross,
            });
        }
    }
    best.ok_or_else(|| {
        Error::invalid(format!(
            "no route segment on floor {} at or after segment {hint}",
            p.floor
        ))
    })
}

/// Along-route distance from a projected position to waypoint `idx`.
///
/// Floor transitions contribute nothing.
pub fn distance_to_waypoint<T: Scalar>(
    route: &Route<T>,
    progress: &Progress<T>,
    idx: usize,
) -> Result<T> {
    if idx >= route.waypoints.len() {
        return Err(Error::invalid(format!("waypoint {idx} out of bounds")));
    }
    let seg = progress.segment;
    if idx <= seg {
        if idx == seg && progress.along <= T::epsilon() {
            return Ok(T::zero());
        }
        return Err(Error::invalid(format!(
            "waypoint {idx} lies behind the current position (segment {seg})"
        )));
    }
    let partial = (route.lengths[seg] - progress.along).max(T::zero());
    Ok(route.lengths[seg + 1..idx]
        .iter()
        .fold(partial, |acc, &l| acc + l))
}

/// Classifies the turn between two travel bearings.
pub fn classify_turn<T: Scalar>(incoming: T, outgoing: T) -> Result<TurnClassification<T>> {
    check_finite(incoming, "incoming bearing")?;
    check_finite(outgoing, "outgoing bearing")?;
    TurnClassification::from_angle(outgoing - incoming)
}
