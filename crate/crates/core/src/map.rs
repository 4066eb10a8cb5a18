//! Map documents: floors, the destination catalog and precomputed routes.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{RouteParts, WaypointKind};
use crate::{Point, Route, Waypoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Floor {
    pub id: String,
    pub width_m: f64,
    pub height_m: f64,
    /// Wall segments `[x1, y1, x2, y2]`, for display only.
    #[serde(default)]
    pub walls: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub floor: String,
}

impl Poi {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y, self.floor.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointFile {
    pub x: f64,
    pub y: f64,
    pub floor: String,
    pub kind: WaypointKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A route as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteFile {
    pub id: String,
    pub from: String,
    pub to: String,
    pub waypoints: Vec<WaypointFile>,
}

impl RouteFile {
    pub fn to_parts(&self) -> RouteParts<f64> {
        RouteParts {
            id: self.id.clone(),
            from_poi: self.from.clone(),
            to_poi: self.to.clone(),
            waypoints: self
                .waypoints
                .iter()
                .map(|w| Waypoint {
                    point: Point::new(w.x, w.y, w.floor.clone()),
                    kind: w.kind,
                    label: w.label.clone(),
                })
                .collect(),
        }
    }

    pub fn to_route(&self) -> Result<Route> {
        Route::try_from(self.to_parts())
    }
}

impl From<&Route> for RouteFile {
    fn from(r: &Route) -> Self {
        RouteFile {
            id: r.id().to_string(),
            from: r.from_poi().to_string(),
            to: r.to_poi().to_string(),
            waypoints: r
                .waypoints()
                .iter()
                .map(|w| WaypointFile {
                    x: w.point.x,
                    y: w.point.y,
                    floor: w.point.floor.clone(),
                    kind: w.kind,
                    label: w.label.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MapFile {
    name: String,
    floors: Vec<Floor>,
    pois: Vec<Poi>,
    routes: Vec<RouteFile>,
}

/// A validated map.
#[derive(Clone, Debug, PartialEq)]
pub struct MapDocument {
    pub name: String,
    pub floors: Vec<Floor>,
    pub pois: Vec<Poi>,
    pub routes: Vec<Route>,
}

impl MapDocument {
    pub fn parse(json: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(json).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: MapFile) -> Result<Self> {
        let invalid = |msg: String| Error::Validation(format!("map {:?}: {msg}", file.name));
        if file.floors.is_empty() {
            return Err(invalid("no floors".into()));
        }
        if file.routes.is_empty() {
            return Err(invalid("no routes".into()));
        }
        let mut floors = HashSet::new();
        for f in &file.floors {
            if !floors.insert(f.id.as_str()) {
                return Err(invalid(format!("duplicate floor {:?}", f.id)));
            }
            if !(f.width_m > 0.0 && f.height_m > 0.0 && f.width_m.is_finite() && f.height_m.is_finite()) {
                return Err(invalid(format!("floor {:?} has non-positive extent", f.id)));
            }
            if f.walls.iter().flatten().any(|c| !c.is_finite()) {
                return Err(invalid(format!("floor {:?} has a non-finite wall", f.id)));
            }
        }
        let mut pois = HashSet::new();
        for p in &file.pois {
            if !pois.insert(p.id.as_str()) {
                return Err(invalid(format!("duplicate POI {:?}", p.id)));
            }
            if !floors.contains(p.floor.as_str()) {
                return Err(invalid(format!(
                    "POI {:?} is on unknown floor {:?}",
                    p.id, p.floor
                )));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(invalid(format!("POI {:?} has non-finite coordinates", p.id)));
            }
        }
        let mut ids = HashSet::new();
        let mut pairs = HashSet::new();
        let mut routes = Vec::with_capacity(file.routes.len());
        for r in &file.routes {
            if !ids.insert(r.id.as_str()) {
                return Err(invalid(format!("duplicate route {:?}", r.id)));
            }
            for end in [&r.from, &r.to] {
                if !pois.contains(end.as_str()) {
                    return Err(invalid(format!(
                        "route {:?} references unknown POI {:?}",
                        r.id, end
                    )));
                }
            }
            if !pairs.insert((r.from.as_str(), r.to.as_str())) {
                return Err(invalid(format!(
                    "more than one route from {:?} to {:?}",
                    r.from, r.to
                )));
            }
            if let Some((i, w)) = r
                .waypoints
                .iter()
                .enumerate()
                .find(|(_, w)| !floors.contains(w.floor.as_str()))
            {
                return Err(invalid(format!(
                    "route {:?} waypoint {i} is on unknown floor {:?}",
                    r.id, w.floor
                )));
            }
            routes.push(r.to_route()?);
        }
        Ok(MapDocument {
            name: file.name,
            floors: file.floors,
            pois: file.pois,
            routes,
        })
    }

    pub fn to_json(&self) -> String {
        let file = MapFile {
            name: self.name.clone(),
            floors: self.floors.clone(),
            pois: self.pois.clone(),
            routes: self.routes.iter().map(RouteFile::from).collect(),
        };
        serde_json::to_string_pretty(&file).expect("map documents always serialize")
    }

    pub fn poi(&self, id: &str) -> Option<&Poi> {
        self.pois.iter().find(|p| p.id == id)
    }

    pub fn route(&self, id: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.id() == id)
    }

    pub fn route_between(&self, from: &str, to: &str) -> Result<&Route> {
        self.routes
            .iter()
            .find(|r| r.from_poi() == from && r.to_poi() == to)
            .ok_or_else(|| Error::invalid(format!("no route from {from:?} to {to:?}")))
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<MapDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    MapDocument::parse(&text)
}

pub fn save_map(map: &MapDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, map.to_json()).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

/// Destination catalog lookup.
///
/// An empty query lists `recents` (most recent first, unknown ids skipped)
/// followed by the remaining POIs by name. Otherwise POIs whose name contains
/// the query, ignoring case, sorted by name.
pub fn search_destinations<'m>(
    map: &'m MapDocument,
    query: &str,
    recents: &[String],
) -> Vec<&'m Poi> {
    let by_name = |a: &&Poi, b: &&Poi| a.name.cmp(&b.name).then_with(|| a.id.cmp(&b.id));
    let query = query.trim();
    if query.is_empty() {
        let mut out: Vec<&Poi> = Vec::new();
        for id in recents {
            if let Some(p) = map.poi(id) {
                if !out.iter().any(|q| q.id == p.id) {
                    out.push(p);
                }
            }
        }
        let mut rest: Vec<&Poi> = map
            .pois
            .iter()
            .filter(|p| !out.iter().any(|q| q.id == p.id))
            .collect();
        rest.sort_by(by_name);
        out.extend(rest);
        out
    } else {
        let needle = query.to_lowercase();
        let mut hits: Vec<&Poi> = map
            .pois
            .iter()
            .filter(|p| p.name.to_lowercase().contains(&needle))
            .collect();
        hits.sort_by(by_name);
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn reference_fixture_loads() {
        let map = MapDocument::parse(fixtures::REFERENCE_MAP).unwrap();
        assert_eq!(map.floors.len(), 1);
        assert!(map.pois.len() >= 2);
        let r = map.route_between("entrance", "office").unwrap();
        assert!((r.total_length() - 63.0).abs() < 0.5, "{}", r.total_length());
    }

    #[test]
    fn unknown_poi_is_named() {
        let bad = fixtures::REFERENCE_MAP.replacen("\"to\": \"office\"", "\"to\": \"nowhere\"", 1);
        match MapDocument::parse(&bad) {
            Err(Error::Validation(msg)) => assert!(msg.contains("nowhere"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match MapDocument::parse("{\n  \"name\": \"x\",\n  \"floors\": [,]\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_floor_and_empty_routes_rejected() {
        let bad = fixtures::REFERENCE_MAP.replacen("\"floor\": \"ground\"", "\"floor\": \"roof\"", 1);
        assert!(matches!(MapDocument::parse(&bad), Err(Error::Validation(_))));
        let none = r#"{"name":"n","floors":[{"id":"f","width_m":1,"height_m":1,"walls":[]}],"pois":[],"routes":[]}"#;
        assert!(matches!(MapDocument::parse(none), Err(Error::Validation(_))));
    }

    #[test]
    fn json_round_trip() {
        for src in fixtures::ALL_MAPS {
            let map = MapDocument::parse(src).unwrap();
            assert_eq!(MapDocument::parse(&map.to_json()).unwrap(), map);
        }
    }

    #[test]
    fn search_semantics() {
        let map = MapDocument::parse(fixtures::TWO_FLOOR_MAP).unwrap();
        let names = |v: Vec<&Poi>| v.into_iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        let hits = names(search_destinations(&map, "ELEVA", &[]));
        assert!(!hits.is_empty());
        for id in &hits {
            assert!(map.poi(id).unwrap().name.to_lowercase().contains("eleva"));
        }
        let recents = vec!["lab".to_string(), "lobby".to_string()];
        let listed = names(search_destinations(&map, "", &recents));
        assert_eq!(&listed[..2], &["lab".to_string(), "lobby".to_string()]);
        assert_eq!(listed.len(), map.pois.len());
        let rest: Vec<&str> = listed[2..]
            .iter()
            .map(|id| map.poi(id).unwrap().name.as_str())
            .collect();
        assert!(rest.windows(2).all(|w| w[0] <= w[1]));
    }
}
