//! Bundled test maps.

/// One floor, 63 m: 20 m straight, right turn, 15 m past two doors, a
/// diagonal across a 10 m × 10 m open area, left turn, 14 m to the office.
pub const REFERENCE_MAP: &str = include_str!("../fixtures/reference.json");

/// One floor with a right and a left turn.
pub const CORRIDOR_MAP: &str = include_str!("../fixtures/corridor.json");

/// An elevator ride between two floors, then one turn.
pub const TWO_FLOOR_MAP: &str = include_str!("../fixtures/two_floors.json");

pub const ALL_MAPS: [&str; 3] = [REFERENCE_MAP, CORRIDOR_MAP, TWO_FLOOR_MAP];
