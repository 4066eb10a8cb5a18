//! Indoor navigation guidance engine.
//!
//! Converts a pedestrian pose stream and a route into encoded feedback:
//! compass cadence, event-based vibration patterns and short voice phrases.
//! A closed-loop walker simulation checks that the encodings actually lead a
//! pedestrian to the destination.
//!
//! Geometry and encoders are generic over [`Scalar`] (`f32` or `f64`); the
//! state machine, scheduler and simulator run on `f64`, and the aliases below
//! name the `f64` instantiations.

pub mod encoders;
pub mod error;
pub mod fixtures;
pub mod fsm;
pub mod geo;
pub mod map;
pub mod metrics;
pub mod scalar;
pub mod scheduler;
pub mod session;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = geo::Point<f64>;
pub type Pose = geo::Pose<f64>;
pub type Waypoint = geo::Waypoint<f64>;
pub type Route = geo::Route<f64>;
pub type Progress = geo::Progress<f64>;
pub type TurnClassification = geo::TurnClassification<f64>;
pub type Pulse = encoders::Pulse<f64>;
pub type PulseTrain = encoders::PulseTrain<f64>;
pub type CompassConfig = encoders::CompassConfig<f64>;
pub type DistanceConfig = encoders::DistanceConfig<f64>;
pub type DirectionConfig = encoders::DirectionConfig<f64>;
