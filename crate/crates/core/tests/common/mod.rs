#![allow(dead_code)]

use wayguide_core::fsm::{GuidanceMode, GuidanceParams};
use wayguide_core::map::MapDocument;
use wayguide_core::sim::{run, RunOptions, WalkerModel};
use wayguide_core::trace::{SimTrace, TraceEvent};
use wayguide_core::Route;

pub fn first_route(src: &str) -> Route {
    MapDocument::parse(src).unwrap().routes[0].clone()
}

pub fn simulate(route: &Route, walker: &WalkerModel, mode: GuidanceMode) -> SimTrace {
    run(
        route,
        walker,
        mode,
        &GuidanceParams::default(),
        &RunOptions::default(),
    )
    .unwrap()
}

pub fn non_pose(trace: &SimTrace) -> Vec<TraceEvent> {
    trace.events.iter().filter(|e| !e.is_pose()).cloned().collect()
}
