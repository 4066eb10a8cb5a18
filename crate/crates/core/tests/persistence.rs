mod common;

use common::{first_route, non_pose, simulate};
use wayguide_core::fixtures;
use wayguide_core::fsm::GuidanceMode;
use wayguide_core::map::{load_map, save_map, MapDocument};
use wayguide_core::session::replay;
use wayguide_core::sim::WalkerModel;
use wayguide_core::trace::{read_trace, write_trace, SimTrace};
use wayguide_core::Error;

#[test]
fn maps_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (i, src) in fixtures::ALL_MAPS.iter().enumerate() {
        let map = MapDocument::parse(src).unwrap();
        let path = dir.path().join(format!("map{i}.json"));
        save_map(&map, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), map);
    }
}

#[test]
fn empty_or_missing_map_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(load_map(&empty), Err(Error::Parse { .. })));
    assert!(matches!(load_map(dir.path().join("nope.json")), Err(Error::Io { .. })));
}

#[test]
fn traces_survive_disk_and_replay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for src in fixtures::ALL_MAPS {
        let route = first_route(src);
        for mode in GuidanceMode::all() {
            for walker in [WalkerModel::ideal(), WalkerModel::reactive(7)] {
                let mode = mode.with_voice(true).with_door_announcements(true);
                let trace = simulate(&route, &walker, mode);
                let path = dir.path().join("t.jsonl");
                write_trace(&trace, &path).unwrap();
                let back = read_trace(&path).unwrap();
                assert_eq!(back, trace);
                assert_eq!(replay(&back).unwrap(), non_pose(&trace), "{}", mode.label());
            }
        }
    }
}

#[test]
fn timed_out_traces_replay_too() {
    let route = first_route(fixtures::REFERENCE_MAP);
    let trace = wayguide_core::sim::run(
        &route,
        &WalkerModel::reactive(3),
        GuidanceMode::all()[2],
        &Default::default(),
        &wayguide_core::sim::RunOptions {
            timeout_s: 20.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!trace.arrived());
    assert_eq!(replay(&trace).unwrap(), non_pose(&trace));
}

#[test]
fn simulations_are_byte_identical() {
    let route = first_route(fixtures::REFERENCE_MAP);
    for mode in GuidanceMode::all() {
        let a = simulate(&route, &WalkerModel::reactive(11), mode).to_jsonl();
        let b = simulate(&route, &WalkerModel::reactive(11), mode).to_jsonl();
        assert_eq!(a, b);
    }
}

#[test]
fn truncated_trace_names_the_line() {
    let route = first_route(fixtures::CORRIDOR_MAP);
    let text = simulate(&route, &WalkerModel::ideal(), GuidanceMode::all()[2]).to_jsonl();
    let lines: Vec<&str> = text.lines().collect();
    let keep = lines.len() / 2;
    let mut cut = lines[..keep].join("\n");
    cut.push('\n');
    cut.push_str(&lines[keep][..lines[keep].len() / 2]);
    match SimTrace::from_jsonl(&cut) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, keep + 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn other_versions_are_refused() {
    let route = first_route(fixtures::CORRIDOR_MAP);
    let text = simulate(&route, &WalkerModel::ideal(), GuidanceMode::all()[0]).to_jsonl();
    let bumped = text.replacen("{\"v\":1,", "{\"v\":2,", 1);
    assert_ne!(bumped, text);
    assert!(matches!(
        SimTrace::from_jsonl(&bumped),
        Err(Error::UnsupportedVersion { found: 2, expected: 1 })
    ));
}

#[test]
fn time_travel_is_rejected() {
    let route = first_route(fixtures::CORRIDOR_MAP);
    let trace = simulate(&route, &WalkerModel::ideal(), GuidanceMode::all()[0]);
    let mut lines: Vec<String> = trace.to_jsonl().lines().map(String::from).collect();
    lines.swap(5, 40);
    assert!(matches!(
        SimTrace::from_jsonl(&lines.join("\n")),
        Err(Error::Validation(_))
    ));
}

#[test]
fn replay_refuses_poses_after_arrival() {
    let route = first_route(fixtures::CORRIDOR_MAP);
    let mut trace = simulate(&route, &WalkerModel::ideal(), GuidanceMode::all()[0]);
    let last = trace.poses().last().unwrap().clone();
    trace.events.push(last);
    assert!(replay(&trace).is_err());
}
