use proptest::prelude::*;
use wayguide_core::encoders::{
    compass_interval, decode_direction_a, distance_interval, encode_direction_a,
    encode_direction_b, success_signal, Channel, DirectionOption, Meaning,
};
use wayguide_core::geo::Side;
use wayguide_core::scheduler::{ScheduleRequest, Scheduler, SignalSource};
use wayguide_core::trace::TraceEvent;
use wayguide_core::{CompassConfig, DirectionConfig, DistanceConfig, PulseTrain, TurnClassification};

fn deviation() -> impl Strategy<Value = f64> {
    (-179.999..=180.0f64).prop_filter("in range", |d| *d > -180.0)
}

fn direction_config() -> impl Strategy<Value = DirectionConfig> {
    (
        1.0..500.0f64,
        1.0..500.0f64,
        1.0..500.0f64,
        1.0..500.0f64,
        1.0..1000.0f64,
        any::<bool>(),
    )
        .prop_map(|(short, d_long, d_success, gap, post, audio)| DirectionConfig {
            short_pulse_ms: short,
            long_pulse_ms: short + d_long,
            success_pulse_ms: short + d_long + d_success,
            inter_pulse_gap_ms: gap,
            post_signal_gap_ms: post,
            option: DirectionOption::CountingClock,
            channel: if audio { Channel::Audio } else { Channel::Haptic },
        })
}

fn turn(hour: u8, side: Side) -> TurnClassification {
    let angle = f64::from(hour) * 30.0;
    TurnClassification {
        clock_hour: hour,
        side,
        angle_deg: if side == Side::Left { -angle } else { angle },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn compass_is_strictly_decreasing_outside_dead_zone(a in deviation(), b in deviation()) {
        let cfg = CompassConfig::default();
        let (lo, hi) = if a.abs() < b.abs() { (a, b) } else { (b, a) };
        prop_assume!(lo.abs() > cfg.dead_zone_deg && hi.abs() > lo.abs());
        let i_lo = compass_interval(lo, &cfg).unwrap().unwrap();
        let i_hi = compass_interval(hi, &cfg).unwrap().unwrap();
        prop_assert!(i_lo > i_hi);
    }

    #[test]
    fn compass_is_symmetric(d in -179.999..180.0f64) {
        let cfg = CompassConfig::default();
        prop_assert_eq!(compass_interval(d, &cfg).unwrap(), compass_interval(-d, &cfg).unwrap());
    }

    #[test]
    fn compass_stays_within_bounds(d in deviation()) {
        let cfg = CompassConfig::default();
        match compass_interval(d, &cfg).unwrap() {
            None => prop_assert!(d.abs() <= cfg.dead_zone_deg),
            Some(i) => prop_assert!(i >= cfg.interval_min_ms && i <= cfg.interval_max_ms),
        }
    }

    #[test]
    fn distance_is_monotone_and_clamped(a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let cfg = DistanceConfig::default();
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        let i_near = distance_interval(near, &cfg).unwrap();
        let i_far = distance_interval(far, &cfg).unwrap();
        if far > cfg.trigger_distance_m {
            prop_assert!(i_far.is_none());
        }
        if let (Some(n), Some(f)) = (i_near, i_far) {
            prop_assert!(n <= f);
            prop_assert!(n >= cfg.interval_min_ms && f <= cfg.interval_max_ms);
        }
        prop_assert_eq!(i_near.is_some(), near <= cfg.trigger_distance_m);
    }

    #[test]
    fn clock_trains_round_trip_under_any_config(cfg in direction_config(), hour in 1u8..=6, right in any::<bool>()) {
        let side = if right { Side::Right } else { Side::Left };
        let train = encode_direction_a(&turn(hour, side), &cfg).unwrap();
        prop_assert_eq!(train.pulses.len(), usize::from(hour));
        let back = decode_direction_a(&train, &cfg).unwrap();
        prop_assert_eq!((back.clock_hour, back.side), (hour, side));
    }

    #[test]
    fn success_outlasts_every_direction_pulse(cfg in direction_config(), hour in 1u8..=6) {
        let success = success_signal(&cfg).unwrap().pulses[0].length_ms;
        for side in [Side::Left, Side::Right] {
            let train = encode_direction_a(&turn(hour, side), &cfg).unwrap();
            prop_assert!(train.pulses.iter().all(|p| p.length_ms < success));
        }
        prop_assert!(encode_direction_b(&cfg).unwrap().pulses[0].length_ms < success);
    }

    #[test]
    fn trains_survive_the_trace_format(cfg in direction_config(), hour in 1u8..=6, at in 0.0..1e4f64) {
        let train = encode_direction_a(&turn(hour, Side::Right), &cfg).unwrap();
        let json = serde_json::to_string(&train).unwrap();
        prop_assert_eq!(&serde_json::from_str::<PulseTrain>(&json).unwrap(), &train);

        let mut s = Scheduler::new(0.0);
        s.enqueue(ScheduleRequest {
            train,
            at,
            source: SignalSource::Adjust,
            waypoint: Some(3),
            stale_after_s: None,
        })
        .unwrap();
        for e in s.drain_all() {
            let ev = TraceEvent::from_emission(&e);
            let line = serde_json::to_string(&ev).unwrap();
            prop_assert_eq!(serde_json::from_str::<TraceEvent>(&line).unwrap(), ev);
        }
    }
}

#[test]
fn every_clock_hour_round_trips() {
    let cfg = DirectionConfig::default();
    for hour in 1..=6 {
        for side in [Side::Left, Side::Right] {
            let train = encode_direction_a(&turn(hour, side), &cfg).unwrap();
            assert_eq!(train.meaning, Meaning::Direction);
            let expected = if side == Side::Right { 450.0 } else { 120.0 };
            assert!(train.pulses.iter().all(|p| p.length_ms == expected));
            let back = decode_direction_a(&train, &cfg).unwrap();
            assert_eq!((back.clock_hour, back.side), (hour, side));
        }
    }
}

#[test]
fn misconfigured_directions_are_rejected() {
    let cfg = DirectionConfig {
        long_pulse_ms: 450.0,
        success_pulse_ms: 450.0,
        ..Default::default()
    };
    assert!(success_signal(&cfg).is_err());
    assert!(encode_direction_a(&turn(3, Side::Right), &cfg).is_err());
}
