//! Feedback codecs: compass cadence, distance cadence, clock-style and ping
//! direction trains, completion/success signals and voice phrases.
//!
//! All timings are milliseconds. Cadences are returned as the interval between
//! consecutive pulses; `None` means silence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{FloorChangeVia, Side, TurnClassification, CLOCK_HOUR_DEG, MAX_CLOCK_HOUR};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Haptic,
    Audio,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Meaning {
    Direction,
    Distance,
    Completion,
    Success,
    Ping,
}

impl Meaning {
    pub fn as_str(&self) -> &'static str {
        match self {
            Meaning::Direction => "direction",
            Meaning::Distance => "distance",
            Meaning::Completion => "completion",
            Meaning::Success => "success",
            Meaning::Ping => "ping",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse<T> {
    pub length_ms: T,
    pub gap_after_ms: T,
    pub channel: Channel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain<T> {
    pub pulses: Vec<Pulse<T>>,
    pub meaning: Meaning,
}

impl<T: Scalar> PulseTrain<T> {
    pub fn new(pulses: Vec<Pulse<T>>, meaning: Meaning) -> Result<Self> {
        let Some(first) = pulses.first() else {
            return Err(Error::MalformedTrain("train has no pulses".into()));
        };
        for p in &pulses {
            if !(p.length_ms.is_finite() && p.length_ms > T::zero()) {
                return Err(Error::MalformedTrain(format!(
                    "pulse length must be positive, got {}",
                    p.length_ms
                )));
            }
            if !(p.gap_after_ms.is_finite() && p.gap_after_ms >= T::zero()) {
                return Err(Error::MalformedTrain(format!(
                    "gap must be non-negative, got {}",
                    p.gap_after_ms
                )));
            }
            if p.channel != first.channel {
                return Err(Error::MalformedTrain("pulses span two channels".into()));
            }
        }
        Ok(PulseTrain { pulses, meaning })
    }

    fn uniform(count: usize, length_ms: T, gap_ms: T, channel: Channel, meaning: Meaning) -> Self {
        let pulses = (0..count)
            .map(|i| Pulse {
                length_ms,
                gap_after_ms: if i + 1 < count { gap_ms } else { T::zero() },
                channel,
            })
            .collect();
        PulseTrain { pulses, meaning }
    }

    fn single(length_ms: T, gap_after_ms: T, channel: Channel, meaning: Meaning) -> Self {
        PulseTrain {
            pulses: vec![Pulse {
                length_ms,
                gap_after_ms,
                channel,
            }],
            meaning,
        }
    }

    pub fn channel(&self) -> Channel {
        self.pulses[0].channel
    }

    /// Time the channel is occupied, trailing gap included.
    pub fn duration_ms(&self) -> T {
        self.pulses
            .iter()
            .fold(T::zero(), |acc, p| acc + p.length_ms + p.gap_after_ms)
    }
}

/// Continuous compass: silent inside the dead zone, then faster clicks the
/// larger the deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompassConfig<T> {
    pub dead_zone_deg: T,
    pub interval_max_ms: T,
    pub interval_min_ms: T,
    pub pulse_length_ms: T,
    pub channel: Channel,
}

impl<T: Scalar> Default for CompassConfig<T> {
    fn default() -> Self {
        CompassConfig {
            dead_zone_deg: T::lit(10.0),
            interval_max_ms: T::lit(1000.0),
            interval_min_ms: T::lit(150.0),
            pulse_length_ms: T::lit(60.0),
            channel: Channel::Haptic,
        }
    }
}

impl<T: Scalar> CompassConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dead_zone_deg >= T::zero()
            && self.dead_zone_deg < T::lit(180.0)
            && self.interval_min_ms > T::zero()
            && self.interval_min_ms < self.interval_max_ms
            && self.interval_max_ms.is_finite()
            && self.pulse_length_ms > T::zero()
            && self.pulse_length_ms.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid compass config: {self:?}")))
        }
    }
}

/// Parking-sensor style distance cadence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig<T> {
    pub trigger_distance_m: T,
    pub slope_ms_per_m: T,
    pub interval_min_ms: T,
    pub interval_max_ms: T,
    pub pulse_length_ms: T,
    pub channel: Channel,
}

impl<T: Scalar> Default for DistanceConfig<T> {
    fn default() -> Self {
        DistanceConfig {
            trigger_distance_m: T::lit(10.0),
            slope_ms_per_m: T::lit(100.0),
            interval_min_ms: T::lit(250.0),
            interval_max_ms: T::lit(1250.0),
            pulse_length_ms: T::lit(80.0),
            channel: Channel::Haptic,
        }
    }
}

impl<T: Scalar> DistanceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.trigger_distance_m > T::zero()
            && self.trigger_distance_m.is_finite()
            && self.slope_ms_per_m > T::zero()
            && self.slope_ms_per_m.is_finite()
            && self.interval_min_ms > T::zero()
            && self.interval_min_ms < self.interval_max_ms
            && self.interval_max_ms.is_finite()
            && self.pulse_length_ms > T::zero()
            && self.pulse_length_ms.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid distance config: {self:?}")))
        }
    }
}

/// How turn direction is conveyed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionOption {
    /// Pulse count gives the clock hour, pulse length the side (long = right).
    #[default]
    CountingClock,
    /// A single pulse asking the user to rotate until the success signal.
    Ping,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionConfig<T> {
    pub short_pulse_ms: T,
    pub long_pulse_ms: T,
    pub inter_pulse_gap_ms: T,
    pub success_pulse_ms: T,
    pub post_signal_gap_ms: T,
    pub option: DirectionOption,
    pub channel: Channel,
}

impl<T: Scalar> Default for DirectionConfig<T> {
    fn default() -> Self {
        DirectionConfig {
            short_pulse_ms: T::lit(120.0),
            long_pulse_ms: T::lit(450.0),
            inter_pulse_gap_ms: T::lit(250.0),
            success_pulse_ms: T::lit(900.0),
            post_signal_gap_ms: T::lit(600.0),
            option: DirectionOption::CountingClock,
            channel: Channel::Haptic,
        }
    }
}

impl<T: Scalar> DirectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            self.short_pulse_ms,
            self.long_pulse_ms,
            self.success_pulse_ms,
            self.inter_pulse_gap_ms,
            self.post_signal_gap_ms,
        ];
        if lengths.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(Error::Validation(format!(
                "direction timings must be positive: {self:?}"
            )));
        }
        if !(self.short_pulse_ms < self.long_pulse_ms
            && self.long_pulse_ms < self.success_pulse_ms)
        {
            return Err(Error::Validation(format!(
                "need short < long < success pulse, got {} / {} / {}",
                self.short_pulse_ms, self.long_pulse_ms, self.success_pulse_ms
            )));
        }
        Ok(())
    }
}

fn check_deviation<T: Scalar>(deviation: T) -> Result<()> {
    if deviation.is_finite() && deviation > T::lit(-180.0) && deviation <= T::lit(180.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "deviation {deviation} outside (-180, 180]"
        )))
    }
}

/// Interval between compass clicks for a heading deviation.
pub fn compass_interval<T: Scalar>(deviation: T, cfg: &CompassConfig<T>) -> Result<Option<T>> {
    check_deviation(deviation)?;
    cfg.validate()?;
    let magnitude = deviation.abs();
    if magnitude <= cfg.dead_zone_deg {
        return Ok(None);
    }
    let span = T::lit(180.0) - cfg.dead_zone_deg;
    let frac = (magnitude - cfg.dead_zone_deg) / span;
    Ok(Some(
        cfg.interval_max_ms - (cfg.interval_max_ms - cfg.interval_min_ms) * frac,
    ))
}

/// Interval between distance pulses for the remaining distance to the next event.
pub fn distance_interval<T: Scalar>(remaining: T, cfg: &DistanceConfig<T>) -> Result<Option<T>> {
    if !(remaining.is_finite() && remaining >= T::zero()) {
        return Err(Error::invalid(format!(
            "remaining distance must be a non-negative number, got {remaining}"
        )));
    }
    cfg.validate()?;
    if remaining > cfg.trigger_distance_m {
        return Ok(None);
    }
    let raw = cfg.interval_min_ms + cfg.slope_ms_per_m * remaining;
    Ok(Some(raw.max(cfg.interval_min_ms).min(cfg.interval_max_ms)))
}

pub fn compass_pulse<T: Scalar>(cfg: &CompassConfig<T>) -> Result<PulseTrain<T>> {
    cfg.validate()?;
    Ok(PulseTrain::single(
        cfg.pulse_length_ms,
        T::zero(),
        cfg.channel,
        Meaning::Direction,
    ))
}

pub fn distance_pulse<T: Scalar>(cfg: &DistanceConfig<T>) -> Result<PulseTrain<T>> {
    cfg.validate()?;
    Ok(PulseTrain::single(
        cfg.pulse_length_ms,
        T::zero(),
        cfg.channel,
        Meaning::Distance,
    ))
}

/// Counting-clock train: one pulse per clock hour, long pulses for right turns.
pub fn encode_direction_a<T: Scalar>(
    turn: &TurnClassification<T>,
    cfg: &DirectionConfig<T>,
) -> Result<PulseTrain<T>> {
    cfg.validate()?;
    if turn.clock_hour == 0 || turn.side == Side::Straight {
        return Err(Error::invalid("straight ahead has no direction signal"));
    }
    if turn.clock_hour > MAX_CLOCK_HOUR {
        return Err(Error::invalid(format!(
            "clock hour {} exceeds {MAX_CLOCK_HOUR}",
            turn.clock_hour
        )));
    }
    let length = match turn.side {
        Side::Right => cfg.long_pulse_ms,
        _ => cfg.short_pulse_ms,
    };
    Ok(PulseTrain::uniform(
        usize::from(turn.clock_hour),
        length,
        cfg.inter_pulse_gap_ms,
        cfg.channel,
        Meaning::Direction,
    ))
}

/// Ping: a single short pulse with no angle or side.
pub fn encode_direction_b<T: Scalar>(cfg: &DirectionConfig<T>) -> Result<PulseTrain<T>> {
    cfg.validate()?;
    Ok(PulseTrain::single(
        cfg.short_pulse_ms,
        T::zero(),
        cfg.channel,
        Meaning::Ping,
    ))
}

/// Encodes a turn with whichever option `cfg` selects.
pub fn encode_direction<T: Scalar>(
    turn: &TurnClassification<T>,
    cfg: &DirectionConfig<T>,
) -> Result<PulseTrain<T>> {
    match cfg.option {
        DirectionOption::CountingClock => encode_direction_a(turn, cfg),
        DirectionOption::Ping => encode_direction_b(cfg),
    }
}

/// The long pulse that confirms correct orientation, followed by mandatory silence.
pub fn success_signal<T: Scalar>(cfg: &DirectionConfig<T>) -> Result<PulseTrain<T>> {
    cfg.validate()?;
    Ok(PulseTrain::single(
        cfg.success_pulse_ms,
        cfg.post_signal_gap_ms,
        cfg.channel,
        Meaning::Success,
    ))
}

/// Same waveform as the success signal, played when a junction is reached.
pub fn completion_signal<T: Scalar>(cfg: &DirectionConfig<T>) -> Result<PulseTrain<T>> {
    let mut train = success_signal(cfg)?;
    train.meaning = Meaning::Completion;
    Ok(train)
}

/// Inverse of [`encode_direction_a`]. The angle is the centre of the clock hour.
pub fn decode_direction_a<T: Scalar>(
    train: &PulseTrain<T>,
    cfg: &DirectionConfig<T>,
) -> Result<TurnClassification<T>> {
    if train.meaning != Meaning::Direction {
        return Err(Error::MalformedTrain(format!(
            "expected a direction train, got {}",
            train.meaning.as_str()
        )));
    }
    let count = train.pulses.len();
    if count == 0 || count > usize::from(MAX_CLOCK_HOUR) {
        return Err(Error::MalformedTrain(format!(
            "pulse count {count} outside 1..={MAX_CLOCK_HOUR}"
        )));
    }
    let side = if train.pulses.iter().all(|p| p.length_ms == cfg.long_pulse_ms) {
        Side::Right
    } else if train.pulses.iter().all(|p| p.length_ms == cfg.short_pulse_ms) {
        Side::Left
    } else {
        return Err(Error::MalformedTrain(
            "pulse lengths are neither all short nor all long".into(),
        ));
    };
    let hour = count as u8;
    let magnitude = T::lit(f64::from(hour) * CLOCK_HOUR_DEG);
    // A 6 o'clock train keeps its decoded side; the angle folds to +180.
    let angle_deg = if side == Side::Right || hour == MAX_CLOCK_HOUR {
        magnitude
    } else {
        -magnitude
    };
    Ok(TurnClassification {
        clock_hour: hour,
        side,
        angle_deg,
    })
}

/// Situations that produce a spoken instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoiceEvent {
    Depart,
    ApproachTurn,
    AtTurn,
    Adjust,
    Aligned,
    Door,
    FloorChange(FloorChangeVia),
    Arrived,
    OffCourse,
}

fn side_word(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
        Side::Straight => "straight",
    }
}

fn turn_words<T: Scalar>(turn: &TurnClassification<T>) -> String {
    match turn.clock_hour {
        0 => "straight".into(),
        1 => format!("slightly {}", side_word(turn.side)),
        2 | 3 => side_word(turn.side).into(),
        _ => format!("sharp {}", side_word(turn.side)),
    }
}

fn turn_action<T: Scalar>(turn: &TurnClassification<T>) -> String {
    if turn.is_straight() {
        "go straight".into()
    } else {
        format!("turn {}", turn_words(turn))
    }
}

fn meters<T: Scalar>(d: T) -> Result<String> {
    if !(d.is_finite() && d >= T::zero()) {
        return Err(Error::invalid(format!("distance must be non-negative, got {d}")));
    }
    let n = d.round().as_f64() as u64;
    Ok(if n == 1 {
        "1 meter".into()
    } else {
        format!("{n} meters")
    })
}

/// Short spoken phrase for a guidance event.
pub fn voice_instruction<T: Scalar>(
    event: VoiceEvent,
    turn: Option<&TurnClassification<T>>,
    distance_m: Option<T>,
) -> Result<String> {
    let need_turn = || {
        turn.ok_or_else(|| Error::invalid(format!("voice event {event:?} needs a turn")))
    };
    Ok(match event {
        VoiceEvent::Depart => match distance_m {
            Some(d) => format!("go straight {}", meters(d)?),
            None => "go straight".into(),
        },
        VoiceEvent::ApproachTurn => {
            let action = turn_action(need_turn()?);
            match distance_m {
                Some(d) => format!("in {}, {action}", meters(d)?),
                None => format!("{action} ahead"),
            }
        }
        VoiceEvent::AtTurn => turn_action(need_turn()?),
        VoiceEvent::Adjust => {
            let t = need_turn()?;
            if t.is_straight() {
                "straight ahead".into()
            } else {
                format!("adjust {}", turn_words(t))
            }
        }
        VoiceEvent::Aligned => "straight ahead".into(),
        VoiceEvent::Door => "door ahead".into(),
        VoiceEvent::FloorChange(FloorChangeVia::Stairs) => "take the stairs".into(),
        VoiceEvent::FloorChange(FloorChangeVia::Elevator) => "take the elevator".into(),
        VoiceEvent::Arrived => "destination reached".into(),
        VoiceEvent::OffCourse => "off course".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::classify_turn;

    fn turn(hour: u8, side: Side, angle: f64) -> TurnClassification<f64> {
        TurnClassification {
            clock_hour: hour,
            side,
            angle_deg: angle,
        }
    }

    #[test]
    fn compass_examples() {
        let cfg = CompassConfig::<f64>::default();
        assert_eq!(compass_interval(0.0, &cfg).unwrap(), None);
        assert_eq!(compass_interval(10.0, &cfg).unwrap(), None);
        assert_eq!(compass_interval(180.0, &cfg).unwrap(), Some(150.0));
        assert_eq!(compass_interval(95.0, &cfg).unwrap(), Some(575.0));
        assert_eq!(compass_interval(-95.0, &cfg).unwrap(), Some(575.0));
        assert!(compass_interval(-180.0, &cfg).is_err());
        assert!(compass_interval(181.0, &cfg).is_err());
        assert!(compass_interval(f64::NAN, &cfg).is_err());
    }

    #[test]
    fn compass_config_validation() {
        let mut cfg = CompassConfig::<f64>::default();
        cfg.interval_min_ms = cfg.interval_max_ms;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
        let mut cfg = CompassConfig::<f64>::default();
        cfg.dead_zone_deg = 180.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn distance_examples() {
        let cfg = DistanceConfig::<f64>::default();
        assert_eq!(distance_interval(12.0, &cfg).unwrap(), None);
        assert_eq!(distance_interval(5.0, &cfg).unwrap(), Some(750.0));
        assert_eq!(distance_interval(0.0, &cfg).unwrap(), Some(250.0));
        assert_eq!(distance_interval(10.0, &cfg).unwrap(), Some(1250.0));
        assert!(distance_interval(-0.1, &cfg).is_err());
    }

    #[test]
    fn direction_a_examples() {
        let cfg = DirectionConfig::<f64>::default();
        let right = encode_direction_a(&turn(3, Side::Right, 90.0), &cfg).unwrap();
        assert_eq!(right.pulses.len(), 3);
        assert!(right.pulses.iter().all(|p| p.length_ms == 450.0));
        assert_eq!(right.meaning, Meaning::Direction);
        let gaps: Vec<f64> = right.pulses.iter().map(|p| p.gap_after_ms).collect();
        assert_eq!(gaps, vec![250.0, 250.0, 0.0]);

        let left = encode_direction_a(&turn(3, Side::Left, -90.0), &cfg).unwrap();
        assert!(left.pulses.iter().all(|p| p.length_ms == 120.0));
        let back = encode_direction_a(&turn(6, Side::Right, 180.0), &cfg).unwrap();
        assert_eq!(back.pulses.len(), 6);
        assert!(encode_direction_a(&turn(0, Side::Straight, 5.0), &cfg).is_err());
    }

    #[test]
    fn direction_b_examples() {
        let mut cfg = DirectionConfig::<f64>::default();
        let ping = encode_direction_b(&cfg).unwrap();
        assert_eq!(ping.pulses.len(), 1);
        assert_eq!(ping.pulses[0].length_ms, 120.0);
        assert_eq!(ping.meaning, Meaning::Ping);
        cfg.short_pulse_ms = 200.0;
        assert_eq!(encode_direction_b(&cfg).unwrap().pulses[0].length_ms, 200.0);
    }

    #[test]
    fn success_and_completion() {
        let cfg = DirectionConfig::<f64>::default();
        let s = success_signal(&cfg).unwrap();
        assert_eq!(s.meaning, Meaning::Success);
        assert_eq!(s.pulses.len(), 1);
        assert_eq!(s.pulses[0].length_ms, 900.0);
        assert_eq!(s.pulses[0].gap_after_ms, 600.0);
        assert_eq!(s.duration_ms(), 1500.0);
        let c = completion_signal(&cfg).unwrap();
        assert_eq!(c.meaning, Meaning::Completion);
        assert_eq!(c.pulses, s.pulses);

        let mut equal = cfg;
        equal.success_pulse_ms = 450.0;
        assert!(matches!(success_signal(&equal), Err(Error::Validation(_))));
    }

    #[test]
    fn decode_examples() {
        let cfg = DirectionConfig::<f64>::default();
        let three_long = PulseTrain::uniform(3, 450.0, 250.0, Channel::Haptic, Meaning::Direction);
        let t = decode_direction_a(&three_long, &cfg).unwrap();
        assert_eq!((t.clock_hour, t.side), (3, Side::Right));
        let one_short = PulseTrain::uniform(1, 120.0, 0.0, Channel::Haptic, Meaning::Direction);
        let t = decode_direction_a(&one_short, &cfg).unwrap();
        assert_eq!((t.clock_hour, t.side), (1, Side::Left));
        assert_eq!(t.angle_deg, -30.0);

        let seven = PulseTrain::uniform(7, 450.0, 250.0, Channel::Haptic, Meaning::Direction);
        assert!(matches!(
            decode_direction_a(&seven, &cfg),
            Err(Error::MalformedTrain(_))
        ));
        let mut mixed = three_long.clone();
        mixed.pulses[1].length_ms = 120.0;
        assert!(decode_direction_a(&mixed, &cfg).is_err());
        let mut wrong_meaning = three_long;
        wrong_meaning.meaning = Meaning::Ping;
        assert!(decode_direction_a(&wrong_meaning, &cfg).is_err());
    }

    #[test]
    fn train_construction_checks() {
        let p = |len: f64, ch| Pulse {
            length_ms: len,
            gap_after_ms: 0.0,
            channel: ch,
        };
        assert!(PulseTrain::<f64>::new(vec![], Meaning::Ping).is_err());
        assert!(PulseTrain::new(vec![p(0.0, Channel::Haptic)], Meaning::Ping).is_err());
        assert!(PulseTrain::new(
            vec![p(10.0, Channel::Haptic), p(10.0, Channel::Audio)],
            Meaning::Ping
        )
        .is_err());
        assert!(PulseTrain::new(vec![p(10.0, Channel::Audio)], Meaning::Ping).is_ok());
    }

    #[test]
    fn voice_examples() {
        let slight_right = turn(1, Side::Right, 30.0);
        assert_eq!(
            voice_instruction(VoiceEvent::AtTurn, Some(&slight_right), None).unwrap(),
            "turn slightly right"
        );
        assert_eq!(
            voice_instruction::<f64>(VoiceEvent::Arrived, None, None).unwrap(),
            "destination reached"
        );
        let left = classify_turn(0.0, -90.0).unwrap();
        assert_eq!(
            voice_instruction(VoiceEvent::ApproachTurn, Some(&left), Some(5.0)).unwrap(),
            "in 5 meters, turn left"
        );
        assert!(voice_instruction::<f64>(VoiceEvent::AtTurn, None, None).is_err());
        assert!(voice_instruction::<f64>(VoiceEvent::Depart, None, Some(-1.0)).is_err());
    }
}
