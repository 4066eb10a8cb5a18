//! WebSocket messages, one JSON object per text frame, tagged by `type`.

use serde::{Deserialize, Serialize};
use wayguide_core::map::RouteFile;
use wayguide_core::scheduler::Emission;
use wayguide_core::trace::{PhaseName, TraceEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Start {
        from: String,
        to: String,
        mode: String,
        #[serde(default)]
        voice: bool,
    },
    /// `t` is seconds since `start`; the server stamps poses that omit it.
    Pose {
        #[serde(default)]
        t: Option<f64>,
        x: f64,
        y: f64,
        floor: String,
        heading: f64,
    },
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Route(RouteFile),
    Pulse(Emission),
    Voice {
        t: f64,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
    },
    State {
        t: f64,
        phase: PhaseName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waypoint: Option<usize>,
    },
    Error {
        message: String,
    },
}

impl ServerMsg {
    pub fn error(message: impl ToString) -> Self {
        ServerMsg::Error {
            message: message.to_string(),
        }
    }

    /// The client-facing form of a session event. Poses echo the client's own
    /// input and drops are bookkeeping, so neither is sent.
    pub fn from_event(ev: TraceEvent) -> Option<Self> {
        match ev {
            TraceEvent::Pulse {
                t,
                channel,
                length_ms,
                meaning,
                source,
                waypoint,
                train,
            } => Some(ServerMsg::Pulse(Emission {
                t_start: t,
                length_ms,
                channel,
                meaning,
                source,
                waypoint,
                train,
            })),
            TraceEvent::Voice { t, text, waypoint } => Some(ServerMsg::Voice { t, text, waypoint }),
            TraceEvent::State { t, phase, waypoint } => Some(ServerMsg::State { t, phase, waypoint }),
            TraceEvent::Pose { .. } | TraceEvent::Dropped { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};
    use wayguide_core::encoders::{Channel, Meaning};
    use wayguide_core::scheduler::SignalSource;

    #[test]
    fn client_messages_parse() {
        let start: ClientMsg = serde_json::from_value(
            json!({"type": "start", "from": "a", "to": "b", "mode": "event-a"}),
        )
        .unwrap();
        assert!(matches!(start, ClientMsg::Start { voice: false, .. }));
        let pose: ClientMsg = serde_json::from_value(
            json!({"type": "pose", "x": 1.0, "y": 2.0, "floor": "g", "heading": -45.0}),
        )
        .unwrap();
        assert!(matches!(pose, ClientMsg::Pose { t: None, .. }));
        let stop: ClientMsg = serde_json::from_str(r#"{"type":"stop"}"#).unwrap();
        assert_eq!(stop, ClientMsg::Stop);
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"jump"}"#).is_err());
    }

    #[test]
    fn pulses_carry_emission_fields() {
        let msg = ServerMsg::Pulse(Emission {
            t_start: 1.5,
            length_ms: 450.0,
            channel: Channel::Haptic,
            meaning: Meaning::Direction,
            source: SignalSource::Junction,
            waypoint: Some(2),
            train: 7,
        });
        let v: Value = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(
            v,
            json!({
                "type": "pulse", "t_start": 1.5, "length_ms": 450.0, "channel": "haptic",
                "meaning": "direction", "source": "junction", "waypoint": 2, "train": 7
            })
        );
        let err: Value = serde_json::from_str(&ServerMsg::error("nope").to_json()).unwrap();
        assert_eq!(err, json!({"type": "error", "message": "nope"}));
    }

    #[test]
    fn poses_and_drops_stay_on_the_server() {
        let pose = TraceEvent::Pose {
            t: 0.0,
            x: 0.0,
            y: 0.0,
            floor: "g".into(),
            heading: 0.0,
        };
        assert_eq!(ServerMsg::from_event(pose), None);
        let state = TraceEvent::State {
            t: 3.0,
            phase: PhaseName::Arrived,
            waypoint: None,
        };
        let v: Value = serde_json::from_str(&ServerMsg::from_event(state).unwrap().to_json()).unwrap();
        assert_eq!(v, json!({"type": "state", "t": 3.0, "phase": "arrived"}));
    }
}
