use std::io::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::frame::encode_frame;
use super::ProtocolError;
use crate::env::{EnvConfig, StepInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    EpisodeDone,
    BadPhase,
    ParseError,
    ActionRange,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::EpisodeDone => "episode_done",
            ErrorCode::BadPhase => "bad_phase",
            ErrorCode::ParseError => "parse_error",
            ErrorCode::ActionRange => "action_range",
        }
    }
}

/// Opens a session. `config` holds environment-config fields overriding the server defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigAck {
    pub config: EnvConfig,
    pub track: String,
    pub obs_dim: usize,
    pub action_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reset {
    /// Replaces the session's noise seed before resetting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obs {
    pub obs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepReply {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Hello(Hello),
    ConfigAck(ConfigAck),
    Reset(Reset),
    Obs(Obs),
    Step(Step),
    Result(StepReply),
    Error(ErrorReply),
    Bye,
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Hello(_) => "hello",
            Body::ConfigAck(_) => "config_ack",
            Body::Reset(_) => "reset",
            Body::Obs(_) => "obs",
            Body::Step(_) => "step",
            Body::Result(_) => "result",
            Body::Error(_) => "error",
            Body::Bye => "bye",
        }
    }

    fn fields(&self) -> Result<Map<String, Value>, serde_json::Error> {
        let v = match self {
            Body::Hello(b) => serde_json::to_value(b)?,
            Body::ConfigAck(b) => serde_json::to_value(b)?,
            Body::Reset(b) => serde_json::to_value(b)?,
            Body::Obs(b) => serde_json::to_value(b)?,
            Body::Step(b) => serde_json::to_value(b)?,
            Body::Result(b) => serde_json::to_value(b)?,
            Body::Error(b) => serde_json::to_value(b)?,
            Body::Bye => return Ok(Map::new()),
        };
        match v {
            Value::Object(m) => Ok(m),
            _ => unreachable!("message bodies serialize as objects"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u64,
    pub body: Body,
}

impl Message {
    pub fn new(seq: u64, body: Body) -> Self {
        Self { seq, body }
    }

    pub fn error(seq: u64, code: ErrorCode, message: impl Into<String>) -> Self {
        Self::new(seq, Body::Error(ErrorReply { code, message: message.into() }))
    }

    /// Canonical JSON: `type`, `seq`, then body fields in alphabetical order, no whitespace.
    pub fn to_json(&self) -> Result<Vec<u8>, ProtocolError> {
        let fields = self.body.fields().map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let mut out = Vec::with_capacity(64);
        write!(out, "{{\"type\":\"{}\",\"seq\":{}", self.body.type_name(), self.seq)?;
        // serde_json's map is ordered by key, recursively
        for (k, v) in &fields {
            out.push(b',');
            serde_json::to_writer(&mut out, k).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
            out.push(b':');
            serde_json::to_writer(&mut out, v).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        }
        out.push(b'}');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| ProtocolError::Json(e.to_string()))?;
        let Value::Object(mut map) = value else {
            return Err(ProtocolError::Json("message must be a JSON object".into()));
        };
        let seq = match map.remove("seq") {
            Some(Value::Number(n)) => n.as_u64().ok_or_else(|| ProtocolError::Malformed("seq must be a u64".into()))?,
            _ => return Err(ProtocolError::Malformed("missing seq".into())),
        };
        let ty = match map.remove("type") {
            Some(Value::String(s)) => s,
            _ => return Err(ProtocolError::Malformed("missing type".into())),
        };
        fn parse<T: for<'de> Deserialize<'de>>(seq: u64, map: Map<String, Value>) -> Result<T, ProtocolError> {
            serde_json::from_value(Value::Object(map)).map_err(|e| ProtocolError::BadBody { seq, reason: e.to_string() })
        }
        let body = match ty.as_str() {
            "hello" => Body::Hello(parse(seq, map)?),
            "config_ack" => Body::ConfigAck(parse(seq, map)?),
            "reset" => Body::Reset(parse(seq, map)?),
            "obs" => Body::Obs(parse(seq, map)?),
            "step" => Body::Step(parse(seq, map)?),
            "result" => Body::Result(parse(seq, map)?),
            "error" => Body::Error(parse(seq, map)?),
            "bye" => {
                if !map.is_empty() {
                    return Err(ProtocolError::BadBody { seq, reason: "bye takes no fields".into() });
                }
                Body::Bye
            }
            _ => return Err(ProtocolError::UnknownType { seq, ty }),
        };
        Ok(Self { seq, body })
    }
}

/// Canonical JSON payload with its length prefix.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    encode_frame(&msg.to_json()?)
}

/// Parses one frame payload.
pub fn decode(payload: &[u8]) -> Result<Message, ProtocolError> {
    Message::from_json(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_step_frame() {
        let bytes = encode(&Message::new(1, Body::Step(Step { action: vec![0.0] }))).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 0, 0x26]);
        assert_eq!(&bytes[4..], br#"{"type":"step","seq":1,"action":[0.0]}"#);
    }

    #[test]
    fn golden_bye_frame() {
        let bytes = encode(&Message::new(2, Body::Bye)).unwrap();
        assert_eq!(&bytes[4..], br#"{"type":"bye","seq":2}"#);
        assert_eq!(bytes.len(), 4 + 22);
    }

    #[test]
    fn body_keys_sorted() {
        let info = StepInfo { step: 3, s_progress: 2.5, d: -0.1, theta: 0.01, raw_action: 0.2, terminated: false };
        let msg = Message::new(9, Body::Result(StepReply { obs: vec![0.5], reward: 1.0, done: false, info }));
        let text = String::from_utf8(msg.to_json().unwrap()).unwrap();
        assert_eq!(
            text,
            r#"{"type":"result","seq":9,"done":false,"info":{"d":-0.1,"raw_action":0.2,"s_progress":2.5,"step":3,"terminated":false,"theta":0.01},"obs":[0.5],"reward":1.0}"#
        );
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(decode(b"{not json"), Err(ProtocolError::Json(_))));
        assert!(matches!(decode(br#"{"type":"warp","seq":4}"#), Err(ProtocolError::UnknownType { seq: 4, .. })));
        assert!(matches!(decode(br#"{"type":"step","seq":1}"#), Err(ProtocolError::BadBody { seq: 1, .. })));
        assert!(matches!(decode(br#"{"type":"step","seq":1,"action":[0.0],"x":1}"#), Err(ProtocolError::BadBody { .. })));
        assert!(matches!(decode(br#"{"type":"bye"}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode(br#"[1,2]"#), Err(ProtocolError::Json(_))));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1.0..1.0f64]
    }

    fn body() -> impl Strategy<Value = Body> {
        prop_oneof![
            Just(Body::Hello(Hello::default())),
            (0.0..1.0f64).prop_map(|s| {
                let mut m = Map::new();
                m.insert("noise_sigma".into(), serde_json::json!(s));
                Body::Hello(Hello { config: Some(m) })
            }),
            proptest::option::of(any::<u64>()).prop_map(|seed| Body::Reset(Reset { seed })),
            proptest::collection::vec(finite(), 0..8).prop_map(|obs| Body::Obs(Obs { obs })),
            proptest::collection::vec(finite(), 0..3).prop_map(|action| Body::Step(Step { action })),
            (proptest::collection::vec(finite(), 7), finite(), any::<bool>(), any::<u32>(), finite()).prop_map(
                |(obs, reward, done, step, d)| Body::Result(StepReply {
                    obs,
                    reward,
                    done,
                    info: StepInfo { step: step as usize, s_progress: d.abs(), d, theta: -d, raw_action: reward, terminated: done },
                })
            ),
            "[a-z ]{0,20}".prop_map(|m| Body::Error(ErrorReply { code: ErrorCode::BadPhase, message: m })),
            (any::<u64>(), finite()).prop_map(|(seed, dt)| Body::ConfigAck(ConfigAck {
                config: EnvConfig { seed, dt: dt.abs(), ..Default::default() },
                track: "oval".into(),
                obs_dim: 7,
                action_dim: 1,
            })),
            Just(Body::Bye),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(seq in any::<u64>(), body in body()) {
            let msg = Message::new(seq, body);
            let bytes = encode(&msg).unwrap();
            let back = decode(&bytes[4..]).unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(encode(&back).unwrap(), bytes);
        }
    }
}
