//! Newline-delimited JSON stream and command protocol.
//!
//! Server to client, one object per line:
//!
//! ```json
//! {"seq":812,"timestamp_us":8120000,"kind":"force_state","payload":{"normal_grid":[...],...}}
//! {"seq":813,"timestamp_us":8120000,"kind":"ack","payload":{"id":4,"cmd":"zero_cal","result":{...}}}
//! {"seq":814,"timestamp_us":8120000,"kind":"error","payload":{"id":5,"reason":"unknown_command","message":"..."}}
//! ```
//!
//! Client to server, one object per line with a `cmd` and an optional `id`
//! that is echoed back:
//!
//! ```json
//! {"id":4,"cmd":"zero_cal","group":"normal"}
//! ```
//!
//! Every line a client sends is answered by exactly one `ack` or `error`
//! carrying the same `id` (`null` when absent or unreadable).

use std::path::PathBuf;

use bioskin_core::calibration::ChannelGroup;
use bioskin_core::runtime::{MaterialClass, MaterialFeatures, ThermostatConfig};
use bioskin_core::sim::Event;
use bioskin_core::{ForceState, RawFrame};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    /// Per-service message counter; every client sees the same number for
    /// the same broadcast message.
    pub seq: u64,
    /// Sensor time the message refers to, µs since the source started.
    pub timestamp_us: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Body {
    ForceState(ForceState),
    RawFrame(RawFrame),
    Event(ServiceEvent),
    Ack(Ack),
    Error(ErrorReply),
}

impl StreamMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("stream messages serialize");
        s.push('\n');
        s
    }

    /// Request id of an ack or error.
    pub fn reply_id(&self) -> Option<&Value> {
        match &self.body {
            Body::Ack(a) => Some(&a.id),
            Body::Error(e) => Some(&e.id),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub id: Value,
    pub cmd: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub result: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub id: Value,
    pub reason: ErrorReason,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReason {
    /// Not a JSON object with a string `cmd`.
    Malformed,
    UnknownCommand,
    InvalidArguments,
    /// Zeroing refused because the sensor is loaded or noisy.
    NotAtRest,
    /// A zero calibration is already running.
    Busy,
    ProfileNotFound,
    InvalidProfile,
    InvalidThermostat,
    /// The command needs the simulated source.
    NotSimulated,
    AlreadyRecording,
    NotRecording,
    RecordingFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ServiceEvent {
    /// First message on every connection.
    Hello { version: String, profile_id: String, source: String },
    /// The cross-reference detector changed its verdict.
    Interference { active: bool },
    Material { class: MaterialClass, features: MaterialFeatures },
    /// A contact was seen but could not be classified.
    MaterialUnavailable { reason: String },
    ProfileLoaded { id: String },
    ThermostatChanged { config: ThermostatConfig },
    RecordingStarted { path: PathBuf },
    RecordingStopped { path: PathBuf, frames: u64 },
    /// The scripted part of a simulated scenario is over; the simulator
    /// keeps running in its final state.
    ScenarioEnded { name: String },
    /// A replayed recording ran out or hit a bad packet.
    SourceEnded { reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Ping,
    Status,
    /// Average the next second of frames into new offsets for `group`.
    ZeroCal { group: ChannelGroup },
    SetThermostat {
        t_stop: f64,
        t_heat: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        enabled: Option<bool>,
    },
    Record {
        action: RecordAction,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
    /// Loads `<profile dir>/<profile>.json`.
    LoadProfile { profile: String },
    InjectInterference {
        on: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude_v: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frequency_hz: Option<f64>,
    },
    /// Applies one scenario event to the simulator.
    SimEvent { event: Event },
    /// Per-connection stream options.
    Subscribe {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_rate_hz: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw_frames: Option<bool>,
    },
}

pub const COMMANDS: &[&str] = &[
    "ping",
    "status",
    "zero_cal",
    "set_thermostat",
    "record",
    "load_profile",
    "inject_interference",
    "sim_event",
    "subscribe",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: Value,
    pub name: String,
    pub command: Command,
}

/// Parses one client line. On failure the error carries whatever id could
/// be recovered.
pub fn parse_request(line: &str) -> Result<Request, ErrorReply> {
    let fail = |id: Value, reason, message: String| ErrorReply { id, reason, message };
    let value: Value = serde_json::from_str(line)
        .map_err(|e| fail(Value::Null, ErrorReason::Malformed, format!("not JSON: {e}")))?;
    let Value::Object(map) = &value else {
        return Err(fail(Value::Null, ErrorReason::Malformed, "expected a JSON object".into()));
    };
    let id = map.get("id").cloned().unwrap_or(Value::Null);
    let Some(name) = map.get("cmd").and_then(Value::as_str) else {
        return Err(fail(id, ErrorReason::Malformed, "missing string field 'cmd'".into()));
    };
    if !COMMANDS.contains(&name) {
        return Err(fail(id, ErrorReason::UnknownCommand, format!("unknown command '{name}'")));
    }
    let name = name.to_string();
    let command = serde_json::from_value(value)
        .map_err(|e| fail(id.clone(), ErrorReason::InvalidArguments, format!("{name}: {e}")))?;
    Ok(Request { id, name, command })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_known_commands() {
        let r = parse_request(r#"{"id":3,"cmd":"zero_cal","group":"shear"}"#).unwrap();
        assert_eq!(r.id, json!(3));
        assert_eq!(r.command, Command::ZeroCal { group: ChannelGroup::Shear });
        let r = parse_request(r#"{"cmd":"record","action":"start"}"#).unwrap();
        assert_eq!(r.id, Value::Null);
        assert_eq!(r.command, Command::Record { action: RecordAction::Start, path: None });
    }

    #[test]
    fn every_command_name_is_listed() {
        let samples = [
            Command::Ping,
            Command::Status,
            Command::ZeroCal { group: ChannelGroup::Normal },
            Command::SetThermostat { t_stop: 34.0, t_heat: 32.0, enabled: None },
            Command::Record { action: RecordAction::Stop, path: None },
            Command::LoadProfile { profile: "a".into() },
            Command::InjectInterference { on: false, amplitude_v: None, frequency_hz: None },
            Command::SimEvent { event: Event::InterferenceOff },
            Command::Subscribe { max_rate_hz: Some(10.0), raw_frames: None },
        ];
        assert_eq!(samples.len(), COMMANDS.len());
        for c in samples {
            let v = serde_json::to_value(&c).unwrap();
            let name = v["cmd"].as_str().unwrap();
            assert!(COMMANDS.contains(&name), "{name}");
            assert_eq!(parse_request(&v.to_string()).unwrap().command, c);
        }
    }

    #[test]
    fn rejections_carry_reason_and_id() {
        let e = parse_request("{nope").unwrap_err();
        assert_eq!((e.reason, e.id), (ErrorReason::Malformed, Value::Null));
        let e = parse_request("[1,2]").unwrap_err();
        assert_eq!(e.reason, ErrorReason::Malformed);
        let e = parse_request(r#"{"id":"a","group":"normal"}"#).unwrap_err();
        assert_eq!((e.reason, e.id), (ErrorReason::Malformed, json!("a")));
        let e = parse_request(r#"{"id":9,"cmd":"self_destruct"}"#).unwrap_err();
        assert_eq!((e.reason, e.id), (ErrorReason::UnknownCommand, json!(9)));
        let e = parse_request(r#"{"id":10,"cmd":"zero_cal","group":"diagonal"}"#).unwrap_err();
        assert_eq!((e.reason, e.id), (ErrorReason::InvalidArguments, json!(10)));
    }

    #[test]
    fn message_shape() {
        let m = StreamMessage {
            seq: 7,
            timestamp_us: 20_000,
            body: Body::Error(ErrorReply { id: json!(1), reason: ErrorReason::UnknownCommand, message: "x".into() }),
        };
        let v: Value = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(v["kind"], "error");
        assert_eq!(v["payload"]["reason"], "unknown_command");
        assert_eq!(v["seq"], 7);
        let back: StreamMessage = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);

        let state = ForceState { timestamp_us: 10, temperature: 33.25, normal_grid: [0.1; 9], ..ForceState::default() };
        let m = StreamMessage { seq: 8, timestamp_us: 10, body: Body::ForceState(state) };
        let line = m.to_line();
        assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        let back: StreamMessage = serde_json::from_str(&line).unwrap();
        assert_eq!(back, m);
    }
}
