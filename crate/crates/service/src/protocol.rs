//! Wire messages. Each WebSocket text frame carries one JSON object whose
//! `type` field selects the variant.

use serde::{Deserialize, Serialize};
use tiltmix_core::config::ConfigFile;
use tiltmix_core::{GainVector, InstrumentId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClientMessage {
    Tilt { pitch_deg: f64, roll_deg: f64 },
    Accel { ax: f64, ay: f64, az: f64 },
    ConfigGet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    Gains(GainsFrame),
    Config { settings: ConfigFile },
    Error { code: ErrorCode, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainsFrame {
    pub piano: f64,
    pub keyboard: f64,
    pub guitar: f64,
    pub drums: f64,
    pub synth: f64,
    pub gate_on: bool,
    pub seq: u64,
}

impl GainsFrame {
    pub fn new(gains: &GainVector, gate_on: bool, seq: u64) -> Self {
        Self {
            piano: gains.get(InstrumentId::Piano),
            keyboard: gains.get(InstrumentId::Keyboard),
            guitar: gains.get(InstrumentId::Guitar),
            drums: gains.get(InstrumentId::Drums),
            synth: gains.get(InstrumentId::Synth),
            gate_on,
            seq,
        }
    }

    pub fn gains(&self) -> GainVector {
        let mut g = GainVector::SILENT;
        g.set(InstrumentId::Piano, self.piano);
        g.set(InstrumentId::Keyboard, self.keyboard);
        g.set(InstrumentId::Guitar, self.guitar);
        g.set(InstrumentId::Drums, self.drums);
        g.set(InstrumentId::Synth, self.synth);
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    InvalidTilt,
    SampleRejected,
}

impl ServerMessage {
    pub fn error(code: ErrorCode, text: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            text: text.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

impl ClientMessage {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_wire_shapes() {
        assert_eq!(
            ClientMessage::from_json(r#"{"type":"tilt","pitch_deg":1.5,"roll_deg":-2}"#).unwrap(),
            ClientMessage::Tilt {
                pitch_deg: 1.5,
                roll_deg: -2.0
            }
        );
        assert_eq!(
            ClientMessage::from_json(r#"{"type":"accel","ax":0,"ay":0,"az":1}"#).unwrap(),
            ClientMessage::Accel {
                ax: 0.0,
                ay: 0.0,
                az: 1.0
            }
        );
        assert_eq!(
            ClientMessage::from_json(r#"{"type":"config-get"}"#).unwrap(),
            ClientMessage::ConfigGet
        );
        assert!(ClientMessage::from_json(r#"{"type":"tilt","pitch_deg":1}"#).is_err());
        assert!(ClientMessage::from_json(r#"{"type":"dance"}"#).is_err());
    }

    #[test]
    fn gains_wire_shape() {
        let msg = ServerMessage::Gains(GainsFrame::new(&GainVector::uniform(1.0), true, 7));
        let v: serde_json::Value = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(v["type"], "gains");
        for key in ["piano", "keyboard", "guitar", "drums", "synth"] {
            assert_eq!(v[key], 1.0);
        }
        assert_eq!(v["gate_on"], true);
        assert_eq!(v["seq"], 7);
    }

    #[test]
    fn error_wire_shape() {
        let msg = ServerMessage::error(ErrorCode::SampleRejected, "shake");
        assert_eq!(
            msg.to_json(),
            r#"{"type":"error","code":"sample_rejected","text":"shake"}"#
        );
    }

    #[test]
    fn gains_survive_the_wire_exactly() {
        let g = GainVector::from_array([
            0.1 + 0.2,
            1.0 / 3.0,
            2.0f64.sqrt(),
            1e-300,
            0.9999999999999999,
        ]);
        let msg = ServerMessage::Gains(GainsFrame::new(&g, false, 3));
        let back: ServerMessage = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(back, msg);
    }
}
