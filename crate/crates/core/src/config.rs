//! Flat key-value settings file.
//!
//! Every key is optional; missing keys keep their defaults. Envelope keys at
//! the top level apply to all four continuous instruments and may be
//! overridden per instrument in a `[piano]`, `[keyboard]`, `[guitar]` or
//! `[drums]` section:
//!
//! ```toml
//! plateau_half_width_deg = 5.0
//! max_gain = 2.0
//! threshold_deg = 1.0
//! hysteresis_deg = 0.2
//! ramp_ms = 20.0
//!
//! [drums]
//! max_gain = 1.5
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{ConfigError, IoError};
use crate::gainmap::{GainEnvelope, GainMapConfig, InstrumentId};
use crate::orientation::Smoother;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeKeys {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mute_angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_half_width_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gain: Option<f64>,
}

impl EnvelopeKeys {
    fn apply(&self, env: &mut GainEnvelope) {
        if let Some(v) = self.mute_angle_deg {
            env.mute_angle_deg = v;
        }
        if let Some(v) = self.plateau_half_width_deg {
            env.plateau_half_width_deg = v;
        }
        if let Some(v) = self.plateau_gain {
            env.plateau_gain = v;
        }
        if let Some(v) = self.max_gain {
            env.max_gain = v;
        }
    }
}

/// The document as written on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mute_angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_half_width_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plateau_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gain: Option<f64>,
    pub threshold_deg: Option<f64>,
    pub hysteresis_deg: Option<f64>,
    pub on_gain: Option<f64>,
    pub alpha: Option<f64>,
    pub ramp_ms: Option<f64>,
    pub control_rate_hz: Option<f64>,
    pub master_gain: Option<f64>,
    pub block_size: Option<usize>,
    pub session_timeout_s: Option<f64>,
    pub piano: Option<EnvelopeKeys>,
    pub keyboard: Option<EnvelopeKeys>,
    pub guitar: Option<EnvelopeKeys>,
    pub drums: Option<EnvelopeKeys>,
}

impl ConfigFile {
    fn shared_envelope(&self) -> EnvelopeKeys {
        EnvelopeKeys {
            mute_angle_deg: self.mute_angle_deg,
            plateau_half_width_deg: self.plateau_half_width_deg,
            plateau_gain: self.plateau_gain,
            max_gain: self.max_gain,
        }
    }
}

/// Fully resolved settings shared by the renderer and the service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub gains: GainMapConfig,
    pub engine: EngineConfig,
    pub alpha: f64,
    pub session_timeout_s: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            gains: GainMapConfig::default(),
            engine: EngineConfig::default(),
            alpha: Smoother::DEFAULT_ALPHA,
            session_timeout_s: 300.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl Settings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gains.validate()?;
        self.engine.validate()?;
        if Smoother::new(self.alpha).is_none() {
            return Err(ConfigError::invalid(
                "alpha",
                format!("must lie in (0, 1], got {}", self.alpha),
            ));
        }
        if !(self.session_timeout_s.is_finite() && self.session_timeout_s > 0.0) {
            return Err(ConfigError::invalid("session_timeout_s", "must be > 0"));
        }
        Ok(())
    }

    pub fn from_file(file: &ConfigFile) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        for id in InstrumentId::CONTINUOUS {
            let env = s.gains.envelope_mut(id).expect("continuous instrument");
            file.shared_envelope().apply(env);
            let section = match id {
                InstrumentId::Piano => file.piano,
                InstrumentId::Keyboard => file.keyboard,
                InstrumentId::Guitar => file.guitar,
                InstrumentId::Drums => file.drums,
                InstrumentId::Synth => None,
            };
            if let Some(keys) = section {
                keys.apply(env);
            }
        }
        let gate = &mut s.gains.gate;
        gate.threshold_deg = file.threshold_deg.unwrap_or(gate.threshold_deg);
        gate.hysteresis_deg = file.hysteresis_deg.unwrap_or(gate.hysteresis_deg);
        gate.on_gain = file.on_gain.unwrap_or(gate.on_gain);
        s.alpha = file.alpha.unwrap_or(s.alpha);
        let e = &mut s.engine;
        e.ramp_ms = file.ramp_ms.unwrap_or(e.ramp_ms);
        e.control_rate_hz = file.control_rate_hz.unwrap_or(e.control_rate_hz);
        e.master_gain = file.master_gain.unwrap_or(e.master_gain);
        e.block_size = file.block_size.unwrap_or(e.block_size);
        s.session_timeout_s = file.session_timeout_s.unwrap_or(s.session_timeout_s);
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self, SettingsError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| SettingsError::Parse(e.to_string()))?;
        Ok(Self::from_file(&file)?)
    }

    /// Reads `path`; `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, SettingsError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| IoError::fs(p, e))?;
                Self::parse(&text)
            }
        }
    }

    /// Full flat document with every key spelled out.
    pub fn to_file(&self) -> ConfigFile {
        let keys = |env: &GainEnvelope| EnvelopeKeys {
            mute_angle_deg: Some(env.mute_angle_deg),
            plateau_half_width_deg: Some(env.plateau_half_width_deg),
            plateau_gain: Some(env.plateau_gain),
            max_gain: Some(env.max_gain),
        };
        ConfigFile {
            mute_angle_deg: None,
            plateau_half_width_deg: None,
            plateau_gain: None,
            max_gain: None,
            threshold_deg: Some(self.gains.gate.threshold_deg),
            hysteresis_deg: Some(self.gains.gate.hysteresis_deg),
            on_gain: Some(self.gains.gate.on_gain),
            alpha: Some(self.alpha),
            ramp_ms: Some(self.engine.ramp_ms),
            control_rate_hz: Some(self.engine.control_rate_hz),
            master_gain: Some(self.engine.master_gain),
            block_size: Some(self.engine.block_size),
            session_timeout_s: Some(self.session_timeout_s),
            piano: Some(keys(&self.gains.piano)),
            keyboard: Some(keys(&self.gains.keyboard)),
            guitar: Some(keys(&self.gains.guitar)),
            drums: Some(keys(&self.gains.drums)),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(&self.to_file()).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_means_defaults() {
        assert_eq!(Settings::load(None).unwrap(), Settings::default());
        assert_eq!(Settings::parse("").unwrap(), Settings::default());
    }

    #[test]
    fn top_level_keys_apply_to_every_envelope() {
        let s = Settings::parse("plateau_half_width_deg = 3.0\nmax_gain = 3.0\n").unwrap();
        for id in InstrumentId::CONTINUOUS {
            let env = s.gains.envelope(id).unwrap();
            assert_eq!(env.plateau_half_width_deg, 3.0);
            assert_eq!(env.max_gain, 3.0);
        }
    }

    #[test]
    fn section_overrides_one_instrument() {
        let s = Settings::parse("max_gain = 3.0\n[drums]\nmax_gain = 1.5\n").unwrap();
        assert_eq!(s.gains.drums.max_gain, 1.5);
        assert_eq!(s.gains.guitar.max_gain, 3.0);
    }

    #[test]
    fn gate_and_engine_keys() {
        let s = Settings::parse(
            "threshold_deg = 2.0\nhysteresis_deg = 0\non_gain = 0.5\nramp_ms = 5\nmaster_gain = 0.1\nalpha = 1\n",
        )
        .unwrap();
        assert_eq!(s.gains.gate.threshold_deg, 2.0);
        assert_eq!(s.gains.gate.hysteresis_deg, 0.0);
        assert_eq!(s.gains.gate.on_gain, 0.5);
        assert_eq!(s.engine.ramp_ms, 5.0);
        assert_eq!(s.engine.master_gain, 0.1);
        assert_eq!(s.alpha, 1.0);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            Settings::parse("plateau_width = 3\n"),
            Err(SettingsError::Parse(_))
        ));
        assert!(matches!(
            Settings::parse("threshold_deg = 0\n"),
            Err(SettingsError::Invalid(_))
        ));
        assert!(matches!(
            Settings::parse("alpha = 0\n"),
            Err(SettingsError::Invalid(_))
        ));
        let err = Settings::parse("[piano]\nmax_gain = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("piano.max_gain"), "{err}");
    }

    #[test]
    fn text_round_trip() {
        let mut s = Settings::default();
        s.gains.keyboard.max_gain = 2.5;
        s.engine.ramp_ms = 10.0;
        assert_eq!(Settings::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn missing_path_is_io_error() {
        let err = Settings::load(Some(Path::new("/definitely/not/here.toml"))).unwrap_err();
        assert!(matches!(err, SettingsError::Io(_)));
    }
}
