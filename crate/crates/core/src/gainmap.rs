//! Tilt angles to per-instrument gain factors.
//!
//! Four instruments are driven continuously by one tilt axis each: piano and
//! keyboard by roll, drums and guitar by pitch. Each pair shares an envelope
//! shape and is mirrored around 0°, so the two members of a pair only sound
//! equally loud when that axis is level. The synth is gated on a small square
//! around the origin.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};

/// Largest tilt magnitude the mapping considers, in degrees.
pub const MAX_TILT_DEG: f64 = 90.0;

/// Device tilt in degrees.
///
/// `pitch_deg` is negative when the top of the device tips toward the user and
/// positive when it tips away. `roll_deg` is negative for a left tilt and
/// positive for a right tilt.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TiltAngles {
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl TiltAngles {
    pub const LEVEL: TiltAngles = TiltAngles {
        pitch_deg: 0.0,
        roll_deg: 0.0,
    };

    /// Validates finiteness and folds both angles into `[-90, 90]`.
    pub fn clamped(pitch_deg: f64, roll_deg: f64) -> Result<Self, DomainError> {
        if !pitch_deg.is_finite() || !roll_deg.is_finite() {
            return Err(DomainError::NonFiniteAngle);
        }
        Ok(Self {
            pitch_deg: pitch_deg.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
            roll_deg: roll_deg.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
        })
    }

    pub fn along(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Pitch => self.pitch_deg,
            Axis::Roll => self.roll_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentId {
    Piano,
    Keyboard,
    Guitar,
    Drums,
    Synth,
}

impl InstrumentId {
    pub const ALL: [InstrumentId; 5] = [
        InstrumentId::Piano,
        InstrumentId::Keyboard,
        InstrumentId::Guitar,
        InstrumentId::Drums,
        InstrumentId::Synth,
    ];

    /// The four instruments with a continuous envelope.
    pub const CONTINUOUS: [InstrumentId; 4] = [
        InstrumentId::Piano,
        InstrumentId::Keyboard,
        InstrumentId::Guitar,
        InstrumentId::Drums,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            InstrumentId::Piano => "piano",
            InstrumentId::Keyboard => "keyboard",
            InstrumentId::Guitar => "guitar",
            InstrumentId::Drums => "drums",
            InstrumentId::Synth => "synth",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }

    pub fn is_gated(self) -> bool {
        self == InstrumentId::Synth
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Pitch,
    Roll,
}

/// Which tilt direction an instrument is "captured" by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Louder toward positive angles (right roll, pitch away from the user).
    Positive,
    /// Louder toward negative angles.
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// Piecewise-linear gain curve with a flat plateau around 0°.
///
/// In the favored-direction coordinate `u = angle * orientation` the
/// breakpoints are `(mute_angle, 0)`, `(-w, plateau_gain)`, `(w, plateau_gain)`
/// and `(90, max_gain)`, where `w` is the plateau half-width. Below
/// `mute_angle` the gain stays at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEnvelope {
    pub mute_angle_deg: f64,
    pub plateau_half_width_deg: f64,
    pub plateau_gain: f64,
    pub max_gain: f64,
    pub orientation: Orientation,
    pub axis: Axis,
}

impl GainEnvelope {
    pub const DEFAULT_MUTE_ANGLE_DEG: f64 = -90.0;
    pub const DEFAULT_PLATEAU_HALF_WIDTH_DEG: f64 = 5.0;
    pub const DEFAULT_PLATEAU_GAIN: f64 = 1.0;
    pub const DEFAULT_MAX_GAIN: f64 = 2.0;

    pub fn new(axis: Axis, orientation: Orientation) -> Self {
        Self {
            mute_angle_deg: Self::DEFAULT_MUTE_ANGLE_DEG,
            plateau_half_width_deg: Self::DEFAULT_PLATEAU_HALF_WIDTH_DEG,
            plateau_gain: Self::DEFAULT_PLATEAU_GAIN,
            max_gain: Self::DEFAULT_MAX_GAIN,
            orientation,
            axis,
        }
    }

    /// Default envelope for one of the four continuous instruments.
    pub fn for_instrument(id: InstrumentId) -> Option<Self> {
        let (axis, orientation) = match id {
            InstrumentId::Piano => (Axis::Roll, Orientation::Positive),
            InstrumentId::Keyboard => (Axis::Roll, Orientation::Negative),
            InstrumentId::Drums => (Axis::Pitch, Orientation::Positive),
            InstrumentId::Guitar => (Axis::Pitch, Orientation::Negative),
            InstrumentId::Synth => return None,
        };
        Some(Self::new(axis, orientation))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = self.plateau_half_width_deg;
        if !(w.is_finite() && w > 0.0 && w < MAX_TILT_DEG) {
            return Err(ConfigError::invalid(
                "plateau_half_width_deg",
                format!("must lie in (0, 90), got {w}"),
            ));
        }
        let mute = self.mute_angle_deg;
        if !(mute.is_finite() && mute >= -MAX_TILT_DEG && mute < -w) {
            return Err(ConfigError::invalid(
                "mute_angle_deg",
                format!("must lie in [-90, -plateau_half_width_deg), got {mute}"),
            ));
        }
        if !(self.plateau_gain.is_finite() && self.plateau_gain >= 0.0) {
            return Err(ConfigError::invalid(
                "plateau_gain",
                format!("must be finite and >= 0, got {}", self.plateau_gain),
            ));
        }
        if !(self.max_gain.is_finite() && self.max_gain >= self.plateau_gain) {
            return Err(ConfigError::invalid(
                "max_gain",
                format!(
                    "must be finite and >= plateau_gain ({}), got {}",
                    self.plateau_gain, self.max_gain
                ),
            ));
        }
        Ok(())
    }

    /// The four breakpoints in favored-direction coordinates.
    pub fn breakpoints(&self) -> [(f64, f64); 4] {
        let w = self.plateau_half_width_deg;
        [
            (self.mute_angle_deg, 0.0),
            (-w, self.plateau_gain),
            (w, self.plateau_gain),
            (MAX_TILT_DEG, self.max_gain),
        ]
    }

    /// Steepest slope of the curve, in gain per degree.
    pub fn max_slope(&self) -> f64 {
        let w = self.plateau_half_width_deg;
        let rise = self.plateau_gain / (-w - self.mute_angle_deg);
        let over = (self.max_gain - self.plateau_gain) / (MAX_TILT_DEG - w);
        rise.max(over)
    }

    fn eval_unchecked(&self, angle_deg: f64) -> f64 {
        let u = (angle_deg * self.orientation.sign()).clamp(-MAX_TILT_DEG, MAX_TILT_DEG);
        let w = self.plateau_half_width_deg;
        if u <= self.mute_angle_deg {
            0.0
        } else if u < -w {
            lerp(u, self.mute_angle_deg, 0.0, -w, self.plateau_gain)
        } else if u <= w {
            self.plateau_gain
        } else if u < MAX_TILT_DEG {
            lerp(u, w, self.plateau_gain, MAX_TILT_DEG, self.max_gain)
        } else {
            self.max_gain
        }
    }
}

fn lerp(x: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Evaluates `env` at `angle_deg`.
pub fn axis_gain(angle_deg: f64, env: &GainEnvelope) -> Result<f64, GainMapError> {
    if !angle_deg.is_finite() {
        return Err(DomainError::NonFiniteAngle.into());
    }
    env.validate()?;
    Ok(env.eval_unchecked(angle_deg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub threshold_deg: f64,
    pub hysteresis_deg: f64,
    pub on_gain: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            threshold_deg: 1.0,
            hysteresis_deg: 0.2,
            on_gain: 1.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.threshold_deg.is_finite() && self.threshold_deg > 0.0) {
            return Err(ConfigError::invalid(
                "threshold_deg",
                format!("must be > 0, got {}", self.threshold_deg),
            ));
        }
        if !(self.hysteresis_deg.is_finite() && self.hysteresis_deg >= 0.0) {
            return Err(ConfigError::invalid(
                "hysteresis_deg",
                format!("must be >= 0, got {}", self.hysteresis_deg),
            ));
        }
        if !(self.on_gain.is_finite() && self.on_gain >= 0.0) {
            return Err(ConfigError::invalid(
                "on_gain",
                format!("must be >= 0, got {}", self.on_gain),
            ));
        }
        Ok(())
    }
}

/// Square gate around level with release hysteresis. Boundaries are inclusive.
pub fn synth_gate(tilt: TiltAngles, cfg: &GateConfig, was_on: bool) -> bool {
    let limit = if was_on {
        cfg.threshold_deg + cfg.hysteresis_deg
    } else {
        cfg.threshold_deg
    };
    tilt.pitch_deg.abs() <= limit && tilt.roll_deg.abs() <= limit
}

/// One linear gain per instrument, indexed by [`InstrumentId::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainVector([f64; 5]);

impl GainVector {
    pub const SILENT: GainVector = GainVector([0.0; 5]);

    pub fn from_array(gains: [f64; 5]) -> Self {
        Self(gains)
    }

    pub fn uniform(gain: f64) -> Self {
        Self([gain; 5])
    }

    /// Every instrument silent except `id`, which gets `gain`.
    pub fn solo(id: InstrumentId, gain: f64) -> Self {
        let mut g = Self::SILENT;
        g.set(id, gain);
        g
    }

    pub fn get(&self, id: InstrumentId) -> f64 {
        self.0[id.index()]
    }

    pub fn set(&mut self, id: InstrumentId, gain: f64) {
        self.0[id.index()] = gain;
    }

    pub fn as_array(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|g| g * factor))
    }

    pub fn iter(&self) -> impl Iterator<Item = (InstrumentId, f64)> + '_ {
        InstrumentId::ALL
            .into_iter()
            .map(move |id| (id, self.get(id)))
    }
}

/// Envelopes for the four continuous instruments plus the synth gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMapConfig {
    pub piano: GainEnvelope,
    pub keyboard: GainEnvelope,
    pub guitar: GainEnvelope,
    pub drums: GainEnvelope,
    pub gate: GateConfig,
}

impl Default for GainMapConfig {
    fn default() -> Self {
        Self {
            piano: GainEnvelope::new(Axis::Roll, Orientation::Positive),
            keyboard: GainEnvelope::new(Axis::Roll, Orientation::Negative),
            guitar: GainEnvelope::new(Axis::Pitch, Orientation::Negative),
            drums: GainEnvelope::new(Axis::Pitch, Orientation::Positive),
            gate: GateConfig::default(),
        }
    }
}

impl GainMapConfig {
    pub fn envelope(&self, id: InstrumentId) -> Option<&GainEnvelope> {
        match id {
            InstrumentId::Piano => Some(&self.piano),
            InstrumentId::Keyboard => Some(&self.keyboard),
            InstrumentId::Guitar => Some(&self.guitar),
            InstrumentId::Drums => Some(&self.drums),
            InstrumentId::Synth => None,
        }
    }

    pub fn envelope_mut(&mut self, id: InstrumentId) -> Option<&mut GainEnvelope> {
        match id {
            InstrumentId::Piano => Some(&mut self.piano),
            InstrumentId::Keyboard => Some(&mut self.keyboard),
            InstrumentId::Guitar => Some(&mut self.guitar),
            InstrumentId::Drums => Some(&mut self.drums),
            InstrumentId::Synth => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for id in InstrumentId::CONTINUOUS {
            let env = self.envelope(id).expect("continuous instrument");
            env.validate().map_err(|e| e.in_section(id.name()))?;
        }
        self.gate.validate()
    }
}

/// Result of one control update: the gains plus the new gate state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainUpdate {
    pub gains: GainVector,
    pub gate_on: bool,
}

pub fn compute_gains(
    tilt: TiltAngles,
    config: &GainMapConfig,
    was_on: bool,
) -> Result<GainUpdate, GainMapError> {
    let tilt = TiltAngles::clamped(tilt.pitch_deg, tilt.roll_deg)?;
    config.validate()?;
    let mut gains = GainVector::SILENT;
    for id in InstrumentId::CONTINUOUS {
        let env = config.envelope(id).expect("continuous instrument");
        gains.set(id, env.eval_unchecked(tilt.along(env.axis)));
    }
    let gate_on = synth_gate(tilt, &config.gate, was_on);
    gains.set(
        InstrumentId::Synth,
        if gate_on { config.gate.on_gain } else { 0.0 },
    );
    Ok(GainUpdate { gains, gate_on })
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GainMapError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
