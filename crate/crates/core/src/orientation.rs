//! Accelerometer samples to smoothed tilt angles.

use crate::gainmap::{TiltAngles, MAX_TILT_DEG};

/// Accepted gravity magnitude band in g. Samples outside it are treated as
/// shake or free fall.
pub const ACCEPTED_MAGNITUDE_G: (f64, f64) = (0.3, 3.0);

/// One accelerometer reading in g-units.
///
/// Device axes: x toward the right edge, y toward the top of the screen,
/// z out of the screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub timestamp_s: f64,
}

impl AccelSample {
    pub fn new(ax: f64, ay: f64, az: f64) -> Self {
        Self {
            ax,
            ay,
            az,
            timestamp_s: 0.0,
        }
    }

    pub fn magnitude(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("accelerometer sample rejected (|a| = {magnitude} g)")]
pub struct SampleRejected {
    pub magnitude: f64,
}

/// Inclination from gravity. A flat device lying on its back reads (0, 0);
/// tipping the top away from the user gives positive pitch and lowering the
/// right edge gives positive roll.
pub fn accel_to_tilt(s: &AccelSample) -> Result<TiltAngles, SampleRejected> {
    let magnitude = s.magnitude();
    let (lo, hi) = ACCEPTED_MAGNITUDE_G;
    // NaN magnitudes fail this range check too.
    if !(lo..=hi).contains(&magnitude) {
        return Err(SampleRejected { magnitude });
    }
    let pitch = (-s.ay).atan2(s.ax.hypot(s.az)).to_degrees();
    let roll = s.ax.atan2(s.az).to_degrees();
    Ok(TiltAngles {
        pitch_deg: pitch.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
        roll_deg: roll.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
    })
}

/// Per-axis exponential moving average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoother {
    alpha: f64,
    state: Option<TiltAngles>,
}

impl Smoother {
    pub const DEFAULT_ALPHA: f64 = 0.25;

    /// `alpha` must lie in `(0, 1]`.
    pub fn new(alpha: f64) -> Option<Self> {
        (alpha > 0.0 && alpha <= 1.0).then_some(Self { alpha, state: None })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn current(&self) -> Option<TiltAngles> {
        self.state
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    pub fn smooth(&mut self, raw: TiltAngles) -> TiltAngles {
        let next = match self.state {
            None => raw,
            Some(prev) => {
                let a = self.alpha;
                TiltAngles {
                    pitch_deg: a * raw.pitch_deg + (1.0 - a) * prev.pitch_deg,
                    roll_deg: a * raw.roll_deg + (1.0 - a) * prev.roll_deg,
                }
            }
        };
        let next = TiltAngles {
            pitch_deg: next.pitch_deg.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
            roll_deg: next.roll_deg.clamp(-MAX_TILT_DEG, MAX_TILT_DEG),
        };
        self.state = Some(next);
        next
    }
}

impl Default for Smoother {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            state: None,
        }
    }
}
