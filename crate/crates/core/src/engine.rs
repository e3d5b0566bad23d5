//! Sample-accurate loop playback with ramped per-track gains.

use std::sync::mpsc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::gainmap::{compute_gains, GainMapConfig, GainMapError, GainVector, InstrumentId};
use crate::stems::StemBank;
use crate::trajectory::TiltTrajectory;

/// Output passes through unchanged up to this magnitude.
pub const LIMITER_KNEE: f64 = 0.9;
/// Magnitude the limiter approaches but never reaches.
pub const LIMITER_CEILING: f64 = 0.999;

/// Memoryless soft saturation: identity up to the knee, then a rational curve
/// with unit slope at the knee that approaches the ceiling asymptotically.
pub fn soft_limit(x: f64) -> f64 {
    let mag = x.abs();
    if mag <= LIMITER_KNEE {
        return x;
    }
    let room = LIMITER_CEILING - LIMITER_KNEE;
    let u = (mag - LIMITER_KNEE) / room;
    (LIMITER_KNEE + room * u / (1.0 + u)).copysign(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub ramp_ms: f64,
    pub control_rate_hz: f64,
    pub master_gain: f64,
    pub block_size: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            ramp_ms: 20.0,
            control_rate_hz: 100.0,
            master_gain: 0.25,
            block_size: 480,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ramp_ms.is_finite() && self.ramp_ms >= 0.0) {
            return Err(ConfigError::invalid("ramp_ms", "must be >= 0"));
        }
        if !(self.control_rate_hz.is_finite() && self.control_rate_hz > 0.0) {
            return Err(ConfigError::invalid("control_rate_hz", "must be > 0"));
        }
        if !(self.master_gain.is_finite() && self.master_gain >= 0.0) {
            return Err(ConfigError::invalid("master_gain", "must be >= 0"));
        }
        if self.block_size == 0 {
            return Err(ConfigError::invalid("block_size", "must be >= 1"));
        }
        Ok(())
    }

    /// Ramp length in samples, never less than one.
    pub fn ramp_samples(&self, sample_rate_hz: u32) -> usize {
        ((self.ramp_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize).max(1)
    }

    /// Samples between control updates, never less than one.
    pub fn control_period(&self, sample_rate_hz: u32) -> usize {
        ((f64::from(sample_rate_hz) / self.control_rate_hz).round() as usize).max(1)
    }
}

/// Loop playback position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transport {
    position: usize,
    loop_len: usize,
}

impl Transport {
    /// `loop_len` must be non-zero.
    pub fn new(loop_len: usize) -> Self {
        assert!(loop_len > 0, "loop length must be non-zero");
        Self {
            position: 0,
            loop_len,
        }
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn loop_len(&self) -> usize {
        self.loop_len
    }

    pub fn advance(&mut self, n: usize) {
        self.position = ((self.position as u128 + n as u128) % self.loop_len as u128) as usize;
    }

    pub fn seek(&mut self, position: usize) {
        self.position = position % self.loop_len;
    }
}

/// Linear gain ramp for one track.
///
/// After a retarget, the `k`-th rendered sample (counting from 1) gets
/// `start + (target - start) * k / length`, so the target is reached exactly
/// on sample `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRamp {
    start: f64,
    target: f64,
    elapsed: usize,
    length: usize,
}

impl GainRamp {
    pub fn new(gain: f64, length: usize) -> Self {
        let length = length.max(1);
        Self {
            start: gain,
            target: gain,
            elapsed: length,
            length,
        }
    }

    pub fn current(&self) -> f64 {
        if self.elapsed >= self.length {
            self.target
        } else {
            self.start + (self.target - self.start) * (self.elapsed as f64 / self.length as f64)
        }
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn is_settled(&self) -> bool {
        self.elapsed >= self.length
    }

    pub fn retarget(&mut self, target: f64) {
        self.start = self.current();
        self.target = target;
        self.elapsed = if self.start == target { self.length } else { 0 };
    }

    pub fn snap(&mut self, gain: f64) {
        self.start = gain;
        self.target = gain;
        self.elapsed = self.length;
    }

    /// Gain for the next sample.
    pub fn next_gain(&mut self) -> f64 {
        if self.elapsed < self.length {
            self.elapsed += 1;
        }
        self.current()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no stem bank loaded")]
    NotReady,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl From<GainMapError> for EngineError {
    fn from(e: GainMapError) -> Self {
        match e {
            GainMapError::Domain(d) => EngineError::Domain(d),
            GainMapError::Config(c) => EngineError::Config(c),
        }
    }
}

/// Cloneable sender for gain updates from any thread. Updates are picked up
/// at the start of the next rendered block; only the latest one counts.
#[derive(Debug, Clone)]
pub struct GainSender(mpsc::Sender<GainVector>);

impl GainSender {
    /// Returns `false` once the engine has been dropped.
    pub fn send(&self, gains: GainVector) -> bool {
        self.0.send(gains).is_ok()
    }
}

/// Mono mixer over a [`StemBank`].
#[derive(Debug)]
pub struct Engine {
    bank: Option<Arc<StemBank>>,
    transport: Transport,
    ramps: [GainRamp; 5],
    ramp_samples: usize,
    master_gain: f64,
    audible: [bool; 5],
    control_tx: mpsc::Sender<GainVector>,
    control_rx: mpsc::Receiver<GainVector>,
}

impl Engine {
    /// An engine without a bank; rendering fails with `NotReady` until
    /// [`Engine::load`] is called.
    pub fn new(config: &EngineConfig, sample_rate_hz: u32) -> Result<Self, ConfigError> {
        config.validate()?;
        let ramp_samples = config.ramp_samples(sample_rate_hz);
        let (control_tx, control_rx) = mpsc::channel();
        Ok(Self {
            bank: None,
            transport: Transport::new(1),
            ramps: [GainRamp::new(0.0, ramp_samples); 5],
            ramp_samples,
            master_gain: config.master_gain,
            audible: [true; 5],
            control_tx,
            control_rx,
        })
    }

    pub fn with_bank(config: &EngineConfig, bank: Arc<StemBank>) -> Result<Self, ConfigError> {
        let mut engine = Self::new(config, bank.sample_rate_hz())?;
        engine.load(bank);
        Ok(engine)
    }

    /// Installs a bank and rewinds the transport.
    pub fn load(&mut self, bank: Arc<StemBank>) {
        self.transport = Transport::new(bank.loop_len());
        self.bank = Some(bank);
    }

    pub fn bank(&self) -> Option<&Arc<StemBank>> {
        self.bank.as_ref()
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut Transport {
        &mut self.transport
    }

    pub fn ramp_samples(&self) -> usize {
        self.ramp_samples
    }

    pub fn master_gain(&self) -> f64 {
        self.master_gain
    }

    pub fn current_gains(&self) -> GainVector {
        GainVector::from_array(self.ramps.map(|r| r.current()))
    }

    pub fn target_gains(&self) -> GainVector {
        GainVector::from_array(self.ramps.map(|r| r.target()))
    }

    pub fn ramp(&self, id: InstrumentId) -> &GainRamp {
        &self.ramps[id.index()]
    }

    /// Sets new targets; each track ramps from where it currently is.
    pub fn set_gains(&mut self, gains: &GainVector) {
        for (ramp, &g) in self.ramps.iter_mut().zip(gains.as_array()) {
            ramp.retarget(g);
        }
    }

    /// Jumps straight to `gains` without ramping.
    pub fn snap_gains(&mut self, gains: &GainVector) {
        for (ramp, &g) in self.ramps.iter_mut().zip(gains.as_array()) {
            ramp.snap(g);
        }
    }

    /// Restricts the summed output to one track (`None` restores all). Gains
    /// of the other tracks keep ramping, so solo renders line up sample for
    /// sample with the full mix.
    pub fn set_solo(&mut self, solo: Option<InstrumentId>) {
        self.audible = match solo {
            None => [true; 5],
            Some(id) => std::array::from_fn(|i| i == id.index()),
        };
    }

    pub fn control_sender(&self) -> GainSender {
        GainSender(self.control_tx.clone())
    }

    fn apply_pending_control(&mut self) {
        if let Some(latest) = self.control_rx.try_iter().last() {
            self.set_gains(&latest);
        }
    }

    pub fn render_block(&mut self, n_samples: usize) -> Result<Vec<f32>, EngineError> {
        let mut out = vec![0.0; n_samples];
        self.render_into(&mut out)?;
        Ok(out)
    }

    pub fn render_into(&mut self, out: &mut [f32]) -> Result<(), EngineError> {
        let bank = self.bank.clone().ok_or(EngineError::NotReady)?;
        if out.is_empty() {
            return Err(DomainError::Other("block must hold at least one sample".into()).into());
        }
        self.apply_pending_control();
        let stems: [&[f32]; 5] = std::array::from_fn(|i| bank.stem(InstrumentId::ALL[i]));
        let loop_len = self.transport.loop_len();
        let mut pos = self.transport.position();
        for sample in out.iter_mut() {
            let mut acc = 0.0;
            for ((ramp, &audible), stem) in self.ramps.iter_mut().zip(&self.audible).zip(&stems) {
                let g = ramp.next_gain();
                if audible {
                    acc += f64::from(stem[pos]) * g;
                }
            }
            *sample = soft_limit(acc * self.master_gain) as f32;
            pos += 1;
            if pos == loop_len {
                pos = 0;
            }
        }
        self.transport.advance(out.len());
        Ok(())
    }
}

/// Renders `duration_s` seconds of the loop while following `traj`.
///
/// Gains are recomputed at the control rate from the interpolated tilt. The
/// first update is applied without a ramp; later ones ramp. The synth gate
/// starts closed.
pub fn render_trajectory(
    bank: Arc<StemBank>,
    traj: &TiltTrajectory,
    gains: &GainMapConfig,
    engine: &EngineConfig,
    duration_s: f64,
) -> Result<Vec<f32>, EngineError> {
    render_trajectory_with(bank, traj, gains, engine, duration_s, None)
}

/// Like [`render_trajectory`] but sums only `solo`'s track.
pub fn render_trajectory_solo(
    bank: Arc<StemBank>,
    traj: &TiltTrajectory,
    gains: &GainMapConfig,
    engine: &EngineConfig,
    duration_s: f64,
    solo: InstrumentId,
) -> Result<Vec<f32>, EngineError> {
    render_trajectory_with(bank, traj, gains, engine, duration_s, Some(solo))
}

fn render_trajectory_with(
    bank: Arc<StemBank>,
    traj: &TiltTrajectory,
    gain_config: &GainMapConfig,
    engine_config: &EngineConfig,
    duration_s: f64,
    solo: Option<InstrumentId>,
) -> Result<Vec<f32>, EngineError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(
            DomainError::Trajectory(format!("duration must be > 0, got {duration_s}")).into(),
        );
    }
    if duration_s < traj.end_time() {
        return Err(DomainError::Trajectory(format!(
            "duration {duration_s} s ends before the last trajectory point at {} s",
            traj.end_time()
        ))
        .into());
    }
    gain_config.validate()?;
    let sr = bank.sample_rate_hz();
    let total = (duration_s * f64::from(sr)).round() as usize;
    let period = engine_config.control_period(sr);
    let mut engine = Engine::with_bank(engine_config, bank)?;
    engine.set_solo(solo);

    let mut out = vec![0.0f32; total];
    let mut gate_on = false;
    for (tick, block) in out.chunks_mut(period).enumerate() {
        let t = (tick * period) as f64 / f64::from(sr);
        let update = compute_gains(traj.at(t), gain_config, gate_on)?;
        gate_on = update.gate_on;
        if tick == 0 {
            engine.snap_gains(&update.gains);
        } else {
            engine.set_gains(&update.gains);
        }
        engine.render_into(block)?;
    }
    Ok(out)
}
