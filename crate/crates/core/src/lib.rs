//! Tilt-controlled loop mixing.
//!
//! Pitch and roll angles set the gains of five instrument stems that loop
//! over 16 beats and are summed to a single mono channel. The mix is only
//! balanced, with the gated synth audible, while the device is level.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod gainmap;
pub mod orientation;
pub mod stems;
pub mod trajectory;
pub mod wav;

pub use config::Settings;
pub use engine::{render_trajectory, Engine, EngineConfig, EngineError};
pub use error::{ConfigError, DomainError, IoError};
pub use gainmap::{
    axis_gain, compute_gains, synth_gate, Axis, GainEnvelope, GainMapConfig, GainUpdate,
    GainVector, GateConfig, InstrumentId, Orientation, TiltAngles,
};
pub use orientation::{accel_to_tilt, AccelSample, SampleRejected, Smoother};
pub use stems::{generate_stems, StemBank, StemParams};
pub use trajectory::TiltTrajectory;
