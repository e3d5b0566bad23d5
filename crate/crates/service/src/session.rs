//! Per-client control state.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use tiltmix_core::orientation::{accel_to_tilt, AccelSample, Smoother};
use tiltmix_core::{compute_gains, Settings, TiltAngles};

use crate::protocol::{ClientMessage, ErrorCode, GainsFrame, ServerMessage};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionId(String);

impl SessionId {
    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Smoothing, gate state and sequence numbering for one client. The gate
/// starts closed.
#[derive(Debug)]
pub struct Session {
    id: SessionId,
    smoother: Smoother,
    gate_on: bool,
    settings: Settings,
    seq: u64,
    last_activity: Instant,
}

impl Session {
    /// `settings` must already be validated.
    pub fn new(id: SessionId, settings: Settings, now: Instant) -> Self {
        Self {
            id,
            smoother: Smoother::new(settings.alpha).expect("validated alpha"),
            gate_on: false,
            settings,
            seq: 0,
            last_activity: now,
        }
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn gate_on(&self) -> bool {
        self.gate_on
    }

    pub fn last_seq(&self) -> u64 {
        self.seq
    }

    pub fn last_activity(&self) -> Instant {
        self.last_activity
    }

    pub fn is_expired(&self, now: Instant, timeout: Duration) -> bool {
        now.saturating_duration_since(self.last_activity) >= timeout
    }

    /// Processes one message. Accepted tilt and accel messages produce
    /// exactly one gains frame; rejected ones produce an error and leave the
    /// session state untouched.
    pub fn handle(&mut self, msg: ClientMessage, now: Instant) -> ServerMessage {
        self.last_activity = now;
        let raw = match msg {
            ClientMessage::ConfigGet => {
                return ServerMessage::Config {
                    settings: self.settings.to_file(),
                }
            }
            ClientMessage::Tilt {
                pitch_deg,
                roll_deg,
            } => match TiltAngles::clamped(pitch_deg, roll_deg) {
                Ok(t) => t,
                Err(e) => return ServerMessage::error(ErrorCode::InvalidTilt, e.to_string()),
            },
            ClientMessage::Accel { ax, ay, az } => {
                match accel_to_tilt(&AccelSample::new(ax, ay, az)) {
                    Ok(t) => t,
                    Err(e) => {
                        return ServerMessage::error(ErrorCode::SampleRejected, e.to_string())
                    }
                }
            }
        };
        let smoothed = self.smoother.smooth(raw);
        let update = compute_gains(smoothed, &self.settings.gains, self.gate_on)
            .expect("validated settings and clamped tilt");
        self.gate_on = update.gate_on;
        self.seq += 1;
        ServerMessage::Gains(GainsFrame::new(&update.gains, update.gate_on, self.seq))
    }
}

/// Runs `script` through a fresh session.
pub fn replay(settings: Settings, script: &[ClientMessage]) -> Vec<ServerMessage> {
    let now = Instant::now();
    let mut session = Session::new(SessionId("replay".into()), settings, now);
    script.iter().map(|&m| session.handle(m, now)).collect()
}

pub type SharedSession = Arc<Mutex<Session>>;

/// Registry of live sessions. Each session is behind its own lock, so
/// messages for one session are serialised while different sessions proceed
/// in parallel.
#[derive(Debug)]
pub struct Sessions {
    settings: Settings,
    timeout: Duration,
    live: Mutex<HashMap<SessionId, SharedSession>>,
}

impl Sessions {
    pub fn new(settings: Settings) -> Self {
        Self {
            timeout: Duration::from_secs_f64(settings.session_timeout_s),
            settings,
            live: Mutex::new(HashMap::new()),
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn open(&self, now: Instant) -> (SessionId, SharedSession) {
        let id = SessionId::random();
        let session = Arc::new(Mutex::new(Session::new(id.clone(), self.settings, now)));
        self.live.lock().insert(id.clone(), session.clone());
        (id, session)
    }

    pub fn get(&self, id: &SessionId) -> Option<SharedSession> {
        self.live.lock().get(id).cloned()
    }

    pub fn close(&self, id: &SessionId) -> bool {
        self.live.lock().remove(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.live.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for at least the timeout and returns their ids.
    pub fn expire_idle(&self, now: Instant) -> Vec<SessionId> {
        let mut live = self.live.lock();
        let expired: Vec<SessionId> = live
            .iter()
            .filter(|(_, s)| s.lock().is_expired(now, self.timeout))
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            live.remove(id);
        }
        expired
    }
}
