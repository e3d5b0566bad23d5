//! Acceptance suite. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any failed.
//!
//! Run with `cargo test -p tiltmix-cli --test acceptance`.

use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use sha2::{Digest, Sha256};
use tiltmix_cli::{cmd_render, RenderArgs, SharedFlags};
use tiltmix_core::analysis::{max_jump, rms, to_dbfs, verify_band, MIN_BAND_FRACTION};
use tiltmix_core::engine::{render_trajectory, render_trajectory_solo, Engine, EngineConfig};
use tiltmix_core::gainmap::{
    axis_gain, compute_gains, GainEnvelope, GainMapConfig, GainVector, GateConfig, InstrumentId,
    TiltAngles,
};
use tiltmix_core::stems::{generate_stems, StemBank, StemParams};
use tiltmix_core::trajectory::{TiltTrajectory, TrajectoryPoint};
use tiltmix_core::Settings;
use tiltmix_service::{
    replay, AppState, ClientMessage, ServerMessage, Session, SessionId, Sessions,
};
use tokio_tungstenite::tungstenite::Message;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.3} s exceeds {limit_s} s", elapsed.as_secs_f64())
    })
}

fn bank() -> Arc<StemBank> {
    static BANK: OnceLock<Arc<StemBank>> = OnceLock::new();
    BANK.get_or_init(|| Arc::new(generate_stems(&StemParams::default()).expect("default stems")))
        .clone()
}

fn env(id: InstrumentId) -> GainEnvelope {
    GainEnvelope::for_instrument(id).expect("continuous instrument")
}

fn gain(angle: f64, id: InstrumentId) -> Result<f64, String> {
    axis_gain(angle, &env(id)).map_err(|e| e.to_string())
}

fn envelope_law() -> Outcome {
    let start = Instant::now();
    // Integer tenths so that ±5.0 and ±90.0 are hit exactly.
    let grid: Vec<f64> = (-900..=900).map(|i| f64::from(i) / 10.0).collect();
    let mut checked = 0usize;
    for id in InstrumentId::CONTINUOUS {
        let sign = env(id).orientation.sign();
        // Walk in the favored direction: gains must never decrease.
        let mut prev = f64::NEG_INFINITY;
        for &u in &grid {
            let g = gain(u * sign, id)?;
            ensure(g >= prev, || format!("{id}: not monotone at favored {u}°"))?;
            prev = g;
            if u.abs() <= 5.0 {
                ensure(g == 1.0, || {
                    format!("{id}: plateau gain {g} at favored {u}°")
                })?;
            }
            checked += 1;
        }
        let lo = gain(-90.0 * sign, id)?;
        let hi = gain(90.0 * sign, id)?;
        ensure(lo == 0.0 && hi == 2.0, || {
            format!("{id}: endpoints {lo}, {hi}")
        })?;
    }
    for (a, b) in [
        (InstrumentId::Keyboard, InstrumentId::Piano),
        (InstrumentId::Guitar, InstrumentId::Drums),
    ] {
        for &x in &grid {
            let (ga, gb) = (gain(x, a)?, gain(-x, b)?);
            ensure((ga - gb).abs() <= 1e-12, || {
                format!("{a}({x}) = {ga} but {b}({}) = {gb}", -x)
            })?;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "{checked} grid points, {:.1} ms",
        start.elapsed().as_secs_f64() * 1e3
    ))
}

fn gate_geometry() -> Outcome {
    let start = Instant::now();
    let cfg = GainMapConfig {
        gate: GateConfig {
            hysteresis_deg: 0.0,
            ..GateConfig::default()
        },
        ..GainMapConfig::default()
    };
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for i in -200i32..=200 {
        for j in -200i32..=200 {
            // Closed square |pitch| <= 1°, |roll| <= 1°, decided on the integer grid.
            let expected = i.abs() <= 100 && j.abs() <= 100;
            let tilt = TiltAngles::clamped(f64::from(i) / 100.0, f64::from(j) / 100.0)
                .map_err(|e| e.to_string())?;
            for was_on in [false, true] {
                let up = compute_gains(tilt, &cfg, was_on).map_err(|e| e.to_string())?;
                let synth = up.gains.get(InstrumentId::Synth);
                if up.gate_on != expected || synth != if expected { 1.0 } else { 0.0 } {
                    mismatches += 1;
                }
                total += 1;
            }
        }
    }
    ensure(mismatches == 0, || {
        format!("{mismatches} of {total} points disagree")
    })?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "0 mismatches over {total} evaluations, {:.1} ms",
        start.elapsed().as_secs_f64() * 1e3
    ))
}

fn level_balance() -> Outcome {
    let bank = bank();
    let cfg = EngineConfig::default();
    let gains = compute_gains(TiltAngles::LEVEL, &GainMapConfig::default(), false)
        .map_err(|e| e.to_string())?
        .gains;
    ensure(gains == GainVector::uniform(1.0), || {
        format!("level gains {gains:?}")
    })?;
    let mut levels = Vec::new();
    for id in InstrumentId::ALL {
        let mut e = Engine::with_bank(&cfg, bank.clone()).map_err(|e| e.to_string())?;
        e.snap_gains(&gains);
        e.set_solo(Some(id));
        let out = e.render_block(bank.loop_len()).map_err(|e| e.to_string())?;
        levels.push((id, to_dbfs(rms(&out))));
    }
    let max = levels.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    let min = levels.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let listing = levels
        .iter()
        .map(|(id, db)| format!("{id} {db:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(max - min <= 0.5, || {
        format!("spread {:.3} dB: {listing}", max - min)
    })?;
    Ok(format!("spread {:.3} dB ({listing} dBFS)", max - min))
}

fn spectral_constraint() -> Outcome {
    let start = Instant::now();
    let params = StemParams::default();
    let bank = generate_stems(&params).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    for id in InstrumentId::ALL {
        let frac = verify_band(bank.stem(id), bank.sample_rate_hz()).map_err(|e| e.to_string())?;
        ensure(frac >= MIN_BAND_FRACTION, || {
            format!("{id}: in-band fraction {frac:.4}")
        })?;
        worst = worst.min(frac);
    }
    let sr = params.sample_rate_hz;
    let tone: Vec<f32> = (0..sr as usize)
        .map(|n| {
            (0.5 * (2.0 * std::f64::consts::PI * 100.0 * n as f64 / f64::from(sr)).sin()) as f32
        })
        .collect();
    let tone_frac = verify_band(&tone, sr).map_err(|e| e.to_string())?;
    ensure(tone_frac < MIN_BAND_FRACTION, || {
        format!("100 Hz tone passed with {tone_frac:.4}")
    })?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "worst stem {worst:.6}, 100 Hz tone {tone_frac:.6}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn click_free_ramping() -> Outcome {
    let bank = bank();
    let cfg = EngineConfig::default();
    let n = 96_000;
    let mut base = Engine::with_bank(&cfg, bank.clone()).map_err(|e| e.to_string())?;
    base.snap_gains(&GainVector::uniform(1.0));
    let baseline = max_jump(&base.render_block(n).map_err(|e| e.to_string())?);

    let mut e = Engine::with_bank(&cfg, bank.clone()).map_err(|e| e.to_string())?;
    let mut out = e.render_block(n / 2).map_err(|e| e.to_string())?;
    e.set_gains(&GainVector::uniform(1.0));
    out.extend(e.render_block(n / 2).map_err(|e| e.to_string())?);
    let stepped = max_jump(&out);
    ensure(stepped <= 3.0 * baseline, || {
        format!("jump {stepped:.5} vs baseline {baseline:.5}")
    })?;

    let mut e = Engine::with_bank(&cfg, bank).map_err(|e| e.to_string())?;
    let ramp = e.ramp_samples();
    e.set_gains(&GainVector::uniform(1.0));
    e.render_block(ramp - 1).map_err(|e| e.to_string())?;
    let before = e.current_gains();
    e.render_block(1).map_err(|e| e.to_string())?;
    let after = e.current_gains();
    ensure(
        before.as_array().iter().all(|&g| g < 1.0) && after == GainVector::uniform(1.0),
        || {
            format!(
                "after {} samples {before:?}, after {ramp} samples {after:?}",
                ramp - 1
            )
        },
    )?;
    Ok(format!(
        "max jump {stepped:.5} <= 3 x {baseline:.5}; target reached at sample {ramp}"
    ))
}

fn sha256_file(path: &Path) -> Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("path.csv");
    std::fs::write(
        &csv,
        "time_s,pitch_deg,roll_deg\n0,0,0\n0.5,12,-30\n1.2,-45,4\n2.0,0.3,-0.4\n",
    )
    .map_err(|e| e.to_string())?;
    let flags = SharedFlags::default();
    let mut sums = Vec::new();
    for name in ["a.wav", "b.wav"] {
        let out = dir.path().join(name);
        let args = RenderArgs {
            trajectory: csv.clone(),
            out: out.clone(),
            duration: None,
            stems: None,
        };
        cmd_render(&args, &flags).map_err(|e| e.to_string())?;
        sums.push(sha256_file(&out)?);
    }
    ensure(sums[0] == sums[1], || {
        format!("checksums differ: {} vs {}", sums[0], sums[1])
    })?;

    let p = StemParams::default();
    let a = generate_stems(&p).map_err(|e| e.to_string())?;
    let b = generate_stems(&p).map_err(|e| e.to_string())?;
    let c = generate_stems(&StemParams {
        seed: p.seed + 1,
        ..p
    })
    .map_err(|e| e.to_string())?;
    let same = |x: &StemBank, y: &StemBank| {
        InstrumentId::ALL.iter().all(|&id| {
            x.stem(id)
                .iter()
                .zip(y.stem(id))
                .all(|(s, t)| s.to_bits() == t.to_bits())
        })
    };
    ensure(same(&a, &b), || "stems differ for the same seed".into())?;
    ensure(!same(&a, &c), || {
        "stems identical for different seeds".into()
    })?;
    Ok(format!("render sha256 {}", &sums[0][..16]))
}

fn trajectory_semantics() -> Outcome {
    let bank = bank();
    let cfg = EngineConfig::default();
    let gm = GainMapConfig::default();
    let sweep = TiltTrajectory::new(vec![
        TrajectoryPoint::new(0.0, 0.0, -90.0),
        TrajectoryPoint::new(8.0, 0.0, 90.0),
    ])
    .map_err(|e| e.to_string())?;
    let solo = |id| {
        render_trajectory_solo(bank.clone(), &sweep, &gm, &cfg, 8.0, id).map_err(|e| e.to_string())
    };
    let piano = solo(InstrumentId::Piano)?;
    let keyboard = solo(InstrumentId::Keyboard)?;
    let window = 24_000;
    let db = |x: &[f32]| to_dbfs(rms(x));
    let early = db(&keyboard[..window]) - db(&piano[..window]);
    let late = db(&piano[piano.len() - window..]) - db(&keyboard[keyboard.len() - window..]);
    ensure(early >= 12.0 && late >= 12.0, || {
        format!("separation early {early:.2} dB, late {late:.2} dB")
    })?;

    let render = |roll| {
        TiltTrajectory::constant(0.0, roll)
            .map_err(|e| e.to_string())
            .and_then(|t| {
                render_trajectory(bank.clone(), &t, &gm, &cfg, 2.0).map_err(|e| e.to_string())
            })
    };
    let (a, b) = (render(0.5)?, render(-0.5)?);
    let identical = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(identical, || "plateau renders differ".into())?;
    Ok(format!(
        "separation early {early:.1} dB, late {late:.1} dB; plateau renders bit-identical"
    ))
}

/// Deterministic 600-message client script: mostly tilts and accelerometer
/// samples, with a few config requests and rejected samples mixed in.
fn client_script() -> Vec<ClientMessage> {
    (0..600)
        .map(|i| {
            let t = f64::from(i) * 0.02;
            match i % 10 {
                7 => ClientMessage::Accel {
                    ax: 0.4 * (0.9 * t).sin(),
                    ay: 0.3 * (0.5 * t).cos(),
                    az: 0.85,
                },
                9 if i % 50 == 9 => ClientMessage::ConfigGet,
                9 if i % 30 == 19 => ClientMessage::Accel {
                    ax: 0.0,
                    ay: 0.0,
                    az: 0.05,
                },
                _ => ClientMessage::Tilt {
                    pitch_deg: 40.0 * (0.7 * t).sin() * (0.13 * t).cos(),
                    roll_deg: 70.0 * (0.31 * t).sin(),
                },
            }
        })
        .collect()
}

fn service_replay() -> Outcome {
    let script = client_script();
    let settings = Settings::default();
    let recorded = replay(settings, &script);
    // Round-trip the recording through its wire form.
    let wire: Vec<String> = recorded.iter().map(ServerMessage::to_json).collect();
    let recorded: Vec<ServerMessage> = wire
        .iter()
        .map(|s| serde_json::from_str(s).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;

    let mut session = Session::new(SessionId::random(), settings, Instant::now());
    let start = Instant::now();
    let fresh: Vec<ServerMessage> = script
        .iter()
        .map(|&m| session.handle(m, Instant::now()))
        .collect();
    let mean_ms = start.elapsed().as_secs_f64() * 1e3 / script.len() as f64;
    ensure(fresh == recorded, || {
        let at = fresh
            .iter()
            .zip(&recorded)
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        format!("stream diverges at message {at}")
    })?;
    let gains = fresh
        .iter()
        .filter(|m| matches!(m, ServerMessage::Gains(_)))
        .count();
    let last_seq = fresh
        .iter()
        .rev()
        .find_map(|m| match m {
            ServerMessage::Gains(g) => Some(g.seq),
            _ => None,
        })
        .unwrap_or(0);
    ensure(last_seq == gains as u64, || {
        format!("last seq {last_seq} but {gains} gain frames")
    })?;
    ensure(mean_ms < 5.0, || format!("mean latency {mean_ms:.4} ms"))?;

    let (ws_stream, ws_mean_ms) = websocket_replay(&script)?;
    ensure(ws_stream == recorded, || {
        "websocket stream differs from the recording".into()
    })?;
    ensure(ws_mean_ms < 5.0, || {
        format!("websocket mean round trip {ws_mean_ms:.4} ms")
    })?;
    Ok(format!(
        "{} messages, {gains} gain frames; mean handle {:.4} ms, websocket round trip {ws_mean_ms:.3} ms",
        script.len(),
        mean_ms
    ))
}

fn websocket_replay(script: &[ClientMessage]) -> Result<(Vec<ServerMessage>, f64), String> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let state = AppState::new(Sessions::new(Settings::default()), dir.path());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        tokio::spawn(tiltmix_service::serve(listener, state, None));
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
            .await
            .map_err(|e| e.to_string())?;
        let mut out = Vec::with_capacity(script.len());
        let start = Instant::now();
        for msg in script {
            ws.send(Message::Text(msg.to_json().into()))
                .await
                .map_err(|e| e.to_string())?;
            let reply = ws
                .next()
                .await
                .ok_or("connection closed")?
                .map_err(|e| e.to_string())?;
            let text = reply.to_text().map_err(|e| e.to_string())?;
            out.push(serde_json::from_str(text).map_err(|e| e.to_string())?);
        }
        let mean_ms = start.elapsed().as_secs_f64() * 1e3 / script.len() as f64;
        let _ = ws.close(None).await;
        Ok((out, mean_ms))
    })
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("envelope law", envelope_law),
        ("gate geometry", gate_geometry),
        ("level balance", level_balance),
        ("spectral constraint", spectral_constraint),
        ("click-free ramping", click_free_ramping),
        ("determinism", determinism),
        ("trajectory semantics", trajectory_semantics),
        ("service replay", service_replay),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
