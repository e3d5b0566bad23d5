//! Procedural five-instrument loop.
//!
//! Every stem is a 16-beat mono loop. Notes are placed on a beat grid and
//! written circularly, so tails that run past the end of the loop land at its
//! start. Each stem is then band-limited with a circular FFT filter and
//! normalised to a common RMS, which keeps the loop seamless and lets equal
//! gains produce equal levels.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, fft_real, ifft_real};
use crate::error::{ConfigError, IoError};
use crate::gainmap::InstrumentId;
use crate::wav;

pub const LOOP_BEATS: u32 = 16;
pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 48_000;
pub const DEFAULT_BPM: f64 = 120.0;
pub const DEFAULT_SEED: u64 = 42;
pub const TARGET_RMS_DBFS: f64 = -18.0;
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Passband of the stem filter. Raised-cosine skirts sit between the outer
/// and inner edges.
const PASS_LOW_HZ: (f64, f64) = (185.0, 215.0);
const PASS_HIGH_HZ: (f64, f64) = (2950.0, 3150.0);

const BEATS_PER_BAR: usize = 4;
const BARS: usize = LOOP_BEATS as usize / BEATS_PER_BAR;

pub fn loop_len_samples(sample_rate_hz: u32, bpm: f64) -> usize {
    (f64::from(sample_rate_hz) * 60.0 / bpm * f64::from(LOOP_BEATS)).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StemParams {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub bpm: f64,
}

impl Default for StemParams {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            bpm: DEFAULT_BPM,
        }
    }
}

impl StemParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !matches!(self.sample_rate_hz, 44_100 | 48_000) {
            return Err(ConfigError::invalid(
                "sample_rate_hz",
                format!("must be 44100 or 48000, got {}", self.sample_rate_hz),
            ));
        }
        if !(60.0..=200.0).contains(&self.bpm) {
            return Err(ConfigError::invalid(
                "bpm",
                format!("must lie in [60, 200], got {}", self.bpm),
            ));
        }
        Ok(())
    }

    pub fn loop_len(&self) -> usize {
        loop_len_samples(self.sample_rate_hz, self.bpm)
    }
}

/// A pitched note on the loop grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub onset: usize,
    pub length: usize,
    pub midi: u8,
    pub velocity: f64,
}

impl NoteEvent {
    pub fn freq_hz(&self) -> f64 {
        midi_to_hz(self.midi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrumKind {
    Tom,
    Snare,
    Hat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrumHit {
    pub onset: usize,
    pub kind: DrumKind,
    pub velocity: f64,
}

/// The note material behind a bank. Piano and keyboard share `melody`.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub melody: Vec<NoteEvent>,
    pub guitar: Vec<NoteEvent>,
    pub synth: Vec<NoteEvent>,
    pub drums: Vec<DrumHit>,
}

impl Score {
    pub fn onsets(&self, id: InstrumentId) -> Vec<usize> {
        match id {
            InstrumentId::Piano | InstrumentId::Keyboard => {
                self.melody.iter().map(|n| n.onset).collect()
            }
            InstrumentId::Guitar => self.guitar.iter().map(|n| n.onset).collect(),
            InstrumentId::Synth => self.synth.iter().map(|n| n.onset).collect(),
            InstrumentId::Drums => self.drums.iter().map(|h| h.onset).collect(),
        }
    }

    pub fn notes(&self, id: InstrumentId) -> &[NoteEvent] {
        match id {
            InstrumentId::Piano | InstrumentId::Keyboard => &self.melody,
            InstrumentId::Guitar => &self.guitar,
            InstrumentId::Synth => &self.synth,
            InstrumentId::Drums => &[],
        }
    }
}

/// Five equal-length mono loops, indexed by [`InstrumentId::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct StemBank {
    sample_rate_hz: u32,
    bpm: f64,
    seed: Option<u64>,
    stems: [Vec<f32>; 5],
    score: Option<Score>,
}

#[derive(Debug, thiserror::Error)]
pub enum StemError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("stem `{0}` is missing")]
    Missing(InstrumentId),
    #[error("stem lengths differ: {0}")]
    LengthMismatch(String),
    #[error("sample rates differ: {0}")]
    RateMismatch(String),
    #[error("stem `{0}` is empty")]
    Empty(InstrumentId),
    #[error("could not fit the stem under full scale at the target RMS")]
    Crest,
}

impl StemBank {
    /// Wraps externally supplied buffers. All five must share one length.
    pub fn from_buffers(
        sample_rate_hz: u32,
        bpm: f64,
        stems: [Vec<f32>; 5],
    ) -> Result<Self, StemError> {
        for id in InstrumentId::ALL {
            if stems[id.index()].is_empty() {
                return Err(StemError::Empty(id));
            }
        }
        let len = stems[0].len();
        if stems.iter().any(|s| s.len() != len) {
            let lens: Vec<String> = InstrumentId::ALL
                .iter()
                .map(|id| format!("{id}={}", stems[id.index()].len()))
                .collect();
            return Err(StemError::LengthMismatch(lens.join(", ")));
        }
        Ok(Self {
            sample_rate_hz,
            bpm,
            seed: None,
            stems,
            score: None,
        })
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn beats(&self) -> u32 {
        LOOP_BEATS
    }

    pub fn loop_len(&self) -> usize {
        self.stems[0].len()
    }

    pub fn stem(&self, id: InstrumentId) -> &[f32] {
        &self.stems[id.index()]
    }

    pub fn score(&self) -> Option<&Score> {
        self.score.as_ref()
    }

    /// Writes one WAV per instrument plus the manifest into `dir`.
    pub fn export(&self, dir: &Path) -> Result<Manifest, StemError> {
        fs::create_dir_all(dir).map_err(|e| IoError::fs(dir, e))?;
        let manifest = Manifest::describe(self);
        for id in InstrumentId::ALL {
            wav::write_wav(
                self.stem(id),
                self.sample_rate_hz,
                &dir.join(stem_file_name(id)),
            )
            .map_err(|e| match e {
                wav::WavError::Io(io) => StemError::Io(io),
                wav::WavError::Domain(d) => {
                    StemError::Io(IoError::format(dir.join(stem_file_name(id)), d.to_string()))
                }
            })?;
        }
        let text = manifest.to_text();
        wav::write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }

    /// Loads five stems from `dir` (as written by [`StemBank::export`]). The
    /// manifest is optional; without it bpm defaults to 120.
    pub fn load_dir(dir: &Path) -> Result<Self, StemError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            Some(Manifest::read(&manifest_path)?)
        } else {
            None
        };
        let mut rates = Vec::new();
        let mut buffers: [Vec<f32>; 5] = Default::default();
        for id in InstrumentId::ALL {
            let path = dir.join(stem_file_name(id));
            if !path.exists() {
                return Err(StemError::Missing(id));
            }
            let data = wav::read_wav(&path)?;
            rates.push(data.sample_rate_hz);
            buffers[id.index()] = data.samples;
        }
        if rates.iter().any(|&r| r != rates[0]) {
            return Err(StemError::RateMismatch(format!("{rates:?}")));
        }
        let bpm = manifest.as_ref().map_or(DEFAULT_BPM, |m| m.bpm);
        let mut bank = Self::from_buffers(rates[0], bpm, buffers)?;
        bank.seed = manifest.and_then(|m| m.seed);
        Ok(bank)
    }
}

pub fn stem_file_name(id: InstrumentId) -> String {
    format!("{}.wav", id.name())
}

/// Plain-text description of an exported bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: Option<u64>,
    pub bpm: f64,
    pub sample_rate_hz: u32,
    pub beats: u32,
    pub loop_len_samples: usize,
    pub key: String,
    pub synth_character: String,
    pub stems: Vec<ManifestStem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStem {
    pub instrument: InstrumentId,
    pub file: String,
    pub rms_dbfs: f64,
    pub peak: f64,
    pub band_fraction: f64,
}

impl Manifest {
    pub fn describe(bank: &StemBank) -> Self {
        let stems = InstrumentId::ALL
            .into_iter()
            .map(|id| {
                let buf = bank.stem(id);
                ManifestStem {
                    instrument: id,
                    file: stem_file_name(id),
                    rms_dbfs: analysis::to_dbfs(analysis::rms(buf)),
                    peak: analysis::peak(buf),
                    band_fraction: analysis::verify_band(buf, bank.sample_rate_hz).unwrap_or(0.0),
                }
            })
            .collect();
        Self {
            seed: bank.seed,
            bpm: bank.bpm,
            sample_rate_hz: bank.sample_rate_hz,
            beats: LOOP_BEATS,
            loop_len_samples: bank.loop_len(),
            key: "A minor".into(),
            synth_character: "pulse wave, 25% duty, 16th-note arpeggio, harmonics below 3 kHz"
                .into(),
            stems,
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
        Self::parse(&text).map_err(|e| IoError::format(path, e))
    }
}

pub fn midi_to_hz(midi: u8) -> f64 {
    440.0 * 2f64.powf((f64::from(midi) - 69.0) / 12.0)
}

/// A chord as its root and whether the third is minor.
#[derive(Debug, Clone, Copy)]
struct Chord {
    root: u8,
    minor: bool,
}

impl Chord {
    fn tones(self) -> [u8; 3] {
        let third = if self.minor { 3 } else { 4 };
        [self.root, self.root + third, self.root + 7]
    }
}

const fn chord(root: u8, minor: bool) -> Chord {
    Chord { root, minor }
}

// Roots as MIDI numbers in the 3rd/4th octave so fundamentals stay above 200 Hz.
const PROGRESSIONS: [[Chord; BARS]; 4] = [
    [
        chord(57, true),
        chord(65, false),
        chord(60, false),
        chord(67, false),
    ],
    [
        chord(57, true),
        chord(67, false),
        chord(65, false),
        chord(64, true),
    ],
    [
        chord(57, true),
        chord(62, true),
        chord(65, false),
        chord(64, true),
    ],
    [
        chord(65, false),
        chord(67, false),
        chord(57, true),
        chord(57, true),
    ],
];

// A minor pentatonic, A4..A5.
const MELODY_SCALE: [u8; 6] = [69, 72, 74, 76, 79, 81];

// Eighth-note onset patterns, one bar each.
const RHYTHMS: [[bool; 8]; 5] = [
    [true, false, true, false, true, true, false, true],
    [true, true, false, true, false, true, false, false],
    [true, false, false, true, true, false, true, false],
    [true, false, true, true, false, true, true, false],
    [true, false, true, false, true, false, true, false],
];

struct Grid {
    beat: f64,
}

impl Grid {
    fn at(&self, beat: f64) -> usize {
        (beat * self.beat).round() as usize
    }
}

fn compose(params: &StemParams, rng: &mut ChaCha8Rng) -> Score {
    let grid = Grid {
        beat: f64::from(params.sample_rate_hz) * 60.0 / params.bpm,
    };
    let eighth = 0.5;
    let progression = PROGRESSIONS[rng.gen_range(0..PROGRESSIONS.len())];

    let mut melody = Vec::new();
    let mut degree = rng.gen_range(0..MELODY_SCALE.len());
    for (bar, &ch) in progression.iter().enumerate() {
        let rhythm = RHYTHMS[rng.gen_range(0..RHYTHMS.len())];
        // The phrase breathes on the last beat of the loop so the keyboard
        // has released before the loop point.
        let bar_end = if bar == BARS - 1 { 6 } else { 8 };
        let slots: Vec<usize> = (0..bar_end).filter(|&s| rhythm[s]).collect();
        for (i, &slot) in slots.iter().enumerate() {
            let next = slots.get(i + 1).copied().unwrap_or(bar_end);
            if i == 0 {
                // Land on the scale note closest to a chord tone.
                let target = ch.tones()[rng.gen_range(0..3)];
                degree = nearest_degree(target);
            } else {
                let step: i32 = rng.gen_range(-2..=2);
                degree = (degree as i32 + step).clamp(0, MELODY_SCALE.len() as i32 - 1) as usize;
            }
            let start = (bar * BEATS_PER_BAR) as f64 + slot as f64 * eighth;
            let end = (bar * BEATS_PER_BAR) as f64 + next as f64 * eighth;
            melody.push(NoteEvent {
                onset: grid.at(start),
                length: grid.at(end) - grid.at(start),
                midi: MELODY_SCALE[degree],
                velocity: 0.8 + 0.2 * rng.gen::<f64>(),
            });
        }
    }

    let mut guitar = Vec::new();
    for (bar, &ch) in progression.iter().enumerate() {
        for slot in 0..8 {
            let start = (bar * BEATS_PER_BAR) as f64 + slot as f64 * eighth;
            let accent = if slot % 2 == 0 { 1.0 } else { 0.7 };
            guitar.push(NoteEvent {
                onset: grid.at(start),
                length: grid.at(start + eighth * 0.8) - grid.at(start),
                midi: ch.root,
                velocity: accent * (0.9 + 0.1 * rng.gen::<f64>()),
            });
        }
    }

    let mut synth = Vec::new();
    let upward = rng.gen_bool(0.5);
    let sixteenth = 0.25;
    for (bar, &ch) in progression.iter().enumerate() {
        let tones = ch.tones();
        // Chord tones raised to the 5th octave plus the octave on top.
        let base = |t: u8| t + 12 * 72u8.saturating_sub(t).div_ceil(12);
        let mut arp = [
            base(tones[0]),
            base(tones[1]),
            base(tones[2]),
            base(tones[0]) + 12,
        ];
        arp.sort_unstable();
        if !upward {
            arp.reverse();
        }
        for step in 0..16 {
            let start = (bar * BEATS_PER_BAR) as f64 + step as f64 * sixteenth;
            synth.push(NoteEvent {
                onset: grid.at(start),
                length: grid.at(start + sixteenth * 0.7) - grid.at(start),
                midi: arp[step % 4],
                velocity: if step % 4 == 0 { 1.0 } else { 0.8 },
            });
        }
    }

    let mut drums = Vec::new();
    for bar in 0..BARS {
        let b0 = (bar * BEATS_PER_BAR) as f64;
        for slot in 0..8 {
            let beat = b0 + slot as f64 * eighth;
            let velocity = 0.85 + 0.15 * rng.gen::<f64>();
            let kind = match slot {
                0 | 4 => Some(DrumKind::Tom),
                2 | 6 => Some(DrumKind::Snare),
                5 | 7 if rng.gen_bool(0.3) => Some(DrumKind::Tom),
                _ => None,
            };
            if let Some(kind) = kind {
                drums.push(DrumHit {
                    onset: grid.at(beat),
                    kind,
                    velocity,
                });
            }
            drums.push(DrumHit {
                onset: grid.at(beat),
                kind: DrumKind::Hat,
                velocity: if slot % 2 == 0 {
                    velocity
                } else {
                    0.6 * velocity
                },
            });
        }
    }

    Score {
        melody,
        guitar,
        synth,
        drums,
    }
}

fn nearest_degree(midi: u8) -> usize {
    // Fold into the scale's octave first.
    let mut m = i32::from(midi);
    while m < i32::from(MELODY_SCALE[0]) {
        m += 12;
    }
    while m > i32::from(MELODY_SCALE[MELODY_SCALE.len() - 1]) {
        m -= 12;
    }
    MELODY_SCALE
        .iter()
        .enumerate()
        .min_by_key(|(_, &s)| (i32::from(s) - m).abs())
        .map(|(i, _)| i)
        .expect("scale is non-empty")
}

/// Adds `voice(t)` for `t` in `[0, span)` seconds to `buf`, starting at
/// `onset` and wrapping at the end of the loop.
fn add_circular(buf: &mut [f64], sr: f64, onset: usize, span_s: f64, voice: impl Fn(f64) -> f64) {
    let len = buf.len();
    let span = ((span_s * sr).ceil() as usize).min(len);
    for i in 0..span {
        let t = i as f64 / sr;
        buf[(onset + i) % len] += voice(t);
    }
}

fn attack(t: f64, seconds: f64) -> f64 {
    (t / seconds).min(1.0)
}

fn release(t: f64, held_s: f64, tau: f64) -> f64 {
    if t <= held_s {
        1.0
    } else {
        (-(t - held_s) / tau).exp()
    }
}

fn render_piano(notes: &[NoteEvent], len: usize, sr: f64) -> Vec<f64> {
    let mut buf = vec![0.0; len];
    for n in notes {
        let f = n.freq_hz();
        let held = n.length as f64 / sr;
        let partials: Vec<(f64, f64, f64)> = (1..=10)
            .map(f64::from)
            .filter(|k| k * f < PASS_HIGH_HZ.1)
            .map(|k| {
                (
                    2.0 * PI * f * k * (1.0 + 0.0004 * k * k),
                    1.0 / k.powf(1.3),
                    1.2 + 0.9 * k,
                )
            })
            .collect();
        add_circular(&mut buf, sr, n.onset, held + 0.5, |t| {
            let env = attack(t, 0.003) * release(t, held, 0.08) * n.velocity;
            partials
                .iter()
                .map(|&(w, a, d)| a * (-d * t).exp() * (w * t).sin())
                .sum::<f64>()
                * env
        });
    }
    buf
}

fn render_keyboard(notes: &[NoteEvent], len: usize, sr: f64) -> Vec<f64> {
    const AMPS: [f64; 6] = [1.0, 0.55, 0.4, 0.22, 0.14, 0.08];
    let mut buf = vec![0.0; len];
    for n in notes {
        let f = n.freq_hz();
        let held = n.length as f64 / sr;
        add_circular(&mut buf, sr, n.onset, held + 0.4, |t| {
            let body = 0.7 + 0.3 * (-t / 0.15).exp();
            let tremolo = 1.0 + 0.15 * (2.0 * PI * 5.5 * t).sin();
            let env = attack(t, 0.01) * body * tremolo * release(t, held, 0.06) * n.velocity;
            AMPS.iter()
                .enumerate()
                .map(|(i, a)| a * (2.0 * PI * f * (i + 1) as f64 * t).sin())
                .sum::<f64>()
                * env
        });
    }
    buf
}

fn render_guitar(notes: &[NoteEvent], len: usize, sr: f64) -> Vec<f64> {
    let mut buf = vec![0.0; len];
    let drive = 2.5;
    for n in notes {
        let f = n.freq_hz();
        let held = n.length as f64 / sr;
        add_circular(&mut buf, sr, n.onset, held + 0.15, |t| {
            let env = attack(t, 0.002) * release(t, held, 0.03) * n.velocity;
            // Root and fifth, plucked-string style decaying harmonics.
            let string = |freq: f64| -> f64 {
                (1..=12)
                    .map(f64::from)
                    .map(|k| (-(3.0 + 0.6 * k) * t).exp() / k * (2.0 * PI * freq * k * t).sin())
                    .sum()
            };
            let x = 0.5 * (string(f) + 0.8 * string(f * 1.5)) * env;
            (drive * x).tanh() / drive.tanh()
        });
    }
    buf
}

fn render_synth(notes: &[NoteEvent], len: usize, sr: f64) -> Vec<f64> {
    let duty = 0.25;
    let mut buf = vec![0.0; len];
    for n in notes {
        let f = n.freq_hz();
        let held = n.length as f64 / sr;
        let harmonics: Vec<(f64, f64)> = (1..)
            .map(f64::from)
            .take_while(|k| k * f < 3000.0)
            .map(|k| (2.0 * PI * f * k, (PI * k * duty).sin() / k))
            .collect();
        add_circular(&mut buf, sr, n.onset, held + 0.1, |t| {
            let vibrato = 1.0 + 0.004 * (2.0 * PI * 6.0 * t).sin();
            let env = attack(t, 0.002) * release(t, held, 0.02) * n.velocity;
            harmonics
                .iter()
                .map(|&(w, a)| a * (w * vibrato * t).sin())
                .sum::<f64>()
                * env
        });
    }
    buf
}

fn render_drums(hits: &[DrumHit], len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf = vec![0.0; len];
    for h in hits {
        match h.kind {
            DrumKind::Tom => {
                // Pitch drops from ~330 Hz to 210 Hz.
                let (floor, sweep, tau) = (210.0, 120.0, 0.03);
                add_circular(&mut buf, sr, h.onset, 0.6, |t| {
                    let phase = 2.0 * PI * (floor * t + sweep * tau * (1.0 - (-t / tau).exp()));
                    let body = phase.sin() + 0.35 * (1.6 * phase).sin();
                    body * (-t / 0.16).exp() * attack(t, 0.001) * h.velocity
                });
            }
            DrumKind::Snare => {
                let span = (0.3 * sr) as usize;
                let noise: Vec<f64> = (0..span).map(|_| rng.gen_range(-1.0..1.0)).collect();
                add_circular(&mut buf, sr, h.onset, 0.3, |t| {
                    let i = ((t * sr) as usize).min(span - 1);
                    let rattle = noise[i] * (-t / 0.08).exp();
                    let tone = 0.6 * (2.0 * PI * 330.0 * t).sin() * (-t / 0.05).exp();
                    (rattle + tone) * attack(t, 0.001) * h.velocity
                });
            }
            DrumKind::Hat => {
                let span = (0.12 * sr) as usize;
                let noise: Vec<f64> = (0..span).map(|_| rng.gen_range(-1.0..1.0)).collect();
                add_circular(&mut buf, sr, h.onset, 0.12, |t| {
                    let i = ((t * sr) as usize).min(span - 1);
                    0.35 * noise[i] * (-t / 0.025).exp() * h.velocity
                });
            }
        }
    }
    buf
}

fn raised_cosine(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        0.0
    } else if x >= hi {
        1.0
    } else {
        0.5 - 0.5 * (PI * (x - lo) / (hi - lo)).cos()
    }
}

/// Zero-phase circular band-pass over the whole loop.
fn band_limit(buf: &[f64], sr: f64) -> Vec<f64> {
    let n = buf.len();
    let mut spectrum = fft_real(buf);
    for (k, c) in spectrum.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * sr / n as f64;
        let gain = raised_cosine(f, PASS_LOW_HZ.0, PASS_LOW_HZ.1)
            * (1.0 - raised_cosine(f, PASS_HIGH_HZ.0, PASS_HIGH_HZ.1));
        *c *= gain;
    }
    ifft_real(spectrum)
}

fn scale_to_target_rms(buf: &mut [f64]) {
    let rms = (buf.iter().map(|x| x * x).sum::<f64>() / buf.len() as f64).sqrt();
    let scale = analysis::from_dbfs(TARGET_RMS_DBFS) / rms;
    buf.iter_mut().for_each(|x| *x *= scale);
}

/// Peaks above this are softened before the final level is set.
const PEAK_CEILING: f64 = 0.95;
const SOFT_KNEE: f64 = 0.7;

fn soft_clip(x: f64) -> f64 {
    let mag = x.abs();
    if mag <= SOFT_KNEE {
        return x;
    }
    let room = PEAK_CEILING - SOFT_KNEE;
    (SOFT_KNEE + room * ((mag - SOFT_KNEE) / room).tanh()).copysign(x)
}

/// Band-limits, then brings the stem to the target RMS while keeping its
/// peak under the ceiling. Sparse material (slow drums) can exceed the crest
/// factor that allows; those peaks are soft-clipped and the stem is filtered
/// again until it fits.
fn finish_stem(raw: &[f64], sr: f64) -> Result<Vec<f32>, StemError> {
    let mut x = band_limit(raw, sr);
    for _ in 0..16 {
        scale_to_target_rms(&mut x);
        if x.iter().all(|v| v.abs() <= PEAK_CEILING) {
            return Ok(x.iter().map(|&v| v as f32).collect());
        }
        let clipped: Vec<f64> = x.iter().map(|&v| soft_clip(v)).collect();
        x = band_limit(&clipped, sr);
    }
    Err(StemError::Crest)
}

/// Generates the deterministic bank for `params`.
pub fn generate_stems(params: &StemParams) -> Result<StemBank, StemError> {
    params.validate()?;
    let sr = f64::from(params.sample_rate_hz);
    let len = params.loop_len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let score = compose(params, &mut rng);

    let mut stems: [Vec<f32>; 5] = Default::default();
    for id in InstrumentId::ALL {
        let raw = match id {
            InstrumentId::Piano => render_piano(&score.melody, len, sr),
            InstrumentId::Keyboard => render_keyboard(&score.melody, len, sr),
            InstrumentId::Guitar => render_guitar(&score.guitar, len, sr),
            InstrumentId::Synth => render_synth(&score.synth, len, sr),
            InstrumentId::Drums => render_drums(&score.drums, len, sr, &mut rng),
        };
        stems[id.index()] = finish_stem(&raw, sr)?;
    }

    Ok(StemBank {
        sample_rate_hz: params.sample_rate_hz,
        bpm: params.bpm,
        seed: Some(params.seed),
        stems,
        score: Some(score),
    })
}

/// Reads a bank from `dir` if given, otherwise generates one.
pub fn load_or_generate(dir: Option<&Path>, params: &StemParams) -> Result<StemBank, StemError> {
    match dir {
        Some(d) => StemBank::load_dir(d),
        None => generate_stems(params),
    }
}

/// Paths of the files [`StemBank::export`] writes.
pub fn exported_files(dir: &Path) -> Vec<PathBuf> {
    InstrumentId::ALL
        .iter()
        .map(|&id| dir.join(stem_file_name(id)))
        .chain(std::iter::once(dir.join(MANIFEST_FILE)))
        .collect()
}
