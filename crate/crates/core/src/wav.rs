//! Mono RIFF/WAVE files.
//!
//! Files are written as 32-bit IEEE float (format tag 3) with a 16-byte `fmt `
//! body and a `fact` chunk, so the data chunk always starts at byte 56:
//!
//! ```text
//! 0   "RIFF" <u32 riff size> "WAVE"
//! 12  "fmt " 16 <u16 3> <u16 1> <u32 rate> <u32 rate*4> <u16 4> <u16 32>
//! 36  "fact" 4 <u32 frames>
//! 48  "data" <u32 frames*4> samples...
//! ```
//!
//! The reader is more lenient and also accepts 16/24/32-bit integer PCM and
//! `WAVE_FORMAT_EXTENSIBLE` wrappers of either, as long as the file is mono.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DomainError, IoError};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Bytes preceding the `data` chunk in files produced by [`encode_wav`].
pub const HEADER_LEN: usize = 48;
/// Offset of the first sample byte.
pub const DATA_OFFSET: usize = HEADER_LEN + 8;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate_hz: u32,
    pub samples: Vec<f32>,
}

/// Encodes a mono float32 WAV image in memory.
pub fn encode_wav(samples: &[f32], sample_rate_hz: u32) -> Result<Vec<u8>, DomainError> {
    if samples.is_empty() {
        return Err(DomainError::EmptyBuffer);
    }
    let frames = u32::try_from(samples.len())
        .ok()
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| DomainError::Other("buffer too long for a RIFF file".into()))?;
    let data_len = frames * 4;
    let riff_len = (DATA_OFFSET as u32 - 8)
        .checked_add(data_len)
        .ok_or_else(|| DomainError::Other("buffer too long for a RIFF file".into()))?;

    let mut out = Vec::with_capacity(DATA_OFFSET + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());

    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::fs(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::fs(path, e))?;
    tmp.flush().map_err(|e| IoError::fs(path, e))?;
    tmp.persist(path).map_err(|e| IoError::fs(path, e.error))?;
    Ok(())
}

/// Writes a mono float32 WAV file. Samples are expected in `[-1, 1]`.
pub fn write_wav(samples: &[f32], sample_rate_hz: u32, path: &Path) -> Result<(), WavError> {
    if let Some(bad) = samples.iter().find(|s| s.is_nan() || s.abs() > 1.0) {
        return Err(DomainError::Other(format!("sample {bad} outside [-1, 1]")).into());
    }
    let bytes = encode_wav(samples, sample_rate_hz)?;
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<WavData, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::fs(path, e))?;
    decode_wav(&bytes).map_err(|reason| IoError::format(path, reason))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

pub fn decode_wav(bytes: &[u8]) -> Result<WavData, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| format!("chunk {:?} overruns file", String::from_utf8_lossy(id)))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err("fmt chunk too short".into());
                }
                let mut tag = u16_at(body, 0);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err("extensible fmt chunk too short".into());
                    }
                    tag = u16_at(body, 24);
                }
                format = Some(Format {
                    tag,
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are padded to even length.
        pos = body_end + (len & 1);
    }
    let format = format.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    if format.channels != 1 {
        return Err(format!("expected mono, found {} channels", format.channels));
    }
    let samples: Vec<f32> = match (format.tag, format.bits) {
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
            .collect(),
        (FORMAT_PCM, 24) => data
            .chunks_exact(3)
            .map(|c| {
                let v = i32::from_le_bytes([0, c[0], c[1], c[2]]) >> 8;
                v as f32 / 8_388_608.0
            })
            .collect(),
        (FORMAT_PCM, 32) => data
            .chunks_exact(4)
            .map(|c| {
                (f64::from(i32::from_le_bytes([c[0], c[1], c[2], c[3]])) / 2_147_483_648.0) as f32
            })
            .collect(),
        (tag, bits) => {
            return Err(format!(
                "unsupported sample format (tag {tag}, {bits} bits)"
            ))
        }
    };
    if samples.is_empty() {
        return Err("no samples".into());
    }
    Ok(WavData {
        sample_rate_hz: format.sample_rate,
        samples,
    })
}
