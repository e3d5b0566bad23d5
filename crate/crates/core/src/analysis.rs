//! Level and spectral measurements on mono buffers.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::DomainError;

/// Frequency window, in Hz, that every stem must concentrate its energy in.
pub const BAND_LOW_HZ: f64 = 180.0;
pub const BAND_HIGH_HZ: f64 = 3200.0;
/// Minimum in-band energy fraction a stem has to reach.
pub const MIN_BAND_FRACTION: f64 = 0.95;

pub fn rms(buffer: &[f32]) -> f64 {
    if buffer.is_empty() {
        return 0.0;
    }
    let sum: f64 = buffer.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
    (sum / buffer.len() as f64).sqrt()
}

pub fn peak(buffer: &[f32]) -> f64 {
    buffer
        .iter()
        .map(|&x| f64::from(x).abs())
        .fold(0.0, f64::max)
}

/// Linear amplitude to dB relative to full scale; silence maps to -inf.
pub fn to_dbfs(linear: f64) -> f64 {
    20.0 * linear.log10()
}

pub fn from_dbfs(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Largest absolute difference between consecutive samples.
pub fn max_jump(buffer: &[f32]) -> f64 {
    buffer
        .windows(2)
        .map(|w| (f64::from(w[1]) - f64::from(w[0])).abs())
        .fold(0.0, f64::max)
}

/// Forward FFT over the whole buffer (no window: loops are periodic in their
/// own length).
pub(crate) fn fft_real(buffer: &[f64]) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = buffer.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(&mut data);
    data
}

/// Inverse FFT, returning the real part scaled by `1/N`.
pub(crate) fn ifft_real(mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
    let n = spectrum.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    spectrum.into_iter().map(|c| c.re / n as f64).collect()
}

/// Fraction of the buffer's spectral energy inside `[180, 3200]` Hz.
///
/// The transform spans the full buffer. A buffer with no energy at all
/// reports 0.
pub fn verify_band(buffer: &[f32], sample_rate_hz: u32) -> Result<f64, DomainError> {
    band_fraction(buffer, sample_rate_hz, BAND_LOW_HZ, BAND_HIGH_HZ)
}

pub fn band_fraction(
    buffer: &[f32],
    sample_rate_hz: u32,
    low_hz: f64,
    high_hz: f64,
) -> Result<f64, DomainError> {
    if buffer.is_empty() {
        return Err(DomainError::EmptyBuffer);
    }
    let samples: Vec<f64> = buffer.iter().map(|&x| f64::from(x)).collect();
    let spectrum = fft_real(&samples);
    let n = spectrum.len();
    let bin_hz = f64::from(sample_rate_hz) / n as f64;
    let mut total = 0.0;
    let mut inside = 0.0;
    // One-sided sum; mirrored bins are folded in by doubling.
    for (k, c) in spectrum.iter().enumerate().take(n / 2 + 1) {
        let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
        let power = c.norm_sqr() * if mirrored { 2.0 } else { 1.0 };
        total += power;
        let f = k as f64 * bin_hz;
        if (low_hz..=high_hz).contains(&f) {
            inside += power;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(inside / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, sr: u32, len: usize) -> Vec<f32> {
        (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(sr)).sin() as f32)
            .collect()
    }

    #[test]
    fn in_band_sine() {
        let frac = verify_band(&sine(1000.0, 48000, 48000), 48000).unwrap();
        assert!(frac >= 0.999, "{frac}");
    }

    #[test]
    fn low_sine_fails() {
        let frac = verify_band(&sine(100.0, 48000, 48000), 48000).unwrap();
        assert!(frac <= 0.05, "{frac}");
    }

    #[test]
    fn low_sine_with_partial_period_still_fails() {
        let frac = verify_band(&sine(100.0, 44100, 30_001), 44100).unwrap();
        assert!(frac <= 0.05, "{frac}");
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(verify_band(&[], 48000), Err(DomainError::EmptyBuffer));
    }

    #[test]
    fn silence_reports_zero() {
        assert_eq!(verify_band(&[0.0; 64], 48000).unwrap(), 0.0);
    }

    #[test]
    fn levels() {
        let s = sine(1000.0, 48000, 48000);
        assert!((rms(&s) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((peak(&s) - 1.0).abs() < 1e-6);
        assert!((to_dbfs(from_dbfs(-18.0)) + 18.0).abs() < 1e-12);
    }

    #[test]
    fn fft_round_trip() {
        let x: Vec<f64> = (0..37).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = ifft_real(fft_real(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
