//! The seven octave bands (125 Hz .. 8 kHz) and their filters.

use crate::error::Result;
use crate::signal::{design_butterworth_bandpass, IirFilter};

pub const BAND_COUNT: usize = 7;

pub const OCTAVE_CENTERS_HZ: [f64; BAND_COUNT] =
    [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

/// Bandpass order per side for all band filters (6th order overall).
pub const BAND_FILTER_ORDER: usize = 3;

/// Upper corners are clipped to this fraction of Nyquist.
pub const NYQUIST_CLIP: f64 = 0.95;

/// Corners `center·2^(∓half_width_octaves)`, upper corner clipped below Nyquist.
pub fn band_corners(center_hz: f64, half_width_octaves: f64, sample_rate: u32) -> (f64, f64) {
    let factor = 2f64.powf(half_width_octaves);
    let ceiling = NYQUIST_CLIP * sample_rate as f64 / 2.0;
    (center_hz / factor, (center_hz * factor).min(ceiling))
}

pub fn octave_corners(center_hz: f64, sample_rate: u32) -> (f64, f64) {
    band_corners(center_hz, 0.5, sample_rate)
}

pub fn third_octave_corners(center_hz: f64, sample_rate: u32) -> (f64, f64) {
    band_corners(center_hz, 1.0 / 6.0, sample_rate)
}

pub fn octave_filter(center_hz: f64, sample_rate: u32) -> Result<IirFilter> {
    let (lo, hi) = octave_corners(center_hz, sample_rate);
    design_butterworth_bandpass(BAND_FILTER_ORDER, lo, hi, sample_rate)
}

/// All seven octave filters in ascending center order.
pub fn octave_filterbank(sample_rate: u32) -> Result<Vec<IirFilter>> {
    OCTAVE_CENTERS_HZ
        .iter()
        .map(|&c| octave_filter(c, sample_rate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners() {
        let (lo, hi) = octave_corners(125.0, 16000);
        assert!((lo - 88.388).abs() < 1e-3 && (hi - 176.777).abs() < 1e-3);
        let (lo, hi) = octave_corners(8000.0, 16000);
        assert!((lo - 5656.85).abs() < 1e-2);
        assert_eq!(hi, 7600.0);
        let (lo, hi) = third_octave_corners(1000.0, 16000);
        assert!((lo - 890.9).abs() < 0.1 && (hi - 1122.5).abs() < 0.1);
    }

    #[test]
    fn filterbank_builds_at_16k() {
        let bank = octave_filterbank(16000).unwrap();
        assert_eq!(bank.len(), BAND_COUNT);
        for (f, c) in bank.iter().zip(OCTAVE_CENTERS_HZ) {
            if c < 8000.0 {
                assert!(f.gain_db(c).abs() < 0.5);
            }
        }
    }
}
