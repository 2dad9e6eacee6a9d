//! Temporal amplitude envelopes (TAEs): per octave band, the 20 Hz lowpassed
//! Hilbert envelope of the band signal, sampled at 40 Hz.

use std::io::{Read, Write};
use std::path::Path;

use crate::bands::{octave_filter, BAND_COUNT, OCTAVE_CENTERS_HZ};
use crate::error::{Error, Result};
use crate::signal::{
    analytic_envelope, decimate, design_butterworth_lowpass, filter_apply, IirFilter, Signal,
};

pub const INPUT_SAMPLE_RATE: u32 = 16000;
pub const INPUT_SECONDS: f64 = 5.0;
pub const ENVELOPE_CUTOFF_HZ: f64 = 20.0;
pub const ENVELOPE_LOWPASS_ORDER: usize = 6;
pub const DECIMATION: usize = 400;
pub const TAE_RATE: u32 = INPUT_SAMPLE_RATE / DECIMATION as u32;
pub const TAE_LEN: usize = 200;

/// Bands whose envelope peak is this far below the input peak are silent.
pub const SILENT_BAND_DB: f64 = -40.0;

const MAGIC: &[u8; 4] = b"TAE1";

/// Scales the signal to unit peak; returns the scaled signal and the gain.
pub fn normalize_signal(input: &Signal) -> Result<(Signal, f64)> {
    let peak = input.peak();
    if peak <= 0.0 {
        return Err(Error::SilentInput);
    }
    let gain = 1.0 / peak;
    Ok((input.scaled(gain), gain))
}

fn checked_window(input: &Signal) -> Result<Signal> {
    if input.sample_rate() != INPUT_SAMPLE_RATE {
        return Err(Error::contract(format!(
            "TAE extraction needs {INPUT_SAMPLE_RATE} Hz input, got {} Hz",
            input.sample_rate()
        )));
    }
    let needed = (INPUT_SECONDS * INPUT_SAMPLE_RATE as f64) as usize;
    if input.len() < needed {
        return Err(Error::ShortInput {
            actual_s: input.duration(),
            required_s: INPUT_SECONDS,
        });
    }
    Ok(input.clone().truncated(needed))
}

/// Band envelope before per-band normalization, 200 samples at 40 Hz.
fn raw_band_envelope(window: &Signal, band: &IirFilter, lowpass: &IirFilter) -> Result<Vec<f64>> {
    let banded = filter_apply(band, window)?;
    let env = analytic_envelope(&banded)?;
    let smooth = filter_apply(lowpass, &env)?;
    let mut out = decimate(&smooth, DECIMATION)?.into_samples();
    out.truncate(TAE_LEN);
    // The lowpass can ring slightly below zero.
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(out)
}

fn envelope_lowpass() -> Result<IirFilter> {
    design_butterworth_lowpass(ENVELOPE_LOWPASS_ORDER, ENVELOPE_CUTOFF_HZ, INPUT_SAMPLE_RATE)
}

/// One band's TAE, scaled to peak 1 (or all zeros for a silent band).
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnvelope {
    pub values: Vec<f64>,
    /// Envelope peak relative to input peak, dB, before normalization.
    pub level_db: f64,
    pub silent: bool,
}

pub fn extract_tae(input: &Signal, center_hz: f64) -> Result<BandEnvelope> {
    let window = checked_window(input)?;
    let band = octave_filter(center_hz, INPUT_SAMPLE_RATE)?;
    band_envelope(&window, &band, &envelope_lowpass()?)
}

fn band_envelope(window: &Signal, band: &IirFilter, lowpass: &IirFilter) -> Result<BandEnvelope> {
    let input_peak = window.peak();
    if input_peak <= 0.0 {
        return Err(Error::SilentInput);
    }
    let mut values = raw_band_envelope(window, band, lowpass)?;
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let level_db = if peak > 0.0 {
        20.0 * (peak / input_peak).log10()
    } else {
        f64::NEG_INFINITY
    };
    let silent = level_db < SILENT_BAND_DB;
    if silent {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(BandEnvelope {
        values,
        level_db,
        silent,
    })
}

/// Seven band TAEs of one recording, ascending band order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaeMatrix {
    pub rows: Vec<Vec<f64>>,
    pub band_centers: [f64; BAND_COUNT],
    pub source_id: String,
    pub normalization_gain: f64,
    pub silent_bands: Vec<f64>,
}

impl TaeMatrix {
    pub fn row(&self, band: usize) -> &[f64] {
        &self.rows[band]
    }

    /// Binary layout: `TAE1`, band count, length, sample rate (u32 LE each),
    /// then row-major f32 LE.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.rows.len() as u32, TAE_LEN as u32, TAE_RATE] {
            w.write_all(&v.to_le_bytes())?;
        }
        for row in &self.rows {
            for &v in row {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads the binary layout back; metadata other than the values is not stored.
    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::contract("not a TAE feature file"));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 3];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u32::from_le_bytes(word);
        }
        let [bands, len, rate] = header;
        if bands as usize != BAND_COUNT || len as usize != TAE_LEN || rate != TAE_RATE {
            return Err(Error::contract(format!(
                "unexpected TAE header: {bands} bands x {len} at {rate} Hz"
            )));
        }
        let mut rows = Vec::with_capacity(BAND_COUNT);
        for _ in 0..bands {
            let mut row = Vec::with_capacity(TAE_LEN);
            for _ in 0..len {
                r.read_exact(&mut word)?;
                row.push(f64::from(f32::from_le_bytes(word)));
            }
            rows.push(row);
        }
        Ok(Self {
            rows,
            band_centers: OCTAVE_CENTERS_HZ,
            source_id: String::new(),
            normalization_gain: 1.0,
            silent_bands: vec![],
        })
    }

    /// One line per band: center frequency followed by the 200 values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band_hz");
        for i in 0..TAE_LEN {
            out.push_str(&format!(",e{i}"));
        }
        out.push('\n');
        for (c, row) in self.band_centers.iter().zip(&self.rows) {
            out.push_str(&c.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Extracts all seven TAEs from the first five seconds of a recording.
pub fn tae_matrix(input: &Signal, source_id: &str) -> Result<TaeMatrix> {
    let window = checked_window(input)?;
    let (normalized, gain) = normalize_signal(&window)?;
    let lowpass = envelope_lowpass()?;
    let mut rows = Vec::with_capacity(BAND_COUNT);
    let mut silent_bands = Vec::new();
    for &center in &OCTAVE_CENTERS_HZ {
        let band = octave_filter(center, INPUT_SAMPLE_RATE)?;
        let env = band_envelope(&normalized, &band, &lowpass)?;
        if env.silent {
            silent_bands.push(center);
        }
        rows.push(env.values);
    }
    Ok(TaeMatrix {
        rows,
        band_centers: OCTAVE_CENTERS_HZ,
        source_id: source_id.to_string(),
        normalization_gain: gain,
        silent_bands,
    })
}
