//! Mono 16 kHz WAV input/output (16-bit PCM or 32-bit float).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Signal;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a mono 16 kHz file. Integer samples are divided by 32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let unsupported = |reason: String| Error::UnsupportedAudio {
        path: path.to_path_buf(),
        reason,
    };
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels, mono required", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(format!(
            "sample rate {} Hz, {SAMPLE_RATE} Hz required",
            spec.sample_rate
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(unsupported(format!("{bits}-bit {fmt:?} samples")));
        }
    };
    Signal::new(samples, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, signal: &Signal, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    if signal.sample_rate() != SAMPLE_RATE {
        return Err(Error::contract(format!(
            "only {SAMPLE_RATE} Hz audio is written, got {} Hz",
            signal.sample_rate()
        )));
    }
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let mut w = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in signal.samples() {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v).map_err(wav_err(path))?;
            }
            WavEncoding::Float32 => w.write_sample(s as f32).map_err(wav_err(path))?,
        }
    }
    w.finalize().map_err(wav_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x = Signal::new(vec![0.5, -0.25, 0.125, 0.0], SAMPLE_RATE).unwrap();
        write_wav(&p, &x, WavEncoding::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), x);
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x = Signal::new(vec![0.5, -1.0, 0.25], SAMPLE_RATE).unwrap();
        write_wav(&p, &x, WavEncoding::Pcm16).unwrap();
        assert_eq!(read_wav(&p).unwrap().samples(), &[0.5, -1.0, 0.25]);
    }

    #[test]
    fn rejects_other_rates_and_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedAudio { .. })));

        let spec = WavSpec {
            channels: 2,
            sample_rate: SAMPLE_RATE,
            ..spec
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedAudio { .. })));
    }
}
