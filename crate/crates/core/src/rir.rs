//! Schroeder-model room impulse responses and modulation transfer functions.
//!
//! The model RIR is an exponentially decaying envelope `a·exp(-6.9 t / T60)`
//! on a noise carrier. Its MTF has the closed form
//! `[1 + (2π f_m T60 / 13.8)^2]^(-1/2)`, and the MTF of any RIR can be read
//! off the normalized Fourier transform of `h²`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bands::{third_octave_corners, BAND_COUNT, BAND_FILTER_ORDER, OCTAVE_CENTERS_HZ};
use crate::error::{Error, Result};
use crate::rng::{self, Role};
use crate::signal::wav::{self, WavEncoding};
use crate::signal::{design_butterworth_bandpass, filter_apply, Signal};

/// Decay constant of the amplitude envelope: `exp(-6.9)` is -60 dB in energy.
pub const DECAY_CONSTANT: f64 = 6.9;

pub const MIN_T60: f64 = 0.05;
pub const MAX_T60: f64 = 10.0;

/// Noise warm-up before the kept carrier so the bandpass has settled.
const BAND_NOISE_WARMUP_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carrier {
    FullBandWgn,
    ThirdOctaveBandLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T60Spec {
    FullBand(f64),
    PerBand(BandT60s),
}

impl T60Spec {
    pub fn max(&self) -> f64 {
        match self {
            T60Spec::FullBand(t) => *t,
            T60Spec::PerBand(b) => b.max(),
        }
    }
}

/// Per-octave-band reverberation times, ascending band order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; BAND_COUNT]", into = "[f64; BAND_COUNT]")]
pub struct BandT60s([f64; BAND_COUNT]);

impl BandT60s {
    pub fn new(values: [f64; BAND_COUNT]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::range(format!(
                    "band {} Hz T60 must be positive and finite, got {v}",
                    OCTAVE_CENTERS_HZ[i]
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn uniform(t60: f64) -> Result<Self> {
        Self::new([t60; BAND_COUNT])
    }

    pub fn values(&self) -> &[f64; BAND_COUNT] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / BAND_COUNT as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.0.map(f))
    }
}

impl TryFrom<[f64; BAND_COUNT]> for BandT60s {
    type Error = Error;
    fn try_from(v: [f64; BAND_COUNT]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BandT60s> for [f64; BAND_COUNT] {
    fn from(b: BandT60s) -> Self {
        b.0
    }
}

/// Synthesis parameters, stored next to a generated RIR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirSpec {
    pub t60: T60Spec,
    pub gain_a: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub carrier: Carrier,
}

impl RirSpec {
    /// Full-band Schroeder spec with unit gain and the default duration.
    pub fn schroeder(t60: f64, sample_rate: u32, seed: u64) -> Self {
        Self {
            t60: T60Spec::FullBand(t60),
            gain_a: 1.0,
            duration: default_duration(t60),
            sample_rate,
            seed,
            carrier: Carrier::FullBandWgn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |t: f64| {
            if (MIN_T60..=MAX_T60).contains(&t) {
                Ok(())
            } else {
                Err(Error::range(format!(
                    "T60 {t} s outside [{MIN_T60}, {MAX_T60}] s"
                )))
            }
        };
        match &self.t60 {
            T60Spec::FullBand(t) => check(*t)?,
            T60Spec::PerBand(b) => b.values().iter().try_for_each(|&t| check(t))?,
        }
        if !(self.gain_a > 0.0 && self.gain_a.is_finite()) {
            return Err(Error::range("gain must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(Error::range("sample rate must be positive"));
        }
        if !(self.duration >= self.t60.max()) {
            return Err(Error::range(format!(
                "duration {} s shorter than T60 {} s",
                self.duration,
                self.t60.max()
            )));
        }
        Ok(())
    }

    fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }
}

/// 1.5 × the longest T60, rounded up to a whole second.
pub fn default_duration(max_t60: f64) -> f64 {
    (1.5 * max_t60).ceil().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    signal: Signal,
    spec: Option<RirSpec>,
}

impl Rir {
    /// Wraps a measured or loaded response; rejects zero energy.
    pub fn new(signal: Signal, spec: Option<RirSpec>) -> Result<Self> {
        if signal.is_empty() || signal.energy() <= 0.0 {
            return Err(Error::contract("RIR has zero energy"));
        }
        Ok(Self { signal, spec })
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    pub fn spec(&self) -> Option<&RirSpec> {
        self.spec.as_ref()
    }

    pub fn sample_rate(&self) -> u32 {
        self.signal.sample_rate()
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(self.signal.scaled(gain), self.spec.clone())
    }

    /// Writes a 32-bit float WAV plus a `.json` sidecar carrying the spec.
    pub fn save(&self, wav_path: impl AsRef<Path>) -> Result<()> {
        let wav_path = wav_path.as_ref();
        wav::write_wav(wav_path, &self.signal, WavEncoding::Float32)?;
        if let Some(spec) = &self.spec {
            std::fs::write(sidecar_path(wav_path), serde_json::to_vec_pretty(spec)?)?;
        }
        Ok(())
    }

    /// Loads a WAV and, if present, its sidecar spec.
    pub fn load(wav_path: impl AsRef<Path>) -> Result<Self> {
        let wav_path = wav_path.as_ref();
        let signal = wav::read_wav(wav_path)?;
        let side = sidecar_path(wav_path);
        let spec = if side.exists() {
            Some(serde_json::from_slice(&std::fs::read(side)?)?)
        } else {
            None
        };
        Self::new(signal, spec)
    }
}

pub fn sidecar_path(wav_path: &Path) -> PathBuf {
    wav_path.with_extension("json")
}

fn decay_envelope(t60: f64, n: usize, sample_rate: u32) -> impl Iterator<Item = f64> {
    let rate = DECAY_CONSTANT / (t60 * sample_rate as f64);
    (0..n).map(move |i| (-rate * i as f64).exp())
}

/// `h(t) = a·exp(-6.9 t / T60)·c(t)` with a seeded white Gaussian carrier.
pub fn synth_schroeder_rir(spec: &RirSpec) -> Result<Rir> {
    spec.validate()?;
    let t60 = match (&spec.t60, spec.carrier) {
        (T60Spec::FullBand(t), Carrier::FullBandWgn) => *t,
        _ => {
            return Err(Error::contract(
                "Schroeder synthesis needs a scalar T60 and a full-band WGN carrier",
            ))
        }
    };
    let n = spec.sample_count();
    let carrier = rng::gaussian_vec(&mut rng::stream(spec.seed, Role::SchroederCarrier), n);
    let samples = decay_envelope(t60, n, spec.sample_rate)
        .zip(carrier)
        .map(|(e, c)| spec.gain_a * e * c)
        .collect();
    Rir::new(Signal::new(samples, spec.sample_rate)?, Some(spec.clone()))
}

/// Deterministic envelope-only response `exp(-6.9 t / T60)` (carrier ≡ 1).
pub fn envelope_rir(t60: f64, duration: f64, sample_rate: u32) -> Result<Rir> {
    if !(t60 > 0.0) {
        return Err(Error::range("T60 must be positive"));
    }
    let n = (duration * sample_rate as f64).round() as usize;
    let samples = decay_envelope(t60, n, sample_rate).collect();
    Rir::new(Signal::new(samples, sample_rate)?, None)
}

/// Closed-form MTF of the Schroeder model.
pub fn mtf_analytic(fm_hz: f64, t60: f64) -> f64 {
    let x = 2.0 * PI * fm_hz * t60 / (2.0 * DECAY_CONSTANT);
    (1.0 + x * x).powf(-0.5)
}

/// Modulation indices over ascending modulation frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtfCurve {
    pub frequencies: Vec<f64>,
    pub indices: Vec<f64>,
}

impl MtfCurve {
    pub fn analytic(frequencies: &[f64], t60: f64) -> Self {
        Self {
            frequencies: frequencies.to_vec(),
            indices: frequencies.iter().map(|&f| mtf_analytic(f, t60)).collect(),
        }
    }

    /// Pointwise mean of curves sharing one frequency grid.
    pub fn average(curves: &[MtfCurve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::contract("cannot average zero MTF curves"))?;
        let mut indices = vec![0.0; first.indices.len()];
        for c in curves {
            if c.frequencies != first.frequencies {
                return Err(Error::contract("MTF curves use different frequency grids"));
            }
            for (acc, m) in indices.iter_mut().zip(&c.indices) {
                *acc += m;
            }
        }
        indices.iter_mut().for_each(|m| *m /= curves.len() as f64);
        Ok(Self {
            frequencies: first.frequencies.clone(),
            indices,
        })
    }
}

/// `|Σ h² e^{-j2π f t}| / Σ h²` at each modulation frequency, clipped to 1.
pub fn mtf_from_rir(rir: &Rir, frequencies: &[f64]) -> Result<MtfCurve> {
    mtf_from_samples(rir.signal(), frequencies)
}

const PHASOR_BLOCK: usize = 1024;
const LANES: usize = 8;

pub(crate) fn mtf_from_samples(h: &Signal, frequencies: &[f64]) -> Result<MtfCurve> {
    let energy: Vec<f64> = h.samples().iter().map(|x| x * x).collect();
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::contract("MTF of a zero-energy RIR is undefined"));
    }
    // Trailing samples below f64 resolution of the total change nothing.
    let mut tail = 0.0;
    let mut len = energy.len();
    while len > 0 && tail + energy[len - 1] < total * 1e-18 {
        tail += energy[len - 1];
        len -= 1;
    }
    let energy = &energy[..len];
    let fs = h.sample_rate() as f64;
    let mut indices = Vec::with_capacity(frequencies.len());
    for group in frequencies.chunks(LANES) {
        let mut w = [0.0; LANES];
        for (wk, &f) in w.iter_mut().zip(group) {
            *wk = 2.0 * PI * f / fs;
        }
        let (ss, sc) = (w.map(f64::sin), w.map(f64::cos));
        let (mut re, mut im) = ([0.0; LANES], [0.0; LANES]);
        // Phasor rotation for a group of frequencies at once, re-anchored
        // every block to bound drift.
        for (b, block) in energy.chunks(PHASOR_BLOCK).enumerate() {
            let n0 = (b * PHASOR_BLOCK) as f64;
            let (mut s, mut c) = (w.map(|x| (x * n0).sin()), w.map(|x| (x * n0).cos()));
            for &e in block {
                for k in 0..LANES {
                    re[k] += e * c[k];
                    im[k] -= e * s[k];
                    let t = s[k] * sc[k] + c[k] * ss[k];
                    c[k] = c[k] * sc[k] - s[k] * ss[k];
                    s[k] = t;
                }
            }
        }
        for (k, &f) in group.iter().enumerate() {
            indices.push(if f == 0.0 {
                1.0
            } else {
                (re[k].hypot(im[k]) / total).min(1.0)
            });
        }
    }
    Ok(MtfCurve {
        frequencies: frequencies.to_vec(),
        indices,
    })
}

/// Unit-RMS Gaussian noise band-limited to one third-octave around `center_hz`.
pub fn bandlimited_noise(center_hz: f64, duration: f64, sample_rate: u32, seed: u64) -> Result<Signal> {
    let (lo, hi) = third_octave_corners(center_hz, sample_rate);
    let filter = design_butterworth_bandpass(BAND_FILTER_ORDER, lo, hi, sample_rate)?;
    let n = (duration * sample_rate as f64).round() as usize;
    let warmup = (BAND_NOISE_WARMUP_S * sample_rate as f64) as usize;
    let raw = rng::gaussian_vec(&mut rng::stream(seed, Role::BandNoise), n + warmup);
    let filtered = filter_apply(&filter, &Signal::from_trusted(raw, sample_rate))?;
    let kept = Signal::from_trusted(filtered.samples()[warmup..].to_vec(), sample_rate);
    let rms = kept.rms();
    if !(rms > 0.0) {
        return Err(Error::contract("band-limited noise has zero power"));
    }
    Ok(kept.scaled(1.0 / rms))
}

/// `ĥ(t) = Σ_k exp(-6.9 t / T60_k)·c_k(t)` with unit-RMS third-octave carriers.
pub fn reconstruct_rir(bands: &BandT60s, duration: f64, sample_rate: u32, seed: u64) -> Result<Rir> {
    let spec = RirSpec {
        t60: T60Spec::PerBand(*bands),
        gain_a: 1.0,
        duration,
        sample_rate,
        seed,
        carrier: Carrier::ThirdOctaveBandLimited,
    };
    spec.validate()?;
    let n = spec.sample_count();
    let mut out = vec![0.0; n];
    for (k, (&t60, &center)) in bands.values().iter().zip(&OCTAVE_CENTERS_HZ).enumerate() {
        let carrier = bandlimited_noise(center, duration, sample_rate, rng::derive_seed(&[seed, k as u64]))?;
        for ((o, e), c) in out
            .iter_mut()
            .zip(decay_envelope(t60, n, sample_rate))
            .zip(carrier.samples())
        {
            *o += e * c;
        }
    }
    Rir::new(Signal::new(out, sample_rate)?, Some(spec))
}
