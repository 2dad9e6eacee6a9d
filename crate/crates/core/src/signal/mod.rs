//! Sampled waveforms and the DSP primitives shared by every other module:
//! Butterworth design, causal IIR filtering, analytic envelopes, decimation
//! and FFT convolution.

mod convolve;
mod envelope;
mod filter;
pub mod wav;

pub use convolve::convolve;
pub use envelope::analytic_envelope;
pub use filter::{
    design_butterworth_bandpass, design_butterworth_lowpass, filter_apply, Biquad, FilterDesign,
    FilterKind, IirFilter,
};

use crate::error::{Error, Result};

/// A uniformly sampled real-valued waveform.
///
/// Construction checks that every sample is finite and the rate is positive,
/// so downstream code can rely on both.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::range("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::contract(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// All-zero signal of `len` samples.
    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// A unit impulse at sample `at` in a signal of `len` samples.
    pub fn impulse(len: usize, at: usize, sample_rate: u32) -> Self {
        let mut s = Self::zeros(len, sample_rate);
        s.samples[at] = 1.0;
        s
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Sum of squared samples divided by the sample rate (∫x²dt).
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Keeps the first `len` samples (or all of them if shorter).
    pub fn truncated(mut self, len: usize) -> Self {
        self.samples.truncate(len);
        self
    }

    pub(crate) fn from_trusted(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate,
        }
    }
}

/// Keeps every `factor`-th sample.
///
/// The caller is responsible for band-limiting below the new Nyquist first.
pub fn decimate(input: &Signal, factor: usize) -> Result<Signal> {
    if factor == 0 {
        return Err(Error::range("decimation factor must be positive"));
    }
    if !(input.sample_rate as usize).is_multiple_of(factor) {
        return Err(Error::range(format!(
            "factor {factor} does not divide sample rate {}",
            input.sample_rate
        )));
    }
    let out_len = input.len() / factor;
    let samples = (0..out_len).map(|i| input.samples[i * factor]).collect();
    Ok(Signal::from_trusted(
        samples,
        input.sample_rate / factor as u32,
    ))
}


thread_local! {
    static PLANNER: std::cell::RefCell<rustfft::FftPlanner<f64>> =
        std::cell::RefCell::new(rustfft::FftPlanner::new());
}

/// Runs `f` with this thread's FFT planner, which caches plans by size.
pub(crate) fn with_planner<R>(f: impl FnOnce(&mut rustfft::FftPlanner<f64>) -> R) -> R {
    PLANNER.with(|p| f(&mut p.borrow_mut()))
}
