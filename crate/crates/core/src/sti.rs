//! Speech Transmission Index by the indirect method: per-band MTF, apparent
//! SNR, transmission index, band-weighted sum.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bands::{octave_filterbank, BAND_COUNT, OCTAVE_CENTERS_HZ};
use crate::error::{Error, Result};
use crate::rir::{mtf_from_samples, BandT60s, MtfCurve, Rir};
use crate::signal::{filter_apply, Signal};

pub const MODULATION_FREQUENCY_COUNT: usize = 14;

/// Text of the configuration compiled in as the default.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/sti_default.toml");
pub const MALE_2003_CONFIG_TOML: &str = include_str!("../config/sti_2003_male.toml");
pub const FEMALE_2003_CONFIG_TOML: &str = include_str!("../config/sti_2003_female.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StiConfig {
    pub profile: String,
    pub modulation_frequencies: Vec<f64>,
    /// Octave weights (alpha), ascending band order.
    pub band_weights: Vec<f64>,
    /// Adjacent-band redundancy corrections (beta); empty for none.
    #[serde(default)]
    pub redundancy: Vec<f64>,
    pub snr_clip_db: f64,
}

impl Default for StiConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("bundled STI config is valid")
    }
}

impl StiConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StiConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Bundled profile by name: `default`, `2003-male` or `2003-female`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "2003-male" => Self::from_toml(MALE_2003_CONFIG_TOML),
            "2003-female" => Self::from_toml(FEMALE_2003_CONFIG_TOML),
            other => Err(Error::Config(format!("unknown STI profile {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fm = &self.modulation_frequencies;
        if fm.len() != MODULATION_FREQUENCY_COUNT {
            return Err(Error::Config(format!(
                "{} modulation frequencies, {MODULATION_FREQUENCY_COUNT} required",
                fm.len()
            )));
        }
        if fm.windows(2).any(|w| w[1] <= w[0]) || fm[0] <= 0.0 {
            return Err(Error::Config("modulation frequencies must be positive and ascending".into()));
        }
        if self.band_weights.len() != BAND_COUNT {
            return Err(Error::Config(format!("{BAND_COUNT} band weights required")));
        }
        if !(self.redundancy.is_empty() || self.redundancy.len() == BAND_COUNT - 1) {
            return Err(Error::Config(format!(
                "redundancy needs {} values or none",
                BAND_COUNT - 1
            )));
        }
        if self.band_weights.iter().chain(&self.redundancy).any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("weights must be non-negative".into()));
        }
        let net: f64 = self.band_weights.iter().sum::<f64>() - self.redundancy.iter().sum::<f64>();
        if (net - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "weights minus redundancy must sum to 1, got {net}"
            )));
        }
        if !(self.snr_clip_db > 0.0) {
            return Err(Error::Config("SNR clip must be positive".into()));
        }
        Ok(())
    }

    /// Combines per-band modulation transmission indices.
    pub fn combine(&self, mtis: &[f64; BAND_COUNT]) -> f64 {
        let mut sti: f64 = self.band_weights.iter().zip(mtis).map(|(w, m)| w * m).sum();
        for (k, beta) in self.redundancy.iter().enumerate() {
            sti -= beta * (mtis[k] * mtis[k + 1]).sqrt();
        }
        sti.clamp(0.0, 1.0)
    }
}

/// Transmission index from a modulation index via the clipped apparent SNR.
pub fn ti_from_m(m: f64, snr_clip_db: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if m >= 1.0 {
        return 1.0;
    }
    let snr = (10.0 * (m / (1.0 - m)).log10()).clamp(-snr_clip_db, snr_clip_db);
    (snr + snr_clip_db) / (2.0 * snr_clip_db)
}

/// Mean transmission index over the configured modulation frequencies.
pub fn mti_from_mtf(curve: &MtfCurve, config: &StiConfig) -> Result<f64> {
    let matches = curve.frequencies.len() == config.modulation_frequencies.len()
        && curve
            .frequencies
            .iter()
            .zip(&config.modulation_frequencies)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0));
    if !matches || curve.indices.len() != curve.frequencies.len() {
        return Err(Error::contract(
            "MTF curve frequencies differ from the configured modulation frequencies",
        ));
    }
    let sum: f64 = curve.indices.iter().map(|&m| ti_from_m(m, config.snr_clip_db)).sum();
    Ok(sum / curve.indices.len() as f64)
}

/// STI from per-band T60s through the closed-form Schroeder MTF.
pub fn sti_from_band_t60s(bands: &BandT60s, config: &StiConfig) -> f64 {
    let mtis = bands.values().map(|t60| {
        let curve = MtfCurve::analytic(&config.modulation_frequencies, t60);
        mti_from_mtf(&curve, config).expect("curve built on config grid")
    });
    config.combine(&mtis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiResult {
    pub sti: f64,
    pub mtis: [f64; BAND_COUNT],
    pub band_curves: Vec<MtfCurve>,
    /// Bands whose filtered response had no energy (their MTI is 0).
    pub silent_bands: Vec<f64>,
}

/// STI from an impulse response: octave filtering, numeric MTF per band.
///
/// Each band MTF is divided by the MTF of the band filter's own impulse
/// response (same length), since the expected squared band response of a
/// noise-carrier RIR is the envelope² convolved with the filter's squared
/// impulse response.
pub fn sti_from_rir(rir: &Rir, config: &StiConfig) -> Result<StiResult> {
    let bank = octave_filterbank(rir.sample_rate())?;
    let fm = &config.modulation_frequencies;
    let probe = Signal::impulse(rir.signal().len(), 0, rir.sample_rate());
    let mut mtis = [0.0; BAND_COUNT];
    let mut band_curves = Vec::with_capacity(BAND_COUNT);
    let mut silent_bands = Vec::new();
    for (k, filter) in bank.iter().enumerate() {
        let band = filter_apply(filter, rir.signal())?;
        match mtf_from_samples(&band, fm) {
            Ok(mut curve) => {
                let own = mtf_from_samples(&filter_apply(filter, &probe)?, fm)?;
                for (m, g) in curve.indices.iter_mut().zip(&own.indices) {
                    *m = (*m / g).min(1.0);
                }
                mtis[k] = mti_from_mtf(&curve, config)?;
                band_curves.push(curve);
            }
            Err(Error::Contract(_)) => {
                silent_bands.push(OCTAVE_CENTERS_HZ[k]);
                band_curves.push(MtfCurve {
                    frequencies: config.modulation_frequencies.clone(),
                    indices: vec![0.0; config.modulation_frequencies.len()],
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(StiResult {
        sti: config.combine(&mtis),
        mtis,
        band_curves,
        silent_bands,
    })
}
