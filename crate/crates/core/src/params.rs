//! ISO 3382-style room acoustic parameters from an impulse response.
//!
//! Integrals are rectangle-rule sums over the stored response; the stored end
//! of the response stands in for the infinite upper limit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rir::Rir;

/// Level reported where no energy remains.
pub const EDC_FLOOR_DB: f64 = -400.0;

/// Decay range used for T60 (a T30 fit, doubled).
pub const T60_FIT_DB: (f64, f64) = (-5.0, -35.0);
/// Decay range used for EDT.
pub const EDT_FIT_DB: (f64, f64) = (0.0, -10.0);

/// Method tag written into reports.
pub const T60_METHOD: &str = "T30 (-5..-35 dB least-squares, extrapolated to -60 dB)";

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecayCurve {
    time: Vec<f64>,
    level: Vec<f64>,
}

impl EnergyDecayCurve {
    /// Builds a curve from explicit samples; `level[0]` must be 0 dB and the
    /// levels non-increasing.
    pub fn from_levels(time: Vec<f64>, level: Vec<f64>) -> Result<Self> {
        if time.len() != level.len() || time.is_empty() {
            return Err(Error::contract("EDC needs equal-length, non-empty time and level"));
        }
        if level[0] != 0.0 {
            return Err(Error::contract("EDC must start at 0 dB"));
        }
        if level.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::contract("EDC must be non-increasing"));
        }
        if time.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("EDC time axis must be strictly ascending"));
        }
        Ok(Self { time, level })
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn level(&self) -> &[f64] {
        &self.level
    }

    pub fn min_level(&self) -> f64 {
        *self.level.last().unwrap()
    }

    /// Least-squares slope (dB/s) over the points between `upper` and `lower` dB.
    fn fit_slope(&self, upper: f64, lower: f64) -> Result<f64> {
        if self.min_level() > lower {
            return Err(Error::InsufficientDecay {
                required_db: lower,
                reached_db: self.min_level(),
            });
        }
        let start = self.level.iter().position(|&l| l <= upper).unwrap_or(0);
        let end = self.level.iter().rposition(|&l| l >= lower).unwrap_or(start);
        let (xs, ys) = (&self.time[start..=end], &self.level[start..=end]);
        if xs.len() < 2 {
            // Decay range falls between two samples; use the bracketing pair.
            let (i, j) = (start.saturating_sub(1), (end + 1).min(self.time.len() - 1));
            return Ok((self.level[j] - self.level[i]) / (self.time[j] - self.time[i]));
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        Ok(sxy / sxx)
    }
}

/// Backward-integrated, normalized energy of the response in dB.
pub fn energy_decay_curve(rir: &Rir) -> Result<EnergyDecayCurve> {
    let h = rir.signal().samples();
    let mut remaining = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (r, x) in remaining.iter_mut().zip(h).rev() {
        acc += x * x;
        *r = acc;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::contract("EDC of a zero-energy RIR is undefined"));
    }
    let fs = rir.sample_rate() as f64;
    let level = remaining
        .iter()
        .map(|&e| {
            if e > 0.0 {
                (10.0 * (e / total).log10()).max(EDC_FLOOR_DB)
            } else {
                EDC_FLOOR_DB
            }
        })
        .collect();
    let time = (0..h.len()).map(|i| i as f64 / fs).collect();
    Ok(EnergyDecayCurve { time, level })
}

pub fn estimate_t60(edc: &EnergyDecayCurve) -> Result<f64> {
    let slope = edc.fit_slope(T60_FIT_DB.0, T60_FIT_DB.1)?;
    decay_time(slope)
}

pub fn estimate_edt(edc: &EnergyDecayCurve) -> Result<f64> {
    let slope = edc.fit_slope(EDT_FIT_DB.0, EDT_FIT_DB.1)?;
    decay_time(slope)
}

fn decay_time(slope_db_per_s: f64) -> Result<f64> {
    if !(slope_db_per_s < 0.0) {
        return Err(Error::InsufficientDecay {
            required_db: -60.0,
            reached_db: 0.0,
        });
    }
    Ok(-60.0 / slope_db_per_s)
}

/// Clarity; a response with no energy after 80 ms is reported as anechoic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Clarity {
    Db(f64),
    Anechoic,
}

impl Clarity {
    pub fn db(self) -> Option<f64> {
        match self {
            Clarity::Db(v) => Some(v),
            Clarity::Anechoic => None,
        }
    }
}

impl fmt::Display for Clarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clarity::Db(v) => write!(f, "{v}"),
            Clarity::Anechoic => f.write_str("anechoic"),
        }
    }
}

fn boundary_index(rir: &Rir, seconds: f64) -> Result<usize> {
    let idx = (seconds * rir.sample_rate() as f64).round() as usize;
    if idx + 1 >= rir.signal().len() {
        return Err(Error::contract(format!(
            "RIR of {:.3} s is not longer than {seconds} s",
            rir.signal().duration()
        )));
    }
    Ok(idx)
}

fn split_energy(rir: &Rir, seconds: f64) -> Result<(f64, f64)> {
    let idx = boundary_index(rir, seconds)?;
    let h = rir.signal().samples();
    let early = h[..=idx].iter().map(|x| x * x).sum();
    let late = h[idx + 1..].iter().map(|x| x * x).sum();
    Ok((early, late))
}

/// Early (0..=80 ms) to late energy ratio in dB.
pub fn clarity_c80(rir: &Rir) -> Result<Clarity> {
    let (early, late) = split_energy(rir, 0.080)?;
    if late <= 0.0 {
        return Ok(Clarity::Anechoic);
    }
    Ok(Clarity::Db(10.0 * (early / late).log10()))
}

/// Percentage of energy within the first 50 ms.
pub fn deutlichkeit_d50(rir: &Rir) -> Result<f64> {
    let (early, late) = split_energy(rir, 0.050)?;
    Ok(100.0 * early / (early + late))
}

/// First moment of `h²` in seconds.
pub fn center_time(rir: &Rir) -> Result<f64> {
    let fs = rir.sample_rate() as f64;
    let (mut moment, mut total) = (0.0, 0.0);
    for (i, x) in rir.signal().samples().iter().enumerate() {
        let e = x * x;
        moment += e * i as f64;
        total += e;
    }
    if !(total > 0.0) {
        return Err(Error::contract("center time of a zero-energy RIR is undefined"));
    }
    Ok(moment / total / fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomParams {
    pub t60_s: f64,
    pub edt_s: f64,
    pub c80_db: Clarity,
    pub d50_pct: f64,
    pub ts_s: f64,
}

impl RoomParams {
    pub const CSV_HEADER: &'static str = "t60_s,edt_s,c80_db,d50_pct,ts_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.t60_s, self.edt_s, self.c80_db, self.d50_pct, self.ts_s
        )
    }
}

pub fn room_params(rir: &Rir) -> Result<RoomParams> {
    let edc = energy_decay_curve(rir)?;
    Ok(RoomParams {
        t60_s: estimate_t60(&edc)?,
        edt_s: estimate_edt(&edc)?,
        c80_db: clarity_c80(rir)?,
        d50_pct: deutlichkeit_d50(rir)?,
        ts_s: center_time(rir)?,
    })
}
