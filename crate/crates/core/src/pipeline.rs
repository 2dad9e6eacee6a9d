//! End-to-end blind estimation, band-model training and evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{BAND_COUNT, OCTAVE_CENTERS_HZ};
use crate::dataset::{CorpusEntry, CorpusManifest, SplitLabel};
use crate::error::{Error, Result};
use crate::params::{room_params, Clarity, RoomParams};
use crate::regressor::{self, CnnModel, Pair, TrainConfig, TrainingLog};
use crate::rir::{default_duration, reconstruct_rir, BandT60s, MAX_T60, MIN_T60};
use crate::rng;
use crate::signal::wav::read_wav;
use crate::signal::Signal;
use crate::sti::{sti_from_band_t60s, sti_from_rir, StiConfig};
use crate::tae::{tae_matrix, TaeMatrix, INPUT_SAMPLE_RATE};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub sti: StiConfig,
    pub seed: u64,
    /// Reconstructed RIR realizations averaged for the room parameters.
    pub avg_rirs: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            sti: StiConfig::default(),
            seed: 0,
            avg_rirs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomReport {
    pub input_id: String,
    pub tool_version: String,
    pub band_t60s: BandT60s,
    pub params: RoomParams,
    /// From the analytic MTF of the estimated band T60s.
    pub sti: f64,
    /// Indirect STI measured on the reconstructed response, for cross-checking.
    pub sti_reconstructed: f64,
    pub reconstruction_seed: u64,
    pub averaged_rirs: usize,
    pub warnings: Vec<String>,
}

/// Seven models, one per octave band in order.
pub fn check_models(models: &[CnnModel]) -> Result<()> {
    if models.len() != BAND_COUNT {
        return Err(Error::BandMismatch(format!(
            "expected {BAND_COUNT} band models, got {}",
            models.len()
        )));
    }
    for (band, m) in models.iter().enumerate() {
        if m.band() != band {
            return Err(Error::BandMismatch(format!(
                "slot for {} Hz holds the {} Hz model",
                OCTAVE_CENTERS_HZ[band],
                OCTAVE_CENTERS_HZ.get(m.band()).copied().unwrap_or(f64::NAN)
            )));
        }
    }
    Ok(())
}

/// Per-band inference. Outputs outside the valid T60 range are clamped
/// with a warning.
pub fn estimate_band_t60s(tae: &TaeMatrix, models: &[CnnModel]) -> Result<(BandT60s, Vec<String>)> {
    check_models(models)?;
    let mut warnings = Vec::new();
    let mut values = [0.0; BAND_COUNT];
    for (band, m) in models.iter().enumerate() {
        let raw = m.predict(tae.row(band))?;
        let t = raw.clamp(MIN_T60, MAX_T60);
        if t != raw {
            warnings.push(format!(
                "{} Hz estimate {raw:.4} s clamped to {t} s",
                OCTAVE_CENTERS_HZ[band]
            ));
        }
        values[band] = t;
    }
    for hz in &tae.silent_bands {
        warnings.push(format!("{hz} Hz band is silent in the input"));
    }
    Ok((BandT60s::new(values)?, warnings))
}

/// Band T60s → reconstructed RIR(s) → room parameters and STI.
pub fn estimate_from_tae(tae: &TaeMatrix, models: &[CnnModel], opts: &EstimateOptions) -> Result<RoomReport> {
    if opts.avg_rirs == 0 {
        return Err(Error::range("--avg-rirs must be at least 1"));
    }
    let (bands, warnings) = estimate_band_t60s(tae, models)?;
    report_from_band_t60s(bands, warnings, &tae.source_id, opts)
}

/// Room report for known band T60s: reconstruction, parameters, STI.
pub fn report_from_band_t60s(
    bands: BandT60s,
    warnings: Vec<String>,
    input_id: &str,
    opts: &EstimateOptions,
) -> Result<RoomReport> {
    if opts.avg_rirs == 0 {
        return Err(Error::range("--avg-rirs must be at least 1"));
    }
    let duration = default_duration(bands.max());
    let mut acc = [0.0; 4];
    let (mut c80_sum, mut c80_n) = (0.0, 0usize);
    let mut sti_rec = 0.0;
    for i in 0..opts.avg_rirs {
        let seed = if i == 0 {
            opts.seed
        } else {
            rng::derive_seed(&[opts.seed, i as u64])
        };
        let h = reconstruct_rir(&bands, duration, INPUT_SAMPLE_RATE, seed)?;
        let p = room_params(&h)?;
        acc[0] += p.t60_s;
        acc[1] += p.edt_s;
        acc[2] += p.d50_pct;
        acc[3] += p.ts_s;
        if let Clarity::Db(db) = p.c80_db {
            c80_sum += db;
            c80_n += 1;
        }
        sti_rec += sti_from_rir(&h, &opts.sti)?.sti;
    }
    let n = opts.avg_rirs as f64;
    let params = RoomParams {
        t60_s: acc[0] / n,
        edt_s: acc[1] / n,
        c80_db: if c80_n > 0 {
            Clarity::Db(c80_sum / c80_n as f64)
        } else {
            Clarity::Anechoic
        },
        d50_pct: acc[2] / n,
        ts_s: acc[3] / n,
    };
    Ok(RoomReport {
        input_id: input_id.into(),
        tool_version: TOOL_VERSION.into(),
        sti: sti_from_band_t60s(&bands, &opts.sti),
        sti_reconstructed: sti_rec / n,
        band_t60s: bands,
        params,
        reconstruction_seed: opts.seed,
        averaged_rirs: opts.avg_rirs,
        warnings,
    })
}

/// Full chain from a reverberant recording.
pub fn estimate_all(
    input: &Signal,
    input_id: &str,
    models: &[CnnModel],
    opts: &EstimateOptions,
) -> Result<RoomReport> {
    check_models(models)?;
    let tae = tae_matrix(input, input_id)?;
    estimate_from_tae(&tae, models, opts)
}

pub fn estimate_file(path: &Path, models: &[CnnModel], opts: &EstimateOptions) -> Result<RoomReport> {
    let id = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    estimate_all(&read_wav(path)?, &id, models, opts)
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::contract("correlation needs at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::contract("RMSE of empty input"));
    }
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / x.len() as f64).sqrt())
}

/// Reference values for one corpus entry, measured on its true RIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub params: RoomParams,
    pub sti: f64,
}

pub fn ground_truth(entry: &CorpusEntry, sti: &StiConfig) -> Result<Truth> {
    let rir = entry.true_rir()?;
    Ok(Truth {
        params: room_params(&rir)?,
        sti: sti_from_rir(&rir, sti)?.sti,
    })
}

/// The six evaluated quantities, in figure order.
pub const QUANTITIES: [&str; 6] = ["t60_s", "edt_s", "c80_db", "d50_pct", "ts_s", "sti"];

fn quantities(params: &RoomParams, sti: f64) -> [Option<f64>; 6] {
    [
        Some(params.t60_s),
        Some(params.edt_s),
        params.c80_db.db(),
        Some(params.d50_pct),
        Some(params.ts_s),
        Some(sti),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub quantity: String,
    pub rmse: f64,
    pub pearson_r: f64,
    pub n: usize,
    /// `(ground truth, estimate)` pairs sorted by ground truth.
    pub scatter: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub entry: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub evaluated: usize,
    pub excluded: usize,
    pub exclusions: Vec<Exclusion>,
    pub quantities: Vec<QuantityStats>,
}

impl EvalReport {
    pub fn get(&self, quantity: &str) -> Option<&QuantityStats> {
        self.quantities.iter().find(|q| q.quantity == quantity)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per quantity: `quantity,rmse,pearson_r,n`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("quantity,rmse,pearson_r,n\n");
        for q in &self.quantities {
            s.push_str(&format!("{},{},{},{}\n", q.quantity, q.rmse, q.pearson_r, q.n));
        }
        s
    }
}

/// Aggregates `(truth, estimate)` results; `Err` items become exclusions.
pub fn aggregate(results: Vec<(String, Result<(Truth, RoomReport)>)>) -> Result<EvalReport> {
    let mut cols: Vec<Vec<(f64, f64)>> = vec![Vec::new(); QUANTITIES.len()];
    let mut exclusions = Vec::new();
    let mut evaluated = 0;
    for (id, r) in results {
        match r {
            Ok((truth, est)) => {
                evaluated += 1;
                let t = quantities(&truth.params, truth.sti);
                let e = quantities(&est.params, est.sti);
                for (k, col) in cols.iter_mut().enumerate() {
                    if let (Some(a), Some(b)) = (t[k], e[k]) {
                        col.push((a, b));
                    }
                }
            }
            Err(err) => exclusions.push(Exclusion {
                entry: id,
                reason: err.to_string(),
            }),
        }
    }
    let mut stats = Vec::new();
    for (name, mut col) in QUANTITIES.iter().zip(cols) {
        col.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let (gt, est): (Vec<f64>, Vec<f64>) = col.iter().copied().unzip();
        stats.push(QuantityStats {
            quantity: name.to_string(),
            rmse: rmse(&gt, &est)?,
            pearson_r: pearson_r(&gt, &est)?,
            n: col.len(),
            scatter: col,
        });
    }
    Ok(EvalReport {
        tool_version: TOOL_VERSION.into(),
        evaluated,
        excluded: exclusions.len(),
        exclusions,
        quantities: stats,
    })
}

/// Evaluates `entries` with a caller-supplied estimator; ground truth is
/// always measured on the regenerated true RIR.
pub fn evaluate_with<F>(entries: &[&CorpusEntry], sti: &StiConfig, estimate: F) -> Result<EvalReport>
where
    F: Fn(&CorpusEntry) -> Result<RoomReport> + Sync,
{
    if entries.is_empty() {
        return Err(Error::contract("nothing to evaluate"));
    }
    let results = entries
        .par_iter()
        .map(|e| {
            let id = e.reverberant_path.display().to_string();
            let r = ground_truth(e, sti).and_then(|t| Ok((t, estimate(e)?)));
            (id, r)
        })
        .collect();
    aggregate(results)
}

/// Test split of a corpus on disk.
pub fn evaluate(
    manifest: &CorpusManifest,
    corpus_dir: &Path,
    models: &[CnnModel],
    opts: &EstimateOptions,
) -> Result<EvalReport> {
    check_models(models)?;
    let test: Vec<&CorpusEntry> = manifest.entries_in(SplitLabel::Test).collect();
    evaluate_with(&test, &opts.sti, |e| {
        estimate_file(&corpus_dir.join(&e.reverberant_path), models, opts)
    })
}

/// Per-band training sets; silent band rows are skipped.
pub fn band_pairs<'a>(items: impl IntoIterator<Item = (&'a CorpusEntry, &'a TaeMatrix)>) -> Vec<Vec<Pair>> {
    let mut out = vec![Vec::new(); BAND_COUNT];
    for (entry, tae) in items {
        for (band, pairs) in out.iter_mut().enumerate() {
            if tae.silent_bands.contains(&OCTAVE_CENTERS_HZ[band]) {
                continue;
            }
            pairs.push(Pair {
                tae: tae.row(band).to_vec(),
                t60: entry.ground_truth.values()[band],
            });
        }
    }
    out
}

/// Trains the seven band models; band `k` uses seed `derive_seed([seed, k])`.
pub fn train_bands(pairs: &[Vec<Pair>], config: &TrainConfig) -> Result<Vec<(CnnModel, TrainingLog)>> {
    if pairs.len() != BAND_COUNT {
        return Err(Error::BandMismatch(format!(
            "expected {BAND_COUNT} training sets, got {}",
            pairs.len()
        )));
    }
    (0..BAND_COUNT)
        .into_par_iter()
        .map(|band| {
            let cfg = TrainConfig {
                seed: rng::derive_seed(&[config.seed, band as u64]),
                ..config.clone()
            };
            regressor::train(band, &pairs[band], &cfg)
        })
        .collect()
}

/// TAE matrices for the entries of one split, read from the corpus directory.
pub fn load_taes(manifest: &CorpusManifest, corpus_dir: &Path, label: SplitLabel) -> Result<Vec<(CorpusEntry, TaeMatrix)>> {
    let entries: Vec<&CorpusEntry> = manifest.entries_in(label).collect();
    entries
        .par_iter()
        .map(|e| {
            let path = corpus_dir.join(&e.reverberant_path);
            let tae = tae_matrix(&read_wav(&path)?, &e.reverberant_path.display().to_string())?;
            Ok(((*e).clone(), tae))
        })
        .collect()
}

/// Scatter CSVs named after the figure panels (a) to (f).
pub fn emit_plots(report: &EvalReport, out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (panel, q) in ["a", "b", "c", "d", "e", "f"].iter().zip(&report.quantities) {
        let path = out_dir.join(format!("fig3{panel}_{}.csv", q.quantity));
        let mut s = String::from("ground_truth,estimate\n");
        for (g, e) in &q.scatter {
            s.push_str(&format!("{g},{e}\n"));
        }
        std::fs::write(&path, s)?;
        written.push(path);
    }
    Ok(written)
}
