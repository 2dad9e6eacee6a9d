//! Reverberant corpus generation, per-band ground truth and train/test splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{octave_filterbank, BAND_COUNT, OCTAVE_CENTERS_HZ};
use crate::error::{Error, Result};
use crate::params::{energy_decay_curve, estimate_t60};
use crate::rir::{bandlimited_noise, synth_schroeder_rir, BandT60s, Rir, RirSpec, MAX_T60, MIN_T60};
use crate::rng::{self, Role};
use crate::signal::wav::{read_wav, write_wav, WavEncoding, SAMPLE_RATE};
use crate::signal::{convolve, filter_apply, Signal};
use crate::tae::INPUT_SECONDS;

pub const MANIFEST_FORMAT: &str = "mtf-room-corpus";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;
pub const SYNTHETIC_UTTERANCE_COUNT: usize = 10;

/// `from..=to` in `step` increments, computed on an integer lattice so the
/// values print cleanly.
pub fn t60_grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((from + step * i as f64) * 1e6).round() / 1e6)
        .collect()
}

/// 0.2 s to 3.0 s in 0.1 s steps.
pub fn standard_t60_grid() -> Vec<f64> {
    t60_grid(0.2, 3.0, 0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub t60_grid: Vec<f64>,
    /// Carrier realizations per (utterance, T60).
    pub carrier_seeds: usize,
    pub seed: u64,
}

impl CorpusConfig {
    /// 29 T60 values × 100 carriers.
    pub fn full(seed: u64) -> Self {
        Self {
            t60_grid: standard_t60_grid(),
            carrier_seeds: 100,
            seed,
        }
    }

    /// 29 T60 values × 10 carriers.
    pub fn desk(seed: u64) -> Self {
        Self {
            carrier_seeds: 10,
            ..Self::full(seed)
        }
    }

    pub fn entry_count(&self, utterances: usize) -> usize {
        self.t60_grid.len() * self.carrier_seeds * utterances
    }

    pub fn validate(&self) -> Result<()> {
        if self.t60_grid.is_empty() || self.carrier_seeds == 0 {
            return Err(Error::Config("empty T60 grid or zero carrier seeds".into()));
        }
        for &t in &self.t60_grid {
            if !(MIN_T60..=MAX_T60).contains(&t) {
                return Err(Error::Config(format!("grid T60 {t} s out of range")));
            }
        }
        Ok(())
    }
}

/// A clean speech recording (or stand-in) used as corpus source.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub path: Option<PathBuf>,
    pub signal: Signal,
}

/// Burst-gated multi-band noise, 5 s at 16 kHz.
///
/// Syllable-length bursts (120-400 ms, 10 ms ramps) separated by short
/// pauses and the odd phrase break, then 0.6-1.2 s of silence at the end.
/// Each octave band has its own carrier and level.
pub fn synthetic_utterance(index: usize, seed: u64) -> Result<Signal> {
    let fs = SAMPLE_RATE;
    let n = (INPUT_SECONDS * fs as f64) as usize;
    let base = rng::derive_seed(&[seed, index as u64]);
    let mut rng = rng::stream(base, Role::Utterance);
    let ramp = (0.01 * fs as f64) as usize;

    let mut gate = vec![0.0; n];
    let mut at = (rng.gen_range(0.02..0.15) * fs as f64) as usize;
    // Sentence-final silence.
    let end = n - (rng.gen_range(0.6..1.2) * fs as f64) as usize;
    while at < end {
        let len = ((rng.gen_range(0.12..0.4) * fs as f64) as usize).min(end - at).max(2 * ramp);
        let level = rng.gen_range(0.5..1.0);
        for i in 0..len.min(n - at) {
            let edge = i.min(len - 1 - i);
            let w = if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            gate[at + i] = level * w;
        }
        let gap = if rng.gen_bool(0.3) {
            rng.gen_range(0.5..1.1)
        } else {
            rng.gen_range(0.08..0.35)
        };
        at += len + (gap * fs as f64) as usize;
    }

    let mut out = vec![0.0; n];
    for (k, &center) in OCTAVE_CENTERS_HZ.iter().enumerate() {
        let gain = rng.gen_range(0.3..1.0);
        let carrier = bandlimited_noise(center, INPUT_SECONDS, fs, rng::derive_seed(&[base, k as u64]))?;
        for ((o, g), c) in out.iter_mut().zip(&gate).zip(carrier.samples()) {
            *o += gain * g * c;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Signal::new(out.into_iter().map(|v| 0.9 * v / peak).collect(), fs)
}

pub fn synthetic_utterances(count: usize, seed: u64) -> Result<Vec<Utterance>> {
    (0..count)
        .map(|i| {
            Ok(Utterance {
                id: format!("synth_{i:02}"),
                path: None,
                signal: synthetic_utterance(i, seed)?,
            })
        })
        .collect()
}

/// Writes the synthetic utterances as 16-bit WAVs into `dir`.
pub fn write_synthetic_speech(dir: &Path, count: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    synthetic_utterances(count, seed)?
        .into_iter()
        .map(|u| {
            let p = dir.join(format!("{}.wav", u.id));
            write_wav(&p, &u.signal, WavEncoding::Pcm16)?;
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFailure {
    pub path: PathBuf,
    pub reason: String,
}

/// Reads every `*.wav` in `dir` (sorted by name). Files that are not mono
/// 16 kHz or shorter than 5 s are reported, not fatal.
pub fn load_speech_dir(dir: &Path) -> Result<(Vec<Utterance>, Vec<SourceFailure>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
        })
        .collect();
    paths.sort();
    let mut utts = Vec::new();
    let mut failures = Vec::new();
    for p in paths {
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match read_wav(&p) {
            Ok(s) if s.duration() + 1e-9 >= INPUT_SECONDS => utts.push(Utterance {
                id,
                path: Some(p),
                signal: s,
            }),
            Ok(s) => failures.push(SourceFailure {
                path: p,
                reason: format!("{:.3} s long, at least {INPUT_SECONDS} s required", s.duration()),
            }),
            Err(e) => failures.push(SourceFailure {
                path: p,
                reason: e.to_string(),
            }),
        }
    }
    Ok((utts, failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub utterance_id: String,
    pub speech_path: Option<PathBuf>,
    pub t60_nominal: f64,
    pub t60_index: usize,
    pub carrier_index: usize,
    pub carrier_seed: u64,
    /// Relative to the corpus directory.
    pub reverberant_path: PathBuf,
    pub ground_truth: BandT60s,
    /// Bands whose measured T60 fell back to the nominal value.
    pub fallback_bands: Vec<usize>,
    pub split: Option<SplitLabel>,
}

impl CorpusEntry {
    /// Regenerates the Schroeder RIR this entry was convolved with.
    pub fn true_rir(&self) -> Result<Rir> {
        synth_schroeder_rir(&RirSpec::schroeder(self.t60_nominal, SAMPLE_RATE, self.carrier_seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_fraction: f64,
    pub seed: u64,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config: CorpusConfig,
    pub utterances: Vec<String>,
    pub failures: Vec<SourceFailure>,
    pub split: Option<SplitInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    /// JSON lines: the header object, then one entry per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = serde_json::to_string(&self.header)?;
        s.push('\n');
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = serde_json::from_str(
            lines
                .next()
                .ok_or_else(|| Error::Config("empty manifest".into()))?,
        )?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest {} v{}",
                header.format, header.version
            )));
        }
        let entries = lines
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, entries })
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, self.to_jsonl()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn entries_in(&self, label: SplitLabel) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == Some(label))
    }

    pub fn fallback_rate(&self) -> f64 {
        let bands: usize = self.entries.iter().map(|e| e.fallback_bands.len()).sum();
        bands as f64 / (self.entries.len() * BAND_COUNT).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandGroundTruth {
    pub bands: BandT60s,
    pub fallback: Vec<usize>,
}

/// Octave-filters the RIR and measures T60 per band. A band whose decay
/// cannot be measured, or whose value leaves the valid T60 range, takes the
/// nominal value and is listed in `fallback`.
pub fn ground_truth_per_band(rir: &Rir, nominal: &BandT60s) -> Result<BandGroundTruth> {
    let mut values = [0.0; BAND_COUNT];
    let mut fallback = Vec::new();
    for (k, filter) in octave_filterbank(rir.sample_rate())?.iter().enumerate() {
        let band = filter_apply(filter, rir.signal())?;
        let measured = Rir::new(band, None)
            .and_then(|b| energy_decay_curve(&b))
            .and_then(|edc| estimate_t60(&edc))
            .ok()
            .filter(|t| (MIN_T60..=MAX_T60).contains(t));
        values[k] = measured.unwrap_or_else(|| {
            fallback.push(k);
            nominal.values()[k]
        });
    }
    Ok(BandGroundTruth {
        bands: BandT60s::new(values)?,
        fallback,
    })
}

fn entry_rel_path(t60: f64, carrier: usize, utterance: &str) -> PathBuf {
    PathBuf::from(format!("{t60:.1}"))
        .join(carrier.to_string())
        .join(format!("{utterance}.wav"))
}

/// Renders every (T60, carrier, utterance) combination: synthesize the RIR,
/// convolve, truncate to the speech length, measure ground truth, then hand
/// the reverberant signal to `sink`. Work is spread over the rayon pool;
/// output order is fixed.
pub fn render_corpus<T, F>(
    utterances: &[Utterance],
    config: &CorpusConfig,
    sink: F,
) -> Result<(Vec<CorpusEntry>, Vec<T>)>
where
    T: Send,
    F: Fn(&CorpusEntry, &Signal) -> Result<T> + Sync,
{
    config.validate()?;
    if utterances.is_empty() {
        return Err(Error::contract("no usable speech utterances"));
    }
    let mut jobs = Vec::with_capacity(config.entry_count(utterances.len()));
    for (ti, _) in config.t60_grid.iter().enumerate() {
        for ci in 0..config.carrier_seeds {
            for ui in 0..utterances.len() {
                jobs.push((ti, ci, ui));
            }
        }
    }
    let results: Vec<Result<(CorpusEntry, T)>> = jobs
        .par_iter()
        .map(|&(ti, ci, ui)| {
            let utt = &utterances[ui];
            let t60 = config.t60_grid[ti];
            let carrier_seed =
                rng::derive_seed(&[config.seed, ui as u64, ti as u64, ci as u64]);
            let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, SAMPLE_RATE, carrier_seed))?;
            let gt = ground_truth_per_band(&rir, &BandT60s::uniform(t60)?)?;
            let wet = convolve(&utt.signal, rir.signal())?.truncated(utt.signal.len());
            let entry = CorpusEntry {
                utterance_id: utt.id.clone(),
                speech_path: utt.path.clone(),
                t60_nominal: t60,
                t60_index: ti,
                carrier_index: ci,
                carrier_seed,
                reverberant_path: entry_rel_path(t60, ci, &utt.id),
                ground_truth: gt.bands,
                fallback_bands: gt.fallback,
                split: None,
            };
            let out = sink(&entry, &wet)?;
            Ok((entry, out))
        })
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut outs = Vec::with_capacity(results.len());
    for r in results {
        let (e, o) = r?;
        entries.push(e);
        outs.push(o);
    }
    Ok((entries, outs))
}

fn header(config: &CorpusConfig, utterances: &[Utterance], failures: Vec<SourceFailure>) -> ManifestHeader {
    ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        utterances: utterances.iter().map(|u| u.id.clone()).collect(),
        failures,
        split: None,
    }
}

/// Renders the corpus to 32-bit float WAVs under `out_dir` and writes
/// `manifest.jsonl` there once every file is in place.
pub fn gen_corpus_from(
    utterances: &[Utterance],
    failures: Vec<SourceFailure>,
    config: &CorpusConfig,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(out_dir)?;
    let (entries, _) = render_corpus(utterances, config, |entry, wet| {
        let path = out_dir.join(&entry.reverberant_path);
        std::fs::create_dir_all(path.parent().expect("entry path has a parent"))?;
        write_wav(&path, wet, WavEncoding::Float32)
    })?;
    let manifest = CorpusManifest {
        header: header(config, utterances, failures),
        entries,
    };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

pub fn gen_corpus(speech_dir: &Path, config: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifest> {
    let (utts, failures) = load_speech_dir(speech_dir)?;
    gen_corpus_from(&utts, failures, config, out_dir)
}

/// Builds a manifest for entries rendered in memory.
pub fn manifest_from(config: &CorpusConfig, utterances: &[Utterance], entries: Vec<CorpusEntry>) -> CorpusManifest {
    CorpusManifest {
        header: header(config, utterances, Vec::new()),
        entries,
    }
}

/// Stratified by nominal T60: each stratum is shuffled with its own seeded
/// stream and contributes at least one entry to each side. Per-stratum
/// counts are allocated by largest remainder so the totals land within one
/// entry of the requested fraction.
pub fn split(manifest: &CorpusManifest, train_fraction: f64, seed: u64) -> Result<CorpusManifest> {
    if manifest.entries.is_empty() {
        return Err(Error::contract("cannot split an empty manifest"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::range(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut strata: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        match strata.iter_mut().find(|(t, _)| *t == e.t60_nominal) {
            Some((_, v)) => v.push(i),
            None => strata.push((e.t60_nominal, vec![i])),
        }
    }
    strata.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((t60, v)) = strata.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Stratification {
            t60: *t60,
            count: v.len(),
        });
    }

    let target = (manifest.entries.len() as f64 * train_fraction).round() as i64;
    let ideal: Vec<f64> = strata.iter().map(|(_, v)| v.len() as f64 * train_fraction).collect();
    let mut take: Vec<i64> = strata
        .iter()
        .zip(&ideal)
        .map(|((_, v), x)| (x.floor() as i64).clamp(1, v.len() as i64 - 1))
        .collect();
    let mut by_remainder: Vec<usize> = (0..strata.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = ideal[a] - take[a] as f64;
        let rb = ideal[b] - take[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut diff = target - take.iter().sum::<i64>();
    while diff != 0 {
        let before = diff;
        for &s in &by_remainder {
            let n = strata[s].1.len() as i64;
            if diff > 0 && take[s] < n - 1 {
                take[s] += 1;
                diff -= 1;
            }
            if diff == 0 {
                break;
            }
        }
        for &s in by_remainder.iter().rev() {
            if diff < 0 && take[s] > 1 {
                take[s] -= 1;
                diff += 1;
            }
            if diff == 0 {
                break;
            }
        }
        if diff == before {
            break;
        }
    }

    let mut out = manifest.clone();
    for (si, (_, members)) in strata.iter().enumerate() {
        let mut order = members.clone();
        order.shuffle(&mut rng::stream(rng::derive_seed(&[seed, si as u64]), Role::Split));
        for (rank, &i) in order.iter().enumerate() {
            out.entries[i].split = Some(if (rank as i64) < take[si] {
                SplitLabel::Train
            } else {
                SplitLabel::Test
            });
        }
    }
    let train = take.iter().sum::<i64>() as usize;
    out.header.split = Some(SplitInfo {
        train_fraction,
        seed,
        train,
        test: manifest.entries.len() - train,
    });
    Ok(out)
}
