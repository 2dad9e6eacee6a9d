//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mtf_room::dataset::{self, CorpusConfig, CorpusManifest, SplitLabel};
use mtf_room::params::{room_params, RoomParams};
use mtf_room::pipeline::{self, EstimateOptions, EvalReport};
use mtf_room::regressor::{self, TrainConfig};
use mtf_room::rir::{self, BandT60s, Rir, RirSpec};
use mtf_room::signal::wav::{read_wav, SAMPLE_RATE};
use mtf_room::sti::{sti_from_rir, StiConfig};
use mtf_room::{Error, Result};

#[derive(Parser)]
#[command(name = "mtf-room", version, about = "Room acoustic parameters and STI from reverberant speech")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct StiArgs {
    /// STI weighting profile (TOML). Defaults to the built-in profile.
    #[arg(long = "sti-config")]
    sti_config: Option<PathBuf>,
}

impl StiArgs {
    fn load(&self) -> Result<StiConfig> {
        match &self.sti_config {
            Some(p) => StiConfig::load(p),
            None => Ok(StiConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a Schroeder-model RIR (float WAV plus JSON sidecar).
    SynthRir {
        /// Full-band T60 in seconds.
        #[arg(long, conflicts_with = "t60_bands")]
        t60: Option<f64>,
        /// Seven comma-separated per-band T60s (125 Hz to 8 kHz).
        #[arg(long, value_delimiter = ',')]
        t60_bands: Option<Vec<f64>>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Room parameters and STI of a measured or synthesized RIR.
    AnalyzeRir {
        rir: PathBuf,
        #[command(flatten)]
        sti: StiArgs,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a reverberant corpus from a speech directory.
    GenCorpus {
        /// Mono 16 kHz WAVs of at least 5 s. Without it, the bundled
        /// synthetic utterances are used.
        #[arg(long)]
        speech: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Carrier realizations per (utterance, T60).
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        t60_min: f64,
        #[arg(long, default_value_t = 3.0)]
        t60_max: f64,
        #[arg(long, default_value_t = 0.1)]
        t60_step: f64,
    },
    /// Stratified train/test split of a corpus manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = dataset::DEFAULT_TRAIN_FRACTION)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to rewriting the input manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the seven band models on the train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Corpus root; defaults to the manifest's directory.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        models: PathBuf,
        /// TrainConfig as TOML; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Blind estimation from one reverberant recording.
    Estimate {
        wav: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        sti: StiArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        avg_rirs: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate trained models on the test split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        sti: StiArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        avg_rirs: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 4 when more entries than this are excluded.
        #[arg(long, default_value_t = 0)]
        max_excluded: usize,
    },
    /// Scatter CSVs (ground truth vs estimate) from an evaluation report.
    EmitPlots {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn corpus_root(manifest: &Path, corpus: Option<PathBuf>) -> PathBuf {
    corpus.unwrap_or_else(|| {
        manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

fn params_json(p: &RoomParams, sti: f64) -> Result<String> {
    let mut v = serde_json::to_value(p)?;
    v["sti"] = serde_json::json!(sti);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// Returns the exit status for a run that completed without error.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::SynthRir {
            t60,
            t60_bands,
            duration,
            gain,
            seed,
            out,
        } => {
            let (rir, label) = match (t60, t60_bands) {
                (Some(t), None) => {
                    let spec = RirSpec {
                        gain_a: gain,
                        duration: duration.unwrap_or(rir::default_duration(t)),
                        ..RirSpec::schroeder(t, SAMPLE_RATE, seed)
                    };
                    (rir::synth_schroeder_rir(&spec)?, format!("T60 {t} s"))
                }
                (None, Some(v)) => {
                    let arr: [f64; 7] = v.try_into().map_err(|v: Vec<f64>| {
                        Error::Range(format!("expected 7 band T60s, got {}", v.len()))
                    })?;
                    let bands = BandT60s::new(arr)?;
                    let d = duration.unwrap_or(rir::default_duration(bands.max()));
                    let h = rir::reconstruct_rir(&bands, d, SAMPLE_RATE, seed)?;
                    (h.scaled(gain)?, format!("band T60s {arr:?}"))
                }
                _ => return Err(Error::Range("give either --t60 or --t60-bands".into())),
            };
            rir.save(&out)?;
            eprintln!("wrote {} ({label}, {:.2} s)", out.display(), rir.signal().duration());
        }
        Command::AnalyzeRir {
            rir,
            sti,
            format,
            out,
        } => {
            let h = match Rir::load(&rir) {
                Ok(h) => h,
                Err(_) => Rir::new(read_wav(&rir)?, None)?,
            };
            let p = room_params(&h)?;
            let s = sti_from_rir(&h, &sti.load()?)?.sti;
            let text = match format {
                Format::Json => params_json(&p, s)?,
                Format::Csv => format!("{},sti\n{},{s}\n", RoomParams::CSV_HEADER, p.csv_row()),
            };
            emit(&text, out.as_deref())?;
        }
        Command::GenCorpus {
            speech,
            out,
            seeds,
            seed,
            t60_min,
            t60_max,
            t60_step,
        } => {
            let config = CorpusConfig {
                t60_grid: dataset::t60_grid(t60_min, t60_max, t60_step),
                carrier_seeds: seeds,
                seed,
            };
            let (utts, failures) = match &speech {
                Some(dir) => dataset::load_speech_dir(dir)?,
                None => (
                    dataset::synthetic_utterances(dataset::SYNTHETIC_UTTERANCE_COUNT, seed)?,
                    Vec::new(),
                ),
            };
            for f in &failures {
                eprintln!("skipped {}: {}", f.path.display(), f.reason);
            }
            let m = dataset::gen_corpus_from(&utts, failures, &config, &out)?;
            eprintln!(
                "wrote {} entries from {} utterances to {} ({} source failures, ground-truth fallback rate {:.3}%)",
                m.entries.len(),
                utts.len(),
                out.display(),
                m.header.failures.len(),
                100.0 * m.fallback_rate()
            );
        }
        Command::Split {
            manifest,
            train_fraction,
            seed,
            out,
        } => {
            let m = dataset::split(&CorpusManifest::load(&manifest)?, train_fraction, seed)?;
            m.save(out.as_deref().unwrap_or(&manifest))?;
            let info = m.header.split.as_ref().expect("split sets header info");
            eprintln!("train {} / test {}", info.train, info.test);
        }
        Command::Train {
            manifest,
            corpus,
            models,
            config,
            seed,
            epochs,
            batch_size,
            learning_rate,
        } => {
            let mut cfg = match config {
                Some(p) => toml::from_str(&std::fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => TrainConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.max_epochs = epochs.unwrap_or(cfg.max_epochs);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            let root = corpus_root(&manifest, corpus);
            let m = CorpusManifest::load(&manifest)?;
            let items = pipeline::load_taes(&m, &root, SplitLabel::Train)?;
            if items.is_empty() {
                return Err(Error::Contract("manifest has no train split; run `split` first".into()));
            }
            let pairs = pipeline::band_pairs(items.iter().map(|(e, t)| (e, t)));
            let trained = pipeline::train_bands(&pairs, &cfg)?;
            let (ms, logs): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
            regressor::save_models(&ms, &models)?;
            for (band, log) in logs.iter().enumerate() {
                let name = regressor::model_file_name(band).replace(".mtf", "_log.csv");
                std::fs::write(models.join(name), log.to_csv())?;
                eprintln!(
                    "{}: best epoch {} of {}, val MSE {:.5}",
                    regressor::model_file_name(band),
                    log.best_epoch,
                    log.records.len(),
                    log.best_val_mse().unwrap_or(f64::NAN)
                );
            }
        }
        Command::Estimate {
            wav,
            models,
            sti,
            seed,
            avg_rirs,
            format,
            out,
        } => {
            let ms = regressor::load_models(&models)?;
            let opts = EstimateOptions {
                sti: sti.load()?,
                seed,
                avg_rirs,
            };
            let r = pipeline::estimate_file(&wav, &ms, &opts)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&r)? + "\n",
                Format::Csv => format!("{},sti\n{},{}\n", RoomParams::CSV_HEADER, r.params.csv_row(), r.sti),
            };
            emit(&text, out.as_deref())?;
        }
        Command::Evaluate {
            manifest,
            corpus,
            models,
            sti,
            seed,
            avg_rirs,
            format,
            out,
            max_excluded,
        } => {
            let root = corpus_root(&manifest, corpus);
            let ms = regressor::load_models(&models)?;
            let opts = EstimateOptions {
                sti: sti.load()?,
                seed,
                avg_rirs,
            };
            let report = pipeline::evaluate(&CorpusManifest::load(&manifest)?, &root, &ms, &opts)?;
            let text = match format {
                Format::Json => report.to_json()? + "\n",
                Format::Csv => report.summary_csv(),
            };
            emit(&text, out.as_deref())?;
            for e in &report.exclusions {
                eprintln!("excluded {}: {}", e.entry, e.reason);
            }
            if report.excluded > max_excluded {
                eprintln!("{} entries excluded (allowed {max_excluded})", report.excluded);
                return Ok(4);
            }
        }
        Command::EmitPlots { report, out } => {
            let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report)?)?;
            for p in pipeline::emit_plots(&r, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
