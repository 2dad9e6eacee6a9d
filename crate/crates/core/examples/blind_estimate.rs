//! Blind estimation from one reverberant recording.
//!
//! With a trained model directory:
//!   cargo run --release --example blind_estimate -- MODELS_DIR speech.wav
//!
//! Without arguments a quick model set is trained on a small synthetic
//! corpus, then applied to new rooms in two ways: a utterance from the
//! training corpus (new room, new carrier) and an utterance the models have
//! never seen. The second is noticeably harder with so few training talkers.

use std::path::Path;

use mtf_room::dataset::{manifest_from, render_corpus, synthetic_utterance, synthetic_utterances, t60_grid, CorpusConfig};
use mtf_room::pipeline::{band_pairs, estimate_file, estimate_from_tae, train_bands, EstimateOptions};
use mtf_room::regressor::{load_models, TrainConfig};
use mtf_room::rir::{synth_schroeder_rir, RirSpec};
use mtf_room::signal::{convolve, Signal};
use mtf_room::tae::tae_matrix;

fn main() -> mtf_room::Result<()> {
    let opts = EstimateOptions { avg_rirs: 4, ..EstimateOptions::default() };
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [models, wav] = args.as_slice() {
        let report = estimate_file(Path::new(wav), &load_models(Path::new(models))?, &opts)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }

    let utts = synthetic_utterances(6, 2)?;
    let cfg = CorpusConfig { t60_grid: t60_grid(0.3, 3.0, 0.3), carrier_seeds: 2, seed: 2 };
    let (entries, taes) = render_corpus(&utts, &cfg, |e, wet| tae_matrix(wet, &e.reverberant_path.display().to_string()))?;
    let manifest = manifest_from(&cfg, &utts, entries);
    let pairs = band_pairs(manifest.entries.iter().zip(&taes));
    let tc = TrainConfig { max_epochs: 60, patience: 15, batch_size: 16, ..TrainConfig::default() };
    let models: Vec<_> = train_bands(&pairs, &tc)?.into_iter().map(|(m, _)| m).collect();
    println!("trained on {} signals from {} utterances", manifest.entries.len(), utts.len());

    let known = utts[1].signal.clone();
    let unseen = synthetic_utterance(0, 2024)?;
    let run = |dry: &Signal, t60: f64| -> mtf_room::Result<f64> {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, 16000, 777))?;
        let wet = convolve(dry, rir.signal())?.truncated(dry.len());
        Ok(estimate_from_tae(&tae_matrix(&wet, "probe")?, &models, &opts)?.params.t60_s)
    };
    println!("true T60   known utterance   unseen utterance");
    for t60 in [0.5, 1.3, 2.2] {
        println!("{t60:7.1} s {:14.2} s {:15.2} s", run(&known, t60)?, run(&unseen, t60)?);
    }
    Ok(())
}
