//! Trains the 1 kHz band regressor on a small in-memory corpus and prints
//! the learning curve and a few held-out predictions.

use mtf_room::dataset::{manifest_from, render_corpus, split, synthetic_utterances, t60_grid, CorpusConfig, SplitLabel};
use mtf_room::pipeline::band_pairs;
use mtf_room::regressor::{save_model, train, TrainConfig};
use mtf_room::tae::tae_matrix;

const BAND: usize = 3;

fn main() -> mtf_room::Result<()> {
    let utts = synthetic_utterances(4, 1)?;
    let cfg = CorpusConfig { t60_grid: t60_grid(0.3, 3.0, 0.3), carrier_seeds: 3, seed: 1 };
    let (entries, taes) = render_corpus(&utts, &cfg, |e, wet| tae_matrix(wet, &e.reverberant_path.display().to_string()))?;
    let manifest = split(&manifest_from(&cfg, &utts, entries), 0.7, 1)?;
    let is_train = |i: &usize| manifest.entries[*i].split == Some(SplitLabel::Train);
    let idx: Vec<usize> = (0..taes.len()).collect();

    let pairs = band_pairs(idx.iter().filter(|i| is_train(i)).map(|&i| (&manifest.entries[i], &taes[i])));
    let tc = TrainConfig { max_epochs: 60, patience: 15, batch_size: 16, ..TrainConfig::default() };
    let (model, log) = train(BAND, &pairs[BAND], &tc)?;
    println!("{} epochs, best {} (val RMSE {:.3} s)", log.records.len(), log.best_epoch, log.best_val_mse().unwrap_or(f64::NAN).sqrt());
    print!("{}", log.to_csv().lines().step_by(5).collect::<Vec<_>>().join("\n"));
    println!();

    println!("held out: truth -> estimate");
    for &i in idx.iter().filter(|i| !is_train(i)).step_by(3) {
        let truth = manifest.entries[i].ground_truth.values()[BAND];
        println!("  {truth:.2} s -> {:.2} s", model.predict(taes[i].row(BAND))?);
    }
    let path = std::env::temp_dir().join("band_1000.mtf");
    save_model(&model, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
