//! Writes a small reverberant corpus to disk, splits it 70/30 and prints the
//! manifest header. Pass an output directory, or a temp dir is used.

use std::path::PathBuf;

use mtf_room::dataset::{gen_corpus_from, split, synthetic_utterances, t60_grid, CorpusConfig, SplitLabel};

fn main() -> mtf_room::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mtf_room_corpus"), PathBuf::from);
    let utts = synthetic_utterances(3, 5)?;
    let cfg = CorpusConfig { t60_grid: t60_grid(0.5, 2.5, 0.5), carrier_seeds: 2, seed: 5 };
    let manifest = gen_corpus_from(&utts, Vec::new(), &cfg, &out)?;
    let manifest = split(&manifest, 0.7, 5)?;
    manifest.save(&out.join("manifest.jsonl"))?;
    println!("{} entries under {}", manifest.entries.len(), out.display());
    println!(
        "train {} / test {}, ground-truth fallback rate {:.3}",
        manifest.entries_in(SplitLabel::Train).count(),
        manifest.entries_in(SplitLabel::Test).count(),
        manifest.fallback_rate()
    );
    for e in manifest.entries.iter().take(3) {
        println!("  {} nominal {:.1} s, measured {:?}", e.reverberant_path.display(), e.t60_nominal, e.ground_truth.values());
    }
    Ok(())
}
