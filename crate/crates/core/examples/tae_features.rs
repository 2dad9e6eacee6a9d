//! Temporal amplitude envelopes of a reverberant utterance, as fed to the
//! band regressors. Prints a coarse view and writes the full 7x200 CSV.

use mtf_room::dataset::synthetic_utterance;
use mtf_room::rir::{synth_schroeder_rir, RirSpec};
use mtf_room::signal::convolve;
use mtf_room::tae::tae_matrix;

fn main() -> mtf_room::Result<()> {
    let dry = synthetic_utterance(0, 1)?;
    for t60 in [0.3, 2.0] {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, 16000, 9))?;
        let wet = convolve(&dry, rir.signal())?.truncated(dry.len());
        let tae = tae_matrix(&wet, &format!("t60_{t60}"))?;
        println!("T60 {t60} s, normalization gain {:.3}", tae.normalization_gain);
        for (hz, row) in tae.band_centers.iter().zip(&tae.rows) {
            let bars: String = row
                .iter()
                .step_by(4)
                .map(|v| [' ', '.', ':', '-', '=', '+', '*', '#'][(v * 7.0).round() as usize])
                .collect();
            println!("{hz:>6} |{bars}|");
        }
        let path = std::env::temp_dir().join(format!("tae_t60_{t60}.csv"));
        std::fs::write(&path, tae.to_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
