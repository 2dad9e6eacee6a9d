//! Analytic versus measured modulation transfer function of a Schroeder RIR.

use mtf_room::rir::{mtf_analytic, mtf_from_rir, synth_schroeder_rir, RirSpec};
use mtf_room::sti::StiConfig;

fn main() -> mtf_room::Result<()> {
    let freqs = StiConfig::default().modulation_frequencies;
    for t60 in [0.3, 1.0, 2.5] {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, 16000, 3))?;
        let measured = mtf_from_rir(&rir, &freqs)?;
        println!("T60 = {t60} s");
        println!("  fm_hz   analytic  measured");
        for (f, m) in freqs.iter().zip(&measured.indices) {
            println!("  {f:6.2}  {:8.4}  {m:8.4}", mtf_analytic(*f, t60));
        }
    }
    Ok(())
}
