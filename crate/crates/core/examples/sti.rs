//! Speech Transmission Index: closed form from band T60s against the
//! indirect method on a synthesized RIR, for each bundled weighting profile.

use mtf_room::rir::{synth_schroeder_rir, BandT60s, RirSpec};
use mtf_room::sti::{sti_from_band_t60s, sti_from_rir, StiConfig};

fn main() -> mtf_room::Result<()> {
    let profiles = ["default", "2003-male", "2003-female"];
    println!("T60_s  {}", profiles.map(|p| format!("{p:>22}")).join(""));
    for t60 in [0.3, 0.6, 1.0, 1.5, 2.0, 3.0] {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, 16000, 5))?;
        let mut line = format!("{t60:5.1}");
        for name in profiles {
            let cfg = StiConfig::builtin(name)?;
            let analytic = sti_from_band_t60s(&BandT60s::uniform(t60)?, &cfg);
            let measured = sti_from_rir(&rir, &cfg)?.sti;
            line += &format!("   {analytic:.3} / {measured:.3}     ");
        }
        println!("{line}");
    }
    println!("(analytic / indirect)");
    Ok(())
}
