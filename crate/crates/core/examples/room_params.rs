//! Decay analysis of a measured or synthetic RIR: EDC, T30, EDT, C80, D50, Ts.
//!
//! cargo run --release --example room_params -- [rir.wav]

use mtf_room::params::{energy_decay_curve, room_params, RoomParams};
use mtf_room::rir::{envelope_rir, Rir};

fn main() -> mtf_room::Result<()> {
    let rir = match std::env::args().nth(1) {
        Some(path) => Rir::load(path)?,
        None => envelope_rir(1.0, 3.0, 16000)?,
    };
    let edc = energy_decay_curve(&rir)?;
    println!("EDC (every 100 ms):");
    let step = rir.sample_rate() as usize / 10;
    for (t, l) in edc.time().iter().zip(edc.level()).step_by(step).take(12) {
        println!("  {t:5.2} s  {l:8.2} dB");
    }
    let p = room_params(&rir)?;
    println!("{}", RoomParams::CSV_HEADER);
    println!("{}", p.csv_row());
    Ok(())
}
