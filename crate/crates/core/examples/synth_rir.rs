//! Synthesizes a Schroeder-model impulse response and writes it as a WAV
//! with a JSON sidecar.
//!
//! cargo run --release --example synth_rir -- 1.2 /tmp/rir.wav

use mtf_room::params::room_params;
use mtf_room::rir::{reconstruct_rir, synth_schroeder_rir, BandT60s, RirSpec};

fn main() -> mtf_room::Result<()> {
    let mut args = std::env::args().skip(1);
    let t60: f64 = args.next().map_or(1.2, |s| s.parse().expect("T60 in seconds"));
    let out = args.next().unwrap_or_else(|| "rir.wav".into());

    let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, 16000, 42))?;
    rir.save(&out)?;
    let p = room_params(&rir)?;
    println!("full-band T60 {t60} s -> {} samples, wrote {out}", rir.signal().len());
    println!("measured: T60 {:.3} s, EDT {:.3} s, C80 {:.2} dB, D50 {:.1} %, Ts {:.4} s",
        p.t60_s, p.edt_s, p.c80_db.db().unwrap_or(f64::INFINITY), p.d50_pct, p.ts_s);

    // Per-band decay: long bass, short treble.
    let bands = BandT60s::new([1.8, 1.5, 1.2, 1.0, 0.9, 0.7, 0.5])?;
    let shaped = reconstruct_rir(&bands, 2.0, 16000, 7)?;
    let p = room_params(&shaped)?;
    println!("per-band RIR: broadband T60 {:.3} s, Ts {:.4} s", p.t60_s, p.ts_s);
    Ok(())
}
