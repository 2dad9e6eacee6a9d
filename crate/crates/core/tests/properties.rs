//! Property tests over the DSP, acoustics, STI, TAE and regressor modules.

mod common;

use mtf_room::bands::OCTAVE_CENTERS_HZ;
use mtf_room::params::{energy_decay_curve, room_params};
use mtf_room::regressor::{fit, Architecture, CnnModel, Mode, Pair, TrainConfig};
use mtf_room::rir::{default_duration, envelope_rir, mtf_analytic, reconstruct_rir, synth_schroeder_rir, BandT60s, RirSpec};
use mtf_room::rng::{gaussian_vec, stream, Role};
use mtf_room::signal::{
    analytic_envelope, convolve, design_butterworth_bandpass, design_butterworth_lowpass, Signal,
};
use mtf_room::sti::{sti_from_band_t60s, StiConfig};
use mtf_room::tae::tae_matrix;
use proptest::prelude::*;

const FS: u32 = 16000;

fn direct_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * scale)
}

fn samples(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_convolution_matches_direct(x in samples(256), h in samples(256)) {
        let y = convolve(&Signal::new(x.clone(), FS).unwrap(), &Signal::new(h.clone(), FS).unwrap()).unwrap();
        prop_assert!(close(y.samples(), &direct_convolution(&x, &h), 1e-9));
    }

    #[test]
    fn convolution_is_linear(x in samples(300), h in samples(120), a in -50.0f64..50.0) {
        let hs = Signal::new(h, FS).unwrap();
        let base = convolve(&Signal::new(x.clone(), FS).unwrap(), &hs).unwrap();
        let scaled = convolve(&Signal::new(x.iter().map(|v| a * v).collect(), FS).unwrap(), &hs).unwrap();
        let expect: Vec<f64> = base.samples().iter().map(|v| a * v).collect();
        prop_assert!(close(scaled.samples(), &expect, 1e-9));
    }

    #[test]
    fn envelope_bounds_waveform(x in prop::collection::vec(-1.0f64..1.0, 2..2048)) {
        let s = Signal::new(x, FS).unwrap();
        let env = analytic_envelope(&s).unwrap();
        let eps = 1e-6 * s.peak();
        for (e, v) in env.samples().iter().zip(s.samples()) {
            prop_assert!(*e >= v.abs() - eps);
        }
    }

    #[test]
    fn designed_filters_are_stable(order in 1usize..=8, cutoff in 20.0f64..7000.0, center in 40.0f64..6000.0) {
        let lp = design_butterworth_lowpass(order, cutoff, FS).unwrap();
        prop_assert!(lp.poles().iter().all(|p| p.norm() < 1.0 - 1e-8));
        let (lo, hi) = (center / 2f64.sqrt(), (center * 2f64.sqrt()).min(7600.0));
        let bp = design_butterworth_bandpass(order.min(4), lo, hi, FS).unwrap();
        prop_assert!(bp.poles().iter().all(|p| p.norm() < 1.0 - 1e-8));
    }

    #[test]
    fn analytic_mtf_strictly_decreasing(fm in 0.1f64..20.0, t60 in 0.05f64..5.0, d in 0.01f64..1.0) {
        prop_assert!(mtf_analytic(fm + d, t60) < mtf_analytic(fm, t60));
        prop_assert!(mtf_analytic(fm, t60 + d) < mtf_analytic(fm, t60));
    }

    #[test]
    fn sti_bounded_and_monotone(t in prop::array::uniform7(0.05f64..8.0), band in 0usize..7, d in 0.0f64..2.0) {
        let cfg = StiConfig::default();
        let base = sti_from_band_t60s(&BandT60s::new(t).unwrap(), &cfg);
        prop_assert!((0.0..=1.0).contains(&base));
        let mut longer = t;
        longer[band] += d;
        prop_assert!(sti_from_band_t60s(&BandT60s::new(longer).unwrap(), &cfg) <= base);
    }

    #[test]
    fn sti_permutation_invariant(t in prop::array::uniform7(0.05f64..8.0), perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle()) {
        let cfg = StiConfig::default();
        let base = sti_from_band_t60s(&BandT60s::new(t).unwrap(), &cfg);
        let mut pt = [0.0; 7];
        let mut pcfg = cfg.clone();
        for (i, &p) in perm.iter().enumerate() {
            pt[i] = t[p];
            pcfg.band_weights[i] = cfg.band_weights[p];
        }
        prop_assert!((sti_from_band_t60s(&BandT60s::new(pt).unwrap(), &pcfg) - base).abs() < 1e-12);
    }

    #[test]
    fn forward_is_non_negative(seed in any::<u64>(), scale in 0.1f64..50.0, shift in -5.0f64..5.0) {
        let mut m = CnnModel::new(Architecture::standard(), 0, seed);
        let b = m.layout().fc_b.start;
        m.params_mut()[b] = shift;
        let mut rng = stream(seed, Role::BandNoise);
        let x: Vec<f64> = gaussian_vec(&mut rng, 200).into_iter().map(|v| v * scale).collect();
        let first = m.predict(&x).unwrap();
        prop_assert!(first >= 0.0);
        prop_assert_eq!(first, m.predict(&x).unwrap());
        let pass = m.forward_batch(&[&x], Mode::Train, Some(&mut rng)).unwrap();
        prop_assert!(pass.outputs.iter().all(|v| *v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn room_params_gain_invariant(t60 in 0.2f64..2.5, seed in any::<u64>(), gain in 1e-3f64..1e3) {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, FS, seed)).unwrap();
        let a = room_params(&rir).unwrap();
        let b = room_params(&rir.scaled(gain).unwrap()).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-12);
        prop_assert!(rel(a.t60_s, b.t60_s) && rel(a.edt_s, b.edt_s) && rel(a.d50_pct, b.d50_pct) && rel(a.ts_s, b.ts_s));
        prop_assert!(rel(a.c80_db.db().unwrap(), b.c80_db.db().unwrap()));
    }

    #[test]
    fn edc_never_increases(t60 in 0.1f64..3.0, seed in any::<u64>()) {
        let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, FS, seed)).unwrap();
        let edc = energy_decay_curve(&rir).unwrap();
        prop_assert!(edc.level().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn schroeder_family_monotone(t60 in 0.2f64..2.9, d in 0.05f64..0.5) {
        let p = |t: f64| room_params(&envelope_rir(t, 3.0 * t, FS).unwrap()).unwrap();
        let (a, b) = (p(t60), p(t60 + d));
        prop_assert!(b.c80_db.db().unwrap() < a.c80_db.db().unwrap());
        prop_assert!(b.d50_pct < a.d50_pct);
        prop_assert!(b.ts_s > a.ts_s);
        prop_assert!((a.edt_s / a.t60_s - 1.0).abs() < 0.01);
    }

    #[test]
    fn reconstruction_is_finite_with_energy(t in prop::array::uniform7(0.05f64..4.0), seed in any::<u64>()) {
        let bands = BandT60s::new(t).unwrap();
        let rir = reconstruct_rir(&bands, default_duration(bands.max()), FS, seed).unwrap();
        let s = rir.signal();
        prop_assert!(s.samples().iter().all(|v| v.is_finite()));
        prop_assert!(s.energy() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn tae_gain_invariant_and_bounded(seed in any::<u64>(), gain in 1e-3f64..1e2) {
        let mut rng = stream(seed, Role::BandNoise);
        let x = Signal::new(gaussian_vec(&mut rng, 80_000).into_iter().map(|v| 0.1 * v).collect(), FS).unwrap();
        let a = tae_matrix(&x, "a").unwrap();
        let b = tae_matrix(&x.scaled(gain), "b").unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            prop_assert!(ra.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(ra.iter().zip(rb).all(|(u, v)| (u - v).abs() <= 1e-6));
        }
    }
}

/// Depth of the `fm` component of the intensity envelope (squared TAE) over
/// the steady-state tail of the window.
fn intensity_depth(row: &[f64], fm: f64, from: usize) -> f64 {
    let rate = 40.0;
    let tail = &row[from..];
    let (mut re, mut im, mut sum) = (0.0, 0.0, 0.0);
    for (k, e) in tail.iter().enumerate() {
        let i = e * e;
        let ph = 2.0 * std::f64::consts::PI * fm * (from + k) as f64 / rate;
        re += i * ph.cos();
        im += i * ph.sin();
        sum += i;
    }
    2.0 * (re * re + im * im).sqrt() / sum
}

#[test]
fn reverberation_smooths_envelopes_like_the_mtf() {
    let band = OCTAVE_CENTERS_HZ.iter().position(|&f| f == 1000.0).unwrap();
    let m = 0.8;
    for t60 in [0.5, 1.0, 2.0] {
        for fm in [2.0, 4.0, 8.0] {
            let mut ratio = 0.0;
            for seed in 0..10u64 {
                let mut rng = stream(seed, Role::BandNoise);
                let dry: Vec<f64> = gaussian_vec(&mut rng, 80_000)
                    .into_iter()
                    .enumerate()
                    .map(|(i, n)| {
                        let t = i as f64 / FS as f64;
                        0.1 * n * (1.0 + m * (2.0 * std::f64::consts::PI * fm * t).cos()).sqrt()
                    })
                    .collect();
                let dry = Signal::new(dry, FS).unwrap();
                let rir = synth_schroeder_rir(&RirSpec::schroeder(t60, FS, 100 + seed)).unwrap();
                let wet = convolve(&dry, rir.signal()).unwrap().truncated(dry.len());
                let d_dry = intensity_depth(tae_matrix(&dry, "dry").unwrap().row(band), fm, 80);
                let d_wet = intensity_depth(tae_matrix(&wet, "wet").unwrap().row(band), fm, 80);
                ratio += d_wet / d_dry / 10.0;
            }
            let expect = mtf_analytic(fm, t60);
            assert!((ratio - expect).abs() <= 0.1, "T60 {t60} fm {fm}: ratio {ratio:.3}, MTF {expect:.3}");
        }
    }
}

/// Best-so-far validation loss never rises on a noiseless, linearly
/// realizable toy set: the target is a fixed non-negative linear read-out
/// of the input.
#[test]
fn best_so_far_loss_is_monotone() {
    let pairs: Vec<Pair> = common::decay_pairs(24, 5)
        .into_iter()
        .map(|p| {
            let t60 = p.tae.iter().take(50).sum::<f64>() / 25.0;
            Pair { tae: p.tae, t60 }
        })
        .collect();
    let cfg = TrainConfig { batch_size: 8, max_epochs: 60, patience: 60, dropout: 0.0, seed: 2, ..TrainConfig::default() };
    let (_, log) = fit(1, &pairs, &pairs, &cfg).unwrap();
    let mut best = f64::INFINITY;
    let mut best_seq = Vec::new();
    for r in &log.records {
        best = best.min(r.val_mse);
        best_seq.push(best);
    }
    assert!(best_seq.windows(2).all(|w| w[1] <= w[0]));
    assert!(best_seq.last().unwrap() < &best_seq[0], "training made no progress: {best_seq:?}");
}
