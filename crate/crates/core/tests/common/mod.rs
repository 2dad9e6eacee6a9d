#![allow(dead_code)]

use mtf_room::regressor::{loss_mse, BatchPass, CnnModel, Mode, Pair};
use mtf_room::rng::{self, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Below this magnitude both gradients count as zero.
pub const GRAD_FLOOR: f64 = 1e-8;

pub struct GradReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_index: usize,
    /// Parameters whose ±step crossed a ReLU or max-pool kink, so the step
    /// was halved until both sides stayed on the same branch.
    pub reduced_step: usize,
    pub failures: usize,
}

pub fn random_batch(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n)
        .map(|_| (0..200).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let y = (0..n).map(|_| rng.gen_range(0.2..3.0)).collect();
    (x, y)
}

fn pass(m: &CnnModel, x: &[Vec<f64>], dropout_seed: Option<u64>) -> BatchPass {
    let refs: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
    match dropout_seed {
        Some(s) => {
            let mut r = rng::stream(s, Role::Dropout);
            m.forward_batch(&refs, Mode::Train, Some(&mut r)).unwrap()
        }
        None => m.forward_batch(&refs, Mode::Train, None).unwrap(),
    }
}

/// Central finite differences against `backward` for every parameter, or
/// only those in `subset` when given.
pub fn gradient_check(
    model: &CnnModel,
    x: &[Vec<f64>],
    y: &[f64],
    dropout_seed: Option<u64>,
    subset: Option<std::ops::Range<usize>>,
) -> GradReport {
    let mut m = model.clone();
    let base = pass(&m, x, dropout_seed);
    let (_, grad) = m.backward(&base, y).unwrap();
    let mut report = GradReport {
        checked: 0,
        worst_rel: 0.0,
        worst_index: 0,
        reduced_step: 0,
        failures: 0,
    };
    for i in subset.unwrap_or(0..m.param_count()) {
        let orig = m.params()[i];
        let mut h = FD_STEP;
        let mut reduced = false;
        let numeric = loop {
            m.params_mut()[i] = orig + h;
            let p = pass(&m, x, dropout_seed);
            m.params_mut()[i] = orig - h;
            let q = pass(&m, x, dropout_seed);
            m.params_mut()[i] = orig;
            if (p.same_pattern(&base) && q.same_pattern(&base)) || h < 1e-9 {
                let lp = loss_mse(&p.outputs, y).unwrap();
                let lq = loss_mse(&q.outputs, y).unwrap();
                break (lp - lq) / (2.0 * h);
            }
            h /= 2.0;
            reduced = true;
        };
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        report.checked += 1;
        report.reduced_step += reduced as usize;
        if rel >= FD_TOLERANCE {
            report.failures += 1;
        }
        if rel > report.worst_rel {
            report.worst_rel = rel;
            report.worst_index = i;
        }
    }
    report
}

/// A model whose output unit is active on typical inputs.
pub fn live_model(seed: u64) -> CnnModel {
    let mut m = CnnModel::new(mtf_room::regressor::Architecture::standard(), 0, seed);
    m.set_dropout(0.0);
    let b = m.layout().fc_b.start;
    m.params_mut()[b] = 1.0;
    m
}

/// Noisy exponential decays, loosely like band envelopes of reverberant speech.
pub fn decay_pairs(n: usize, seed: u64) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t60 = 0.2 + 2.8 * i as f64 / (n - 1).max(1) as f64;
            let tae = (0..200)
                .map(|k| {
                    let t = (k % 50) as f64 / 40.0;
                    ((-6.9 * t / t60).exp() * (1.0 + 0.1 * rng.gen::<f64>())).min(1.0)
                })
                .collect();
            Pair { tae, t60 }
        })
        .collect()
}

pub mod desk {
    use std::collections::HashMap;
    use std::time::Instant;

    use mtf_room::dataset::{
        manifest_from, render_corpus, split, synthetic_utterances, CorpusConfig, CorpusManifest,
        SplitLabel, SYNTHETIC_UTTERANCE_COUNT,
    };
    use mtf_room::pipeline::{band_pairs, estimate_from_tae, evaluate_with, train_bands, EstimateOptions, EvalReport};
    use mtf_room::regressor::{CnnModel, TrainConfig, TrainingLog};
    use mtf_room::tae::{tae_matrix, TaeMatrix};

    pub struct DeskRun {
        pub manifest: CorpusManifest,
        pub models: Vec<CnnModel>,
        pub logs: Vec<TrainingLog>,
        pub report: EvalReport,
    }

    /// Corpus rendered in memory (TAE matrices only), stratified 70/30
    /// split, seven band models, evaluation on the test split.
    pub fn run(corpus: &CorpusConfig, train: &TrainConfig, split_seed: u64, opts: &EstimateOptions) -> DeskRun {
        let t = Instant::now();
        let utts = synthetic_utterances(SYNTHETIC_UTTERANCE_COUNT, corpus.seed).unwrap();
        let (entries, taes) = render_corpus(&utts, corpus, |e, wet| {
            tae_matrix(wet, &e.reverberant_path.display().to_string())
        })
        .unwrap();
        eprintln!("rendered {} entries in {:.1?}", entries.len(), t.elapsed());
        let manifest = split(&manifest_from(corpus, &utts, entries), 0.7, split_seed).unwrap();
        let by_path: HashMap<String, &TaeMatrix> =
            taes.iter().map(|t| (t.source_id.clone(), t)).collect();

        let t = Instant::now();
        let train_items = manifest
            .entries_in(SplitLabel::Train)
            .map(|e| (e, by_path[&e.reverberant_path.display().to_string()]));
        let pairs = band_pairs(train_items);
        let trained = train_bands(&pairs, train).unwrap();
        let (models, logs): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
        for (b, l) in logs.iter().enumerate() {
            eprintln!(
                "band {b}: {} epochs, best {} val mse {:.4}",
                l.records.len(),
                l.best_epoch,
                l.best_val_mse().unwrap()
            );
        }
        eprintln!("trained in {:.1?}", t.elapsed());

        let t = Instant::now();
        let test: Vec<_> = manifest.entries_in(SplitLabel::Test).collect();
        let report = evaluate_with(&test, &opts.sti, |e| {
            estimate_from_tae(by_path[&e.reverberant_path.display().to_string()], &models, opts)
        })
        .unwrap();
        eprintln!("evaluated {} in {:.1?}", report.evaluated, t.elapsed());
        DeskRun {
            manifest,
            models,
            logs,
            report,
        }
    }
}
