//! Mini-batch Adam training with best-epoch selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::network::{CnnModel, Mode, DEFAULT_DROPOUT};
use crate::error::{Error, Result};
use crate::rng::{self, Role};

pub const MIN_TRAIN_PAIRS: usize = 10;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            validation_fraction: 0.2,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch size, max epochs and patience must be positive".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "validation fraction {} outside (0, 0.5]",
                self.validation_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// One supervised example: a 200-sample envelope and its T60 in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub tae: Vec<f64>,
    pub t60: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_mse, r.val_mse));
        }
        s
    }

    pub fn best_val_mse(&self) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map(|r| r.val_mse)
    }
}

/// Splits `pairs` into training and validation sets by a seeded shuffle
/// and trains a fresh model for `band`.
pub fn train(band: usize, pairs: &[Pair], config: &TrainConfig) -> Result<(CnnModel, TrainingLog)> {
    config.validate()?;
    if pairs.len() < MIN_TRAIN_PAIRS {
        return Err(Error::contract(format!(
            "training needs at least {MIN_TRAIN_PAIRS} pairs, got {}",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng::stream(config.seed, Role::Split));
    let n_val = ((pairs.len() as f64 * config.validation_fraction).round() as usize).max(1);
    let val: Vec<Pair> = order[..n_val].iter().map(|&i| pairs[i].clone()).collect();
    let tr: Vec<Pair> = order[n_val..].iter().map(|&i| pairs[i].clone()).collect();
    fit(band, &tr, &val, config)
}

/// Trains on `train_set`, selecting the epoch with the lowest MSE on
/// `val_set` (infer mode).
pub fn fit(
    band: usize,
    train_set: &[Pair],
    val_set: &[Pair],
    config: &TrainConfig,
) -> Result<(CnnModel, TrainingLog)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::contract("empty training or validation set"));
    }
    let mut model = CnnModel::new(Architecture::standard(), band, config.seed);
    model.set_dropout(config.dropout);
    // Start as the constant mean predictor: zero read-out weights keep the
    // output ReLU active for every input.
    let mean_t60 = train_set.iter().map(|p| p.t60).sum::<f64>() / train_set.len() as f64;
    let layout = model.layout().clone();
    model.params_mut()[layout.fc_w].iter_mut().for_each(|w| *w = 0.0);
    model.params_mut()[layout.fc_b.start] = mean_t60;
    model.quantize();

    let mut adam = Adam::new(model.param_count());
    let mut shuffle_rng = rng::stream(config.seed, Role::Shuffle);
    let mut dropout_rng = rng::stream(config.seed, Role::Dropout);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, CnnModel)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| train_set[i].tae.as_slice()).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| train_set[i].t60).collect();
            let pass = model.forward_batch(&inputs, Mode::Train, Some(&mut dropout_rng))?;
            let (loss, grad) = model.backward(&pass, &targets)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.step(model.params_mut(), &grad, config.learning_rate);
            model.update_running_stats(&pass);
            model.quantize();
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let val_mse = evaluate_mse(&model, val_set)?;
        if !val_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log.records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, model.clone()));
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, log))
}

/// Infer-mode MSE over a set of pairs.
pub fn evaluate_mse(model: &CnnModel, pairs: &[Pair]) -> Result<f64> {
    let mut sum = 0.0;
    for p in pairs {
        let e = model.predict(&p.tae)? - p.t60;
        sum += e * e;
    }
    Ok(sum / pairs.len().max(1) as f64)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        }
    }
}
