//! Forward pass and exact backpropagation for the band regressor.
//!
//! Stage order: conv1 → batch-norm → ReLU → pool, conv2 → ReLU → pool →
//! dropout, conv3 → ReLU → pool, conv4 → ReLU, flatten → dense → ReLU.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, Layout};
use crate::error::{Error, Result};
use crate::rng::{self, Role};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Dropout sits after the pooling of this conv stage.
const DROPOUT_STAGE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm, dropout active.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

/// One band's regressor: parameters, batch-norm running statistics and
/// the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub(crate) arch: Architecture,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
    pub(crate) dropout: f64,
    pub(crate) band: usize,
}

impl CnnModel {
    /// Fan-in scaled uniform weights from the seeded stream, zero biases,
    /// unit batch-norm scale.
    pub fn new(arch: Architecture, band: usize, seed: u64) -> Self {
        let layout = Layout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let mut rng = rng::stream(seed, Role::WeightInit);
        for stage in 0..4 {
            let fan_in = arch.in_channels(stage) * arch.convs[stage].1;
            fill_uniform(&mut params[layout.conv_w[stage].clone()], fan_in, &mut rng);
        }
        fill_uniform(&mut params[layout.fc_w.clone()], arch.flatten_width(), &mut rng);
        params[layout.bn_gamma.clone()].fill(1.0);
        let channels = arch.convs[0].0;
        let mut model = Self {
            arch,
            layout,
            params,
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            dropout: DEFAULT_DROPOUT,
            band,
        };
        model.quantize();
        model
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn set_dropout(&mut self, rate: f64) {
        self.dropout = rate;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn running_stats(&self) -> (&[f64], &[f64]) {
        (&self.running_mean, &self.running_var)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Sequence lengths actually produced by a forward pass (first sample):
    /// input, after each conv and each pool, then the flatten width.
    pub fn observed_lengths(&self, pass: &BatchPass) -> Vec<usize> {
        let Some(s) = pass.samples.first() else {
            return Vec::new();
        };
        let a = &self.arch;
        let mut out = vec![s.stages[0].input.len() / a.in_channels(0)];
        for (stage, cache) in s.stages.iter().enumerate() {
            let filters = a.convs[stage].0;
            out.push(cache.activation.len() / filters);
            if a.pool_after[stage] {
                out.push(cache.pool_index.len() / filters);
            }
        }
        out.push(s.flat.len());
        out
    }

    /// Rounds every stored value to the nearest f32, the on-disk precision.
    pub fn quantize(&mut self) {
        for v in self
            .params
            .iter_mut()
            .chain(&mut self.running_mean)
            .chain(&mut self.running_var)
        {
            *v = *v as f32 as f64;
        }
    }

    /// Single-input inference.
    pub fn predict(&self, tae: &[f64]) -> Result<f64> {
        let pass = self.forward_batch(&[tae], Mode::Infer, None)?;
        Ok(pass.outputs[0])
    }

    /// Forward pass over a batch. In train mode batch-norm uses the batch
    /// statistics and, when `dropout_rng` is given and the rate is positive,
    /// an inverted-dropout mask is drawn per sample.
    pub fn forward_batch(
        &self,
        inputs: &[&[f64]],
        mode: Mode,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchPass> {
        if inputs.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        for x in inputs {
            if x.len() != self.arch.input_len {
                return Err(Error::Shape {
                    expected: self.arch.input_len,
                    actual: x.len(),
                });
            }
        }
        let arch = &self.arch;
        let l = &self.layout;
        let p = &self.params;
        let (c1, k1) = arch.convs[0];
        let len1 = arch.input_len + 1 - k1;

        let conv1: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| conv_forward(x, 1, arch.input_len, &p[l.conv_w[0].clone()], None, c1, k1))
            .collect();

        let (mean, var) = match mode {
            Mode::Train => channel_stats(&conv1, c1, len1),
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let gamma = &p[l.bn_gamma.clone()];
        let beta = &p[l.bn_beta.clone()];

        let mut samples = Vec::with_capacity(inputs.len());
        let mut outputs = Vec::with_capacity(inputs.len());
        for (x, pre) in inputs.iter().zip(conv1) {
            let mut xhat = pre;
            let mut act = vec![0.0; xhat.len()];
            for c in 0..c1 {
                let row = c * len1..(c + 1) * len1;
                for (h, a) in xhat[row.clone()].iter_mut().zip(&mut act[row]) {
                    *h = (*h - mean[c]) * inv_std[c];
                    *a = (gamma[c] * *h + beta[c]).max(0.0);
                }
            }
            let mut stages = Vec::with_capacity(4);
            let mut current = act;
            let mut cur_len = len1;
            stages.push(StageCache {
                input: x.to_vec(),
                activation: Vec::new(),
                pool_index: Vec::new(),
                dropout_mask: None,
            });
            for stage in 0..4 {
                if stage > 0 {
                    let (cout, k) = arch.convs[stage];
                    let cin = arch.in_channels(stage);
                    let mut y = conv_forward(
                        &current,
                        cin,
                        cur_len,
                        &p[l.conv_w[stage].clone()],
                        Some(&p[l.conv_b[stage].clone()]),
                        cout,
                        k,
                    );
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                    cur_len = cur_len + 1 - k;
                    stages.push(StageCache {
                        input: current,
                        activation: Vec::new(),
                        pool_index: Vec::new(),
                        dropout_mask: None,
                    });
                    current = y;
                }
                let channels = arch.convs[stage].0;
                let cache = stages.last_mut().unwrap();
                if arch.pool_after[stage] {
                    let (pooled, idx, out_len) =
                        pool_forward(&current, channels, cur_len, arch.pool_size, arch.pool_stride);
                    cache.activation = current;
                    cache.pool_index = idx;
                    current = pooled;
                    cur_len = out_len;
                } else {
                    cache.activation = current.clone();
                }
                if stage == DROPOUT_STAGE && mode == Mode::Train && self.dropout > 0.0 {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        let keep = 1.0 - self.dropout;
                        let mask: Vec<f64> = (0..current.len())
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        current.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        cache.dropout_mask = Some(mask);
                    }
                }
            }
            // `current` is conv4's ReLU output, flattened channel-major.
            let fc_w = &p[l.fc_w.clone()];
            let z = p[l.fc_b.start] + dot(fc_w, &current);
            let out = z.max(0.0);
            outputs.push(out);
            samples.push(SampleCache {
                xhat,
                stages,
                flat: current,
                z,
            });
        }
        Ok(BatchPass {
            mode,
            outputs,
            samples,
            batch_mean: mean,
            batch_var: var,
            inv_std,
        })
    }

    /// Exact gradients of the batch MSE with respect to every trainable
    /// parameter, through the pass's frozen dropout masks. Returns the loss
    /// and the gradient in the flat parameter layout.
    pub fn backward(&self, pass: &BatchPass, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        if pass.mode != Mode::Train {
            return Err(Error::contract("backward requires a train-mode pass"));
        }
        if targets.len() != pass.outputs.len() {
            return Err(Error::Shape {
                expected: pass.outputs.len(),
                actual: targets.len(),
            });
        }
        let arch = &self.arch;
        let l = &self.layout;
        let p = &self.params;
        let batch = targets.len() as f64;
        let loss = loss_mse(&pass.outputs, targets)?;
        let mut grad = vec![0.0; p.len()];

        let (c1, k1) = arch.convs[0];
        let len1 = arch.input_len + 1 - k1;
        let gamma = &p[l.bn_gamma.clone()];
        // Gradient w.r.t. the batch-norm output (pre-ReLU), per sample.
        let mut d_bn: Vec<Vec<f64>> = Vec::with_capacity(pass.samples.len());

        for ((s, &out), &y) in pass.samples.iter().zip(&pass.outputs).zip(targets) {
            let d_out = 2.0 * (out - y) / batch;
            let dz = if s.z > 0.0 { d_out } else { 0.0 };
            grad[l.fc_b.start] += dz;
            for ((g, x), w) in grad[l.fc_w.clone()].iter_mut().zip(&s.flat).zip(&p[l.fc_w.clone()]) {
                *g += dz * x;
                let _ = w;
            }
            let mut d_cur: Vec<f64> = p[l.fc_w.clone()].iter().map(|w| dz * w).collect();

            for stage in (0..4).rev() {
                let cache = &s.stages[stage];
                let channels = arch.convs[stage].0;
                if let Some(mask) = &cache.dropout_mask {
                    d_cur.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                }
                let act_len = cache.activation.len() / channels;
                if arch.pool_after[stage] {
                    d_cur = pool_backward(&d_cur, &cache.pool_index, channels * act_len);
                }
                // ReLU: pass gradient where the activation is positive.
                for (d, a) in d_cur.iter_mut().zip(&cache.activation) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                if stage == 0 {
                    break;
                }
                let (cout, k) = arch.convs[stage];
                let cin = arch.in_channels(stage);
                let in_len = act_len + k - 1;
                let (gw, rest) = split_two(&mut grad, l.conv_w[stage].clone(), l.conv_b[stage].clone());
                let d_in = conv_backward(
                    &cache.input,
                    cin,
                    in_len,
                    &p[l.conv_w[stage].clone()],
                    &d_cur,
                    cout,
                    k,
                    gw,
                    Some(rest),
                );
                d_cur = d_in;
            }
            d_bn.push(d_cur);
        }

        // Batch-norm scale/shift and the gradient into conv1's output.
        let n = (pass.samples.len() * len1) as f64;
        let mut sum_d = vec![0.0; c1];
        let mut sum_dx = vec![0.0; c1];
        for (s, d) in pass.samples.iter().zip(&d_bn) {
            for c in 0..c1 {
                let row = c * len1..(c + 1) * len1;
                for (dv, h) in d[row.clone()].iter().zip(&s.xhat[row]) {
                    sum_d[c] += dv;
                    sum_dx[c] += dv * h;
                }
            }
        }
        for c in 0..c1 {
            grad[l.bn_beta.start + c] = sum_d[c];
            grad[l.bn_gamma.start + c] = sum_dx[c];
        }
        for (s, d) in pass.samples.iter().zip(&d_bn) {
            let mut d_pre = vec![0.0; c1 * len1];
            for c in 0..c1 {
                let scale = gamma[c] * pass.inv_std[c] / n;
                let row = c * len1..(c + 1) * len1;
                for ((o, dv), h) in d_pre[row.clone()].iter_mut().zip(&d[row.clone()]).zip(&s.xhat[row]) {
                    *o = scale * (n * dv - sum_d[c] - h * sum_dx[c]);
                }
            }
            conv_weight_grad(
                &s.stages[0].input,
                1,
                arch.input_len,
                &d_pre,
                c1,
                k1,
                &mut grad[l.conv_w[0].clone()],
            );
        }
        Ok((loss, grad))
    }

    /// Folds a train-mode pass's batch statistics into the running averages.
    pub fn update_running_stats(&mut self, pass: &BatchPass) {
        let n = (pass.samples.len() * (self.arch.input_len + 1 - self.arch.convs[0].1)) as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for c in 0..self.running_mean.len() {
            self.running_mean[c] =
                (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * pass.batch_mean[c];
            self.running_var[c] =
                (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * pass.batch_var[c] * unbias;
        }
    }
}

/// Intermediate values of a forward pass needed by `backward`.
#[derive(Debug, Clone)]
pub struct BatchPass {
    pub mode: Mode,
    pub outputs: Vec<f64>,
    samples: Vec<SampleCache>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchPass {
    /// True when both passes share every ReLU on/off state, every max-pool
    /// winner and every dropout mask, i.e. the network is the same
    /// piecewise-smooth branch at both points.
    pub fn same_pattern(&self, other: &BatchPass) -> bool {
        self.samples.len() == other.samples.len()
            && self.samples.iter().zip(&other.samples).all(|(a, b)| {
                (a.z > 0.0) == (b.z > 0.0)
                    && a.stages.iter().zip(&b.stages).all(|(x, y)| {
                        x.pool_index == y.pool_index
                            && x.dropout_mask == y.dropout_mask
                            && x
                                .activation
                                .iter()
                                .zip(&y.activation)
                                .all(|(u, v)| (*u > 0.0) == (*v > 0.0))
                    })
            })
    }
}

#[derive(Debug, Clone)]
struct SampleCache {
    xhat: Vec<f64>,
    stages: Vec<StageCache>,
    flat: Vec<f64>,
    z: f64,
}

#[derive(Debug, Clone)]
struct StageCache {
    /// Input to the stage's convolution.
    input: Vec<f64>,
    /// Post-ReLU activation (before pooling).
    activation: Vec<f64>,
    pool_index: Vec<usize>,
    dropout_mask: Option<Vec<f64>>,
}

pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::contract("MSE of an empty batch"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            actual: targets.len(),
        });
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

fn fill_uniform(dst: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in dst {
        *v = rng.gen_range(-bound..bound);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn split_two(
    grad: &mut [f64],
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    let (head, tail) = grad.split_at_mut(w.end);
    (&mut head[w.start..], &mut tail[..b.len()])
}

fn channel_stats(rows: &[Vec<f64>], channels: usize, len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (rows.len() * len) as f64;
    let mut mean = vec![0.0; channels];
    for r in rows {
        for c in 0..channels {
            mean[c] += r[c * len..(c + 1) * len].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; channels];
    for r in rows {
        for c in 0..channels {
            var[c] += r[c * len..(c + 1) * len]
                .iter()
                .map(|v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Valid 1D convolution (cross-correlation), channel-major layout.
fn conv_forward(
    input: &[f64],
    cin: usize,
    len: usize,
    w: &[f64],
    bias: Option<&[f64]>,
    cout: usize,
    k: usize,
) -> Vec<f64> {
    let out_len = len + 1 - k;
    let mut out = vec![0.0; cout * out_len];
    for o in 0..cout {
        let dst = &mut out[o * out_len..(o + 1) * out_len];
        if let Some(b) = bias {
            dst.fill(b[o]);
        }
        for c in 0..cin {
            let src = &input[c * len..(c + 1) * len];
            for j in 0..k {
                let wv = w[(o * cin + c) * k + j];
                for (d, s) in dst.iter_mut().zip(&src[j..j + out_len]) {
                    *d += wv * s;
                }
            }
        }
    }
    out
}

fn conv_weight_grad(
    input: &[f64],
    cin: usize,
    len: usize,
    d_out: &[f64],
    cout: usize,
    k: usize,
    gw: &mut [f64],
) {
    let out_len = len + 1 - k;
    for o in 0..cout {
        let d = &d_out[o * out_len..(o + 1) * out_len];
        for c in 0..cin {
            let src = &input[c * len..(c + 1) * len];
            for j in 0..k {
                gw[(o * cin + c) * k + j] += dot(d, &src[j..j + out_len]);
            }
        }
    }
}

/// Accumulates weight/bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    len: usize,
    w: &[f64],
    d_out: &[f64],
    cout: usize,
    k: usize,
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
) -> Vec<f64> {
    let out_len = len + 1 - k;
    conv_weight_grad(input, cin, len, d_out, cout, k, gw);
    if let Some(gb) = gb {
        for o in 0..cout {
            gb[o] += d_out[o * out_len..(o + 1) * out_len].iter().sum::<f64>();
        }
    }
    let mut d_in = vec![0.0; cin * len];
    for o in 0..cout {
        let d = &d_out[o * out_len..(o + 1) * out_len];
        for c in 0..cin {
            let dst = &mut d_in[c * len..(c + 1) * len];
            for j in 0..k {
                let wv = w[(o * cin + c) * k + j];
                for (t, dv) in dst[j..j + out_len].iter_mut().zip(d) {
                    *t += wv * dv;
                }
            }
        }
    }
    d_in
}

/// Max-pooling; ties route to the first maximal index.
fn pool_forward(
    input: &[f64],
    channels: usize,
    len: usize,
    size: usize,
    stride: usize,
) -> (Vec<f64>, Vec<usize>, usize) {
    let out_len = (len - size) / stride + 1;
    let mut out = Vec::with_capacity(channels * out_len);
    let mut idx = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = &input[c * len..(c + 1) * len];
        for t in 0..out_len {
            let start = t * stride;
            let mut best = start;
            for i in start + 1..start + size {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            idx.push(c * len + best);
        }
    }
    (out, idx, out_len)
}

fn pool_backward(d_out: &[f64], idx: &[usize], input_size: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; input_size];
    for (d, &i) in d_out.iter().zip(idx) {
        d_in[i] += d;
    }
    d_in
}
