//! Layer shape table for the band regressor.

/// Convolution stages followed by a single-output dense layer.
///
/// Every convolution is valid (no padding). Max-pooling follows the stages
/// flagged in `pool_after`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    /// `(filters, kernel)` per convolution, input channels chain from 1.
    pub convs: [(usize, usize); 4],
    pub pool_after: [bool; 4],
    pub pool_size: usize,
    pub pool_stride: usize,
}

impl Architecture {
    /// 200-sample input, 32/16/8/4 filters with kernels 10/5/5/5, size-2
    /// stride-1 max-pooling after the first three convolutions.
    pub const fn standard() -> Self {
        Self {
            input_len: 200,
            convs: [(32, 10), (16, 5), (8, 5), (4, 5)],
            pool_after: [true, true, true, false],
            pool_size: 2,
            pool_stride: 1,
        }
    }

    pub fn in_channels(&self, stage: usize) -> usize {
        if stage == 0 {
            1
        } else {
            self.convs[stage - 1].0
        }
    }

    /// Sequence lengths: input, then after each conv and each pool in order.
    pub fn lengths(&self) -> Vec<usize> {
        let mut out = vec![self.input_len];
        let mut len = self.input_len;
        for (stage, &(_, k)) in self.convs.iter().enumerate() {
            len = len + 1 - k;
            out.push(len);
            if self.pool_after[stage] {
                len = (len - self.pool_size) / self.pool_stride + 1;
                out.push(len);
            }
        }
        out
    }

    /// Length entering conv `stage`.
    pub fn conv_input_len(&self, stage: usize) -> usize {
        let mut len = self.input_len;
        for s in 0..stage {
            len = len + 1 - self.convs[s].1;
            if self.pool_after[s] {
                len = (len - self.pool_size) / self.pool_stride + 1;
            }
        }
        len
    }

    pub fn final_len(&self) -> usize {
        *self.lengths().last().unwrap()
    }

    pub fn flatten_width(&self) -> usize {
        self.final_len() * self.convs[3].0
    }
}

/// Offsets of each parameter block inside the flat trainable vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv_w: [std::ops::Range<usize>; 4],
    /// Conv biases; stage 0 has none (batch-norm shift replaces it).
    pub conv_b: [std::ops::Range<usize>; 4],
    pub bn_gamma: std::ops::Range<usize>,
    pub bn_beta: std::ops::Range<usize>,
    pub fc_w: std::ops::Range<usize>,
    pub fc_b: std::ops::Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (c1, k1) = arch.convs[0];
        let w0 = take(c1 * k1);
        let b0 = take(0);
        let bn_gamma = take(c1);
        let bn_beta = take(c1);
        let mut conv_w = [w0, 0..0, 0..0, 0..0];
        let mut conv_b = [b0, 0..0, 0..0, 0..0];
        for stage in 1..4 {
            let (c, k) = arch.convs[stage];
            conv_w[stage] = take(c * arch.in_channels(stage) * k);
            conv_b[stage] = take(c);
        }
        let fc_w = take(arch.flatten_width());
        let fc_b = take(1);
        Self {
            conv_w,
            conv_b,
            bn_gamma,
            bn_beta,
            fc_w,
            fc_b,
            total: at,
        }
    }
}
