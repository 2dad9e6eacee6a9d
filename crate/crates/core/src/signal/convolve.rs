use rustfft::num_complex::Complex64;

use super::{with_planner, Signal};
use crate::error::{Error, Result};

/// Full linear convolution via zero-padded FFT; output length is
/// `x.len() + h.len() - 1`.
pub fn convolve(x: &Signal, h: &Signal) -> Result<Signal> {
    if x.sample_rate() != h.sample_rate() {
        return Err(Error::contract(format!(
            "cannot convolve {} Hz with {} Hz",
            x.sample_rate(),
            h.sample_rate()
        )));
    }
    if x.is_empty() || h.is_empty() {
        return Err(Error::contract("convolution operands must be non-empty"));
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();

    let pad = |s: &Signal| {
        let mut v: Vec<Complex64> = s.samples().iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);

    let (fwd, inv) = with_planner(|p| (p.plan_fft_forward(n), p.plan_fft_inverse(n)));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);

    let scale = 1.0 / n as f64;
    let out = a[..out_len].iter().map(|c| c.re * scale).collect();
    Ok(Signal::from_trusted(out, x.sample_rate()))
}
