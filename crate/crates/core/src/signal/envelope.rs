use rustfft::num_complex::Complex64;

use super::{with_planner, Signal};
use crate::error::{Error, Result};

/// Magnitude of the analytic signal `|x + j·H{x}|`.
///
/// The analytic signal is built in the frequency domain: negative frequencies
/// are zeroed, positive ones doubled, DC and Nyquist kept as-is.
pub fn analytic_envelope(input: &Signal) -> Result<Signal> {
    let n = input.len();
    if n < 2 {
        return Err(Error::contract("analytic envelope needs at least 2 samples"));
    }
    let mut buf: Vec<Complex64> = input
        .samples()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();

    let (fwd, inv) = with_planner(|p| (p.plan_fft_forward(n), p.plan_fft_inverse(n)));
    fwd.process(&mut buf);

    let positive_end = n.div_ceil(2);
    for v in &mut buf[1..positive_end] {
        *v *= 2.0;
    }
    let negative_start = n / 2 + 1;
    for v in &mut buf[negative_start..] {
        *v = Complex64::new(0.0, 0.0);
    }

    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    let env = buf.iter().map(|c| c.norm() * scale).collect();
    Ok(Signal::from_trusted(env, input.sample_rate()))
}
