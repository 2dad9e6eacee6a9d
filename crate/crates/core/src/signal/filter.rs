//! Butterworth IIR design by the bilinear transform with pre-warped corners,
//! realized as cascaded second-order sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::Signal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Identity,
    Lowpass,
    Bandpass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign {
    pub kind: FilterKind,
    /// Order of the analog prototype (per side for bandpass).
    pub order: usize,
    pub corners_hz: Vec<f64>,
    pub sample_rate: u32,
}

/// One second-order section, `b0 + b1 z^-1 + b2 z^-2` over `1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    fn poles(&self) -> Vec<Complex64> {
        let (a1, a2) = (self.a[0], self.a[1]);
        if a2 == 0.0 {
            if a1 == 0.0 {
                return vec![];
            }
            return vec![Complex64::new(-a1, 0.0)];
        }
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        vec![(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    design: FilterDesign,
}

impl IirFilter {
    /// Pass-through filter at the given rate.
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            sections: vec![],
            design: FilterDesign {
                kind: FilterKind::Identity,
                order: 0,
                corners_hz: vec![],
                sample_rate,
            },
        }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn design(&self) -> &FilterDesign {
        &self.design
    }

    pub fn sample_rate(&self) -> u32 {
        self.design.sample_rate
    }

    /// Expanded direct-form polynomials `(feedforward, feedback)`, with
    /// `feedback[0] == 1`.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![1.0];
        let mut a = vec![1.0];
        for s in &self.sections {
            b = poly_mul(&b, &s.b);
            a = poly_mul(&a, &[1.0, s.a[0], s.a[1]]);
        }
        (b, a)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.design.sample_rate as f64;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    out
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Left-half-plane poles of the normalized analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (0..order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect()
}

/// Groups digital poles into conjugate pairs (or pairs of real poles).
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Option<Complex64>)> {
    let tol = 1e-12;
    let mut pairs = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for &p in poles {
        if p.im > tol {
            pairs.push((p, Some(p.conj())));
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for chunk in reals.chunks(2) {
        let first = Complex64::new(chunk[0], 0.0);
        pairs.push((first, chunk.get(1).map(|&r| Complex64::new(r, 0.0))));
    }
    pairs
}

fn denominator(p: Complex64, q: Option<Complex64>) -> [f64; 2] {
    match q {
        Some(q) => {
            let sum = p + q;
            let prod = p * q;
            [-sum.re, prod.re]
        }
        None => [-p.re, 0.0],
    }
}

fn check_corner(freq_hz: f64, fs: f64) -> Result<()> {
    if !(freq_hz > 0.0 && freq_hz < fs / 2.0) {
        return Err(Error::range(format!(
            "corner {freq_hz} Hz must lie strictly between 0 and Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Digital Butterworth lowpass of the given order with unit DC gain.
pub fn design_butterworth_lowpass(order: usize, cutoff_hz: f64, sample_rate: u32) -> Result<IirFilter> {
    if order == 0 {
        return Err(Error::range("filter order must be positive"));
    }
    let fs = sample_rate as f64;
    check_corner(cutoff_hz, fs)?;
    let wc = prewarp(cutoff_hz, fs);

    let digital: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs))
        .collect();

    let sections = pair_poles(&digital)
        .into_iter()
        .map(|(p, q)| {
            let a = denominator(p, q);
            // Zeros at z = -1; normalize each section to unit gain at DC.
            if q.is_some() {
                let g = (1.0 + a[0] + a[1]) / 4.0;
                Biquad {
                    b: [g, 2.0 * g, g],
                    a,
                }
            } else {
                let g = (1.0 + a[0]) / 2.0;
                Biquad { b: [g, g, 0.0], a }
            }
        })
        .collect();

    Ok(IirFilter {
        sections,
        design: FilterDesign {
            kind: FilterKind::Lowpass,
            order,
            corners_hz: vec![cutoff_hz],
            sample_rate,
        },
    })
}

/// Digital Butterworth bandpass; the overall order is `2 * order_per_side`.
/// Gain is unity at the (pre-warped) geometric center frequency.
pub fn design_butterworth_bandpass(
    order_per_side: usize,
    low_hz: f64,
    high_hz: f64,
    sample_rate: u32,
) -> Result<IirFilter> {
    if order_per_side == 0 {
        return Err(Error::range("filter order must be positive"));
    }
    let fs = sample_rate as f64;
    check_corner(low_hz, fs)?;
    check_corner(high_hz, fs)?;
    if low_hz >= high_hz {
        return Err(Error::range(format!(
            "bandpass corners inverted: {low_hz} Hz >= {high_hz} Hz"
        )));
    }
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut digital = Vec::with_capacity(2 * order_per_side);
    for p in prototype_poles(order_per_side) {
        // s^2 - p·bw·s + w0^2 = 0
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            digital.push(bilinear(s, fs));
        }
    }

    let mut sections: Vec<Biquad> = pair_poles(&digital)
        .into_iter()
        .map(|(p, q)| Biquad {
            b: [1.0, 0.0, -1.0],
            a: denominator(p, q),
        })
        .collect();

    let mut filter = IirFilter {
        sections: sections.clone(),
        design: FilterDesign {
            kind: FilterKind::Bandpass,
            order: order_per_side,
            corners_hz: vec![low_hz, high_hz],
            sample_rate,
        },
    };
    // Center of the analog band maps back to this digital frequency.
    let center_hz = fs / PI * (w0_sq.sqrt() / (2.0 * fs)).atan();
    let g = filter.response(center_hz).norm().recip();
    let per_section = g.powf(1.0 / sections.len() as f64);
    for s in &mut sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    filter.sections = sections;
    Ok(filter)
}

/// Causal single-pass filtering through the cascade (transposed direct form II).
const FLUSH_BELOW: f64 = 1e-250;

pub fn filter_apply(filter: &IirFilter, input: &Signal) -> Result<Signal> {
    if filter.sample_rate() != input.sample_rate() {
        return Err(Error::contract(format!(
            "filter designed for {} Hz applied to {} Hz signal",
            filter.sample_rate(),
            input.sample_rate()
        )));
    }
    let mut data = input.samples().to_vec();
    for s in &filter.sections {
        let [b0, b1, b2] = s.b;
        let [a1, a2] = s.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for x in data.iter_mut() {
            let y = b0 * *x + z1;
            z1 = b1 * *x - a1 * y + z2;
            z2 = b2 * *x - a2 * y;
            // Decaying states would otherwise go subnormal, which is very slow.
            if z1.abs() < FLUSH_BELOW {
                z1 = 0.0;
            }
            if z2.abs() < FLUSH_BELOW {
                z2 = 0.0;
            }
            *x = y;
        }
    }
    Ok(Signal::from_trusted(data, input.sample_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Magnitude of the bilinear-transformed analog Butterworth lowpass.
    fn butterworth_lowpass_db(f: f64, fc: f64, order: usize, fs: f64) -> f64 {
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        -10.0 * (1.0 + ratio.powi(2 * order as i32)).log10()
    }

    #[test]
    fn lowpass_gain_examples() {
        let f = design_butterworth_lowpass(6, 20.0, 16000).unwrap();
        assert!(f.gain_db(0.0).abs() < 1e-9);
        assert!((f.gain_db(20.0) + 3.0103).abs() < 0.1);
        let expected_40 = -10.0 * (1.0 + 2f64.powi(12)).log10();
        assert!((expected_40 + 36.12).abs() < 0.01);
        assert!((f.gain_db(40.0) - expected_40).abs() < 0.5);
    }

    #[test]
    fn lowpass_matches_analytic_magnitude() {
        let fs = 16000.0;
        let f = design_butterworth_lowpass(6, 20.0, 16000).unwrap();
        let mut freq = 0.5;
        while freq <= 0.4 * fs {
            let want = butterworth_lowpass_db(freq, 20.0, 6, fs);
            let got = f.gain_db(freq);
            assert!((got - want).abs() < 0.1, "f={freq}: {got} vs {want}");
            freq *= 1.05;
        }
    }

    /// DFT of the applied filter's impulse response against the design. Below
    /// `FLOOR_DB` the f64 recursion's rounding noise dominates, so there the
    /// response only has to stay under the floor.
    #[test]
    fn impulse_response_dft_matches_design() {
        const FLOOR_DB: f64 = -200.0;
        let fs = 16000;
        let n = 1 << 16;
        let f = design_butterworth_lowpass(6, 20.0, fs).unwrap();
        let h = filter_apply(&f, &Signal::impulse(n, 0, fs)).unwrap();
        let mut spec: Vec<rustfft::num_complex::Complex64> =
            h.samples().iter().map(|&v| v.into()).collect();
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        let mut matched = 0;
        for (k, bin) in spec.iter().enumerate().take(n * 2 / 5 + 1).skip(1) {
            let freq = k as f64 * fs as f64 / n as f64;
            let got = 20.0 * bin.norm().log10();
            let want = f.gain_db(freq);
            if want > FLOOR_DB {
                assert!((got - want).abs() < 0.1, "f={freq}: {got} vs {want}");
                matched += 1;
            } else {
                assert!(got < FLOOR_DB + 20.0, "f={freq}: {got} dB above the noise floor");
            }
        }
        assert!(matched > 200, "{matched}");
    }

    #[test]
    fn lowpass_rejects_corner_at_nyquist() {
        assert!(matches!(
            design_butterworth_lowpass(6, 8000.0, 16000),
            Err(Error::Range(_))
        ));
        assert!(design_butterworth_lowpass(6, 0.0, 16000).is_err());
    }

    #[test]
    fn bandpass_125_examples() {
        let f = design_butterworth_bandpass(3, 88.4, 176.8, 16000).unwrap();
        assert!(f.gain_db(125.0) >= -0.5);
        assert!((f.gain_db(88.4) + 3.01).abs() < 1.0);
        assert!((f.gain_db(176.8) + 3.01).abs() < 1.0);
    }

    #[test]
    fn bandpass_corners_are_minus_3db_within_5_percent() {
        for (lo, hi) in [(88.4, 176.8), (707.1, 1414.2), (5657.0, 7600.0), (111.4, 140.3)] {
            let f = design_butterworth_bandpass(3, lo, hi, 16000).unwrap();
            for corner in [lo, hi] {
                let inside = if corner == lo { corner * 1.05 } else { corner * 0.95 };
                let outside = if corner == lo { corner * 0.95 } else { corner * 1.05 };
                assert!(f.gain_db(inside) > -3.0103, "{lo}-{hi} inside {corner}");
                assert!(f.gain_db(outside) < -3.0103, "{lo}-{hi} outside {corner}");
            }
        }
    }

    #[test]
    fn bandpass_rejects_bad_corners() {
        assert!(design_butterworth_bandpass(3, 200.0, 100.0, 16000).is_err());
        assert!(design_butterworth_bandpass(3, 100.0, 8000.0, 16000).is_err());
        assert!(design_butterworth_bandpass(3, 100.0, 100.0, 16000).is_err());
    }

    #[test]
    fn designed_filters_are_stable() {
        let filters = [
            design_butterworth_lowpass(6, 20.0, 16000).unwrap(),
            design_butterworth_lowpass(5, 1000.0, 16000).unwrap(),
            design_butterworth_bandpass(3, 88.4, 176.8, 16000).unwrap(),
            design_butterworth_bandpass(3, 5657.0, 7600.0, 16000).unwrap(),
            design_butterworth_bandpass(3, 111.4, 140.3, 16000).unwrap(),
            design_butterworth_bandpass(4, 10.0, 7000.0, 16000).unwrap(),
        ];
        for f in &filters {
            let poles = f.poles();
            let expected = match f.design().kind {
                FilterKind::Lowpass => f.design().order,
                FilterKind::Bandpass => 2 * f.design().order,
                FilterKind::Identity => 0,
            };
            assert_eq!(poles.len(), expected);
            assert!(poles.iter().all(|p| p.norm() < 1.0 - 1e-8), "{:?}", f.design());
            let (_, a) = f.coefficients();
            assert_eq!(a[0], 1.0);
        }
    }

    #[test]
    fn identity_and_zero_input() {
        let x = Signal::new(vec![0.5, -1.0, 0.25, 3.0], 16000).unwrap();
        let id = IirFilter::identity(16000);
        assert_eq!(filter_apply(&id, &x).unwrap(), x);
        let (b, a) = id.coefficients();
        assert_eq!((b, a), (vec![1.0], vec![1.0]));

        let bp = design_butterworth_bandpass(3, 88.4, 176.8, 16000).unwrap();
        let zero = Signal::zeros(1000, 16000);
        assert!(filter_apply(&bp, &zero).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rate_mismatch_is_contract_error() {
        let f = design_butterworth_lowpass(6, 20.0, 16000).unwrap();
        let x = Signal::zeros(10, 8000);
        assert!(matches!(filter_apply(&f, &x), Err(Error::Contract(_))));
    }

    #[test]
    fn output_length_equals_input_length() {
        let f = design_butterworth_lowpass(2, 100.0, 16000).unwrap();
        let x = Signal::impulse(777, 3, 16000);
        assert_eq!(filter_apply(&f, &x).unwrap().len(), 777);
    }
}
