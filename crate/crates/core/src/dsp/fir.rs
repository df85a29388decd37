use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::{Complex, ComplexSignal};

/// Real, odd-length, linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    coefficients: Vec<f64>,
}

impl FirFilter {
    /// Fails unless `coefficients` has odd length and is symmetric.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len().is_multiple_of(2) {
            bail!(InvalidSpec, "FIR length {} is not odd", coefficients.len());
        }
        let n = coefficients.len();
        let scale = coefficients.iter().map(|c| c.abs()).fold(0.0, f64::max).max(1e-300);
        for k in 0..n / 2 {
            if (coefficients[k] - coefficients[n - 1 - k]).abs() > 1e-12 * scale {
                bail!(InvalidSpec, "FIR coefficients are not symmetric");
            }
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn group_delay_samples(&self) -> usize {
        (self.coefficients.len() - 1) / 2
    }

    pub fn dc_gain(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// Complex frequency response at normalized frequency `f` (cycles/sample).
    pub fn response_at(&self, f: f64) -> Complex {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let a = -2.0 * PI * f * k as f64;
                Complex::new(a.cos(), a.sin()) * c
            })
            .sum()
    }

    /// Same-length filtering with the group delay removed, so output sample
    /// `n` lines up with input sample `n`. Samples outside the input are
    /// treated as zero.
    pub fn filter(&self, signal: &ComplexSignal) -> ComplexSignal {
        let x = signal.samples();
        let n = x.len() as isize;
        let gd = self.group_delay_samples() as isize;
        let out = (0..n)
            .map(|i| {
                let mut acc = Complex::new(0.0, 0.0);
                for (k, &c) in self.coefficients.iter().enumerate() {
                    let idx = i + gd - k as isize;
                    if (0..n).contains(&idx) {
                        acc += x[idx as usize] * c;
                    }
                }
                acc
            })
            .collect();
        ComplexSignal::new(out, signal.sample_rate_hz())
    }
}

/// Hamming-windowed sinc low-pass with unit DC gain.
///
/// `cutoff_normalized` is in cycles/sample and must lie in `(0, 0.5)`;
/// `num_taps` must be odd.
pub fn design_lowpass(cutoff_normalized: f64, num_taps: usize) -> Result<FirFilter> {
    if !(cutoff_normalized > 0.0 && cutoff_normalized < 0.5) {
        bail!(InvalidSpec, "cutoff {cutoff_normalized} outside (0, 0.5)");
    }
    if num_taps == 0 || num_taps.is_multiple_of(2) {
        bail!(InvalidSpec, "num_taps {num_taps} must be odd");
    }
    let mid = (num_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|k| {
            let t = k as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff_normalized
            } else {
                (2.0 * PI * cutoff_normalized * t).sin() / (PI * t)
            };
            let window = if num_taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * k as f64 / (num_taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    // exact symmetry despite rounding in the window evaluation
    for k in 0..num_taps / 2 {
        let avg = 0.5 * (taps[k] + taps[num_taps - 1 - k]);
        taps[k] = avg;
        taps[num_taps - 1 - k] = avg;
    }
    FirFilter::new(taps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fft;

    #[test]
    fn unit_dc_gain() {
        let f = design_lowpass(0.25, 63).unwrap();
        assert!((f.dc_gain() - 1.0).abs() < 1e-3);
        assert_eq!(f.group_delay_samples(), 31);
    }

    #[test]
    fn symmetric_taps() {
        let f = design_lowpass(0.1, 101).unwrap();
        let c = f.coefficients();
        for k in 0..c.len() {
            assert_eq!(c[k], c[c.len() - 1 - k]);
        }
    }

    #[test]
    fn invalid_designs() {
        assert!(design_lowpass(0.0, 63).is_err());
        assert!(design_lowpass(0.5, 63).is_err());
        assert!(design_lowpass(0.2, 64).is_err());
        assert!(FirFilter::new(alloc::vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn stopband_tone_attenuated_40db() {
        let filt = design_lowpass(0.25, 63).unwrap();
        let n = 4096;
        let tone = ComplexSignal::new(
            (0..n)
                .map(|k| Complex::from_polar(1.0, 2.0 * PI * 0.4 * k as f64))
                .collect(),
            1.0,
        );
        let out = filt.filter(&tone);
        let peak = |s: &[Complex]| fft(s).iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        // skip the edge transients of the same-length filter
        let before = peak(&tone.samples()[1024..3072]);
        let after = peak(&out.samples()[1024..3072]);
        let atten_db = 10.0 * (before / after).log10();
        assert!(atten_db >= 40.0, "attenuation {atten_db} dB");
    }

    #[test]
    fn stopband_across_band() {
        for &taps in &[63usize, 101, 201] {
            let f = design_lowpass(0.2, taps).unwrap();
            let mut freq = 0.3;
            while freq <= 0.5 {
                let g = f.response_at(freq).norm();
                assert!(20.0 * g.log10() <= -40.0, "{taps} taps at {freq}: {g}");
                freq += 0.005;
            }
        }
    }
}
