//! FIR design, polyphase rational resampling, frequency shifting and a small
//! radix-2 FFT.

mod fft;
mod fir;
mod resample;

pub use fft::{fft, fft_in_place, ifft, ifft_in_place};
pub use fir::{design_lowpass, FirFilter};
pub use resample::{default_num_taps, rational_resample, rational_resample_with};

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::{Complex, ComplexSignal};

/// Multiplies by `exp(j 2 pi delta_hz n / fs)`.
pub fn frequency_shift(signal: &ComplexSignal, delta_hz: f64) -> Result<ComplexSignal> {
    let fs = signal.sample_rate_hz();
    if !delta_hz.is_finite() || delta_hz.abs() >= fs / 2.0 {
        bail!(
            InvalidSpec,
            "shift of {delta_hz} Hz is outside the Nyquist range of a {fs} Hz signal"
        );
    }
    if delta_hz == 0.0 {
        return Ok(signal.clone());
    }
    let step = 2.0 * PI * delta_hz / fs;
    let out: Vec<Complex> = signal
        .samples()
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            // phase wrapped per sample index keeps long captures accurate
            let phase = (step * n as f64) % (2.0 * PI);
            s * Complex::new(phase.cos(), phase.sin())
        })
        .collect();
    Ok(ComplexSignal::new(out, fs))
}

/// Frequency (Hz) of the largest-magnitude bin of an FFT over the first
/// power-of-two samples of `signal`. Bins above Nyquist map to negative
/// frequencies.
pub fn peak_frequency(signal: &ComplexSignal) -> f64 {
    let n = prev_power_of_two(signal.len());
    let spectrum = fft(&signal.samples()[..n]);
    let (bin, _) = spectrum
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (k, v)| {
            let m = v.norm_sqr();
            if m > best.1 {
                (k, m)
            } else {
                best
            }
        });
    bin_frequency(bin, n, signal.sample_rate_hz())
}

/// Centre frequency of FFT bin `bin` for an `n`-point transform at `fs`.
pub fn bin_frequency(bin: usize, n: usize, fs: f64) -> f64 {
    let k = if bin >= n / 2 { bin as f64 - n as f64 } else { bin as f64 };
    k * fs / n as f64
}

/// Fraction of signal energy within `|f| <= half_band_hz`, estimated from
/// the FFT of the zero-padded signal.
pub fn band_energy_fraction(signal: &ComplexSignal, half_band_hz: f64) -> f64 {
    let n = signal.len().next_power_of_two();
    let mut buf = signal.samples().to_vec();
    buf.resize(n, Complex::new(0.0, 0.0));
    fft_in_place(&mut buf);
    let fs = signal.sample_rate_hz();
    let mut inside = 0.0;
    let mut total = 0.0;
    for (k, v) in buf.iter().enumerate() {
        let e = v.norm_sqr();
        total += e;
        if bin_frequency(k, n, fs).abs() <= half_band_hz {
            inside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

pub(crate) fn prev_power_of_two(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tone(freq: f64, fs: f64, len: usize) -> ComplexSignal {
        ComplexSignal::new(
            (0..len)
                .map(|n| Complex::from_polar(1.0, 2.0 * PI * freq * n as f64 / fs))
                .collect(),
            fs,
        )
    }

    #[test]
    fn zero_shift_is_identity() {
        let s = tone(1e6, 20e6, 128);
        assert_eq!(frequency_shift(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn shift_moves_fft_peak() {
        let fs = 20e6;
        let s = tone(1e6, fs, 4096);
        let shifted = frequency_shift(&s, 2e6).unwrap();
        let bin = fs / 4096.0;
        assert!((peak_frequency(&shifted) - 3e6).abs() <= bin);
    }

    #[test]
    fn shift_preserves_power() {
        let s = tone(1.3e6, 20e6, 1000).scaled(Complex::new(0.3, -1.2));
        let shifted = frequency_shift(&s, -4.1e6).unwrap();
        let p0 = crate::signal::mean_power(&s).unwrap();
        let p1 = crate::signal::mean_power(&shifted).unwrap();
        assert!((p0 - p1).abs() < 1e-9);
    }

    #[test]
    fn shift_beyond_nyquist_rejected() {
        let s = tone(0.0, 20e6, 16);
        assert!(matches!(
            frequency_shift(&s, 10e6),
            Err(crate::Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn prev_pow2() {
        assert_eq!(prev_power_of_two(1), 1);
        assert_eq!(prev_power_of_two(12900), 8192);
        assert_eq!(prev_power_of_two(8192), 8192);
    }
}
