//! Complex baseband signals, IQ interleaving, power normalization and AWGN.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::Complex;

/// A block of complex baseband samples taken at `sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex>,
    sample_rate_hz: f64,
}

impl ComplexSignal {
    /// Panics if `sample_rate_hz` is not a positive finite number.
    pub fn new(samples: Vec<Complex>, sample_rate_hz: f64) -> Self {
        assert!(
            sample_rate_hz.is_finite() && sample_rate_hz > 0.0,
            "sample rate must be positive, got {sample_rate_hz}"
        );
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self::new(alloc::vec![Complex::new(0.0, 0.0); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[Complex] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn is_finite(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.re.is_finite() && s.im.is_finite())
    }

    /// Multiplies every sample by a complex constant.
    pub fn scaled(&self, factor: Complex) -> Self {
        Self::new(
            self.samples.iter().map(|&s| s * factor).collect(),
            self.sample_rate_hz,
        )
    }

    /// Copy of `len` samples starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let available = self.samples.len().saturating_sub(start);
        if available < len {
            return Err(crate::Error::InsufficientSamples {
                needed: len,
                available,
            });
        }
        Ok(Self::new(
            self.samples[start..start + len].to_vec(),
            self.sample_rate_hz,
        ))
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn resized(mut self, len: usize) -> Self {
        self.samples.resize(len, Complex::new(0.0, 0.0));
        self
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            bail!(InvalidInput, "empty signal");
        }
        Ok(())
    }
}

/// Interleaved real layout `[I0, Q0, I1, Q1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedVector(Vec<f64>);

impl InterleavedVector {
    /// Fails on odd-length input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            bail!(InvalidInput, "interleaved length {} is odd", values.len());
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn deinterleave(&self) -> Vec<Complex> {
        deinterleave_into_complex(&self.0)
    }
}

/// `[s0, s1, ...]` to `[Re s0, Im s0, Re s1, Im s1, ...]`.
pub fn interleave_iq(signal: &ComplexSignal) -> Result<InterleavedVector> {
    signal.ensure_non_empty()?;
    Ok(InterleavedVector(interleave_samples(signal.samples())))
}

pub(crate) fn interleave_samples(samples: &[Complex]) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        out.push(s.re);
        out.push(s.im);
    }
    out
}

pub(crate) fn deinterleave_into_complex(values: &[f64]) -> Vec<Complex> {
    values
        .chunks_exact(2)
        .map(|p| Complex::new(p[0], p[1]))
        .collect()
}

/// `(1/N) * sum |s_i|^2`.
pub fn mean_power(signal: &ComplexSignal) -> Result<f64> {
    signal.ensure_non_empty()?;
    Ok(power_of(signal.samples()))
}

pub(crate) fn power_of(samples: &[Complex]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Denominator used by [`power_normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// Divide by `sqrt(mean |s|^2)`: output has unit mean power.
    #[default]
    Rms,
    /// Divide by `sqrt(mean |s|)`, the formula as it is commonly typeset.
    AsPrinted,
}

pub fn power_normalize(signal: &ComplexSignal, mode: NormalizationMode) -> Result<ComplexSignal> {
    signal.ensure_non_empty()?;
    let n = signal.len() as f64;
    let denom = match mode {
        NormalizationMode::Rms => (signal.samples().iter().map(|s| s.norm_sqr()).sum::<f64>() / n).sqrt(),
        NormalizationMode::AsPrinted => (signal.samples().iter().map(|s| s.norm()).sum::<f64>() / n).sqrt(),
    };
    if denom == 0.0 || !denom.is_finite() {
        bail!(DegenerateSignal, "cannot normalize an all-zero signal");
    }
    let inv = 1.0 / denom;
    Ok(ComplexSignal::new(
        signal.samples().iter().map(|&s| s * inv).collect(),
        signal.sample_rate_hz(),
    ))
}

/// Unit-variance circularly symmetric complex Gaussian samples
/// (variance 1/2 on each rail).
pub fn unit_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<Complex> {
    let rail = core::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(re * rail, im * rail)
        })
        .collect()
}

/// Noise variance that puts `signal_power` at `snr_db`.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Adds `unit_noise` scaled so the result sits at `snr_db` relative to the
/// signal's own mean power. `snr_db = +inf` returns the input unchanged.
///
/// Reusing the same `unit_noise` across SNR levels gives common random
/// numbers for sweeps.
pub fn add_scaled_noise(
    signal: &ComplexSignal,
    snr_db: f64,
    unit_noise: &[Complex],
) -> Result<ComplexSignal> {
    signal.ensure_non_empty()?;
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if snr_db.is_nan() {
        bail!(InvalidInput, "snr is NaN");
    }
    if unit_noise.len() < signal.len() {
        bail!(
            InvalidInput,
            "noise buffer of {} samples is shorter than the signal ({})",
            unit_noise.len(),
            signal.len()
        );
    }
    let power = power_of(signal.samples());
    if power <= 0.0 {
        bail!(DegenerateSignal, "cannot set an SNR against a zero-power signal");
    }
    let sigma = noise_variance(power, snr_db).sqrt();
    Ok(ComplexSignal::new(
        signal
            .samples()
            .iter()
            .zip(unit_noise)
            .map(|(&s, &w)| s + w * sigma)
            .collect(),
        signal.sample_rate_hz(),
    ))
}

/// Additive white Gaussian noise at `snr_db` (measured against the signal's
/// mean power). `f64::INFINITY` means "no noise".
pub fn add_awgn<R: Rng + ?Sized>(
    signal: &ComplexSignal,
    snr_db: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    signal.ensure_non_empty()?;
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let noise = unit_noise(signal.len(), rng);
    add_scaled_noise(signal, snr_db, &noise)
}
