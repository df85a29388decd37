use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::{Complex, ComplexSignal};

use super::fir::design_lowpass;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Anti-alias filter length used by [`rational_resample`]: `16 * max(up, down) + 1`.
pub fn default_num_taps(up: usize, down: usize) -> usize {
    16 * up.max(down) + 1
}

/// Polyphase resampling by `up / down` with the default anti-alias filter.
///
/// The output holds exactly `floor(len * up / down)` samples at
/// `fs * up / down`. The filter's group delay is compensated, so output
/// sample `m` is time-aligned with input time `m * down / up`; samples past
/// the input end are treated as zero.
pub fn rational_resample(signal: &ComplexSignal, up: usize, down: usize) -> Result<ComplexSignal> {
    if up == 0 || down == 0 {
        bail!(InvalidSpec, "resampling factors must be positive, got {up}/{down}");
    }
    let g = gcd(up, down);
    rational_resample_with(signal, up, down, default_num_taps(up / g, down / g))
}

/// [`rational_resample`] with an explicit (odd) anti-alias filter length.
pub fn rational_resample_with(
    signal: &ComplexSignal,
    up: usize,
    down: usize,
    num_taps: usize,
) -> Result<ComplexSignal> {
    if up == 0 || down == 0 {
        bail!(InvalidSpec, "resampling factors must be positive, got {up}/{down}");
    }
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    let out_rate = signal.sample_rate_hz() * up as f64 / down as f64;
    if up == 1 && down == 1 {
        return Ok(signal.clone());
    }

    let filter = design_lowpass(0.5 / up.max(down) as f64, num_taps)?;
    let taps = filter.coefficients();
    let gd = filter.group_delay_samples();

    // branch r holds h[r], h[r + up], h[r + 2 up], ...
    let branches: Vec<Vec<f64>> = (0..up)
        .map(|r| taps.iter().skip(r).step_by(up).map(|&h| h * up as f64).collect())
        .collect();

    let x = signal.samples();
    let in_len = x.len();
    let out_len = ((in_len as u128 * up as u128) / down as u128) as usize;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let n0 = m * down + gd;
        let r = n0 % up;
        let base = (n0 - r) / up;
        let mut acc = Complex::new(0.0, 0.0);
        for (t, &h) in branches[r].iter().enumerate() {
            if t > base {
                break;
            }
            let i = base - t;
            if i < in_len {
                acc += x[i] * h;
            }
        }
        out.push(acc);
    }
    Ok(ComplexSignal::new(out, out_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{peak_frequency, tests::tone};
    use crate::rng_from_seed;
    use crate::signal::unit_noise;
    use proptest::prelude::*;

    #[test]
    fn receiver_buffer_lengths() {
        let fs = 31.25e6;
        let a = rational_resample(&ComplexSignal::zeros(12_900, fs), 16, 25).unwrap();
        assert_eq!(a.len(), 8256);
        assert!((a.sample_rate_hz() - 20e6).abs() < 1e-6);
        let b = rational_resample(&ComplexSignal::zeros(12_800, fs), 16, 25).unwrap();
        assert_eq!(b.len(), 8192);
    }

    #[test]
    fn tone_survives_downsampling() {
        let s = tone(2e6, 31.25e6, 12_900);
        let out = rational_resample(&s, 16, 25).unwrap();
        let f = peak_frequency(&out);
        let bin = 20e6 / 8192.0;
        assert!((f - 2e6).abs() <= bin, "peak at {f}");
    }

    #[test]
    fn passband_amplitude_preserved() {
        let s = tone(1e6, 31.25e6, 12_900);
        let out = rational_resample(&s, 16, 25).unwrap();
        for v in &out.samples()[500..7500] {
            assert!((v.norm() - 1.0).abs() < 0.01, "{}", v.norm());
        }
    }

    #[test]
    fn equal_factors_are_identity() {
        let x = ComplexSignal::new(unit_noise(300, &mut rng_from_seed(4)), 1e6);
        for k in 1..6 {
            assert_eq!(rational_resample(&x, k, k).unwrap(), x);
        }
    }

    #[test]
    fn upsample_then_downsample_recovers_bandlimited_signal() {
        // 2/1 followed by 1/2 on a tone well inside the band
        let s = tone(0.05e6, 1e6, 2000);
        let up = rational_resample(&s, 2, 1).unwrap();
        let down = rational_resample(&up, 1, 2).unwrap();
        assert_eq!(down.len(), 2000);
        for (a, b) in down.samples()[100..1900].iter().zip(&s.samples()[100..1900]) {
            assert!((a - b).norm() < 0.02);
        }
    }

    #[test]
    fn zero_factor_rejected() {
        let x = ComplexSignal::zeros(10, 1.0);
        assert!(matches!(rational_resample(&x, 0, 3), Err(crate::Error::InvalidSpec(_))));
        assert!(matches!(rational_resample(&x, 2, 0), Err(crate::Error::InvalidSpec(_))));
    }

    proptest! {
        #[test]
        fn output_length_formula(len in 1usize..3000, up in 1usize..30, down in 1usize..30) {
            let x = ComplexSignal::zeros(len, 1e6);
            let y = rational_resample(&x, up, down).unwrap();
            prop_assert_eq!(y.len(), len * up / down);
        }

        #[test]
        fn superposition(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = rng_from_seed(seed);
            let x = ComplexSignal::new(unit_noise(400, &mut rng), 31.25e6);
            let y = ComplexSignal::new(unit_noise(400, &mut rng), 31.25e6);
            let combo = ComplexSignal::new(
                x.samples().iter().zip(y.samples()).map(|(&p, &q)| p * a + q * b).collect(),
                31.25e6,
            );
            let lhs = rational_resample(&combo, 16, 25).unwrap();
            let rx = rational_resample(&x, 16, 25).unwrap();
            let ry = rational_resample(&y, 16, 25).unwrap();
            for ((l, p), q) in lhs.samples().iter().zip(rx.samples()).zip(ry.samples()) {
                prop_assert!((l - (p * a + q * b)).norm() < 1e-9);
            }
        }
    }
}
