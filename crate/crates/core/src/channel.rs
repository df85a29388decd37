//! Block-fading channel impairments and the random (channel, SNR) sampler
//! used for training augmentation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Error, Result};
use crate::{Complex, ComplexSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelModel {
    NoChannel,
    Rayleigh,
    TGnB,
    TGaxB,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 4] = [
        ChannelModel::NoChannel,
        ChannelModel::Rayleigh,
        ChannelModel::TGnB,
        ChannelModel::TGaxB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelModel::NoChannel => "none",
            ChannelModel::Rayleigh => "rayleigh",
            ChannelModel::TGnB => "tgn_b",
            ChannelModel::TGaxB => "tgax_b",
        }
    }

    /// Sum of expected tap powers.
    pub fn expected_gain(self) -> f64 {
        match self {
            ChannelModel::Rayleigh => RAYLEIGH_MEAN_POWER,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "none" | "nochannel" | "no_channel" => ChannelModel::NoChannel,
            "rayleigh" => ChannelModel::Rayleigh,
            "tgn" | "tgn_b" | "tgnb" => ChannelModel::TGnB,
            "tgax" | "tgax_b" | "tgaxb" => ChannelModel::TGaxB,
            _ => bail!(InvalidSpec, "unknown channel model '{s}'"),
        })
    }
}

/// -3 dB average path gain of the single NLOS Rayleigh path.
pub const RAYLEIGH_MEAN_POWER: f64 = 0.501_187_233_627_272_2;
pub const RAYLEIGH_DELAY_S: f64 = 1.5e-9;

/// Model-B style 9-tap power delay profile: delays (ns) and powers (dB).
pub const MODEL_B_DELAYS_NS: [f64; 9] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0];
pub const MODEL_B_POWERS_DB: [f64; 9] = [-5.4, -2.4, -10.7, -11.5, -7.4, -7.1, -10.3, -12.7, -16.3];

/// Expected tap powers of the Model-B profile, normalized to unit sum.
pub fn model_b_tap_powers() -> [f64; 9] {
    let mut p = MODEL_B_POWERS_DB.map(|db| 10f64.powf(db / 10.0));
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_s: f64,
    pub gain: Complex,
}

/// One draw of a tapped delay line, held fixed over a model-input window.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingRealization {
    taps: Vec<Tap>,
    source_model: ChannelModel,
}

impl FadingRealization {
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap {
                delay_s: 0.0,
                gain: Complex::new(1.0, 0.0),
            }],
            source_model: ChannelModel::NoChannel,
        }
    }

    /// Taps are sorted by delay. Fails on negative or non-finite delays.
    pub fn from_taps(mut taps: Vec<Tap>, source_model: ChannelModel) -> Result<Self> {
        if taps.is_empty() {
            bail!(InvalidInput, "a realization needs at least one tap");
        }
        if taps.iter().any(|t| !(t.delay_s >= 0.0) || !t.delay_s.is_finite()) {
            bail!(InvalidInput, "tap delays must be finite and non-negative");
        }
        taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
        Ok(Self { taps, source_model })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn source_model(&self) -> ChannelModel {
        self.source_model
    }

    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }
}

fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re * s, im * s)
}

/// Draws a realization of `model`. `NoChannel` yields the identity.
pub fn draw_realization<R: Rng + ?Sized>(model: ChannelModel, rng: &mut R) -> FadingRealization {
    match model {
        ChannelModel::NoChannel => FadingRealization::identity(),
        ChannelModel::Rayleigh => FadingRealization {
            taps: vec![Tap {
                delay_s: RAYLEIGH_DELAY_S,
                gain: complex_gaussian(RAYLEIGH_MEAN_POWER, rng),
            }],
            source_model: model,
        },
        // both names share the profile
        ChannelModel::TGnB | ChannelModel::TGaxB => FadingRealization {
            taps: MODEL_B_DELAYS_NS
                .iter()
                .zip(model_b_tap_powers())
                .map(|(&d, p)| Tap {
                    delay_s: d * 1e-9,
                    gain: complex_gaussian(p, rng),
                })
                .collect(),
            source_model: model,
        },
    }
}

/// Tapped-delay-line convolution at the signal's rate with delays rounded
/// to the nearest sample; the output keeps the input length.
pub fn apply_channel(signal: &ComplexSignal, realization: &FadingRealization) -> Result<ComplexSignal> {
    signal.ensure_non_empty()?;
    let fs = signal.sample_rate_hz();
    let x = signal.samples();
    let mut y = vec![Complex::new(0.0, 0.0); x.len()];
    for tap in realization.taps() {
        let shift = (tap.delay_s * fs).round() as usize;
        if shift >= x.len() {
            continue;
        }
        for (out, &inp) in y[shift..].iter_mut().zip(x) {
            *out += inp * tap.gain;
        }
    }
    Ok(ComplexSignal::new(y, fs))
}

/// Training-time condition: a channel model uniformly over the four options
/// and an SNR uniform on [-30, 30] dB.
pub fn sample_random_condition<R: Rng + ?Sized>(rng: &mut R) -> (ChannelModel, f64) {
    sample_condition_from(&ChannelModel::ALL, -30.0, 30.0, rng)
}

/// As [`sample_random_condition`] over a restricted model set and SNR range.
pub fn sample_condition_from<R: Rng + ?Sized>(
    models: &[ChannelModel],
    snr_min_db: f64,
    snr_max_db: f64,
    rng: &mut R,
) -> (ChannelModel, f64) {
    let model = models[rng.random_range(0..models.len())];
    let snr = if snr_max_db > snr_min_db {
        rng.random_range(snr_min_db..=snr_max_db)
    } else {
        snr_min_db
    };
    (model, snr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use crate::signal::unit_noise;
    use proptest::prelude::*;

    #[test]
    fn no_channel_is_identity() {
        let r = draw_realization(ChannelModel::NoChannel, &mut rng_from_seed(0));
        assert_eq!(r.taps(), &[Tap { delay_s: 0.0, gain: Complex::new(1.0, 0.0) }]);
        let x = ComplexSignal::new(unit_noise(64, &mut rng_from_seed(1)), 20e6);
        assert_eq!(apply_channel(&x, &r).unwrap(), x);
    }

    #[test]
    fn rayleigh_structure_and_mean_power() {
        let mut rng = rng_from_seed(2);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let r = draw_realization(ChannelModel::Rayleigh, &mut rng);
            assert_eq!(r.taps().len(), 1);
            assert_eq!(r.taps()[0].delay_s, 1.5e-9);
            acc += r.total_power();
        }
        let mean = acc / n as f64;
        assert!((mean - 0.501).abs() < 0.02, "{mean}");
        assert!((RAYLEIGH_MEAN_POWER - 10f64.powf(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_is_flat_scale_at_20mhz() {
        let r = draw_realization(ChannelModel::Rayleigh, &mut rng_from_seed(3));
        let h = r.taps()[0].gain;
        let x = ComplexSignal::new(unit_noise(100, &mut rng_from_seed(4)), 20e6);
        let y = apply_channel(&x, &r).unwrap();
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert_eq!(*a, b * h);
        }
    }

    #[test]
    fn model_b_profile() {
        let p = model_b_tap_powers();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let r = draw_realization(ChannelModel::TGnB, &mut rng_from_seed(5));
        assert_eq!(r.taps().len(), 9);
        assert!(r.taps().windows(2).all(|w| w[0].delay_s <= w[1].delay_s));
    }

    #[test]
    fn impulse_response_reveals_taps() {
        let r = draw_realization(ChannelModel::TGaxB, &mut rng_from_seed(6));
        let mut imp = vec![Complex::new(0.0, 0.0); 16];
        imp[0] = Complex::new(1.0, 0.0);
        let y = apply_channel(&ComplexSignal::new(imp, 20e6), &r).unwrap();
        let mut expected = vec![Complex::new(0.0, 0.0); 16];
        for t in r.taps() {
            expected[(t.delay_s * 20e6).round() as usize] += t.gain;
        }
        assert_eq!(y.samples(), &expected[..]);
    }

    #[test]
    fn expected_output_power() {
        let x = ComplexSignal::new(unit_noise(512, &mut rng_from_seed(7)), 20e6);
        let px = crate::signal::mean_power(&x).unwrap();
        let mut rng = rng_from_seed(8);
        for model in [ChannelModel::Rayleigh, ChannelModel::TGnB] {
            let trials = 4000;
            let mut acc = 0.0;
            for _ in 0..trials {
                let r = draw_realization(model, &mut rng);
                acc += crate::signal::mean_power(&apply_channel(&x, &r).unwrap()).unwrap();
            }
            let ratio = acc / trials as f64 / (px * model.expected_gain());
            assert!((ratio - 1.0).abs() < 0.05, "{model}: {ratio}");
        }
    }

    #[test]
    fn condition_sampler() {
        let mut rng = rng_from_seed(9);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let (m, snr) = sample_random_condition(&mut rng);
            assert!((-30.0..=30.0).contains(&snr));
            counts[ChannelModel::ALL.iter().position(|&x| x == m).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02);
        }
        let a: Vec<_> = (0..5).map(|_| sample_random_condition(&mut rng_from_seed(1))).collect();
        let b: Vec<_> = (0..5).map(|_| sample_random_condition(&mut rng_from_seed(1))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn model_names_parse() {
        for m in ChannelModel::ALL {
            assert_eq!(m.name().parse::<ChannelModel>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn linearity(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mut rng = rng_from_seed(seed);
            let r = draw_realization(ChannelModel::TGnB, &mut rng);
            let x = ComplexSignal::new(unit_noise(50, &mut rng), 20e6);
            let y = ComplexSignal::new(unit_noise(50, &mut rng), 20e6);
            let combo = ComplexSignal::new(
                x.samples().iter().zip(y.samples()).map(|(&p, &q)| p * a + q * b).collect(),
                20e6,
            );
            let lhs = apply_channel(&combo, &r).unwrap();
            let hx = apply_channel(&x, &r).unwrap();
            let hy = apply_channel(&y, &r).unwrap();
            for ((l, p), q) in lhs.samples().iter().zip(hx.samples()).zip(hy.samples()) {
                prop_assert!((l - (p * a + q * b)).norm() < 1e-12);
            }
        }
    }
}
