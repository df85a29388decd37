//! Two-transmitter captures with partial spectral overlap.

use alloc::vec::Vec;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use super::{generate_burst, BurstSpec, ProtocolId, BURST_RATE_HZ};
use crate::dsp::{frequency_shift, rational_resample};
use crate::error::{bail, Result};
use crate::signal::power_of;
use crate::{Complex, ComplexSignal};

/// Width of one WiFi channel.
pub const CHANNEL_WIDTH_HZ: f64 = 20e6;
/// Intermediate rate at which the transmitters are shifted and summed.
const MIX_RATE_HZ: f64 = 80e6;

/// Incumbent/interferer protocol pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapConfig {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl OverlapConfig {
    pub const ALL: [OverlapConfig; 6] = [
        OverlapConfig::C1,
        OverlapConfig::C2,
        OverlapConfig::C3,
        OverlapConfig::C4,
        OverlapConfig::C5,
        OverlapConfig::C6,
    ];

    /// `(incumbent, interferer)`.
    pub fn protocols(self) -> (ProtocolId, ProtocolId) {
        use ProtocolId::*;
        match self {
            OverlapConfig::C1 => (G80211, N80211),
            OverlapConfig::C2 => (B80211, AX80211),
            OverlapConfig::C3 => (B80211, G80211),
            OverlapConfig::C4 => (B80211, N80211),
            OverlapConfig::C5 => (G80211, AX80211),
            OverlapConfig::C6 => (N80211, AX80211),
        }
    }
}

/// Receiver configurations: O1 sits on the incumbent's channel at 20 MHz,
/// O2 observes 62.5 MHz centred at 2.45 GHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapDataset {
    O1,
    O2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapRatio {
    Quarter,
    Half,
}

impl OverlapRatio {
    pub fn value(self) -> f64 {
        match self {
            OverlapRatio::Quarter => 0.25,
            OverlapRatio::Half => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSpec {
    pub incumbent: ProtocolId,
    pub interferer: ProtocolId,
    pub overlap_ratio: f64,
    pub rx_sample_rate_hz: f64,
    pub rx_center_hz: f64,
    pub tx1_center_hz: f64,
    pub tx2_center_hz: f64,
    pub capture_len_samples: usize,
    /// Interferer power relative to the incumbent, in dB. `-inf` removes it.
    pub interferer_power_db: f64,
}

impl OverlapSpec {
    /// One row of the overlap capture plan.
    pub fn table_row(config: OverlapConfig, dataset: OverlapDataset, ratio: OverlapRatio) -> Self {
        let (incumbent, interferer) = config.protocols();
        let tx1 = 2.442e9;
        let tx2 = match ratio {
            OverlapRatio::Quarter => 2.457e9,
            OverlapRatio::Half => 2.452e9,
        };
        let (rate, rx, len) = match dataset {
            OverlapDataset::O1 => (20e6, 2.442e9, 198_080),
            OverlapDataset::O2 => (62.5e6, 2.45e9, 309_500),
        };
        Self {
            incumbent,
            interferer,
            overlap_ratio: ratio.value(),
            rx_sample_rate_hz: rate,
            rx_center_hz: rx,
            tx1_center_hz: tx1,
            tx2_center_hz: tx2,
            capture_len_samples: len,
            interferer_power_db: 0.0,
        }
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.capture_len_samples = len;
        self
    }

    /// Spectral overlap of the two 20 MHz channels implied by the
    /// transmitter centre frequencies.
    pub fn nominal_overlap(&self) -> f64 {
        ((CHANNEL_WIDTH_HZ - (self.tx2_center_hz - self.tx1_center_hz).abs()) / CHANNEL_WIDTH_HZ)
            .clamp(0.0, 1.0)
    }

    /// Overlap fraction measured on an `fft_len`-point grid at the receiver
    /// rate from the two channel masks (bins shared / bins of one channel).
    pub fn overlap_from_tone_plan(&self, fft_len: usize) -> f64 {
        let fs = self.rx_sample_rate_hz;
        let mask = |center: f64| -> Vec<bool> {
            (0..fft_len)
                .map(|k| {
                    let f = crate::dsp::bin_frequency(k, fft_len, fs) + self.rx_center_hz;
                    (f - center).abs() < CHANNEL_WIDTH_HZ / 2.0
                })
                .collect()
        };
        // channels may fall outside the observed band, so measure on a grid
        // wide enough to hold both
        let a = mask(self.tx1_center_hz);
        let b = mask(self.tx2_center_hz);
        let a_count = a.iter().filter(|&&x| x).count();
        if a_count == 0 {
            return 0.0;
        }
        let shared = a.iter().zip(&b).filter(|(&x, &y)| x && y).count();
        shared as f64 / a_count as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rx_sample_rate_hz > 0.0) || self.capture_len_samples == 0 {
            bail!(InvalidSpec, "receiver rate and capture length must be positive");
        }
        for (name, f) in [("tx1", self.tx1_center_hz), ("tx2", self.tx2_center_hz)] {
            let offset = (f - self.rx_center_hz).abs();
            if offset - CHANNEL_WIDTH_HZ / 2.0 >= self.rx_sample_rate_hz / 2.0 {
                bail!(
                    InvalidSpec,
                    "{name} at {f} Hz lies entirely outside the receiver band"
                );
            }
            if offset + CHANNEL_WIDTH_HZ / 2.0 >= MIX_RATE_HZ / 2.0 {
                bail!(InvalidSpec, "{name} offset {offset} Hz exceeds the mixing bandwidth");
            }
        }
        if self.incumbent == ProtocolId::Noise || self.interferer == ProtocolId::Noise {
            bail!(InvalidSpec, "overlap captures need two transmitters");
        }
        Ok(())
    }
}

/// Reduces `num/den` rationals for the supported receiver rates.
fn rate_ratio(from: f64, to: f64) -> Result<(usize, usize)> {
    // rates are multiples of 0.5 MHz
    let a = (from / 0.5e6).round() as usize;
    let b = (to / 0.5e6).round() as usize;
    if a == 0 || b == 0 || (a as f64 * 0.5e6 - from).abs() > 1.0 || (b as f64 * 0.5e6 - to).abs() > 1.0 {
        bail!(InvalidSpec, "unsupported rate conversion {from} -> {to}");
    }
    Ok((b, a))
}

/// Back-to-back bursts of `protocol` covering `len` samples at 20 MHz.
fn burst_train<R: Rng + ?Sized>(protocol: ProtocolId, len: usize, rng: &mut R) -> Result<Vec<Complex>> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let b = generate_burst(&BurstSpec::default_for(protocol), rng)?;
        out.extend_from_slice(b.samples());
    }
    out.truncate(len);
    Ok(out)
}

/// One transmitter as seen by the receiver: 20 MHz burst train, upsampled
/// to the mixing rate, shifted by `offset_hz`, scaled to `power`.
fn transmitter<R: Rng + ?Sized>(
    protocol: ProtocolId,
    offset_hz: f64,
    power: f64,
    mix_len: usize,
    rng: &mut R,
) -> Result<Vec<Complex>> {
    let up = (MIX_RATE_HZ / BURST_RATE_HZ) as usize;
    let base_len = mix_len.div_ceil(up) + 1;
    let base = ComplexSignal::new(burst_train(protocol, base_len, rng)?, BURST_RATE_HZ);
    let mixed = rational_resample(&base, up, 1)?;
    let shifted = frequency_shift(&mixed, offset_hz)?;
    let scale = (power / power_of(shifted.samples()).max(f64::MIN_POSITIVE)).sqrt();
    Ok(shifted.samples()[..mix_len].iter().map(|&s| s * scale).collect())
}

/// Synthesizes an overlap capture: both transmitters are generated at
/// 20 MHz, brought to a common mixing rate, shifted to their offsets from
/// the receiver centre, summed (equal power unless
/// `interferer_power_db` says otherwise) and resampled to the receiver
/// rate, whose anti-alias filter removes anything outside the observed band.
pub fn generate_overlapping_capture<R: Rng + ?Sized>(
    spec: &OverlapSpec,
    rng: &mut R,
) -> Result<ComplexSignal> {
    spec.validate()?;
    let (up, down) = rate_ratio(MIX_RATE_HZ, spec.rx_sample_rate_hz)?;
    // mixing-rate samples needed for the requested receiver length
    let mix_len = (spec.capture_len_samples * down).div_ceil(up) + down;

    let incumbent = transmitter(
        spec.incumbent,
        spec.tx1_center_hz - spec.rx_center_hz,
        1.0,
        mix_len,
        rng,
    )?;
    let interferer_power = if spec.interferer_power_db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(spec.interferer_power_db / 10.0)
    };
    let mut sum = incumbent;
    if interferer_power > 0.0 {
        let interferer = transmitter(
            spec.interferer,
            spec.tx2_center_hz - spec.rx_center_hz,
            interferer_power,
            mix_len,
            rng,
        )?;
        for (a, b) in sum.iter_mut().zip(interferer) {
            *a += b;
        }
    }
    let rx = rational_resample(&ComplexSignal::new(sum, MIX_RATE_HZ), up, down)?;
    Ok(rx.resized(spec.capture_len_samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn table_rows() {
        let s = OverlapSpec::table_row(OverlapConfig::C5, OverlapDataset::O2, OverlapRatio::Quarter);
        assert_eq!(s.rx_sample_rate_hz, 62.5e6);
        assert_eq!(s.rx_center_hz, 2.45e9);
        assert_eq!(s.tx1_center_hz, 2.442e9);
        assert_eq!(s.tx2_center_hz, 2.457e9);
        assert_eq!(s.capture_len_samples, 309_500);
        assert_eq!((s.incumbent, s.interferer), (ProtocolId::G80211, ProtocolId::AX80211));

        let s = OverlapSpec::table_row(OverlapConfig::C1, OverlapDataset::O1, OverlapRatio::Half);
        assert!((s.tx2_center_hz - s.tx1_center_hz - 10e6).abs() < 1.0);
        assert!((s.nominal_overlap() - 0.5).abs() < 1e-9);
        assert_eq!(s.capture_len_samples, 198_080);
    }

    #[test]
    fn tone_plan_overlap_matches_ratio() {
        for dataset in [OverlapDataset::O1, OverlapDataset::O2] {
            for ratio in [OverlapRatio::Quarter, OverlapRatio::Half] {
                let s = OverlapSpec::table_row(OverlapConfig::C2, dataset, ratio);
                let fft_len = 4096;
                let bin = s.rx_sample_rate_hz / fft_len as f64;
                // O1 cannot see the interferer's far edge; measure on a
                // grid that covers both channels
                let wide = OverlapSpec { rx_sample_rate_hz: 80e6, ..s.clone() };
                let measured = wide.overlap_from_tone_plan(fft_len);
                let tol = (80e6 / fft_len as f64).max(bin) / CHANNEL_WIDTH_HZ;
                assert!((measured - ratio.value()).abs() <= tol, "{measured}");
            }
        }
    }

    #[test]
    fn out_of_band_transmitter_rejected() {
        let mut s = OverlapSpec::table_row(OverlapConfig::C3, OverlapDataset::O1, OverlapRatio::Half);
        s.tx2_center_hz = 2.472e9;
        assert!(matches!(
            generate_overlapping_capture(&s, &mut rng_from_seed(0)),
            Err(crate::Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn incumbent_only_equals_shifted_incumbent() {
        let mut s = OverlapSpec::table_row(OverlapConfig::C5, OverlapDataset::O2, OverlapRatio::Half)
            .with_len(20_000);
        s.interferer_power_db = f64::NEG_INFINITY;
        let out = generate_overlapping_capture(&s, &mut rng_from_seed(3)).unwrap();
        assert_eq!(out.len(), 20_000);

        let (up, down) = rate_ratio(MIX_RATE_HZ, s.rx_sample_rate_hz).unwrap();
        let mix_len = (s.capture_len_samples * down).div_ceil(up) + down;
        let mut rng = rng_from_seed(3);
        let alone = transmitter(s.incumbent, s.tx1_center_hz - s.rx_center_hz, 1.0, mix_len, &mut rng).unwrap();
        let expected = rational_resample(&ComplexSignal::new(alone, MIX_RATE_HZ), up, down)
            .unwrap()
            .resized(20_000);
        assert_eq!(out, expected);
    }

    #[test]
    fn capture_lengths_and_rate() {
        let s = OverlapSpec::table_row(OverlapConfig::C6, OverlapDataset::O1, OverlapRatio::Quarter)
            .with_len(10_000);
        let out = generate_overlapping_capture(&s, &mut rng_from_seed(1)).unwrap();
        assert_eq!(out.len(), 10_000);
        assert_eq!(out.sample_rate_hz(), 20e6);
        assert!(out.is_finite());
    }
}
