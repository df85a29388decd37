//! Simplified, standard-inspired burst generators for 802.11b/g/n/ax and
//! for two-transmitter overlap captures.
//!
//! The generators aim for structural distinctiveness between families
//! (preamble fields, tone plans, guard intervals, symbol durations, DSSS vs
//! OFDM), not for bit-level decodability: there is no FEC and no
//! interleaver, and signalling fields carry only rate/length/parity.

mod dsss;
mod ofdm;
mod overlap;

pub use overlap::{
    generate_overlapping_capture, OverlapConfig, OverlapDataset, OverlapRatio, OverlapSpec,
};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::dsp::rational_resample;
use crate::error::{bail, Error, Result};
use crate::signal::{power_normalize, unit_noise, NormalizationMode};
use crate::{Complex, ComplexSignal};

/// Baseband rate of every generated burst.
pub const BURST_RATE_HZ: f64 = 20e6;

/// Protocol family label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolId {
    B80211,
    G80211,
    N80211,
    AX80211,
    Noise,
}

impl ProtocolId {
    /// Classes of the single-label synthetic task.
    pub const PROTOCOLS: [ProtocolId; 4] = [
        ProtocolId::B80211,
        ProtocolId::G80211,
        ProtocolId::N80211,
        ProtocolId::AX80211,
    ];
    /// Classes of the multi-label / real-time task.
    pub const ALL: [ProtocolId; 5] = [
        ProtocolId::B80211,
        ProtocolId::G80211,
        ProtocolId::N80211,
        ProtocolId::AX80211,
        ProtocolId::Noise,
    ];

    /// Position in [`ProtocolId::ALL`], which is also the class index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ProtocolId::B80211 => "b",
            ProtocolId::G80211 => "g",
            ProtocolId::N80211 => "n",
            ProtocolId::AX80211 => "ax",
            ProtocolId::Noise => "noise",
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let name = lower.trim_start_matches("802.11").trim_start_matches("80211");
        Ok(match name {
            "b" => ProtocolId::B80211,
            "g" => ProtocolId::G80211,
            "n" => ProtocolId::N80211,
            "ax" => ProtocolId::AX80211,
            "noise" => ProtocolId::Noise,
            _ => bail!(InvalidSpec, "unknown protocol '{s}'"),
        })
    }
}

/// Convolutional code rate of the OFDM families. Only affects signalling
/// fields and the number of PPDUs per burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeRate {
    Half,
    ThreeQuarters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    /// DQPSK payload with Barker-11 spreading.
    DsssQpsk,
    /// 16-QAM OFDM payload.
    Ofdm16Qam(CodeRate),
    /// Unit-power complex Gaussian.
    Gaussian,
}

/// Parameters of one generated burst.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstSpec {
    pub protocol: ProtocolId,
    pub payload_bits: usize,
    pub ppdus_per_burst: usize,
    /// Exact output length at 20 MHz.
    pub target_len_samples: usize,
    pub modulation: Modulation,
}

impl BurstSpec {
    /// Synthetic-dataset defaults (rate-1/2 column for the OFDM families).
    pub fn default_for(protocol: ProtocolId) -> Self {
        Self::with_code_rate(protocol, CodeRate::Half)
    }

    pub fn with_code_rate(protocol: ProtocolId, rate: CodeRate) -> Self {
        let three_quarters = rate == CodeRate::ThreeQuarters;
        let (ppdus, len, modulation) = match protocol {
            ProtocolId::B80211 => (1, 18_112, Modulation::DsssQpsk),
            ProtocolId::G80211 => (4, 32_960, Modulation::Ofdm16Qam(rate)),
            ProtocolId::N80211 => (if three_quarters { 6 } else { 5 }, 31_340, Modulation::Ofdm16Qam(rate)),
            ProtocolId::AX80211 => (if three_quarters { 6 } else { 5 }, 31_640, Modulation::Ofdm16Qam(rate)),
            ProtocolId::Noise => (1, 32_768, Modulation::Gaussian),
        };
        Self {
            protocol,
            payload_bits: 1000,
            ppdus_per_burst: ppdus,
            target_len_samples: len,
            modulation,
        }
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.target_len_samples = len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = matches!(
            (self.protocol, self.modulation),
            (ProtocolId::B80211, Modulation::DsssQpsk)
                | (ProtocolId::G80211 | ProtocolId::N80211 | ProtocolId::AX80211, Modulation::Ofdm16Qam(_))
                | (ProtocolId::Noise, Modulation::Gaussian)
        );
        if !ok {
            bail!(
                InvalidSpec,
                "{:?} cannot be generated for protocol {}",
                self.modulation,
                self.protocol
            );
        }
        if self.payload_bits == 0 {
            bail!(InvalidSpec, "payload_bits must be positive");
        }
        if self.ppdus_per_burst == 0 {
            bail!(InvalidSpec, "ppdus_per_burst must be positive");
        }
        if self.target_len_samples == 0 {
            bail!(InvalidSpec, "target length must be positive");
        }
        Ok(())
    }
}

/// Idle time between consecutive PPDUs of a burst (16 us SIFS at 20 MHz).
const OFDM_GAP_SAMPLES: usize = 320;
/// 10 us SIFS for DSSS, in chips.
const DSSS_GAP_CHIPS: usize = 110;

/// Offset of the HT training fields inside an HT PPDU.
pub const HT_TRAINING_OFFSET: usize = 560;
/// Offset of the HE training fields inside an HE PPDU.
pub const HE_TRAINING_OFFSET: usize = 640;

/// Generates one unit-power burst of exactly `spec.target_len_samples`
/// samples at 20 MHz.
pub fn generate_burst<R: Rng + ?Sized>(spec: &BurstSpec, rng: &mut R) -> Result<ComplexSignal> {
    spec.validate()?;
    let target = spec.target_len_samples;
    let raw = match spec.protocol {
        ProtocolId::Noise => ComplexSignal::new(unit_noise(target, rng), BURST_RATE_HZ),
        ProtocolId::B80211 => dsss_burst(spec, rng)?,
        _ => ofdm_burst(spec, rng),
    };
    power_normalize(&raw.resized(target), NormalizationMode::Rms)
}

fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.random()).collect()
}

fn dsss_burst<R: Rng + ?Sized>(spec: &BurstSpec, rng: &mut R) -> Result<ComplexSignal> {
    let ppdus = spec.ppdus_per_burst;
    // chips needed to cover the target after 20/11 upsampling, plus filter margin
    let total_chips = (spec.target_len_samples * 11).div_ceil(20) + 16;
    let share = total_chips.saturating_sub((ppdus - 1) * DSSS_GAP_CHIPS) / ppdus;
    let mut chips = Vec::with_capacity(total_chips);
    for i in 0..ppdus {
        if i > 0 {
            chips.resize(chips.len() + DSSS_GAP_CHIPS, Complex::new(0.0, 0.0));
        }
        let payload = random_bits(spec.payload_bits, rng);
        chips.extend(dsss::ppdu_chips(&payload, share, rng));
    }
    rational_resample(&ComplexSignal::new(chips, dsss::CHIP_RATE_HZ), 20, 11)
}

fn rate_code(rate: CodeRate) -> u8 {
    match rate {
        CodeRate::Half => 0b1011,
        CodeRate::ThreeQuarters => 0b1111,
    }
}

/// Preamble of an OFDM PPDU up to (not including) the data field.
pub(crate) fn ofdm_preamble(protocol: ProtocolId, rate: CodeRate, length: u16) -> Vec<Complex> {
    let mut out = ofdm::legacy_stf();
    out.extend(ofdm::legacy_ltf());
    let lsig = ofdm::signal_symbol(&ofdm::signal_bits(rate_code(rate), length), false, 0);
    out.extend_from_slice(&lsig);
    let mcs = if rate == CodeRate::Half { 3 } else { 4 };
    match protocol {
        ProtocolId::N80211 => {
            out.extend(ofdm::signal_symbol(&ofdm::signal_bits(mcs, length), true, 1));
            out.extend(ofdm::signal_symbol(&ofdm::signal_bits(0b0110, length.rotate_left(5)), true, 2));
            debug_assert_eq!(out.len(), HT_TRAINING_OFFSET);
            out.extend(ofdm::ht_training());
        }
        ProtocolId::AX80211 => {
            out.extend_from_slice(&lsig);
            out.extend(ofdm::signal_symbol(&ofdm::signal_bits(mcs, length), false, 2));
            out.extend(ofdm::signal_symbol(&ofdm::signal_bits(0b1001, length.rotate_left(3)), false, 3));
            debug_assert_eq!(out.len(), HE_TRAINING_OFFSET);
            out.extend(ofdm::he_training());
        }
        _ => {}
    }
    out
}

fn data_symbol_len(protocol: ProtocolId) -> usize {
    match protocol {
        ProtocolId::N80211 => 72,
        ProtocolId::AX80211 => 288,
        _ => 80,
    }
}

fn ofdm_burst<R: Rng + ?Sized>(spec: &BurstSpec, rng: &mut R) -> ComplexSignal {
    let rate = match spec.modulation {
        Modulation::Ofdm16Qam(r) => r,
        _ => CodeRate::Half,
    };
    let ppdus = spec.ppdus_per_burst;
    let target = spec.target_len_samples;
    let share = target.saturating_sub((ppdus - 1) * OFDM_GAP_SAMPLES) / ppdus;
    let sym_len = data_symbol_len(spec.protocol);
    let mut out = Vec::with_capacity(target + 2 * sym_len);
    for i in 0..ppdus {
        if i > 0 {
            out.resize(out.len() + OFDM_GAP_SAMPLES, Complex::new(0.0, 0.0));
        }
        let preamble_len = ofdm_preamble(spec.protocol, rate, 0).len();
        let n_sym = (share.saturating_sub(preamble_len) / sym_len).max(1);
        let length_field = ((n_sym * 12).min(4095)) as u16;
        out.extend(ofdm_preamble(spec.protocol, rate, length_field));
        let payload = random_bits(spec.payload_bits, rng);
        let mut bits = ofdm::BitSource::new(&payload, rng);
        for s in 0..n_sym {
            let sym = match spec.protocol {
                ProtocolId::N80211 => ofdm::ht_data_symbol(&mut bits, s + 3),
                ProtocolId::AX80211 => ofdm::he_data_symbol(&mut bits, s + 4),
                _ => ofdm::legacy_data_symbol(&mut bits, s + 1),
            };
            out.extend(sym);
        }
    }
    ComplexSignal::new(out, BURST_RATE_HZ)
}

/// Fixed preamble fields used as correlation templates. Built with the same
/// field builders as the generators.
pub mod templates {
    use super::*;

    /// Long DSSS preamble (sync + SFD) resampled to 20 MHz: 2880 samples.
    pub fn dsss_preamble() -> ComplexSignal {
        let chips = dsss::preamble_chips();
        rational_resample(&ComplexSignal::new(chips, dsss::CHIP_RATE_HZ), 20, 11)
            .expect("static resampling factors")
    }

    /// Legacy short + long training fields (320 samples).
    pub fn legacy_training() -> ComplexSignal {
        let mut s = ofdm::legacy_stf();
        s.extend(ofdm::legacy_ltf());
        ComplexSignal::new(s, BURST_RATE_HZ)
    }

    /// Legacy short training field (160 samples).
    pub fn legacy_stf() -> ComplexSignal {
        ComplexSignal::new(ofdm::legacy_stf(), BURST_RATE_HZ)
    }

    /// HT short + long training fields (160 samples).
    pub fn ht_training() -> ComplexSignal {
        ComplexSignal::new(ofdm::ht_training(), BURST_RATE_HZ)
    }

    /// HE short + 4x long training fields (400 samples).
    pub fn he_training() -> ComplexSignal {
        ComplexSignal::new(ofdm::he_training(), BURST_RATE_HZ)
    }

    /// The fixed-structure preamble region of a protocol's PPDU, as it
    /// appears at the start of every generated burst.
    pub fn preamble_region(protocol: ProtocolId) -> Option<ComplexSignal> {
        match protocol {
            ProtocolId::B80211 => Some(dsss_preamble()),
            ProtocolId::Noise => None,
            p => Some(ComplexSignal::new(ofdm_preamble(p, CodeRate::Half, 0), BURST_RATE_HZ)),
        }
    }
}

/// One entry of a dataset generation plan.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstJob {
    pub protocol: ProtocolId,
    pub index: usize,
    pub seed: u64,
}

/// Per-burst seeds for `bursts_per_protocol` bursts of each protocol,
/// derived deterministically from `seed`.
pub fn dataset_plan(protocols: &[ProtocolId], bursts_per_protocol: usize, seed: u64) -> Vec<BurstJob> {
    let mut rng = crate::rng_from_seed(seed);
    let mut jobs = Vec::with_capacity(protocols.len() * bursts_per_protocol);
    for &protocol in protocols {
        for index in 0..bursts_per_protocol {
            jobs.push(BurstJob {
                protocol,
                index,
                seed: rng.random(),
            });
        }
    }
    jobs
}

/// Label string for file names, e.g. `g_0007`.
pub fn burst_name(job: &BurstJob) -> String {
    alloc::format!("{}_{:04}", job.protocol.short_name(), job.index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::band_energy_fraction;
    use crate::rng_from_seed;
    use crate::signal::mean_power;

    #[test]
    fn default_lengths() {
        let mut rng = rng_from_seed(1);
        for (p, len) in [
            (ProtocolId::B80211, 18_112),
            (ProtocolId::G80211, 32_960),
            (ProtocolId::N80211, 31_340),
            (ProtocolId::AX80211, 31_640),
        ] {
            let b = generate_burst(&BurstSpec::default_for(p), &mut rng).unwrap();
            assert_eq!(b.len(), len, "{p}");
            assert_eq!(b.sample_rate_hz(), BURST_RATE_HZ);
            assert!((mean_power(&b).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn three_quarter_rate_bursts() {
        let mut rng = rng_from_seed(2);
        for p in [ProtocolId::G80211, ProtocolId::N80211, ProtocolId::AX80211] {
            let spec = BurstSpec::with_code_rate(p, CodeRate::ThreeQuarters);
            let b = generate_burst(&spec, &mut rng).unwrap();
            assert_eq!(b.len(), spec.target_len_samples);
        }
    }

    #[test]
    fn noise_burst() {
        let spec = BurstSpec::default_for(ProtocolId::Noise).with_len(4096);
        let b = generate_burst(&spec, &mut rng_from_seed(3)).unwrap();
        assert_eq!(b.len(), 4096);
        assert!((mean_power(&b).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn invalid_combinations() {
        let mut spec = BurstSpec::default_for(ProtocolId::B80211);
        spec.modulation = Modulation::Ofdm16Qam(CodeRate::Half);
        assert!(matches!(
            generate_burst(&spec, &mut rng_from_seed(0)),
            Err(Error::InvalidSpec(_))
        ));
        let mut spec = BurstSpec::default_for(ProtocolId::G80211);
        spec.payload_bits = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = BurstSpec::default_for(ProtocolId::AX80211);
        let a = generate_burst(&spec, &mut rng_from_seed(5)).unwrap();
        let b = generate_burst(&spec, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bursts_start_with_their_preamble() {
        for p in [ProtocolId::G80211, ProtocolId::N80211, ProtocolId::AX80211] {
            let b = generate_burst(&BurstSpec::default_for(p), &mut rng_from_seed(7)).unwrap();
            let training = templates::legacy_training();
            // the burst is rescaled as a whole, so compare directions
            let scale = b.samples()[0] / training.samples()[0];
            for (x, t) in b.samples().iter().zip(training.samples()) {
                assert!((x - t * scale).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn dsss_occupies_eleven_mhz() {
        let b = generate_burst(&BurstSpec::default_for(ProtocolId::B80211), &mut rng_from_seed(8)).unwrap();
        let frac = band_energy_fraction(&b, 5.5e6);
        assert!(frac >= 0.9, "{frac}");
    }

    #[test]
    fn bursts_fit_twenty_mhz() {
        for p in ProtocolId::PROTOCOLS {
            let b = generate_burst(&BurstSpec::default_for(p), &mut rng_from_seed(9)).unwrap();
            assert!(band_energy_fraction(&b, 10e6) >= 0.9);
        }
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in ProtocolId::ALL {
            assert_eq!(p.short_name().parse::<ProtocolId>().unwrap(), p);
            assert_eq!(ProtocolId::from_index(p.index()), Some(p));
        }
        assert_eq!("802.11ax".parse::<ProtocolId>().unwrap(), ProtocolId::AX80211);
        assert!("zigbee".parse::<ProtocolId>().is_err());
    }

    #[test]
    fn plan_counts_and_determinism() {
        let plan = dataset_plan(&ProtocolId::PROTOCOLS, 10, 42);
        assert_eq!(plan.len(), 40);
        assert_eq!(plan, dataset_plan(&ProtocolId::PROTOCOLS, 10, 42));
        assert_eq!(burst_name(&plan[13]), "g_0003");
    }
}
