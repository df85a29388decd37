//! Correlation-based preamble format detector: the "legacy" baseline that
//! recognizes a transmission by searching for known training sequences.
//!
//! Three stages run on the start of a capture:
//!
//! 1. DSSS: normalized cross-correlation against the long DSSS preamble.
//! 2. OFDM packet detection: lag-16 autocorrelation of the short training
//!    field, `|P|^2 / (E0 E16)` over a 16-sample window.
//! 3. Format disambiguation: the packet start is anchored by correlating
//!    with the legacy training fields, then the HT and HE training fields
//!    are correlated at their fixed offsets from that anchor. The HT short
//!    training field repeats the legacy one, so an unanchored search would
//!    lock onto the legacy preamble of every OFDM packet.
//!
//! All metrics are normalized correlations in `[0, 1]` and blind to a
//! global phase rotation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dsp::{fft_in_place, ifft_in_place};
use crate::error::{bail, Error, Result};
use crate::signal::unit_noise;
use crate::sweep::{run_sweep, SweepConfig, SweepResult, WindowPlacement};
use crate::waveform::{templates, ProtocolId, BURST_RATE_HZ, HE_TRAINING_OFFSET, HT_TRAINING_OFFSET};
use crate::{Complex, ComplexSignal};

/// Lag of the short-training autocorrelation (one STF period).
pub const STF_LAG: usize = 16;
/// Averaging window of the autocorrelation metric.
pub const STF_WINDOW: usize = 16;
/// Search range around the expected HT/HE training position.
pub const ANCHOR_TOLERANCE: usize = 4;
/// Samples inspected per capture: the DSSS preamble plus room for the
/// HE training fields behind a legacy preamble.
pub const DETECTION_WINDOW: usize = 3392;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PreambleFormat {
    NonHT,
    HT,
    HE,
    Dsss,
}

impl PreambleFormat {
    pub const ALL: [PreambleFormat; 4] = [
        PreambleFormat::Dsss,
        PreambleFormat::NonHT,
        PreambleFormat::HT,
        PreambleFormat::HE,
    ];

    /// Format of the bursts a protocol generator produces.
    pub fn of_protocol(p: ProtocolId) -> Option<Self> {
        match p {
            ProtocolId::B80211 => Some(PreambleFormat::Dsss),
            ProtocolId::G80211 => Some(PreambleFormat::NonHT),
            ProtocolId::N80211 => Some(PreambleFormat::HT),
            ProtocolId::AX80211 => Some(PreambleFormat::HE),
            ProtocolId::Noise => None,
        }
    }

    /// Protocol family a detection is reported as.
    pub fn protocol(self) -> ProtocolId {
        match self {
            PreambleFormat::Dsss => ProtocolId::B80211,
            PreambleFormat::NonHT => ProtocolId::G80211,
            PreambleFormat::HT => ProtocolId::N80211,
            PreambleFormat::HE => ProtocolId::AX80211,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PreambleFormat::NonHT => "non_ht",
            PreambleFormat::HT => "ht",
            PreambleFormat::HE => "he",
            PreambleFormat::Dsss => "dsss",
        }
    }

    /// Tie-break rank: DSSS > HE > HT > NonHT.
    fn priority(self) -> u8 {
        match self {
            PreambleFormat::Dsss => 3,
            PreambleFormat::HE => 2,
            PreambleFormat::HT => 1,
            PreambleFormat::NonHT => 0,
        }
    }
}

impl fmt::Display for PreambleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How detections are scored against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatGrouping {
    /// DSSS, Non-HT, HT and HE are separate classes (b, g, n, ax).
    #[default]
    FourWay,
    /// DSSS is folded into Non-HT, as when b and g are both reported by a
    /// single Non-HT decoder.
    ThreeWay,
}

impl FormatGrouping {
    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            FormatGrouping::FourWay => &["b", "g", "n", "ax"],
            FormatGrouping::ThreeWay => &["b/g", "n", "ax"],
        }
    }

    pub fn class_of(self, format: PreambleFormat) -> usize {
        let four = match format {
            PreambleFormat::Dsss => 0,
            PreambleFormat::NonHT => 1,
            PreambleFormat::HT => 2,
            PreambleFormat::HE => 3,
        };
        match self {
            FormatGrouping::FourWay => four,
            FormatGrouping::ThreeWay => four.saturating_sub(1),
        }
    }

    pub fn class_of_protocol(self, p: ProtocolId) -> Option<usize> {
        PreambleFormat::of_protocol(p).map(|f| self.class_of(f))
    }
}

impl FromStr for FormatGrouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "4" | "four" | "4way" | "four-way" => Ok(FormatGrouping::FourWay),
            "3" | "three" | "3way" | "three-way" => Ok(FormatGrouping::ThreeWay),
            other => bail!(InvalidSpec, "unknown grouping {other:?}"),
        }
    }
}

/// Per-stage detection thresholds on the normalized metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorThresholds {
    pub dsss: f64,
    pub packet: f64,
    pub ht: f64,
    pub he: f64,
}

impl Default for DetectorThresholds {
    /// Values from [`calibrate_thresholds`] with 4000 noise windows of
    /// [`DETECTION_WINDOW`] samples, seed 0x5EED, 0.25% per-stage false
    /// alarm.
    fn default() -> Self {
        Self {
            dsss: 0.066,
            packet: 0.608,
            ht: 0.220,
            he: 0.144,
        }
    }
}

impl DetectorThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("dsss", self.dsss), ("packet", self.packet), ("ht", self.ht), ("he", self.he)] {
            if !(t > 0.0 && t < 1.0) {
                bail!(InvalidSpec, "{name} threshold must lie in (0, 1), got {t}");
            }
        }
        Ok(())
    }

    pub fn for_format(&self, f: PreambleFormat) -> f64 {
        match f {
            PreambleFormat::Dsss => self.dsss,
            PreambleFormat::NonHT => self.packet,
            PreambleFormat::HT => self.ht,
            PreambleFormat::HE => self.he,
        }
    }
}

/// Reference waveform of one format with its detection threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleTemplate {
    pub format: PreambleFormat,
    pub reference: ComplexSignal,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub detected_format: Option<PreambleFormat>,
    /// Metric of the deciding stage (or, when nothing is detected, of the
    /// stage that came closest to its threshold).
    pub peak_metric: f64,
    /// Threshold the peak metric is compared with.
    pub threshold: f64,
    pub offset_samples: usize,
}

/// Raw metrics of every stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageMetrics {
    pub dsss: f64,
    pub dsss_offset: usize,
    pub packet: f64,
    pub packet_offset: usize,
    /// Packet start estimated from the legacy training fields.
    pub anchor: usize,
    pub ht: f64,
    pub he: f64,
}

#[derive(Debug, Clone)]
struct Template {
    samples: Vec<Complex>,
    energy: f64,
}

impl Template {
    fn new(s: ComplexSignal) -> Self {
        let samples = s.into_samples();
        let energy = samples.iter().map(|c| c.norm_sqr()).sum();
        Self { samples, energy }
    }
}

#[derive(Debug, Clone)]
pub struct LegacyDetector {
    dsss: Template,
    legacy: Template,
    ht: Template,
    he: Template,
    thresholds: DetectorThresholds,
}

impl Default for LegacyDetector {
    fn default() -> Self {
        Self::new(DetectorThresholds::default()).expect("default thresholds are valid")
    }
}

impl LegacyDetector {
    /// Builds the templates from the waveform module's preamble builders.
    pub fn new(thresholds: DetectorThresholds) -> Result<Self> {
        thresholds.validate()?;
        Ok(Self::unchecked(thresholds))
    }

    fn unchecked(thresholds: DetectorThresholds) -> Self {
        Self {
            dsss: Template::new(templates::dsss_preamble()),
            legacy: Template::new(templates::legacy_training()),
            ht: Template::new(templates::ht_training()),
            he: Template::new(templates::he_training()),
            thresholds,
        }
    }

    pub fn thresholds(&self) -> &DetectorThresholds {
        &self.thresholds
    }

    /// Shortest accepted input (the longest template).
    pub fn min_len(&self) -> usize {
        self.dsss.samples.len()
    }

    pub fn templates(&self) -> Vec<PreambleTemplate> {
        let t = |format, tpl: &Template| PreambleTemplate {
            format,
            reference: ComplexSignal::new(tpl.samples.clone(), BURST_RATE_HZ),
            threshold: self.thresholds.for_format(format),
        };
        vec![
            t(PreambleFormat::Dsss, &self.dsss),
            t(PreambleFormat::NonHT, &self.legacy),
            t(PreambleFormat::HT, &self.ht),
            t(PreambleFormat::HE, &self.he),
        ]
    }

    pub fn metrics(&self, signal: &ComplexSignal) -> Result<StageMetrics> {
        let x = signal.samples();
        if x.len() < self.min_len() {
            return Err(Error::InsufficientSamples {
                needed: self.min_len(),
                available: x.len(),
            });
        }
        if !signal.is_finite() {
            bail!(InvalidInput, "signal contains non-finite samples");
        }
        let (dsss_offset, dsss) = peak(&sliding_ncc(x, &self.dsss.samples, self.dsss.energy));
        let (packet_offset, packet) = peak(&lag_autocorrelation(x, STF_LAG, STF_WINDOW));
        let anchor = earliest_peak(&sliding_ncc(x, &self.legacy.samples, self.legacy.energy));
        let ht = anchored_ncc(x, &self.ht, anchor + HT_TRAINING_OFFSET);
        let he = anchored_ncc(x, &self.he, anchor + HE_TRAINING_OFFSET);
        Ok(StageMetrics {
            dsss,
            dsss_offset,
            packet,
            packet_offset,
            anchor,
            ht,
            he,
        })
    }

    /// Candidates are the formats whose stage metric clears its threshold;
    /// HT, HE and Non-HT additionally require a detected OFDM packet. The
    /// stages' metrics live on different scales (a 2880-sample correlation
    /// in noise stays far below a 16-sample autocorrelation), so candidates
    /// are ranked by metric over threshold, ties broken DSSS > HE > HT >
    /// Non-HT.
    pub fn decide(&self, m: &StageMetrics) -> DetectionResult {
        let th = &self.thresholds;
        let mut candidates = Vec::with_capacity(4);
        if m.dsss >= th.dsss {
            candidates.push((PreambleFormat::Dsss, m.dsss, m.dsss_offset));
        }
        if m.packet >= th.packet {
            candidates.push((PreambleFormat::NonHT, m.packet, m.anchor));
            if m.he >= th.he {
                candidates.push((PreambleFormat::HE, m.he, m.anchor));
            }
            if m.ht >= th.ht {
                candidates.push((PreambleFormat::HT, m.ht, m.anchor));
            }
        }
        let margin = |f: PreambleFormat, v: f64| v / th.for_format(f);
        let best = candidates.into_iter().max_by(|a, b| {
            margin(a.0, a.1)
                .total_cmp(&margin(b.0, b.1))
                .then(a.0.priority().cmp(&b.0.priority()))
        });
        if let Some((f, metric, offset)) = best {
            return DetectionResult {
                detected_format: Some(f),
                peak_metric: metric,
                threshold: th.for_format(f),
                offset_samples: offset,
            };
        }
        let (peak_metric, threshold, offset_samples) = if m.dsss / th.dsss >= m.packet / th.packet {
            (m.dsss, th.dsss, m.dsss_offset)
        } else {
            (m.packet, th.packet, m.packet_offset)
        };
        DetectionResult {
            detected_format: None,
            peak_metric,
            threshold,
            offset_samples,
        }
    }

    pub fn detect(&self, signal: &ComplexSignal) -> Result<DetectionResult> {
        Ok(self.decide(&self.metrics(signal)?))
    }
}

/// Runs the detector on `signal` with the given thresholds.
pub fn detect_format(signal: &ComplexSignal, thresholds: DetectorThresholds) -> Result<DetectionResult> {
    LegacyDetector::new(thresholds)?.detect(signal)
}

/// Fraction of correct format detections per (channel, SNR), each trial
/// inspecting the first [`DETECTION_WINDOW`] samples of a held-out burst.
pub fn detection_accuracy(
    detector: &LegacyDetector,
    bursts: &[(ComplexSignal, ProtocolId)],
    grouping: FormatGrouping,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let mut labeled = Vec::with_capacity(bursts.len());
    for (b, p) in bursts {
        let Some(c) = grouping.class_of_protocol(*p) else {
            bail!(InvalidLabel, "no preamble format for {p}");
        };
        labeled.push((b.clone(), c));
    }
    let mut cfg = cfg.clone();
    cfg.placement = WindowPlacement::Start;
    let name = match grouping {
        FormatGrouping::FourWay => "legacy",
        FormatGrouping::ThreeWay => "legacy_3way",
    };
    run_sweep(name, grouping.class_names(), &labeled, &cfg, |y| {
        Ok(detector.detect(y)?.detected_format.map(|f| grouping.class_of(f)))
    })
}

/// Per-stage thresholds from the empirical `1 - false_alarm` quantile of
/// each stage metric over `trials` unit-noise windows of `window_len`
/// samples.
pub fn calibrate_thresholds<R: Rng + ?Sized>(
    window_len: usize,
    trials: usize,
    false_alarm: f64,
    rng: &mut R,
) -> Result<DetectorThresholds> {
    if !(false_alarm > 0.0 && false_alarm < 1.0) || trials == 0 {
        bail!(InvalidSpec, "need trials > 0 and a false-alarm rate in (0, 1)");
    }
    let det = LegacyDetector::unchecked(DetectorThresholds {
        dsss: 0.5,
        packet: 0.5,
        ht: 0.5,
        he: 0.5,
    });
    let mut stages: [Vec<f64>; 4] = Default::default();
    for _ in 0..trials {
        let noise = ComplexSignal::new(unit_noise(window_len, rng), BURST_RATE_HZ);
        let m = det.metrics(&noise)?;
        for (v, s) in [m.dsss, m.packet, m.ht, m.he].into_iter().zip(stages.iter_mut()) {
            s.push(v);
        }
    }
    let q = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = ((1.0 - false_alarm) * v.len() as f64).ceil() as usize;
        v[k.min(v.len() - 1)]
    };
    let [mut d, mut p, mut h, mut e] = stages;
    Ok(DetectorThresholds {
        dsss: q(&mut d),
        packet: q(&mut p),
        ht: q(&mut h),
        he: q(&mut e),
    })
}

fn peak(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, m)| if m > best.1 { (i, m) } else { best })
}

/// First offset reaching 90% of the maximum: with several PPDUs in view
/// the receiver synchronizes to the first one.
fn earliest_peak(v: &[f64]) -> usize {
    let (_, max) = peak(v);
    v.iter().position(|&m| m >= 0.9 * max).unwrap_or(0)
}

/// `|sum_k x[o+k] conj(t[k])| / sqrt(E_x(o) E_t)` for every full overlap
/// offset `o`, computed with one FFT correlation and prefix-summed window
/// energies.
pub fn sliding_ncc(x: &[Complex], t: &[Complex], t_energy: f64) -> Vec<f64> {
    let (n, m) = (x.len(), t.len());
    if m == 0 || m > n || t_energy <= 0.0 {
        return Vec::new();
    }
    let len = (n + m - 1).next_power_of_two();
    let mut xf = vec![Complex::new(0.0, 0.0); len];
    xf[..n].copy_from_slice(x);
    let mut tf = vec![Complex::new(0.0, 0.0); len];
    tf[..m].copy_from_slice(t);
    fft_in_place(&mut xf);
    fft_in_place(&mut tf);
    for (a, b) in xf.iter_mut().zip(&tf) {
        *a *= b.conj();
    }
    ifft_in_place(&mut xf);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for s in x {
        acc += s.norm_sqr();
        prefix.push(acc);
    }
    (0..=n - m)
        .map(|o| {
            let e = prefix[o + m] - prefix[o];
            if e <= 0.0 {
                0.0
            } else {
                (xf[o].norm() / (e * t_energy).sqrt()).min(1.0)
            }
        })
        .collect()
}

/// Normalized correlation of `t` with `x[offset..]`; 0 when out of range
/// or silent.
fn ncc_at(x: &[Complex], t: &Template, offset: usize) -> f64 {
    let m = t.samples.len();
    if offset + m > x.len() {
        return 0.0;
    }
    let seg = &x[offset..offset + m];
    let e: f64 = seg.iter().map(|c| c.norm_sqr()).sum();
    if e <= 0.0 {
        return 0.0;
    }
    let c: Complex = seg.iter().zip(&t.samples).map(|(a, b)| a * b.conj()).sum();
    (c.norm() / (e * t.energy).sqrt()).min(1.0)
}

fn anchored_ncc(x: &[Complex], t: &Template, expected: usize) -> f64 {
    let lo = expected.saturating_sub(ANCHOR_TOLERANCE);
    (lo..=expected + ANCHOR_TOLERANCE)
        .map(|o| ncc_at(x, t, o))
        .fold(0.0, f64::max)
}

/// `|P(d)|^2 / (E0(d) E1(d))` with `P(d) = sum_k conj(x[d+k]) x[d+k+lag]`
/// over `window` samples and `E0`, `E1` the energies of the two windows.
pub fn lag_autocorrelation(x: &[Complex], lag: usize, window: usize) -> Vec<f64> {
    if x.len() < lag + window || window == 0 {
        return Vec::new();
    }
    let count = x.len() - lag - window + 1;
    let prod = |k: usize| x[k].conj() * x[k + lag];
    let mut p: Complex = (0..window).map(prod).sum();
    let mut e0: f64 = x[..window].iter().map(|c| c.norm_sqr()).sum();
    let mut e1: f64 = x[lag..lag + window].iter().map(|c| c.norm_sqr()).sum();
    let mut out = Vec::with_capacity(count);
    for d in 0..count {
        let den = e0 * e1;
        out.push(if den > 0.0 { (p.norm_sqr() / den).min(1.0) } else { 0.0 });
        if d + 1 < count {
            p += prod(d + window) - prod(d);
            e0 += x[d + window].norm_sqr() - x[d].norm_sqr();
            e1 += x[d + lag + window].norm_sqr() - x[d + lag].norm_sqr();
            // running sums drift; re-anchor them every so often
            if d % 256 == 255 {
                p = (d + 1..d + 1 + window).map(prod).sum();
                e0 = x[d + 1..d + 1 + window].iter().map(|c| c.norm_sqr()).sum();
                e1 = x[d + 1 + lag..d + 1 + lag + window].iter().map(|c| c.norm_sqr()).sum();
            }
        }
    }
    out
}
