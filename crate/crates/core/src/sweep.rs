//! SNR x channel sweeps over held-out bursts.
//!
//! Every (channel, trial) pair draws one window offset, one fading
//! realization and one unit-noise buffer; the same draws are reused at every
//! SNR of the grid (common random numbers), so accuracy differences between
//! SNR levels are not blurred by resampling the channel.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;

use crate::channel::{apply_channel, draw_realization, ChannelModel};
use crate::error::{bail, Error, Result};
use crate::metrics::{spearman, ConfusionMatrix};
use crate::signal::{add_scaled_noise, unit_noise};
use crate::{derive_seed, rng_from_seed, ComplexSignal};

/// -30, -25, ..., 30 dB.
pub fn default_snr_grid() -> Vec<f64> {
    (-6..=6).map(|k| 5.0 * k as f64).collect()
}

/// Where the evaluated window is cut from each burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowPlacement {
    /// Always the first samples (a detector looking for the preamble).
    Start,
    /// Uniformly random offset (a classifier seeing an arbitrary slice).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub channels: Vec<ChannelModel>,
    pub snrs_db: Vec<f64>,
    pub trials_per_point: usize,
    pub window_len: usize,
    pub placement: WindowPlacement,
    pub seed: u64,
}

impl SweepConfig {
    /// All channel models, the default SNR grid and 100 trials per point.
    pub fn new(window_len: usize, placement: WindowPlacement) -> Self {
        Self {
            channels: ChannelModel::ALL.to_vec(),
            snrs_db: default_snr_grid(),
            trials_per_point: 100,
            window_len,
            placement,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.snrs_db.is_empty() {
            bail!(InvalidSpec, "sweep grids must be non-empty");
        }
        if self.trials_per_point == 0 || self.window_len == 0 {
            bail!(InvalidSpec, "trials and window length must be positive");
        }
        if self.snrs_db.iter().any(|s| s.is_nan()) {
            bail!(InvalidSpec, "SNR grid contains NaN");
        }
        Ok(())
    }
}

/// Outcome at one (channel, SNR) grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub channel: ChannelModel,
    pub snr_db: f64,
    pub confusion: ConfusionMatrix,
}

impl SweepPoint {
    pub fn trials(&self) -> usize {
        self.confusion.total()
    }

    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Free-form identifier of the evaluated classifier.
    pub model: String,
    pub class_names: Vec<String>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, channel: ChannelModel, snr_db: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.channel == channel && p.snr_db == snr_db)
    }

    pub fn accuracy(&self, channel: ChannelModel, snr_db: f64) -> Option<f64> {
        self.point(channel, snr_db).map(SweepPoint::accuracy)
    }

    /// (SNR, accuracy) pairs of one channel in grid order.
    pub fn curve(&self, channel: ChannelModel) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.channel == channel)
            .map(|p| (p.snr_db, p.accuracy()))
            .collect()
    }

    /// Accuracy pooled over all channels at one SNR.
    pub fn pooled_accuracy(&self, snr_db: f64) -> Option<f64> {
        let mut m: Option<ConfusionMatrix> = None;
        for p in self.points.iter().filter(|p| p.snr_db == snr_db) {
            match &mut m {
                Some(m) => m.merge(&p.confusion),
                None => m = Some(p.confusion.clone()),
            }
        }
        m.map(|m| m.accuracy())
    }

    /// Spearman correlation between SNR and accuracy along one channel.
    pub fn spearman(&self, channel: ChannelModel) -> f64 {
        let (s, a): (Vec<f64>, Vec<f64>) = self.curve(channel).into_iter().unzip();
        spearman(&s, &a)
    }

    pub fn channels(&self) -> Vec<ChannelModel> {
        let mut out: Vec<ChannelModel> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.channel) {
                out.push(p.channel);
            }
        }
        out
    }

    /// `model,channel,snr_db,accuracy,trials` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,channel,snr_db,accuracy,trials\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{:.6},{}", self.model, p.channel, p.snr_db, p.accuracy(), p.trials());
        }
        s
    }
}

/// Runs `classify` over the grid. `bursts` pairs each held-out burst with
/// its class index. Trials cycle through the classes present (trial `t`
/// takes class `t mod k`, and within it the bursts in turn), so every
/// grid point is class-balanced when the trial count is a multiple of the
/// number of classes. `classify` returns `None` when it declines to decide,
/// which is recorded as undetected.
pub fn run_sweep<F>(
    model: &str,
    class_names: &[&str],
    bursts: &[(ComplexSignal, usize)],
    cfg: &SweepConfig,
    mut classify: F,
) -> Result<SweepResult>
where
    F: FnMut(&ComplexSignal) -> Result<Option<usize>>,
{
    cfg.validate()?;
    let nc = class_names.len();
    if bursts.is_empty() {
        bail!(InsufficientData, "no bursts to sweep over");
    }
    for (b, c) in bursts {
        if *c >= nc {
            bail!(InvalidLabel, "class {c} out of range for {nc} classes");
        }
        if b.len() < cfg.window_len {
            return Err(Error::InsufficientSamples {
                needed: cfg.window_len,
                available: b.len(),
            });
        }
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (i, (_, c)) in bursts.iter().enumerate() {
        by_class[*c].push(i);
    }
    by_class.retain(|v| !v.is_empty());
    let pick = |t: usize| {
        let group = &by_class[t % by_class.len()];
        group[(t / by_class.len()) % group.len()]
    };
    let mut points = Vec::with_capacity(cfg.channels.len() * cfg.snrs_db.len());
    for (ci, &channel) in cfg.channels.iter().enumerate() {
        let first = points.len();
        for &snr in &cfg.snrs_db {
            points.push(SweepPoint {
                channel,
                snr_db: snr,
                confusion: ConfusionMatrix::new(nc),
            });
        }
        for t in 0..cfg.trials_per_point {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, ((ci as u64) << 32) | t as u64));
            let (burst, class) = &bursts[pick(t)];
            let offset = match cfg.placement {
                WindowPlacement::Start => 0,
                WindowPlacement::Random => rng.random_range(0..=burst.len() - cfg.window_len),
            };
            let window = burst.slice(offset, cfg.window_len)?;
            let faded = apply_channel(&window, &draw_realization(channel, &mut rng))?;
            let noise = unit_noise(cfg.window_len, &mut rng);
            for (si, &snr) in cfg.snrs_db.iter().enumerate() {
                let y = add_scaled_noise(&faded, snr, &noise)?;
                let pred = classify(&y)?;
                if pred.is_some_and(|p| p >= nc) {
                    bail!(InvalidLabel, "classifier returned class {pred:?} for {nc} classes");
                }
                points[first + si].confusion.record(*class, pred);
            }
        }
    }
    Ok(SweepResult {
        model: model.to_string(),
        class_names: class_names.iter().map(|s| s.to_string()).collect(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::mean_power;
    use crate::Complex;
    use alloc::vec;

    fn tone_bursts() -> Vec<(ComplexSignal, usize)> {
        (0..4)
            .map(|c| {
                let s = (0..256)
                    .map(|k| Complex::from_polar(1.0, 0.3 * (c as f64 + 1.0) * k as f64))
                    .collect();
                (ComplexSignal::new(s, 20e6), c)
            })
            .collect()
    }

    #[test]
    fn grid_shape() {
        let g = default_snr_grid();
        assert_eq!(g.len(), 13);
        assert_eq!((g[0], g[12]), (-30.0, 30.0));
        let cfg = SweepConfig::new(64, WindowPlacement::Random);
        assert_eq!(cfg.channels.len() * cfg.snrs_db.len(), 52);
    }

    #[test]
    fn oracle_classifier_is_perfect() {
        let bursts = tone_bursts();
        let mut cfg = SweepConfig::new(64, WindowPlacement::Random);
        cfg.trials_per_point = 8;
        cfg.snrs_db = vec![10.0, 30.0];
        // calls arrive channel by channel, trial by trial, SNR by SNR, and
        // trial t is drawn from class t % 4
        let mut k = 0usize;
        let r = run_sweep("oracle", &["a", "b", "c", "d"], &bursts, &cfg, |_| {
            let c = (k / cfg.snrs_db.len()) % 4;
            k += 1;
            Ok(Some(c))
        })
        .unwrap();
        assert!(r.points.iter().all(|p| p.accuracy() == 1.0 && p.trials() == 8));
        for p in &r.points {
            for t in 0..4 {
                assert_eq!(p.confusion.support(t), 2);
            }
        }
        assert_eq!(r.to_csv().lines().count(), 1 + 8);
    }

    #[test]
    fn noise_is_reused_across_snrs() {
        // with common random numbers the residual y - h*x scales exactly
        // with the noise amplitude between grid points
        let bursts = vec![tone_bursts().remove(0)];
        let mut cfg = SweepConfig::new(128, WindowPlacement::Start);
        cfg.channels = vec![ChannelModel::NoChannel];
        cfg.snrs_db = vec![0.0, 20.0];
        cfg.trials_per_point = 1;
        let mut seen = Vec::new();
        run_sweep("x", &["a"], &bursts, &cfg, |y| {
            seen.push(y.clone());
            Ok(None)
        })
        .unwrap();
        let clean = bursts[0].0.slice(0, 128).unwrap();
        let resid = |y: &ComplexSignal| {
            ComplexSignal::new(y.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect(), 20e6)
        };
        let (r0, r20) = (resid(&seen[0]), resid(&seen[1]));
        let ratio = mean_power(&r0).unwrap() / mean_power(&r20).unwrap();
        assert!((ratio - 100.0).abs() < 1e-6, "{ratio}");
        for (a, b) in r0.samples().iter().zip(r20.samples()) {
            assert!((a - b * 10.0).norm() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_errors() {
        let bursts = tone_bursts();
        let mut cfg = SweepConfig::new(64, WindowPlacement::Random);
        cfg.trials_per_point = 4;
        let run = |cfg: &SweepConfig| {
            run_sweep("p", &["a", "b", "c", "d"], &bursts, cfg, |y| {
                Ok(Some((y.samples()[0].re > 0.0) as usize))
            })
            .unwrap()
        };
        assert_eq!(run(&cfg), run(&cfg));
        let mut long = cfg.clone();
        long.window_len = 1000;
        assert!(run_sweep("p", &["a", "b", "c", "d"], &bursts, &long, |_| Ok(None)).is_err());
        let mut empty = cfg.clone();
        empty.snrs_db.clear();
        assert!(run_sweep("p", &["a", "b", "c", "d"], &bursts, &empty, |_| Ok(None)).is_err());
        assert!(run_sweep("p", &["a"], &bursts, &cfg, |_| Ok(None)).is_err());
    }
}
