//! Evaluation harness: model and legacy sweeps, multi-label evaluation of
//! overlap captures and a resumable hyperparameter grid search.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use protoclass_core::legacy::{detection_accuracy, DetectorThresholds, FormatGrouping, LegacyDetector, DETECTION_WINDOW};
use protoclass_core::metrics::{multilabel_metrics, MultiLabelMetrics};
use protoclass_core::model::{argmax, SequenceCorpus};
use protoclass_core::signal::NormalizationMode;
use protoclass_core::sweep::{run_sweep, SweepConfig, SweepResult};
use protoclass_core::waveform::ProtocolId;
use protoclass_core::{Complex, ComplexSignal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::TrainedModel;
use crate::error::{format_err, Error, Result};
use crate::training::{class_set, train_model, TrainSettings};

/// One grid point of a stored sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub channel: String,
    pub snr_db: f64,
    pub trials: usize,
    pub accuracy: f64,
    /// Row = truth, column = prediction.
    pub confusion: Vec<Vec<usize>>,
    /// Per truth class, trials with no decision.
    pub undetected: Vec<usize>,
}

/// Serializable form of a [`SweepResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: String,
    pub timestamp_unix: u64,
    pub class_names: Vec<String>,
    pub points: Vec<PointRecord>,
}

impl SweepRecord {
    pub fn from_result(r: &SweepResult) -> Self {
        let n = r.class_names.len();
        Self {
            model: r.model.clone(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            class_names: r.class_names.clone(),
            points: r
                .points
                .iter()
                .map(|p| PointRecord {
                    channel: p.channel.name().to_string(),
                    snr_db: p.snr_db,
                    trials: p.trials(),
                    accuracy: p.accuracy(),
                    confusion: (0..n).map(|t| (0..n).map(|q| p.confusion.count(t, q)).collect()).collect(),
                    undetected: (0..n).map(|t| p.confusion.undetected(t)).collect(),
                })
                .collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| format_err(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Channel names in first-seen order.
    pub fn channels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.channel) {
                out.push(p.channel.clone());
            }
        }
        out
    }

    /// `model,channel,snr_db,accuracy,trials` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,channel,snr_db,accuracy,trials\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{:.6},{}\n", self.model, p.channel, p.snr_db, p.accuracy, p.trials));
        }
        s
    }
}

/// How a model sweep presents windows to the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSweepOptions {
    pub name: String,
    /// `None` keeps the model's own normalization.
    pub normalization: Option<Option<NormalizationMode>>,
    /// Gain applied to every received window, in dB.
    pub gain_db: f64,
}

impl Default for ModelSweepOptions {
    fn default() -> Self {
        Self {
            name: "transformer".into(),
            normalization: None,
            gain_db: 0.0,
        }
    }
}

/// Sweeps a single-label model over held-out bursts. The window length is
/// the model's.
pub fn model_sweep(
    model: &TrainedModel,
    bursts: &[(ComplexSignal, ProtocolId)],
    cfg: &SweepConfig,
    opts: &ModelSweepOptions,
) -> Result<SweepResult> {
    if model.multi_label() {
        return Err(protoclass_core::Error::InvalidSpec("sweeps need a single-label model".into()).into());
    }
    let labeled = bursts
        .iter()
        .map(|(b, p)| Ok((b.clone(), class_set(&model.classes, &[*p])?.trailing_zeros() as usize)))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = model.classes.iter().map(|p| p.short_name()).collect();
    let mut cfg = cfg.clone();
    cfg.window_len = model.window_len();
    let normalization = opts.normalization.unwrap_or(model.normalization);
    let gain = Complex::new(10f64.powf(opts.gain_db / 20.0), 0.0);
    let mut failure = None;
    let r = run_sweep(&opts.name, &names, &labeled, &cfg, |y| {
        let y = if opts.gain_db == 0.0 { y.clone() } else { y.scaled(gain) };
        match model.scores_with(y.samples(), normalization) {
            Ok(s) => Ok(Some(argmax(&s))),
            Err(e) => {
                failure = Some(e);
                Err(protoclass_core::Error::InvalidInput("model evaluation failed".into()))
            }
        }
    });
    match (r, failure) {
        (_, Some(e)) => Err(e),
        (r, None) => Ok(r?),
    }
}

/// Legacy detector over the same grid. Windows start at the burst start and
/// span the detector's fixed window.
pub fn legacy_sweep(
    bursts: &[(ComplexSignal, ProtocolId)],
    thresholds: DetectorThresholds,
    grouping: FormatGrouping,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let detector = LegacyDetector::new(thresholds)?;
    let mut cfg = cfg.clone();
    cfg.window_len = DETECTION_WINDOW;
    Ok(detection_accuracy(&detector, bursts, grouping, &cfg)?)
}

/// Sigmoid scores of up to `windows_per_capture` consecutive windows of
/// every capture, paired with the capture's class set.
pub fn multilabel_scores(
    model: &TrainedModel,
    captures: &[(ComplexSignal, Vec<ProtocolId>)],
    windows_per_capture: usize,
) -> Result<(Vec<Vec<f64>>, Vec<u32>)> {
    if !model.multi_label() {
        return Err(protoclass_core::Error::InvalidSpec("overlap evaluation needs a multi-label model".into()).into());
    }
    let w = model.window_len();
    let mut probs = Vec::new();
    let mut truth = Vec::new();
    for (c, protocols) in captures {
        let set = class_set(&model.classes, protocols)?;
        for k in 0..(c.len() / w).min(windows_per_capture) {
            probs.push(model.scores(&c.samples()[k * w..(k + 1) * w])?);
            truth.push(set);
        }
    }
    if probs.is_empty() {
        return Err(protoclass_core::Error::InsufficientData("no capture holds a full window".into()).into());
    }
    Ok((probs, truth))
}

pub fn multilabel_evaluate(
    model: &TrainedModel,
    captures: &[(ComplexSignal, Vec<ProtocolId>)],
    windows_per_capture: usize,
    threshold: f64,
) -> Result<MultiLabelMetrics> {
    let (probs, truth) = multilabel_scores(model, captures, windows_per_capture)?;
    let m = multilabel_metrics(&probs, &truth, threshold)?;
    debug_assert!(m.single >= m.single_exact && m.single_exact >= m.exact);
    Ok(m)
}

/// JSON view of multi-label metrics with class names.
pub fn multilabel_json(m: &MultiLabelMetrics, classes: &[ProtocolId]) -> serde_json::Value {
    let set_name = |bits: u32| {
        classes
            .iter()
            .enumerate()
            .filter(|(c, _)| bits & (1 << c) != 0)
            .map(|(_, p)| p.short_name())
            .collect::<Vec<_>>()
            .join("+")
    };
    serde_json::json!({
        "count": m.count,
        "exact": m.exact,
        "single": m.single,
        "single_exact": m.single_exact,
        "auc": m.auc,
        "per_class": classes.iter().zip(&m.per_class).map(|(p, s)| serde_json::json!({
            "class": p.short_name(), "precision": s.precision, "recall": s.recall, "support": s.support,
        })).collect::<Vec<_>>(),
        "per_group": m.per_group.iter().map(|g| serde_json::json!({
            "truth": set_name(g.truth),
            "count": g.count,
            "detected": classes.iter().zip(&g.detected)
                .map(|(p, r)| (p.short_name().to_string(), serde_json::json!(r)))
                .collect::<serde_json::Map<_, _>>(),
        })).collect::<Vec<_>>(),
    })
}

/// Axes of a grid search; every combination is trained from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub slice_lens: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub base: TrainSettings,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            slice_lens: vec![16, 32],
            batch_sizes: vec![32, 64],
            learning_rates: vec![1e-3, 2e-4],
            base: TrainSettings::default(),
        }
    }
}

impl GridSpec {
    /// Settings of every grid point in slice, batch, rate order.
    pub fn points(&self) -> Vec<TrainSettings> {
        let mut out = Vec::new();
        for &s in &self.slice_lens {
            for &b in &self.batch_sizes {
                for &lr in &self.learning_rates {
                    out.push(TrainSettings {
                        slice_len: Some(s),
                        batch_size: b,
                        learning_rate: lr,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub slice_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Validation accuracy of the kept epoch.
    pub accuracy: f64,
    /// Validation loss of the kept epoch.
    pub loss: f64,
    pub hash: String,
}

/// Stable 64-bit FNV-1a hash of a configuration's JSON form.
pub fn config_hash(settings: &TrainSettings) -> String {
    let json = serde_json::to_string(settings).expect("settings serialize");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Trains every grid point on `corpus` and returns the rows sorted by
/// accuracy (best first). With `cache_dir`, each finished point is stored
/// as `<hash>.json` and skipped on later runs.
pub fn grid_search<C: SequenceCorpus + ?Sized>(
    corpus: &mut C,
    spec: &GridSpec,
    cache_dir: Option<&Path>,
    mut on_row: impl FnMut(&GridRow, bool),
) -> Result<Vec<GridRow>> {
    if let Some(d) = cache_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rows = Vec::new();
    for settings in spec.points() {
        let hash = config_hash(&settings);
        let cached = cache_dir.map(|d| d.join(format!("{hash}.json"))).filter(|p| p.exists());
        let row = match cached {
            Some(p) => {
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let row: GridRow = serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {e}", p.display())))?;
                on_row(&row, true);
                row
            }
            None => {
                let (_, history) = train_model(corpus, &settings, |_| {})?;
                let best = history
                    .records
                    .iter()
                    .find(|r| r.epoch == history.best_epoch)
                    .ok_or_else(|| format_err("training produced no epochs"))?;
                let (accuracy, loss) = if best.val_loss.is_nan() {
                    (best.train_acc, best.train_loss)
                } else {
                    (best.val_acc, best.val_loss)
                };
                let row = GridRow {
                    slice_len: settings.transformer_config()?.d_model / 2,
                    batch_size: settings.batch_size,
                    learning_rate: settings.learning_rate,
                    accuracy,
                    loss,
                    hash: hash.clone(),
                };
                if let Some(d) = cache_dir {
                    let p = d.join(format!("{hash}.json"));
                    let json = serde_json::to_string_pretty(&row).map_err(|e| format_err(e.to_string()))?;
                    fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
                }
                on_row(&row, false);
                row
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
    Ok(rows)
}

/// `slice_len,batch_size,learning_rate,accuracy,loss` with a header line.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("slice_len,batch_size,learning_rate,accuracy,loss\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:.6},{:.6}\n", r.slice_len, r.batch_size, r.learning_rate, r.accuracy, r.loss));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_and_hashes() {
        let spec = GridSpec::default();
        let pts = spec.points();
        assert_eq!(pts.len(), 8);
        let mut hashes: Vec<String> = pts.iter().map(config_hash).collect();
        assert_eq!(config_hash(&pts[0]), hashes[0]);
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 8);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![GridRow {
            slice_len: 16,
            batch_size: 32,
            learning_rate: 0.001,
            accuracy: 0.5,
            loss: 1.0,
            hash: "x".into(),
        }];
        let csv = grid_csv(&rows);
        assert_eq!(csv, "slice_len,batch_size,learning_rate,accuracy,loss\n16,32,0.001,0.500000,1.000000\n");
    }
}
