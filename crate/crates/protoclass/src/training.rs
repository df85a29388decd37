//! Training runs driven by serializable settings, over in-memory bursts or
//! capture files read window by window.

use std::path::PathBuf;

use protoclass_core::channel::ChannelModel;
use protoclass_core::model::{
    fit, train_transformer, Augmentation, Cnn, CnnConfig, EpochRecord, LrSchedule, SequenceCorpus, Target,
    TrainConfig, TrainHistory, TransformerConfig,
};
use protoclass_core::waveform::ProtocolId;
use protoclass_core::{rng_from_seed, derive_seed, ComplexSignal};
use serde::{Deserialize, Serialize};

use crate::capture::{read_window, Dataset, ManifestEntry};
use crate::checkpoint::{parse_normalization, Net, TrainedModel};
use crate::error::{config_err, Result};

/// Class bitmask of `protocols` within `classes`.
pub fn class_set(classes: &[ProtocolId], protocols: &[ProtocolId]) -> Result<u32> {
    let mut bits = 0;
    for p in protocols {
        let c = classes
            .iter()
            .position(|q| q == p)
            .ok_or_else(|| protoclass_core::Error::InvalidLabel(format!("protocol {p} is not a model class")))?;
        bits |= 1 << c;
    }
    Ok(bits)
}

/// Training target of a capture with the given protocols.
pub fn target_of(classes: &[ProtocolId], protocols: &[ProtocolId], multi_label: bool) -> Result<Target> {
    let bits = class_set(classes, protocols)?;
    if multi_label {
        Ok(Target::Set(bits))
    } else if bits.count_ones() == 1 {
        Ok(Target::Class(bits.trailing_zeros() as usize))
    } else {
        Err(protoclass_core::Error::InvalidLabel(format!("{} protocols for a single-label target", protocols.len())).into())
    }
}

/// Capture files as a training corpus; windows are read on demand.
#[derive(Debug, Clone)]
pub struct FileCorpus {
    files: Vec<(PathBuf, f64, usize, Target)>,
}

impl FileCorpus {
    pub fn new(dataset: &Dataset, entries: &[ManifestEntry], classes: &[ProtocolId], multi_label: bool) -> Result<Self> {
        let mut files = Vec::with_capacity(entries.len());
        for e in entries {
            let path = dataset.path_of(e);
            let meta = crate::capture::read_meta(&path)?;
            let len = crate::capture::capture_len(&path)?;
            files.push((path, meta.sample_rate_hz, len, target_of(classes, &e.protocols()?, multi_label)?));
        }
        Ok(Self { files })
    }
}

impl SequenceCorpus for FileCorpus {
    fn num_bursts(&self) -> usize {
        self.files.len()
    }

    fn burst_len(&self, burst: usize) -> usize {
        self.files[burst].2
    }

    fn target(&self, burst: usize) -> Target {
        self.files[burst].3
    }

    fn window(&mut self, burst: usize, offset: usize, len: usize) -> protoclass_core::Result<ComplexSignal> {
        let (path, fs, _, _) = &self.files[burst];
        read_window(path, *fs, offset, len)
            .map_err(|e| protoclass_core::Error::InvalidInput(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Transformer,
    Cnn,
}

/// Everything that defines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub arch: Arch,
    /// Transformer size: `desk`, `sm` or `lg`.
    pub preset: String,
    /// Overrides the preset's tokens per sequence.
    pub seq_len: Option<usize>,
    /// Overrides the preset's samples per token (token width is twice this).
    pub slice_len: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cut the learning rate by 0.3 after `plateau_patience` epochs without
    /// a validation-loss improvement.
    pub reduce_on_plateau: bool,
    pub plateau_patience: usize,
    pub augment: bool,
    pub channels: Vec<String>,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// `rms`, `as_printed` or `none`.
    pub normalization: String,
    pub validation_fraction: f64,
    pub include_noise: bool,
    pub multi_label: bool,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            arch: Arch::Transformer,
            preset: "desk".into(),
            seq_len: None,
            slice_len: None,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            reduce_on_plateau: true,
            plateau_patience: 1,
            augment: true,
            channels: vec!["none".into(), "rayleigh".into()],
            snr_min_db: 0.0,
            snr_max_db: 30.0,
            normalization: "rms".into(),
            validation_fraction: 0.2,
            include_noise: false,
            multi_label: false,
            seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn classes(&self) -> Vec<ProtocolId> {
        if self.include_noise {
            ProtocolId::ALL.to_vec()
        } else {
            ProtocolId::PROTOCOLS.to_vec()
        }
    }

    pub fn transformer_config(&self) -> Result<TransformerConfig> {
        let n = self.classes().len();
        let mut cfg = match self.preset.as_str() {
            "desk" => TransformerConfig::desk(n),
            "sm" => TransformerConfig::sm(n),
            "lg" => TransformerConfig::lg(n),
            other => return Err(config_err(format!("unknown preset {other:?}"))),
        };
        if let Some(m) = self.seq_len {
            cfg.seq_len = m;
        }
        if let Some(s) = self.slice_len {
            cfg.d_model = 2 * s;
        }
        let cfg = cfg.multi_label(self.multi_label);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Baseline CNN fed the same number of samples as the transformer.
    pub fn cnn_config(&self) -> Result<CnnConfig> {
        let t = self.transformer_config()?;
        let cfg = CnnConfig {
            input_len: t.seq_len * t.d_model,
            multi_label: self.multi_label,
            ..CnnConfig::baseline(self.classes().len())
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let augmentation = if self.augment {
            let channels = self
                .channels
                .iter()
                .map(|c| c.parse::<ChannelModel>())
                .collect::<protoclass_core::Result<Vec<_>>>()?;
            Augmentation::restricted(&channels, self.snr_min_db, self.snr_max_db)
        } else {
            Augmentation::off()
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            schedule: if self.reduce_on_plateau {
                LrSchedule::ReduceOnPlateau {
                    factor: 0.3,
                    patience: self.plateau_patience,
                    min_lr: 1e-5,
                }
            } else {
                LrSchedule::Constant
            },
            augmentation,
            normalization: parse_normalization(&self.normalization)?,
            validation_fraction: self.validation_fraction,
            stride: None,
            random_crop: true,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Complex samples per model input.
    pub fn window_len(&self) -> Result<usize> {
        let t = self.transformer_config()?;
        Ok(t.seq_len * t.d_model / 2)
    }
}

/// Trains a model as described by `settings`.
pub fn train_model<C: SequenceCorpus + ?Sized>(
    corpus: &mut C,
    settings: &TrainSettings,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TrainedModel, TrainHistory)> {
    let train_cfg = settings.train_config()?;
    let (net, history) = match settings.arch {
        Arch::Transformer => {
            let (t, h) = train_transformer(corpus, &settings.transformer_config()?, &train_cfg, on_epoch)?;
            (Net::Transformer(t), h)
        }
        Arch::Cnn => {
            let mut rng = rng_from_seed(derive_seed(settings.seed, 3));
            let mut c = Cnn::<f32>::new(settings.cnn_config()?, &mut rng)?;
            let h = fit(&mut c, corpus, &train_cfg, on_epoch)?;
            (Net::Cnn(c), h)
        }
    };
    Ok((TrainedModel::new(net, train_cfg.normalization, settings.classes())?, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets() {
        use ProtocolId::*;
        let classes = ProtocolId::PROTOCOLS;
        assert_eq!(target_of(&classes, &[N80211], false).unwrap(), Target::Class(2));
        assert_eq!(target_of(&classes, &[B80211, G80211], true).unwrap(), Target::Set(0b11));
        assert!(target_of(&classes, &[B80211, G80211], false).is_err());
        assert!(target_of(&classes, &[Noise], false).is_err());
    }

    #[test]
    fn settings_round_trip_and_configs() {
        let s = TrainSettings::default();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<TrainSettings>(&json).unwrap(), s);
        assert_eq!(s.window_len().unwrap(), 2048);
        let mut lg = s.clone();
        lg.preset = "lg".into();
        assert_eq!(lg.window_len().unwrap(), 8192);
        lg.preset = "huge".into();
        assert!(lg.transformer_config().is_err());
        let mut bad = s.clone();
        bad.channels = vec!["mars".into()];
        assert!(bad.train_config().is_err());
        assert!(serde_json::from_str::<TrainSettings>(r#"{"epochz": 3}"#).is_err());
    }
}
