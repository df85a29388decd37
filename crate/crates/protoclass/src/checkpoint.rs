//! Trained classifiers and their checkpoint files.
//!
//! Layout: the 8-byte magic `PCLSCKPT`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then the tensor blob. The header carries
//! the architecture, its configuration, the class list, the input
//! normalization and one `{name, shape, offset, numel}` record per tensor;
//! offsets are in bytes from the start of the blob and every tensor is
//! stored as little-endian `f32`.

use std::fs;
use std::path::Path;

use protoclass_core::model::{Cnn, CnnConfig, Network, Transformer, TransformerConfig};
use protoclass_core::signal::{interleave_iq, power_normalize, NormalizationMode};
use protoclass_core::tokenizer::tokenize_samples;
use protoclass_core::waveform::ProtocolId;
use protoclass_core::{Complex, ComplexSignal};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"PCLSCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    Transformer(Transformer<f32>),
    Cnn(Cnn<f32>),
}

/// A network plus what is needed to apply it to raw samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: Net,
    /// Per-window power normalization applied before the network.
    pub normalization: Option<NormalizationMode>,
    /// Protocol of each output class.
    pub classes: Vec<ProtocolId>,
}

impl TrainedModel {
    pub fn new(net: Net, normalization: Option<NormalizationMode>, classes: Vec<ProtocolId>) -> Result<Self> {
        let m = Self {
            net,
            normalization,
            classes,
        };
        if m.classes.len() != m.num_classes() {
            return Err(format_err(format!(
                "{} class names for a {}-class network",
                m.classes.len(),
                m.num_classes()
            )));
        }
        Ok(m)
    }

    pub fn arch(&self) -> &'static str {
        match self.net {
            Net::Transformer(_) => "transformer",
            Net::Cnn(_) => "cnn",
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.net {
            Net::Transformer(t) => t.num_classes(),
            Net::Cnn(c) => c.num_classes(),
        }
    }

    pub fn multi_label(&self) -> bool {
        match &self.net {
            Net::Transformer(t) => t.multi_label(),
            Net::Cnn(c) => c.multi_label(),
        }
    }

    /// Complex samples consumed per prediction.
    pub fn window_len(&self) -> usize {
        match &self.net {
            Net::Transformer(t) => t.input_len() / 2,
            Net::Cnn(c) => c.input_len() / 2,
        }
    }

    pub fn num_params(&self) -> usize {
        match &self.net {
            Net::Transformer(t) => t.num_params(),
            Net::Cnn(c) => c.num_params(),
        }
    }

    /// Class scores of the first [`Self::window_len`] samples with the
    /// model's own normalization.
    pub fn scores(&self, samples: &[Complex]) -> Result<Vec<f64>> {
        self.scores_with(samples, self.normalization)
    }

    /// As [`Self::scores`] with an explicit normalization choice.
    pub fn scores_with(&self, samples: &[Complex], normalization: Option<NormalizationMode>) -> Result<Vec<f64>> {
        let n = self.window_len();
        if samples.len() < n {
            return Err(protoclass_core::Error::InsufficientSamples {
                needed: n,
                available: samples.len(),
            }
            .into());
        }
        let mut window = ComplexSignal::new(samples[..n].to_vec(), 1.0);
        if let Some(mode) = normalization {
            window = power_normalize(&window, mode)?;
        }
        Ok(match &self.net {
            Net::Transformer(t) => t.forward(&tokenize_samples(window.samples(), &t.config().tokenization())?)?,
            Net::Cnn(c) => c.forward(interleave_iq(&window)?.values())?,
        })
    }

    /// Single-label decision: index of the highest score.
    pub fn predict(&self, samples: &[Complex]) -> Result<usize> {
        Ok(protoclass_core::model::argmax(&self.scores(samples)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfigDto {
    pub seq_len: usize,
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub fc_hidden: usize,
    pub num_classes: usize,
    pub multi_label: bool,
    pub positional_encoding: bool,
}

impl From<&TransformerConfig> for TransformerConfigDto {
    fn from(c: &TransformerConfig) -> Self {
        Self {
            seq_len: c.seq_len,
            d_model: c.d_model,
            num_layers: c.num_layers,
            num_heads: c.num_heads,
            d_ff: c.d_ff,
            fc_hidden: c.fc_hidden,
            num_classes: c.num_classes,
            multi_label: c.multi_label,
            positional_encoding: c.positional_encoding,
        }
    }
}

impl From<TransformerConfigDto> for TransformerConfig {
    fn from(c: TransformerConfigDto) -> Self {
        Self {
            seq_len: c.seq_len,
            d_model: c.d_model,
            num_layers: c.num_layers,
            num_heads: c.num_heads,
            d_ff: c.d_ff,
            fc_hidden: c.fc_hidden,
            num_classes: c.num_classes,
            multi_label: c.multi_label,
            positional_encoding: c.positional_encoding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfigDto {
    pub input_len: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub multi_label: bool,
}

impl From<&CnnConfig> for CnnConfigDto {
    fn from(c: &CnnConfig) -> Self {
        Self {
            input_len: c.input_len,
            conv_channels: c.conv_channels.clone(),
            kernel_size: c.kernel_size,
            dense_hidden: c.dense_hidden,
            num_classes: c.num_classes,
            multi_label: c.multi_label,
        }
    }
}

impl From<CnnConfigDto> for CnnConfig {
    fn from(c: CnnConfigDto) -> Self {
        Self {
            input_len: c.input_len,
            conv_channels: c.conv_channels,
            kernel_size: c.kernel_size,
            dense_hidden: c.dense_hidden,
            num_classes: c.num_classes,
            multi_label: c.multi_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", content = "config", rename_all = "snake_case")]
enum ArchConfig {
    Transformer(TransformerConfigDto),
    Cnn(CnnConfigDto),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    numel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(flatten)]
    arch: ArchConfig,
    classes: Vec<String>,
    normalization: Option<String>,
    tensors: Vec<TensorRecord>,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn normalization_name(mode: Option<NormalizationMode>) -> &'static str {
    match mode {
        Some(NormalizationMode::Rms) => "rms",
        Some(NormalizationMode::AsPrinted) => "as_printed",
        None => "none",
    }
}

pub fn parse_normalization(s: &str) -> Result<Option<NormalizationMode>> {
    match s {
        "rms" => Ok(Some(NormalizationMode::Rms)),
        "as_printed" => Ok(Some(NormalizationMode::AsPrinted)),
        "none" => Ok(None),
        other => Err(Error::Config(format!("unknown normalization {other:?}"))),
    }
}

/// Named tensors of the model, parameters first, then input statistics.
fn named_tensors(model: &TrainedModel) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    let (infos, params) = match &model.net {
        Net::Transformer(t) => (t.tensors(), t.params()),
        Net::Cnn(c) => (c.tensors(), c.params()),
    };
    for info in infos {
        out.push((info.name.clone(), info.shape.clone(), params[info.range.clone()].to_vec()));
    }
    if let Net::Transformer(t) = &model.net {
        let d = t.config().d_model;
        out.push(("input_norm.mean".into(), vec![d], t.input_mean().to_vec()));
        out.push(("input_norm.inv_std".into(), vec![d], t.input_inv_std().to_vec()));
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &TrainedModel, metadata: serde_json::Value) -> Result<()> {
    let tensors = named_tensors(model);
    let mut records = Vec::with_capacity(tensors.len());
    let mut blob = Vec::new();
    for (name, shape, values) in &tensors {
        records.push(TensorRecord {
            name: name.clone(),
            shape: shape.clone(),
            offset: blob.len(),
            numel: values.len(),
        });
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let arch = match &model.net {
        Net::Transformer(t) => ArchConfig::Transformer(t.config().into()),
        Net::Cnn(c) => ArchConfig::Cnn(c.config().into()),
    };
    let header = Header {
        format_version: FORMAT_VERSION,
        arch,
        classes: model.classes.iter().map(|p| p.short_name().to_string()).collect(),
        normalization: Some(normalization_name(model.normalization).to_string()),
        tensors: records,
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(e.to_string()))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + blob.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&blob);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and its free-form metadata.
pub fn load_checkpoint(path: &Path) -> Result<(TrainedModel, serde_json::Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| format_err(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let blob_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..blob_start]).map_err(|e| bad(&e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }
    let blob = &bytes[blob_start..];
    let tensor = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let r = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| bad(&format!("missing tensor {name}")))?;
        if r.shape != shape || r.numel != shape.iter().product::<usize>() {
            return Err(bad(&format!("tensor {name} has shape {:?}, expected {shape:?}", r.shape)));
        }
        let end = r.offset + 4 * r.numel;
        if end > blob.len() {
            return Err(bad(&format!("tensor {name} runs past the end of the file")));
        }
        Ok(blob[r.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let fill = |infos: Vec<protoclass_core::model::TensorInfo>, total: usize| -> Result<Vec<f32>> {
        let mut params = vec![0f32; total];
        for info in infos {
            params[info.range.clone()].copy_from_slice(&tensor(&info.name, &info.shape)?);
        }
        Ok(params)
    };
    let net = match header.arch.clone() {
        ArchConfig::Transformer(dto) => {
            let cfg: TransformerConfig = dto.into();
            let d = cfg.d_model;
            let total = protoclass_core::model::param_count(&cfg);
            let skeleton = Transformer::<f32>::from_parts(cfg.clone(), vec![0.0; total], vec![0.0; d], vec![1.0; d])?;
            let params = fill(skeleton.tensors(), total)?;
            let mean = tensor("input_norm.mean", &[d])?;
            let inv_std = tensor("input_norm.inv_std", &[d])?;
            Net::Transformer(Transformer::from_parts(cfg, params, mean, inv_std)?)
        }
        ArchConfig::Cnn(dto) => {
            let cfg: CnnConfig = dto.into();
            let total = protoclass_core::model::cnn_param_count(&cfg);
            let skeleton = Cnn::<f32>::from_params(cfg.clone(), vec![0.0; total])?;
            let params = fill(skeleton.tensors(), total)?;
            Net::Cnn(Cnn::from_params(cfg, params)?)
        }
    };
    let classes = header
        .classes
        .iter()
        .map(|c| c.parse().map_err(Error::from))
        .collect::<Result<Vec<ProtocolId>>>()?;
    let normalization = parse_normalization(header.normalization.as_deref().unwrap_or("none"))?;
    Ok((TrainedModel::new(net, normalization, classes)?, header.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use protoclass_core::rng_from_seed;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TransformerConfig {
            seq_len: 4,
            d_model: 8,
            num_layers: 1,
            num_heads: 2,
            d_ff: 16,
            fc_hidden: 6,
            num_classes: 4,
            multi_label: false,
            positional_encoding: false,
        };
        let t = Transformer::<f32>::new(cfg, &mut rng_from_seed(1)).unwrap();
        let m = TrainedModel::new(Net::Transformer(t), Some(NormalizationMode::Rms), ProtocolId::PROTOCOLS.to_vec()).unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &m, serde_json::json!({"note": "x"})).unwrap();
        let (back, meta) = load_checkpoint(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta["note"], "x");

        let c = Cnn::<f32>::new(
            CnnConfig {
                input_len: 16,
                conv_channels: vec![3],
                kernel_size: 3,
                dense_hidden: 5,
                num_classes: 5,
                multi_label: true,
            },
            &mut rng_from_seed(2),
        )
        .unwrap();
        let m = TrainedModel::new(Net::Cnn(c), None, ProtocolId::ALL.to_vec()).unwrap();
        save_checkpoint(&p, &m, serde_json::Value::Null).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap().0, m);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        fs::write(&p, b"PCLSCKPT\xff\xff\xff\xff\xff\xff\xff\x00{}").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
        fs::write(&p, b"hello").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    }
}
