//! Capture files, manifests and train/test splits.
//!
//! A capture is a pair of files: `<name>.iq` holds little-endian `f32`
//! I/Q pairs with no header, and `<name>.json` beside it holds the
//! metadata. Samples are stored as `f32`, so a round trip is exact for
//! values representable in single precision.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use protoclass_core::waveform::{generate_overlapping_capture, OverlapConfig, OverlapDataset, OverlapRatio, OverlapSpec};
use protoclass_core::waveform::{burst_name, dataset_plan, generate_burst, BurstSpec, ProtocolId, BURST_RATE_HZ};
use protoclass_core::derive_seed;
use protoclass_core::{rng_from_seed, Complex, ComplexSignal};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, Error, Result};

/// Bytes per complex sample in a data file.
pub const BYTES_PER_SAMPLE: usize = 8;
pub const GENERATOR_VERSION: &str = concat!("protoclass-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureMeta {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    /// Short protocol names (`b`, `g`, `n`, `ax`, `noise`).
    pub protocols: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
    pub seed: u64,
    pub generator_version: String,
    /// Collection scenario tag, used by scenario splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl CaptureMeta {
    pub fn new(sample_rate_hz: f64, protocols: &[ProtocolId], seed: u64) -> Self {
        Self {
            sample_rate_hz,
            center_freq_hz: 0.0,
            protocols: protocols.iter().map(|p| p.short_name().to_string()).collect(),
            tx_power_dbm: None,
            seed,
            generator_version: GENERATOR_VERSION.to_string(),
            scenario: None,
        }
    }

    pub fn protocol_ids(&self) -> Result<Vec<ProtocolId>> {
        self.protocols
            .iter()
            .map(|p| p.parse().map_err(Error::from))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(format_err("sidecar lists no protocols"));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(format_err("sample rate must be positive"));
        }
        self.protocol_ids().map(|_| ())
    }
}

/// Path of the metadata file that belongs to a data file.
pub fn sidecar_path(iq_path: &Path) -> PathBuf {
    iq_path.with_extension("json")
}

pub fn write_capture(iq_path: &Path, signal: &ComplexSignal, meta: &CaptureMeta) -> Result<()> {
    meta.validate()?;
    if !signal.is_finite() {
        return Err(format_err("refusing to write non-finite samples"));
    }
    let mut w = BufWriter::new(File::create(iq_path).map_err(|e| Error::io(iq_path, e))?);
    for s in signal.samples() {
        w.write_all(&(s.re as f32).to_le_bytes())
            .and_then(|_| w.write_all(&(s.im as f32).to_le_bytes()))
            .map_err(|e| Error::io(iq_path, e))?;
    }
    w.flush().map_err(|e| Error::io(iq_path, e))?;
    let side = sidecar_path(iq_path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| format_err(e.to_string()))?;
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_meta(iq_path: &Path) -> Result<CaptureMeta> {
    let side = sidecar_path(iq_path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CaptureMeta =
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {e}", side.display())))?;
    meta.validate()?;
    Ok(meta)
}

fn decode(bytes: &[u8]) -> Vec<Complex> {
    bytes
        .chunks_exact(BYTES_PER_SAMPLE)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex::new(re as f64, im as f64)
        })
        .collect()
}

/// Number of complex samples in a data file.
pub fn capture_len(iq_path: &Path) -> Result<usize> {
    let bytes = fs::metadata(iq_path).map_err(|e| Error::io(iq_path, e))?.len() as usize;
    if !bytes.is_multiple_of(BYTES_PER_SAMPLE) {
        return Err(format_err(format!(
            "{}: {bytes} bytes is not a whole number of I/Q pairs",
            iq_path.display()
        )));
    }
    Ok(bytes / BYTES_PER_SAMPLE)
}

pub fn read_capture(iq_path: &Path) -> Result<(ComplexSignal, CaptureMeta)> {
    let meta = read_meta(iq_path)?;
    let bytes = fs::read(iq_path).map_err(|e| Error::io(iq_path, e))?;
    if bytes.len() % BYTES_PER_SAMPLE != 0 {
        return Err(format_err(format!(
            "{}: {} bytes is not a whole number of I/Q pairs",
            iq_path.display(),
            bytes.len()
        )));
    }
    Ok((ComplexSignal::new(decode(&bytes), meta.sample_rate_hz), meta))
}

/// Samples `[offset, offset + len)` of a capture, read without loading the
/// rest of the file.
pub fn read_window(iq_path: &Path, sample_rate_hz: f64, offset: usize, len: usize) -> Result<ComplexSignal> {
    let total = capture_len(iq_path)?;
    if offset + len > total {
        return Err(protoclass_core::Error::InsufficientSamples {
            needed: offset + len,
            available: total,
        }
        .into());
    }
    let mut f = File::open(iq_path).map_err(|e| Error::io(iq_path, e))?;
    f.seek(SeekFrom::Start((offset * BYTES_PER_SAMPLE) as u64))
        .map_err(|e| Error::io(iq_path, e))?;
    let mut buf = vec![0u8; len * BYTES_PER_SAMPLE];
    f.read_exact(&mut buf).map_err(|e| Error::io(iq_path, e))?;
    Ok(ComplexSignal::new(decode(&buf), sample_rate_hz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Data file path relative to the manifest's directory.
    pub path: String,
    /// Protocol short names joined by `+` (`b`, or `g+n` for an overlap).
    pub protocol: String,
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl ManifestEntry {
    pub fn protocols(&self) -> Result<Vec<ProtocolId>> {
        self.protocol
            .split('+')
            .map(|p| p.parse().map_err(Error::from))
            .collect()
    }

    /// The single protocol of a one-transmitter capture.
    pub fn single_protocol(&self) -> Result<ProtocolId> {
        match self.protocols()?.as_slice() {
            [p] => Ok(*p),
            _ => Err(format_err(format!("{} is not a single-protocol capture", self.path))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// Generation parameters, free-form.
    pub spec: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| format_err(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    /// Opens `path`, which is either a manifest file or a directory
    /// containing `manifest.json`.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
        let manifest = Manifest::read(&file)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Loads single-protocol captures as labeled bursts.
    pub fn load_bursts(&self, entries: &[ManifestEntry]) -> Result<Vec<(ComplexSignal, ProtocolId)>> {
        entries
            .iter()
            .map(|e| Ok((read_capture(&self.path_of(e))?.0, e.single_protocol()?)))
            .collect()
    }
}

/// Generates `bursts_per_protocol` bursts of each protocol into `out_dir`
/// and writes the manifest. `len` overrides the default burst lengths.
pub fn generate_dataset(
    protocols: &[ProtocolId],
    bursts_per_protocol: usize,
    len: Option<usize>,
    out_dir: &Path,
    seed: u64,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    for job in dataset_plan(protocols, bursts_per_protocol, seed) {
        let mut spec = BurstSpec::default_for(job.protocol);
        if let Some(l) = len {
            spec = spec.with_len(l);
        }
        let burst = generate_burst(&spec, &mut rng_from_seed(job.seed))?;
        let name = format!("{}.iq", burst_name(&job));
        write_capture(&out_dir.join(&name), &burst, &CaptureMeta::new(BURST_RATE_HZ, &[job.protocol], job.seed))?;
        files.push(ManifestEntry {
            path: name,
            protocol: job.protocol.short_name().to_string(),
            length: burst.len(),
            scenario: None,
        });
    }
    let manifest = Manifest {
        seed,
        spec: serde_json::json!({
            "kind": "bursts",
            "protocols": protocols.iter().map(|p| p.short_name()).collect::<Vec<_>>(),
            "bursts_per_protocol": bursts_per_protocol,
            "len": len,
        }),
        files,
    };
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

/// Scenario tag of one overlap row, e.g. `C1_O1_25`.
pub fn overlap_tag(config: OverlapConfig, dataset: OverlapDataset, ratio: OverlapRatio) -> String {
    format!("{config:?}_{dataset:?}_{}", (ratio.value() * 100.0).round() as u32)
}

/// Writes `captures_per_row` two-transmitter captures for every overlap row,
/// plus as many incumbent-only captures when `include_single` is set.
/// Each capture's sidecar lists the protocols present and carries the row
/// tag as its scenario.
pub fn generate_overlap_dataset(
    rows: &[(OverlapConfig, OverlapDataset, OverlapRatio)],
    captures_per_row: usize,
    len: Option<usize>,
    include_single: bool,
    out_dir: &Path,
    seed: u64,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut stream = 0u64;
    for &(config, dataset, ratio) in rows {
        let tag = overlap_tag(config, dataset, ratio);
        let mut spec = OverlapSpec::table_row(config, dataset, ratio);
        if let Some(l) = len {
            spec = spec.with_len(l);
        }
        let variants: &[bool] = if include_single { &[true, false] } else { &[true] };
        for &pair in variants {
            let mut spec = spec.clone();
            let protocols = if pair {
                vec![spec.incumbent, spec.interferer]
            } else {
                spec.interferer_power_db = f64::NEG_INFINITY;
                vec![spec.incumbent]
            };
            for i in 0..captures_per_row {
                let s = derive_seed(seed, stream);
                stream += 1;
                let capture = generate_overlapping_capture(&spec, &mut rng_from_seed(s))?;
                let name = format!("{tag}_{}_{i:04}.iq", if pair { "pair" } else { "single" });
                let mut meta = CaptureMeta::new(spec.rx_sample_rate_hz, &protocols, s);
                meta.center_freq_hz = spec.rx_center_hz;
                meta.scenario = Some(tag.clone());
                write_capture(&out_dir.join(&name), &capture, &meta)?;
                files.push(ManifestEntry {
                    path: name,
                    protocol: protocols.iter().map(|p| p.short_name()).collect::<Vec<_>>().join("+"),
                    length: capture.len(),
                    scenario: Some(tag.clone()),
                });
            }
        }
    }
    let manifest = Manifest {
        seed,
        spec: serde_json::json!({
            "kind": "overlap",
            "rows": rows.iter().map(|&(c, d, r)| overlap_tag(c, d, r)).collect::<Vec<_>>(),
            "captures_per_row": captures_per_row,
            "len": len,
            "include_single": include_single,
        }),
        files,
    };
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

/// Parses a tag produced by [`overlap_tag`].
pub fn parse_overlap_tag(tag: &str) -> Result<(OverlapConfig, OverlapDataset, OverlapRatio)> {
    let bad = || Error::Config(format!("bad overlap row {tag:?}, expected e.g. C1_O1_25"));
    let mut it = tag.split('_');
    let (c, d, r) = (it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?);
    if it.next().is_some() {
        return Err(bad());
    }
    let config = OverlapConfig::ALL
        .into_iter()
        .find(|x| format!("{x:?}").eq_ignore_ascii_case(c))
        .ok_or_else(bad)?;
    let dataset = match d.to_ascii_uppercase().as_str() {
        "O1" => OverlapDataset::O1,
        "O2" => OverlapDataset::O2,
        _ => return Err(bad()),
    };
    let ratio = match r {
        "25" => OverlapRatio::Quarter,
        "50" => OverlapRatio::Half,
        _ => return Err(bad()),
    };
    Ok((config, dataset, ratio))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Per (scenario, protocol) group, the first `train_fraction` of the
    /// files in manifest order train and the rest test.
    TimeSplit { train_fraction: f64 },
    /// Every file of the held-out scenario tests, all others train.
    ScenarioSplit { holdout: String },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::TimeSplit { train_fraction: 0.8 }
    }
}

/// Splits the manifest entries into (train, test).
pub fn make_split(manifest: &Manifest, spec: &SplitSpec) -> Result<(Vec<ManifestEntry>, Vec<ManifestEntry>)> {
    if manifest.files.is_empty() {
        return Err(protoclass_core::Error::InsufficientData("manifest lists no files".into()).into());
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    match spec {
        SplitSpec::TimeSplit { train_fraction } => {
            if !(0.0..=1.0).contains(train_fraction) {
                return Err(protoclass_core::Error::InvalidSpec(format!(
                    "train fraction {train_fraction} outside [0, 1]"
                ))
                .into());
            }
            let mut groups: BTreeMap<(Option<&str>, &str), Vec<usize>> = BTreeMap::new();
            for (i, e) in manifest.files.iter().enumerate() {
                groups.entry((e.scenario.as_deref(), e.protocol.as_str())).or_default().push(i);
            }
            let mut is_train = vec![false; manifest.files.len()];
            for idx in groups.values() {
                let k = (idx.len() as f64 * train_fraction + 1e-9).floor() as usize;
                for &i in &idx[..k] {
                    is_train[i] = true;
                }
            }
            // both halves keep manifest order
            for (e, t) in manifest.files.iter().zip(is_train) {
                if t {
                    train.push(e.clone());
                } else {
                    test.push(e.clone());
                }
            }
        }
        SplitSpec::ScenarioSplit { holdout } => {
            if !manifest.files.iter().any(|e| e.scenario.as_deref() == Some(holdout.as_str())) {
                return Err(protoclass_core::Error::InvalidSpec(format!("unknown scenario {holdout:?}")).into());
            }
            for e in &manifest.files {
                if e.scenario.as_deref() == Some(holdout.as_str()) {
                    test.push(e.clone());
                } else {
                    train.push(e.clone());
                }
            }
        }
    }
    Ok((train, test))
}
