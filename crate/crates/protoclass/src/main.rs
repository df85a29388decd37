use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use protoclass::capture::{
    generate_dataset, generate_overlap_dataset, make_split, parse_overlap_tag, read_capture, Dataset, ManifestEntry,
    SplitSpec,
};
use protoclass::checkpoint::{load_checkpoint, parse_normalization, save_checkpoint, TrainedModel};
use protoclass::error::{Error, Result};
use protoclass::eval::{
    grid_csv, grid_search, legacy_sweep, model_sweep, multilabel_evaluate, multilabel_json, GridSpec,
    ModelSweepOptions, SweepRecord,
};
use protoclass::pipeline::{run_pipeline, ChunkSource, LoopingSource, PipelineConfig, QueueConfig};
use protoclass::report::{write_report, ReportOptions};
use protoclass::training::{train_model, Arch, FileCorpus, TrainSettings};
use protoclass_core::channel::ChannelModel;
use protoclass_core::legacy::{DetectorThresholds, FormatGrouping, DETECTION_WINDOW};
use protoclass_core::sweep::{SweepConfig, WindowPlacement};
use protoclass_core::waveform::{generate_burst, BurstSpec, ProtocolId};
use protoclass_core::{derive_seed, rng_from_seed, ComplexSignal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Raw-IQ WiFi protocol classification: data generation, training,
/// evaluation and a streaming pipeline.
#[derive(Parser, Debug)]
#[command(name = "protoclass", version)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON file; keys under a `[<subcommand>]` table configure that
    /// subcommand. Command-line flags win over the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic burst or overlap captures and a manifest.
    Generate(GenerateArgs),
    /// Train a classifier on a capture dataset.
    Train(TrainArgs),
    /// Accuracy of a trained model over the SNR x channel grid.
    Sweep(SweepArgs),
    /// Accuracy of the preamble-correlation detector over the grid.
    Legacy(LegacyArgs),
    /// Multi-label metrics of a model on overlap captures.
    OverlapEval(OverlapArgs),
    /// Train every combination of slice length, batch size and rate.
    GridSearch(GridArgs),
    /// Run the three-stage streaming classifier.
    Pipeline(PipelineArgs),
    /// CSV tables and SVG figures from sweep JSON files.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateArgs {
    /// Comma-separated protocols (b,g,n,ax,noise).
    #[arg(long)]
    protocols: Option<String>,
    /// Bursts per protocol.
    #[arg(long)]
    bursts: Option<usize>,
    /// Samples per burst or capture, overriding the defaults.
    #[arg(long)]
    len: Option<usize>,
    /// Comma-separated overlap rows such as C1_O1_25; generates overlap
    /// captures instead of bursts.
    #[arg(long)]
    overlap: Option<String>,
    /// Captures per overlap row.
    #[arg(long)]
    captures_per_row: Option<usize>,
    /// Also write incumbent-only captures for every overlap row.
    #[arg(long)]
    include_single: Option<bool>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct DataArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `time` (first 80% of each group trains) or `scenario:<tag>`.
    #[arg(long)]
    split: Option<String>,
    /// Fraction of each group used for training with a time split.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// transformer or cnn.
    #[arg(long)]
    arch: Option<String>,
    /// desk, sm or lg.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    slice_len: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    reduce_on_plateau: Option<bool>,
    /// Epochs without validation improvement before the rate is cut.
    #[arg(long)]
    plateau_patience: Option<usize>,
    #[arg(long)]
    augment: Option<bool>,
    /// Comma-separated augmentation channels.
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    snr_min_db: Option<f64>,
    #[arg(long)]
    snr_max_db: Option<f64>,
    /// rms, as_printed or none.
    #[arg(long)]
    normalization: Option<String>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    include_noise: Option<bool>,
    #[arg(long)]
    multi_label: Option<bool>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct GridArgs {
    /// Comma-separated token slice lengths (samples per token).
    #[arg(long)]
    slice_lens: Option<String>,
    #[arg(long)]
    batch_sizes: Option<String>,
    #[arg(long)]
    learning_rates: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SweepGridArgs {
    /// Comma-separated channel models (none,rayleigh,tgn,tgax).
    #[arg(long)]
    channels: Option<String>,
    /// Comma-separated SNRs in dB; default -30..30 step 5.
    #[arg(long, allow_hyphen_values = true)]
    snrs: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Held-out bursts per protocol to synthesize when no dataset is given.
    #[arg(long)]
    test_bursts: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SweepArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: SweepGridArgs,
    /// Override the model's normalization (rms, as_printed, none).
    #[arg(long)]
    normalization: Option<String>,
    /// Gain applied to every window, in dB.
    #[arg(long, allow_hyphen_values = true)]
    gain_db: Option<f64>,
    /// Name recorded in the result.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct LegacyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: SweepGridArgs,
    /// 4 (b, g, n, ax) or 3 (b/g, n, ax).
    #[arg(long)]
    grouping: Option<String>,
    #[arg(long)]
    dsss_threshold: Option<f64>,
    #[arg(long)]
    packet_threshold: Option<f64>,
    #[arg(long)]
    ht_threshold: Option<f64>,
    #[arg(long)]
    he_threshold: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct OverlapArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long)]
    windows_per_capture: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset directory, or `synthetic:<protocol>`.
    #[arg(long)]
    source: Option<String>,
    /// Receiver pacing factor; 0 runs as fast as possible.
    #[arg(long)]
    rate: Option<f64>,
    /// Run time in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Stop after this many receiver chunks.
    #[arg(long)]
    max_chunks: Option<u64>,
    #[arg(long)]
    q1: Option<usize>,
    #[arg(long)]
    q2: Option<usize>,
    /// SNR of a synthetic source.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Channel model of a synthetic source.
    #[arg(long)]
    channel: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReportArgs {
    /// Sweep JSON files written by `sweep` or `legacy`.
    inputs: Vec<PathBuf>,
    /// Comma-separated SNRs that get confusion heatmaps.
    #[arg(long, allow_hyphen_values = true)]
    heatmap_snrs: Option<String>,
}

/// Loads the config file, if any.
fn load_config(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else { return Ok(Value::Null) };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Overlays the non-null command-line values on the config section.
fn merge<T: Serialize + DeserializeOwned>(cli: &T, section: Option<&Value>) -> Result<T> {
    let mut base = section.cloned().unwrap_or(Value::Object(Default::default()));
    let Value::Object(over) = serde_json::to_value(cli).map_err(|e| Error::Config(e.to_string()))? else {
        return Err(Error::Config("arguments are not a table".into()));
    };
    let Value::Object(map) = &mut base else {
        return Err(Error::Config("config section is not a table".into()));
    };
    for (k, v) in over {
        let empty = v.is_null() || v.as_array().is_some_and(|a| a.is_empty());
        if !empty {
            map.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
}

fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<T>().map_err(|e| Error::Config(format!("bad {what} {x:?}: {e}"))))
        .collect()
}

fn emit(v: Value) {
    println!("{v}");
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    config: Value,
}

impl Ctx {
    fn section(&self, name: &str) -> Option<&Value> {
        self.config.get(name)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn split_spec(d: &DataArgs) -> Result<SplitSpec> {
    match d.split.as_deref() {
        None | Some("time") => Ok(SplitSpec::TimeSplit {
            train_fraction: d.train_fraction.unwrap_or(0.8),
        }),
        Some(s) => match s.strip_prefix("scenario:") {
            Some(tag) => Ok(SplitSpec::ScenarioSplit { holdout: tag.to_string() }),
            None => Err(Error::Config(format!("unknown split {s:?}"))),
        },
    }
}

/// (dataset, train entries, test entries) of the `--data` argument.
fn open_split(d: &DataArgs) -> Result<Option<(Dataset, Vec<ManifestEntry>, Vec<ManifestEntry>)>> {
    let Some(path) = &d.data else { return Ok(None) };
    let ds = Dataset::open(path)?;
    let (train, test) = make_split(&ds.manifest, &split_spec(d)?)?;
    Ok(Some((ds, train, test)))
}

fn test_bursts(d: &DataArgs, per_protocol: usize, protocols: &[ProtocolId], seed: u64) -> Result<Vec<(ComplexSignal, ProtocolId)>> {
    match open_split(d)? {
        Some((ds, _, test)) => {
            let test: Vec<ManifestEntry> = test
                .into_iter()
                .filter(|e| e.single_protocol().is_ok_and(|p| protocols.contains(&p)))
                .collect();
            ds.load_bursts(&test)
        }
        None => {
            let mut out = Vec::new();
            for (k, &p) in protocols.iter().enumerate() {
                for i in 0..per_protocol {
                    let s = derive_seed(seed, ((k as u64) << 32) | i as u64);
                    out.push((generate_burst(&BurstSpec::default_for(p), &mut rng_from_seed(s))?, p));
                }
            }
            Ok(out)
        }
    }
}

fn sweep_config(g: &SweepGridArgs, window_len: usize, placement: WindowPlacement, seed: u64) -> Result<SweepConfig> {
    let mut cfg = SweepConfig::new(window_len, placement);
    if let Some(c) = &g.channels {
        cfg.channels = list::<ChannelModel>(c, "channel")?;
    }
    if let Some(s) = &g.snrs {
        cfg.snrs_db = list::<f64>(s, "snr")?;
    }
    if let Some(t) = g.trials {
        cfg.trials_per_point = t;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn require<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn write_sweep(ctx: &Ctx, record: &SweepRecord) -> Result<()> {
    let dir = ctx.out_dir()?;
    let stem: String = record
        .model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    record.write(&dir.join(format!("sweep_{stem}.json")))?;
    let p = dir.join(format!("sweep_{stem}.csv"));
    fs::write(&p, record.to_csv()).map_err(|e| Error::io(&p, e))
}

fn train_settings(a: &TrainArgs, seed: u64) -> Result<TrainSettings> {
    let mut s = TrainSettings {
        seed,
        ..TrainSettings::default()
    };
    if let Some(v) = &a.arch {
        s.arch = match v.as_str() {
            "transformer" => Arch::Transformer,
            "cnn" => Arch::Cnn,
            other => return Err(Error::Config(format!("unknown arch {other:?}"))),
        };
    }
    if let Some(v) = &a.preset {
        s.preset = v.clone();
    }
    s.seq_len = a.seq_len.or(s.seq_len);
    s.slice_len = a.slice_len.or(s.slice_len);
    s.epochs = a.epochs.unwrap_or(s.epochs);
    s.batch_size = a.batch_size.unwrap_or(s.batch_size);
    s.learning_rate = a.learning_rate.unwrap_or(s.learning_rate);
    s.reduce_on_plateau = a.reduce_on_plateau.unwrap_or(s.reduce_on_plateau);
    s.plateau_patience = a.plateau_patience.unwrap_or(s.plateau_patience);
    s.augment = a.augment.unwrap_or(s.augment);
    if let Some(c) = &a.channels {
        s.channels = c.split(',').map(|x| x.trim().to_string()).collect();
    }
    s.snr_min_db = a.snr_min_db.unwrap_or(s.snr_min_db);
    s.snr_max_db = a.snr_max_db.unwrap_or(s.snr_max_db);
    if let Some(v) = &a.normalization {
        s.normalization = v.clone();
    }
    s.validation_fraction = a.validation_fraction.unwrap_or(s.validation_fraction);
    s.include_noise = a.include_noise.unwrap_or(s.include_noise);
    s.multi_label = a.multi_label.unwrap_or(s.multi_label);
    s.train_config()?;
    Ok(s)
}

fn train_corpus(a: &TrainArgs, s: &TrainSettings) -> Result<FileCorpus> {
    let (ds, train, _) = open_split(&a.data)?.ok_or_else(|| Error::Config("--data is required".into()))?;
    let classes = s.classes();
    let train: Vec<ManifestEntry> = train
        .into_iter()
        .filter(|e| e.protocols().is_ok_and(|ps| ps.iter().all(|p| classes.contains(p))))
        .filter(|e| s.multi_label || e.single_protocol().is_ok())
        .collect();
    FileCorpus::new(&ds, &train, &classes, s.multi_label)
}

fn cmd_generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    let out = ctx.out_dir()?;
    let manifest = if let Some(rows) = &a.overlap {
        let rows = rows.split(',').map(|t| parse_overlap_tag(t.trim())).collect::<Result<Vec<_>>>()?;
        generate_overlap_dataset(
            &rows,
            a.captures_per_row.unwrap_or(10),
            a.len,
            a.include_single.unwrap_or(false),
            out,
            ctx.seed,
        )?
    } else {
        let protocols = match &a.protocols {
            Some(p) => list::<ProtocolId>(p, "protocol")?,
            None => ProtocolId::PROTOCOLS.to_vec(),
        };
        generate_dataset(&protocols, a.bursts.unwrap_or(50), a.len, out, ctx.seed)?
    };
    emit(serde_json::json!({ "generated": manifest.files.len(), "out": out }));
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let settings = train_settings(a, ctx.seed)?;
    let mut corpus = train_corpus(a, &settings)?;
    let (model, history) = train_model(&mut corpus, &settings, |r| {
        emit(serde_json::json!({
            "epoch": r.epoch, "train_loss": r.train_loss, "train_acc": r.train_acc,
            "val_loss": r.val_loss, "val_acc": r.val_acc, "learning_rate": r.learning_rate,
        }))
    })?;
    let out = ctx.out_dir()?;
    let ckpt = out.join("model.ckpt");
    save_checkpoint(
        &ckpt,
        &model,
        serde_json::json!({ "settings": settings, "best_epoch": history.best_epoch }),
    )?;
    let p = out.join("history.csv");
    fs::write(&p, history.to_csv()).map_err(|e| Error::io(&p, e))?;
    emit(serde_json::json!({ "checkpoint": ckpt, "params": model.num_params(), "best_epoch": history.best_epoch }));
    Ok(())
}

fn load_model(path: &Option<PathBuf>) -> Result<TrainedModel> {
    Ok(load_checkpoint(require(path, "model")?)?.0)
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let protocols: Vec<ProtocolId> = model.classes.clone();
    let bursts = test_bursts(&a.data, a.grid.test_bursts.unwrap_or(10), &protocols, derive_seed(ctx.seed, 1))?;
    let cfg = sweep_config(&a.grid, model.window_len(), WindowPlacement::Random, ctx.seed)?;
    let opts = ModelSweepOptions {
        name: a.name.clone().unwrap_or_else(|| model.arch().to_string()),
        normalization: a.normalization.as_deref().map(parse_normalization).transpose()?,
        gain_db: a.gain_db.unwrap_or(0.0),
    };
    let r = model_sweep(&model, &bursts, &cfg, &opts)?;
    let record = SweepRecord::from_result(&r);
    write_sweep(ctx, &record)?;
    emit(serde_json::json!({ "model": record.model, "points": record.points.len(), "pooled_accuracy_0db": r.pooled_accuracy(0.0) }));
    Ok(())
}

fn cmd_legacy(ctx: &Ctx, a: &LegacyArgs) -> Result<()> {
    let grouping: FormatGrouping = a.grouping.as_deref().unwrap_or("4").parse()?;
    let d = DetectorThresholds::default();
    let thresholds = DetectorThresholds {
        dsss: a.dsss_threshold.unwrap_or(d.dsss),
        packet: a.packet_threshold.unwrap_or(d.packet),
        ht: a.ht_threshold.unwrap_or(d.ht),
        he: a.he_threshold.unwrap_or(d.he),
    };
    let bursts = test_bursts(&a.data, a.grid.test_bursts.unwrap_or(10), &ProtocolId::PROTOCOLS, derive_seed(ctx.seed, 1))?;
    let cfg = sweep_config(&a.grid, DETECTION_WINDOW, WindowPlacement::Start, ctx.seed)?;
    let r = legacy_sweep(&bursts, thresholds, grouping, &cfg)?;
    let record = SweepRecord::from_result(&r);
    write_sweep(ctx, &record)?;
    emit(serde_json::json!({ "model": record.model, "points": record.points.len(), "pooled_accuracy_0db": r.pooled_accuracy(0.0) }));
    Ok(())
}

fn cmd_overlap(ctx: &Ctx, a: &OverlapArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (ds, _, test) = open_split(&a.data)?.ok_or_else(|| Error::Config("--data is required".into()))?;
    let captures = test
        .iter()
        .map(|e| Ok((read_capture(&ds.path_of(e))?.0, e.protocols()?)))
        .collect::<Result<Vec<_>>>()?;
    let m = multilabel_evaluate(&model, &captures, a.windows_per_capture.unwrap_or(8), a.threshold.unwrap_or(0.5))?;
    let v = multilabel_json(&m, &model.classes);
    let p = ctx.out_dir()?.join("overlap_metrics.json");
    fs::write(&p, serde_json::to_string_pretty(&v).expect("json") + "\n").map_err(|e| Error::io(&p, e))?;
    emit(v);
    Ok(())
}

fn cmd_grid(ctx: &Ctx, a: &GridArgs) -> Result<()> {
    let base = train_settings(&a.train, ctx.seed)?;
    let d = GridSpec::default();
    let spec = GridSpec {
        slice_lens: a.slice_lens.as_deref().map(|s| list(s, "slice length")).transpose()?.unwrap_or(d.slice_lens),
        batch_sizes: a.batch_sizes.as_deref().map(|s| list(s, "batch size")).transpose()?.unwrap_or(d.batch_sizes),
        learning_rates: a
            .learning_rates
            .as_deref()
            .map(|s| list(s, "learning rate"))
            .transpose()?
            .unwrap_or(d.learning_rates),
        base: base.clone(),
    };
    let mut corpus = train_corpus(&a.train, &base)?;
    let out = ctx.out_dir()?.to_path_buf();
    let rows = grid_search(&mut corpus, &spec, Some(&out.join("grid")), |r, cached| {
        emit(serde_json::json!({ "row": r, "cached": cached }))
    })?;
    let p = out.join("grid_table.csv");
    fs::write(&p, grid_csv(&rows)).map_err(|e| Error::io(&p, e))?;
    emit(serde_json::json!({ "rows": rows.len(), "table": p }));
    Ok(())
}

fn cmd_pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    let model = Arc::new(load_model(&a.model)?);
    let src = a.source.as_deref().unwrap_or("synthetic:b");
    let source: Box<dyn ChunkSource> = match src.strip_prefix("synthetic:") {
        Some(p) => Box::new(LoopingSource::synthetic(
            p.parse()?,
            a.snr.unwrap_or(30.0),
            a.channel.as_deref().unwrap_or("none").parse()?,
            8,
            ctx.seed,
        )?),
        None => {
            let ds = Dataset::open(Path::new(src))?;
            let signals = ds
                .manifest
                .files
                .iter()
                .map(|e| Ok(read_capture(&ds.path_of(e))?.0))
                .collect::<Result<Vec<_>>>()?;
            Box::new(LoopingSource::from_signals(&signals, true)?)
        }
    };
    let out = ctx.out_dir()?;
    let log = out.join("predictions.log");
    let cfg = PipelineConfig {
        queues: QueueConfig {
            q1_capacity: a.q1.unwrap_or(2),
            q2_capacity: a.q2.unwrap_or(2),
        },
        pacing: a.rate.unwrap_or(1.0),
        duration: Some(Duration::from_secs_f64(a.duration.unwrap_or(10.0).max(0.0))),
        max_chunks: a.max_chunks,
        log_path: Some(log.clone()),
        ..PipelineConfig::default()
    };
    let run = run_pipeline(source, model, &cfg)?;
    let timings = run.profile()?;
    let p = out.join("timing.json");
    let json = serde_json::to_string_pretty(&timings).expect("json");
    fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
    emit(serde_json::to_value(&timings).expect("json"));
    Ok(())
}

fn cmd_report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let sweeps = a.inputs.iter().map(|p| SweepRecord::read(p)).collect::<Result<Vec<_>>>()?;
    let mut opts = ReportOptions::default();
    if let Some(s) = &a.heatmap_snrs {
        opts.heatmap_snrs = list(s, "snr")?;
    }
    let files = write_report(&sweeps, &ctx.out, &opts)?;
    emit(serde_json::json!({ "written": files }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => match config.get("seed") {
            Some(v) => v.as_u64().ok_or_else(|| Error::Config("seed must be a non-negative integer".into()))?,
            None => 0,
        },
    };
    let out = match cli.out {
        Some(o) => o,
        None => match config.get("out") {
            Some(v) => PathBuf::from(v.as_str().ok_or_else(|| Error::Config("out must be a string".into()))?),
            None => PathBuf::from("out"),
        },
    };
    let ctx = Ctx { seed, out, config };
    match &cli.command {
        Command::Generate(a) => cmd_generate(&ctx, &merge(a, ctx.section("generate"))?),
        Command::Train(a) => cmd_train(&ctx, &merge(a, ctx.section("train"))?),
        Command::Sweep(a) => cmd_sweep(&ctx, &merge(a, ctx.section("sweep"))?),
        Command::Legacy(a) => cmd_legacy(&ctx, &merge(a, ctx.section("legacy"))?),
        Command::OverlapEval(a) => cmd_overlap(&ctx, &merge(a, ctx.section("overlap-eval"))?),
        Command::GridSearch(a) => cmd_grid(&ctx, &merge(a, ctx.section("grid-search"))?),
        Command::Pipeline(a) => cmd_pipeline(&ctx, &merge(a, ctx.section("pipeline"))?),
        Command::Report(a) => cmd_report(&ctx, &merge(a, ctx.section("report"))?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
