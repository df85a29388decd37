//! Three-stage streaming classifier: a simulated receiver, a signal
//! processing stage and an inference stage joined by two bounded queues.
//!
//! The receiver emits interleaved 16-bit chunks of [`CHUNK_SAMPLES`] complex
//! samples at [`RECEIVER_RATE_HZ`]. Signal processing scales them to
//! `[-1, 1]`, resamples 16/25 to 20 MHz and keeps the first
//! [`PROCESSED_SAMPLES`]. Inference power-normalizes, tokenizes, runs the
//! model and appends a line to the prediction log. A full queue makes its
//! producer skip the chunk (drop newest) and count it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use protoclass_core::channel::{apply_channel, draw_realization, ChannelModel};
use protoclass_core::dsp::rational_resample;
use protoclass_core::signal::add_awgn;
use protoclass_core::waveform::{generate_burst, BurstSpec, ProtocolId};
use protoclass_core::{rng_from_seed, Complex, ComplexSignal, RandomSource};
use rand::Rng;
use serde::Serialize;

use crate::checkpoint::TrainedModel;
use crate::error::{config_err, format_err, Error, Result};

pub const CHUNK_SAMPLES: usize = 12_900;
pub const RECEIVER_RATE_HZ: f64 = 31.25e6;
pub const PROCESSED_RATE_HZ: f64 = 20e6;
pub const PROCESSED_SAMPLES: usize = 8192;
/// Resampling ratio from the receiver rate to the model rate.
pub const RESAMPLE_UP: usize = 16;
pub const RESAMPLE_DOWN: usize = 25;
const FULL_SCALE: f64 = 32768.0;

/// Duration of one receiver chunk in real time (412.8 us).
pub fn chunk_duration() -> Duration {
    Duration::from_secs_f64(CHUNK_SAMPLES as f64 / RECEIVER_RATE_HZ)
}

/// Raw receiver buffer: `2 * CHUNK_SAMPLES` interleaved I/Q shorts.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferChunk {
    pub seq: u64,
    pub received_ns: u64,
    pub iq: Vec<i16>,
}

/// Output of the signal processing stage: interleaved 20 MHz samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedChunk {
    pub seq: u64,
    pub received_ns: u64,
    pub processed_ns: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub seq: u64,
    pub label: ProtocolId,
    /// Log-probability of every class, in model class order.
    pub log_scores: Vec<f64>,
    pub received_ns: u64,
    pub processed_ns: u64,
    pub predicted_ns: u64,
}

impl PredictionRecord {
    /// `seq,timestamp_ns,label,logscore_0,...`
    pub fn log_line(&self) -> String {
        let mut s = format!("{},{},{}", self.seq, self.predicted_ns, self.label.short_name());
        for v in &self.log_scores {
            s.push_str(&format!(",{v:.6}"));
        }
        s
    }
}

/// Scales interleaved shorts to `[-1, 1]`, resamples to 20 MHz and keeps the
/// first [`PROCESSED_SAMPLES`].
pub fn process_chunk(iq: &[i16]) -> Result<Vec<Complex>> {
    if iq.len() != 2 * CHUNK_SAMPLES {
        return Err(format_err(format!("chunk holds {} shorts, expected {}", iq.len(), 2 * CHUNK_SAMPLES)));
    }
    let samples = iq
        .chunks_exact(2)
        .map(|p| Complex::new(p[0] as f64 / FULL_SCALE, p[1] as f64 / FULL_SCALE))
        .collect();
    let resampled = rational_resample(&ComplexSignal::new(samples, RECEIVER_RATE_HZ), RESAMPLE_UP, RESAMPLE_DOWN)?;
    let mut out = resampled.into_samples();
    out.truncate(PROCESSED_SAMPLES);
    Ok(out)
}

fn interleave(samples: &[Complex]) -> Vec<f64> {
    samples.iter().flat_map(|s| [s.re, s.im]).collect()
}

fn deinterleave(values: &[f64]) -> Vec<Complex> {
    values.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect()
}

/// Log-probabilities of `scores` (log-softmax output is returned as is).
pub fn log_scores(model: &TrainedModel, scores: &[f64]) -> Vec<f64> {
    if model.multi_label() {
        scores.iter().map(|p| p.ln()).collect()
    } else {
        scores.to_vec()
    }
}

/// The offline path for one raw chunk: exactly what the pipeline computes.
pub fn classify_chunk(model: &TrainedModel, iq: &[i16]) -> Result<(ProtocolId, Vec<f64>)> {
    let values = interleave(&process_chunk(iq)?);
    infer(model, &values)
}

fn infer(model: &TrainedModel, values: &[f64]) -> Result<(ProtocolId, Vec<f64>)> {
    let scores = model.scores(&deinterleave(values))?;
    let label = model.classes[protoclass_core::model::argmax(&scores)];
    Ok((label, log_scores(model, &scores)))
}

/// Quantizes a 31.25 MHz signal to interleaved shorts, peak at 90% of full
/// scale.
pub fn quantize(samples: &[Complex]) -> Vec<i16> {
    let peak = samples.iter().map(|s| s.re.abs().max(s.im.abs())).fold(0.0, f64::max);
    let gain = if peak > 0.0 { 0.9 * 32767.0 / peak } else { 0.0 };
    samples
        .iter()
        .flat_map(|s| [s.re, s.im])
        .map(|v| (v * gain).round().clamp(-32768.0, 32767.0) as i16)
        .collect()
}

/// Anything that can feed the receiver stage.
pub trait ChunkSource: Send {
    /// Next raw chunk, or `None` when the source is exhausted.
    fn next_chunk(&mut self) -> Option<Vec<i16>>;
}

/// Plays a fixed set of chunks, optionally forever.
#[derive(Debug, Clone)]
pub struct LoopingSource {
    chunks: Vec<Vec<i16>>,
    next: usize,
    looping: bool,
}

impl LoopingSource {
    pub fn new(chunks: Vec<Vec<i16>>, looping: bool) -> Result<Self> {
        if chunks.is_empty() {
            return Err(config_err("source has no chunks"));
        }
        if let Some(c) = chunks.iter().find(|c| c.len() != 2 * CHUNK_SAMPLES) {
            return Err(config_err(format!("chunk holds {} shorts, expected {}", c.len(), 2 * CHUNK_SAMPLES)));
        }
        Ok(Self {
            chunks,
            next: 0,
            looping,
        })
    }

    /// Cuts signals (any sample rate) into receiver chunks after
    /// resampling them to [`RECEIVER_RATE_HZ`]. Remainders are dropped.
    pub fn from_signals(signals: &[ComplexSignal], looping: bool) -> Result<Self> {
        let mut chunks = Vec::new();
        for s in signals {
            for c in receiver_chunks(s)? {
                chunks.push(quantize(&c));
            }
        }
        Self::new(chunks, looping)
    }

    /// Bursts of one protocol through `channel` at `snr_db`, looped.
    pub fn synthetic(
        protocol: ProtocolId,
        snr_db: f64,
        channel: ChannelModel,
        num_bursts: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let mut signals = Vec::with_capacity(num_bursts);
        for _ in 0..num_bursts.max(1) {
            let burst = generate_burst(&BurstSpec::default_for(protocol), &mut rng)?;
            let faded = apply_channel(&burst, &draw_realization(channel, &mut rng))?;
            signals.push(add_awgn(&faded, snr_db, &mut rng)?);
        }
        Self::from_signals(&signals, true)
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Vec<i16>] {
        &self.chunks
    }
}

impl ChunkSource for LoopingSource {
    fn next_chunk(&mut self) -> Option<Vec<i16>> {
        if self.next == self.chunks.len() {
            if !self.looping {
                return None;
            }
            self.next = 0;
        }
        self.next += 1;
        Some(self.chunks[self.next - 1].clone())
    }
}

/// `signal` at the receiver rate, cut into whole chunks.
pub fn receiver_chunks(signal: &ComplexSignal) -> Result<Vec<Vec<Complex>>> {
    let fs = signal.sample_rate_hz();
    let at_rx = if fs == RECEIVER_RATE_HZ {
        signal.clone()
    } else if fs == PROCESSED_RATE_HZ {
        rational_resample(signal, RESAMPLE_DOWN, RESAMPLE_UP)?
    } else if fs.fract() == 0.0 && fs > 0.0 {
        rational_resample(signal, RECEIVER_RATE_HZ as usize, fs as usize)?
    } else {
        return Err(config_err(format!("cannot resample from {fs} Hz")));
    };
    Ok(at_rx.samples().chunks_exact(CHUNK_SAMPLES).map(<[Complex]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueueConfig {
    pub q1_capacity: usize,
    pub q2_capacity: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            q1_capacity: 2,
            q2_capacity: 2,
        }
    }
}

/// Artificial per-stage work used to probe timing behaviour. Index 0 is the
/// receiver, 1 signal processing, 2 inference. Each item sleeps
/// `delay + U(0, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageHooks {
    pub delays: [Duration; 3],
    pub jitter: [Duration; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub queues: QueueConfig,
    /// Receiver period as a multiple of the real chunk duration; 0 runs
    /// as fast as possible.
    pub pacing: f64,
    /// Wall-clock run time; `None` runs until the source or `max_chunks`
    /// is exhausted.
    pub duration: Option<Duration>,
    pub max_chunks: Option<u64>,
    pub hooks: StageHooks,
    /// Append-only prediction log.
    pub log_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            queues: QueueConfig::default(),
            pacing: 1.0,
            duration: None,
            max_chunks: None,
            hooks: StageHooks::default(),
            log_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queues.q1_capacity == 0 || self.queues.q2_capacity == 0 {
            return Err(config_err("queue capacities must be at least 1"));
        }
        if !(self.pacing >= 0.0 && self.pacing.is_finite()) {
            return Err(config_err(format!("pacing must be finite and non-negative, got {}", self.pacing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub count: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub std_ms: f64,
}

impl StageStats {
    pub fn from_durations(d: &[Duration]) -> Self {
        let ms: Vec<f64> = d.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        Self::from_ms(&ms)
    }

    fn from_ms(ms: &[f64]) -> Self {
        let n = ms.len();
        if n == 0 {
            return Self {
                count: 0,
                mean_ms: 0.0,
                max_ms: 0.0,
                std_ms: 0.0,
            };
        }
        let mean = ms.iter().sum::<f64>() / n as f64;
        let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            count: n,
            mean_ms: mean,
            max_ms: ms.iter().copied().fold(0.0, f64::max),
            std_ms: var.sqrt(),
        }
    }
}

/// Counters of one run. `in_flight` is what neither reached the log nor
/// was dropped (non-zero only when a stage aborted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunCounters {
    pub chunks_in: u64,
    pub predictions: u64,
    pub drops_q1: u64,
    pub drops_q2: u64,
    pub in_flight: u64,
    pub max_q1: usize,
    pub max_q2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTimings {
    pub receiver: StageStats,
    pub dsp: StageStats,
    pub inference: StageStats,
    pub end_to_end: StageStats,
    /// Steady-state rate between the first and last prediction.
    pub predictions_per_second: f64,
    /// `1 / max(stage means)`.
    pub bottleneck_rate: f64,
    pub elapsed_s: f64,
    pub counters: RunCounters,
}

/// Raw per-item durations of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageDurations {
    pub receiver: Vec<Duration>,
    pub dsp: Vec<Duration>,
    pub inference: Vec<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub records: Vec<PredictionRecord>,
    pub durations: StageDurations,
    /// Sequence numbers skipped because q1 (resp. q2) was full.
    pub dropped_q1: Vec<u64>,
    pub dropped_q2: Vec<u64>,
    pub counters: RunCounters,
    pub elapsed: Duration,
    /// Time from the stop signal until every stage had exited.
    pub shutdown: Duration,
}

impl PipelineRun {
    pub fn profile(&self) -> Result<StageTimings> {
        profile(&self.records, &self.durations, self.counters, self.elapsed)
    }
}

/// Aggregates a run. Needs at least 10 predictions.
pub fn profile(
    records: &[PredictionRecord],
    durations: &StageDurations,
    counters: RunCounters,
    elapsed: Duration,
) -> Result<StageTimings> {
    if records.len() < 10 {
        return Err(protoclass_core::Error::InsufficientData(format!(
            "profiling needs at least 10 predictions, got {}",
            records.len()
        ))
        .into());
    }
    let receiver = StageStats::from_durations(&durations.receiver);
    let dsp = StageStats::from_durations(&durations.dsp);
    let inference = StageStats::from_durations(&durations.inference);
    let e2e: Vec<f64> = records
        .iter()
        .map(|r| (r.predicted_ns - r.received_ns) as f64 / 1e6)
        .collect();
    let span_s = (records[records.len() - 1].predicted_ns - records[0].predicted_ns) as f64 / 1e9;
    let rate = if span_s > 0.0 {
        (records.len() - 1) as f64 / span_s
    } else {
        f64::INFINITY
    };
    let slowest = receiver.mean_ms.max(dsp.mean_ms).max(inference.mean_ms);
    Ok(StageTimings {
        receiver,
        dsp,
        inference,
        end_to_end: StageStats::from_ms(&e2e),
        predictions_per_second: rate,
        bottleneck_rate: if slowest > 0.0 { 1e3 / slowest } else { f64::INFINITY },
        elapsed_s: elapsed.as_secs_f64(),
        counters,
    })
}

fn hook_sleep(hooks: &StageHooks, stage: usize, rng: &mut RandomSource) {
    let mut d = hooks.delays[stage];
    let j = hooks.jitter[stage];
    if !j.is_zero() {
        d += j.mul_f64(rng.random::<f64>());
    }
    if !d.is_zero() {
        thread::sleep(d);
    }
}

fn join<T>(r: thread::Result<Result<T>>) -> Result<T> {
    r.unwrap_or_else(|_| Err(format_err("pipeline stage panicked")))
}

fn elapsed_ns(t0: Instant) -> u64 {
    t0.elapsed().as_nanos() as u64
}

struct ReceiverOut {
    durations: Vec<Duration>,
    chunks_in: u64,
    dropped: Vec<u64>,
    max_occupancy: usize,
}

struct DspOut {
    durations: Vec<Duration>,
    dropped: Vec<u64>,
    max_occupancy: usize,
}

struct InferenceOut {
    durations: Vec<Duration>,
    records: Vec<PredictionRecord>,
}

fn receiver_stage(
    mut source: Box<dyn ChunkSource>,
    q1: Sender<BufferChunk>,
    stop: Arc<AtomicBool>,
    cfg: PipelineConfig,
    t0: Instant,
) -> Result<ReceiverOut> {
    let mut rng = rng_from_seed(protoclass_core::derive_seed(cfg.hooks.seed, 0));
    let period = chunk_duration().mul_f64(cfg.pacing);
    let mut out = ReceiverOut {
        durations: Vec::new(),
        chunks_in: 0,
        dropped: Vec::new(),
        max_occupancy: 0,
    };
    let mut deadline = Instant::now();
    let mut seq = 0u64;
    while !stop.load(Ordering::Acquire) && cfg.max_chunks.is_none_or(|m| seq < m) {
        let start = Instant::now();
        let Some(iq) = source.next_chunk() else { break };
        if iq.len() != 2 * CHUNK_SAMPLES {
            stop.store(true, Ordering::Release);
            return Err(format_err(format!("source chunk holds {} shorts", iq.len())));
        }
        hook_sleep(&cfg.hooks, 0, &mut rng);
        if !period.is_zero() {
            deadline += period;
            let now = Instant::now();
            if deadline > now {
                thread::sleep(deadline - now);
            } else {
                deadline = now;
            }
        }
        let chunk = BufferChunk {
            seq,
            received_ns: elapsed_ns(t0),
            iq,
        };
        seq += 1;
        out.chunks_in += 1;
        match q1.try_send(chunk) {
            Ok(()) => out.max_occupancy = out.max_occupancy.max(q1.len()),
            Err(TrySendError::Full(c)) => out.dropped.push(c.seq),
            Err(TrySendError::Disconnected(c)) => {
                out.dropped.push(c.seq);
                out.durations.push(start.elapsed());
                break;
            }
        }
        out.durations.push(start.elapsed());
    }
    Ok(out)
}

fn dsp_stage(q1: Receiver<BufferChunk>, q2: Sender<ProcessedChunk>, hooks: StageHooks, t0: Instant) -> Result<DspOut> {
    let mut rng = rng_from_seed(protoclass_core::derive_seed(hooks.seed, 1));
    let mut out = DspOut {
        durations: Vec::new(),
        dropped: Vec::new(),
        max_occupancy: 0,
    };
    for chunk in q1.iter() {
        let start = Instant::now();
        let values = interleave(&process_chunk(&chunk.iq)?);
        hook_sleep(&hooks, 1, &mut rng);
        let p = ProcessedChunk {
            seq: chunk.seq,
            received_ns: chunk.received_ns,
            processed_ns: elapsed_ns(t0),
            values,
        };
        match q2.try_send(p) {
            Ok(()) => out.max_occupancy = out.max_occupancy.max(q2.len()),
            Err(TrySendError::Full(p)) => out.dropped.push(p.seq),
            Err(TrySendError::Disconnected(_)) => {
                out.durations.push(start.elapsed());
                break;
            }
        }
        out.durations.push(start.elapsed());
    }
    Ok(out)
}

fn inference_stage(
    q2: Receiver<ProcessedChunk>,
    model: Arc<TrainedModel>,
    hooks: StageHooks,
    mut log: Option<BufWriter<File>>,
    log_path: Option<PathBuf>,
    t0: Instant,
) -> Result<InferenceOut> {
    let mut rng = rng_from_seed(protoclass_core::derive_seed(hooks.seed, 2));
    let mut out = InferenceOut {
        durations: Vec::new(),
        records: Vec::new(),
    };
    for p in q2.iter() {
        let start = Instant::now();
        let (label, log_scores) = infer(&model, &p.values)?;
        hook_sleep(&hooks, 2, &mut rng);
        let rec = PredictionRecord {
            seq: p.seq,
            label,
            log_scores,
            received_ns: p.received_ns,
            processed_ns: p.processed_ns,
            predicted_ns: elapsed_ns(t0).max(p.processed_ns),
        };
        if let (Some(w), Some(path)) = (log.as_mut(), log_path.as_ref()) {
            writeln!(w, "{}", rec.log_line()).map_err(|e| Error::io(path, e))?;
        }
        out.records.push(rec);
        out.durations.push(start.elapsed());
    }
    if let (Some(w), Some(path)) = (log.as_mut(), log_path.as_ref()) {
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

/// Runs the three stages until the duration elapses, `max_chunks` have
/// been received or the source is exhausted, then lets the queues drain.
pub fn run_pipeline(source: Box<dyn ChunkSource>, model: Arc<TrainedModel>, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    if model.window_len() > PROCESSED_SAMPLES {
        return Err(config_err(format!(
            "model needs {} samples per window, the pipeline delivers {PROCESSED_SAMPLES}",
            model.window_len()
        )));
    }
    let log = match &cfg.log_path {
        Some(p) => Some(BufWriter::new(
            File::options().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let (q1_tx, q1_rx) = bounded::<BufferChunk>(cfg.queues.q1_capacity);
    let (q2_tx, q2_rx) = bounded::<ProcessedChunk>(cfg.queues.q2_capacity);
    let stop = Arc::new(AtomicBool::new(false));
    let t0 = Instant::now();

    let rx_handle = {
        let (stop, cfg) = (stop.clone(), cfg.clone());
        thread::spawn(move || receiver_stage(source, q1_tx, stop, cfg, t0))
    };
    let dsp_handle = {
        let hooks = cfg.hooks;
        thread::spawn(move || dsp_stage(q1_rx, q2_tx, hooks, t0))
    };
    let inf_handle = {
        let (hooks, path) = (cfg.hooks, cfg.log_path.clone());
        thread::spawn(move || inference_stage(q2_rx, model, hooks, log, path, t0))
    };

    // without a duration the receiver runs until the source or the chunk
    // budget is exhausted
    while !rx_handle.is_finished() && cfg.duration.is_none_or(|d| t0.elapsed() < d) {
        let left = cfg.duration.map_or(Duration::from_millis(5), |d| d.saturating_sub(t0.elapsed()));
        thread::sleep(left.min(Duration::from_millis(5)));
    }
    stop.store(true, Ordering::Release);
    let stop_at = Instant::now();
    let rx = join(rx_handle.join());
    let dsp = join(dsp_handle.join());
    let inf = join(inf_handle.join());
    let shutdown = stop_at.elapsed();
    let elapsed = t0.elapsed();
    let (rx, dsp, inf) = (rx?, dsp?, inf?);

    let predictions = inf.records.len() as u64;
    let counters = RunCounters {
        chunks_in: rx.chunks_in,
        predictions,
        drops_q1: rx.dropped.len() as u64,
        drops_q2: dsp.dropped.len() as u64,
        in_flight: rx
            .chunks_in
            .saturating_sub(predictions + rx.dropped.len() as u64 + dsp.dropped.len() as u64),
        max_q1: rx.max_occupancy,
        max_q2: dsp.max_occupancy,
    };
    Ok(PipelineRun {
        records: inf.records,
        durations: StageDurations {
            receiver: rx.durations,
            dsp: dsp.durations,
            inference: inf.durations,
        },
        dropped_q1: rx.dropped,
        dropped_q2: dsp.dropped,
        counters,
        elapsed,
        shutdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_math() {
        let iq = vec![0i16; 2 * CHUNK_SAMPLES];
        assert_eq!(process_chunk(&iq).unwrap().len(), PROCESSED_SAMPLES);
        assert!(process_chunk(&iq[..100]).is_err());
        assert!((chunk_duration().as_secs_f64() - 412.8e-6).abs() < 1e-9);
    }

    #[test]
    fn quantize_scales_to_full_range() {
        let s: Vec<Complex> = (0..100).map(|k| Complex::new((k as f64).sin(), -0.5)).collect();
        let q = quantize(&s);
        let peak = q.iter().map(|v| v.unsigned_abs()).max().unwrap();
        assert!((29000..=29500).contains(&peak), "{peak}");
        assert!(quantize(&[Complex::new(0.0, 0.0)]).iter().all(|&v| v == 0));
    }

    #[test]
    fn looping_source_wraps() {
        let a = vec![1i16; 2 * CHUNK_SAMPLES];
        let b = vec![2i16; 2 * CHUNK_SAMPLES];
        let mut s = LoopingSource::new(vec![a.clone(), b.clone()], true).unwrap();
        let seen: Vec<i16> = (0..5).map(|_| s.next_chunk().unwrap()[0]).collect();
        assert_eq!(seen, vec![1, 2, 1, 2, 1]);
        let mut once = LoopingSource::new(vec![a], false).unwrap();
        assert!(once.next_chunk().is_some() && once.next_chunk().is_none());
        assert!(LoopingSource::new(vec![vec![0; 10]], true).is_err());
    }
}
