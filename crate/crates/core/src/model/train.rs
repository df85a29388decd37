//! Mini-batch training with on-the-fly channel and noise augmentation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use super::adam::Adam;
use super::kernels::Scalar;
use super::network::{batch_loss_and_grad, BatchStats, Network, Target};
use super::transformer::{Transformer, TransformerConfig};
use crate::channel::{apply_channel, draw_realization, sample_condition_from, ChannelModel};
use crate::error::{bail, Error, Result};
use crate::signal::{add_awgn, interleave_samples, power_normalize, NormalizationMode};
use crate::{derive_seed, rng_from_seed, ComplexSignal, RandomSource};

/// Labeled bursts that training windows are cut from.
pub trait SequenceCorpus {
    fn num_bursts(&self) -> usize;
    fn burst_len(&self, burst: usize) -> usize;
    fn target(&self, burst: usize) -> Target;
    /// Samples `[offset, offset + len)` of burst `burst`.
    fn window(&mut self, burst: usize, offset: usize, len: usize) -> Result<ComplexSignal>;
}

/// Corpus held entirely in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryCorpus {
    bursts: Vec<(ComplexSignal, Target)>,
}

impl InMemoryCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, burst: ComplexSignal, target: Target) {
        self.bursts.push((burst, target));
    }

    pub fn bursts(&self) -> &[(ComplexSignal, Target)] {
        &self.bursts
    }
}

impl FromIterator<(ComplexSignal, Target)> for InMemoryCorpus {
    fn from_iter<I: IntoIterator<Item = (ComplexSignal, Target)>>(iter: I) -> Self {
        Self {
            bursts: iter.into_iter().collect(),
        }
    }
}

impl SequenceCorpus for InMemoryCorpus {
    fn num_bursts(&self) -> usize {
        self.bursts.len()
    }

    fn burst_len(&self, burst: usize) -> usize {
        self.bursts[burst].0.len()
    }

    fn target(&self, burst: usize) -> Target {
        self.bursts[burst].1
    }

    fn window(&mut self, burst: usize, offset: usize, len: usize) -> Result<ComplexSignal> {
        self.bursts[burst].0.slice(offset, len)
    }
}

/// Random (channel, SNR) impairment applied to each training window.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub enabled: bool,
    pub channels: Vec<ChannelModel>,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for Augmentation {
    /// All four channel models, SNR uniform on [-30, 30] dB.
    fn default() -> Self {
        Self {
            enabled: true,
            channels: ChannelModel::ALL.to_vec(),
            snr_min_db: -30.0,
            snr_max_db: 30.0,
        }
    }
}

impl Augmentation {
    pub fn off() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn restricted(channels: &[ChannelModel], snr_min_db: f64, snr_max_db: f64) -> Self {
        Self {
            enabled: true,
            channels: channels.to_vec(),
            snr_min_db,
            snr_max_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && (self.channels.is_empty() || !(self.snr_min_db <= self.snr_max_db)) {
            bail!(InvalidSpec, "augmentation needs channel models and snr_min <= snr_max");
        }
        Ok(())
    }
}

/// Impairment applied to one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub channel: ChannelModel,
    pub snr_db: f64,
}

/// Channel → AWGN → optional power normalization → interleaved reals.
pub fn prepare_window<R: Rng + ?Sized>(
    window: &ComplexSignal,
    condition: Option<Condition>,
    normalization: Option<NormalizationMode>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut x = window.clone();
    if let Some(c) = condition {
        let h = draw_realization(c.channel, rng);
        x = apply_channel(&x, &h)?;
        x = add_awgn(&x, c.snr_db, rng)?;
    }
    if let Some(mode) = normalization {
        x = power_normalize(&x, mode)?;
    }
    Ok(interleave_samples(x.samples()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiplies the rate by `factor` after `patience` epochs without a
    /// validation-loss improvement, never going below `min_lr`.
    ReduceOnPlateau { factor: f64, patience: usize, min_lr: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub augmentation: Augmentation,
    /// Per-window power normalization; `None` disables it.
    pub normalization: Option<NormalizationMode>,
    pub validation_fraction: f64,
    /// Hop between windows cut from one burst; defaults to the window length.
    pub stride: Option<usize>,
    /// Shifts each training window by a fresh random offset in
    /// `[0, stride)` every epoch, so the model does not learn the fixed
    /// frame layout at stride-aligned positions.
    pub random_crop: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// 5 epochs, batch 122, learning rate 2e-4, full augmentation.
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 122,
            learning_rate: 2e-4,
            schedule: LrSchedule::Constant,
            augmentation: Augmentation::default(),
            normalization: Some(NormalizationMode::Rms),
            validation_fraction: 0.2,
            stride: None,
            random_crop: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Batch 512, learning rate 1e-3 decaying on plateau to 1e-4.
    pub fn cnn_defaults() -> Self {
        Self {
            batch_size: 512,
            learning_rate: 1e-3,
            schedule: LrSchedule::ReduceOnPlateau {
                factor: 0.1,
                patience: 1,
                min_lr: 1e-4,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            bail!(InvalidSpec, "epochs, batch size and learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!(InvalidSpec, "validation fraction must lie in [0, 1)");
        }
        if self.stride == Some(0) {
            bail!(InvalidSpec, "stride must be positive");
        }
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
    pub val_acc: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_sequences: usize,
    pub val_sequences: usize,
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,val_acc` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_acc));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// A window of one burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceRef {
    pub burst: usize,
    pub offset: usize,
}

/// Every window position of the corpus, in burst order.
pub fn enumerate_sequences<C: SequenceCorpus + ?Sized>(corpus: &C, window_len: usize, stride: usize) -> Vec<SequenceRef> {
    let mut out = Vec::new();
    for b in 0..corpus.num_bursts() {
        let len = corpus.burst_len(b);
        if len < window_len {
            continue;
        }
        let mut off = 0;
        while off + window_len <= len {
            out.push(SequenceRef { burst: b, offset: off });
            off += stride;
        }
    }
    out
}

/// Window positions that carry signal. Silent windows, such as ones inside
/// an inter-frame gap, have no defined SNR and are left out.
pub fn usable_sequences<C: SequenceCorpus + ?Sized>(corpus: &mut C, window_len: usize, stride: usize) -> Result<Vec<SequenceRef>> {
    let mut out = Vec::new();
    for s in enumerate_sequences(corpus, window_len, stride) {
        if corpus.window(s.burst, s.offset, window_len)?.samples().iter().any(|c| c.norm_sqr() > 0.0) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Shuffled 80/20-style split of sequence positions.
pub fn split_sequences(mut seqs: Vec<SequenceRef>, validation_fraction: f64, seed: u64) -> (Vec<SequenceRef>, Vec<SequenceRef>) {
    seqs.shuffle(&mut rng_from_seed(derive_seed(seed, 1)));
    let n_val = (seqs.len() as f64 * validation_fraction).round() as usize;
    let val = seqs.split_off(seqs.len() - n_val);
    (seqs, val)
}

struct Loader<'a, C: ?Sized> {
    corpus: &'a mut C,
    window_len: usize,
    stride: usize,
    cfg: &'a TrainConfig,
}

impl<C: SequenceCorpus + ?Sized> Loader<'_, C> {
    /// A training window, randomly shifted when cropping is on. A shift
    /// that lands on silence falls back to the enumerated position.
    fn load_cropped(&mut self, s: SequenceRef, rng: &mut RandomSource) -> Result<(Vec<f64>, Target)> {
        if self.cfg.random_crop {
            let last = (self.corpus.burst_len(s.burst) - self.window_len).min(s.offset + self.stride - 1);
            let offset = rng.random_range(s.offset..=last);
            if offset != s.offset {
                let w = self.corpus.window(s.burst, offset, self.window_len)?;
                if w.samples().iter().any(|c| c.norm_sqr() > 0.0) {
                    return self.prepare(w, s.burst, rng);
                }
            }
        }
        self.load(s, rng)
    }

    fn load(&mut self, s: SequenceRef, rng: &mut RandomSource) -> Result<(Vec<f64>, Target)> {
        let w = self.corpus.window(s.burst, s.offset, self.window_len)?;
        self.prepare(w, s.burst, rng)
    }

    fn prepare(&mut self, w: ComplexSignal, burst: usize, rng: &mut RandomSource) -> Result<(Vec<f64>, Target)> {
        let aug = &self.cfg.augmentation;
        let condition = aug.enabled.then(|| {
            let (channel, snr_db) = sample_condition_from(&aug.channels, aug.snr_min_db, aug.snr_max_db, rng);
            Condition { channel, snr_db }
        });
        let x = prepare_window(&w, condition, self.cfg.normalization, rng)?;
        Ok((x, self.corpus.target(burst)))
    }

    /// Validation windows get a fixed impairment per position so the
    /// validation loss is comparable across epochs.
    fn load_fixed(&mut self, s: SequenceRef, k: usize) -> Result<(Vec<f64>, Target)> {
        let mut rng = rng_from_seed(derive_seed(self.cfg.seed, 1_000_000 + k as u64));
        self.load(s, &mut rng)
    }
}

fn to_scalar<T: Scalar>(x: &[f64]) -> Vec<T> {
    x.iter().map(|&v| T::of(v)).collect()
}

fn evaluate_batch<T: Scalar, N: Network<T>>(net: &N, batch: &[(Vec<T>, Target)], grad: Option<&mut [T]>) -> Result<BatchStats> {
    let inputs: Vec<&[T]> = batch.iter().map(|(x, _)| x.as_slice()).collect();
    let targets: Vec<Target> = batch.iter().map(|(_, t)| *t).collect();
    batch_loss_and_grad(net, &inputs, &targets, grad)
}

/// Trains `net` in place and leaves it holding the parameters of the epoch
/// with the lowest validation loss (training loss when there is no
/// validation split). `on_epoch` is called after every epoch.
pub fn fit<T, N, C>(
    net: &mut N,
    corpus: &mut C,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory>
where
    T: Scalar,
    N: Network<T>,
    C: SequenceCorpus + ?Sized,
{
    cfg.validate()?;
    if corpus.num_bursts() == 0 {
        bail!(InvalidInput, "training corpus is empty");
    }
    let window_len = net.input_len() / 2;
    let stride = cfg.stride.unwrap_or(window_len);
    let seqs = usable_sequences(corpus, window_len, stride)?;
    if seqs.is_empty() {
        bail!(InvalidInput, "no burst is long enough for a {window_len}-sample window");
    }
    for b in 0..corpus.num_bursts() {
        corpus.target(b).validate(net.num_classes(), net.multi_label())?;
    }
    let (mut train, val) = split_sequences(seqs, cfg.validation_fraction, cfg.seed);
    if train.is_empty() {
        bail!(InsufficientData, "validation split leaves no training windows");
    }

    let mut loader = Loader {
        corpus,
        window_len,
        stride,
        cfg,
    };
    let mut val_set = Vec::with_capacity(val.len());
    for (k, &s) in val.iter().enumerate() {
        let (x, t) = loader.load_fixed(s, k)?;
        val_set.push((to_scalar::<T>(&x), t));
    }

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 2));
    let mut opt = Adam::<T>::new(net.num_params(), cfg.learning_rate);
    let mut grad = vec![T::zero(); net.num_params()];
    let mut best: Option<(f64, usize, Vec<T>)> = None;
    let mut since_best = 0;
    let mut records = Vec::new();
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        train.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut seen = 0;
        for chunk in train.chunks(cfg.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &s in chunk {
                let (x, t) = loader.load_cropped(s, &mut rng)?;
                batch.push((to_scalar::<T>(&x), t));
            }
            grad.iter_mut().for_each(|g| *g = T::zero());
            let stats = evaluate_batch(net, &batch, Some(&mut grad))?;
            step += 1;
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, step });
            }
            opt.step(net.params_mut(), &grad);
            loss_sum += stats.loss * stats.count as f64;
            correct += stats.correct;
            seen += stats.count;
        }

        let (val_loss, val_acc) = if val_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mut l = 0.0;
            let mut c = 0;
            for chunk in val_set.chunks(256) {
                let s = evaluate_batch(net, chunk, None)?;
                l += s.loss * s.count as f64;
                c += s.correct;
            }
            (l / val_set.len() as f64, c as f64 / val_set.len() as f64)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
            learning_rate: opt.learning_rate,
        };
        on_epoch(&record);
        records.push(record);

        let score = if val_set.is_empty() { record.train_loss } else { val_loss };
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, net.params().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
            if let LrSchedule::ReduceOnPlateau { factor, patience, min_lr } = cfg.schedule {
                if since_best > patience {
                    opt.learning_rate = (opt.learning_rate * factor).max(min_lr);
                    since_best = 0;
                }
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    net.params_mut().copy_from_slice(&params);
    Ok(TrainHistory {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        train_sequences: train.len(),
        val_sequences: val.len(),
        records,
        best_epoch,
    })
}

/// Windows used to fit the transformer's frozen input statistics.
const STATISTICS_WINDOWS: usize = 512;

/// Builds a transformer, fits its input statistics on augmented training
/// windows and trains it.
pub fn train_transformer<C: SequenceCorpus + ?Sized>(
    corpus: &mut C,
    model_cfg: &TransformerConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Transformer<f32>, TrainHistory)> {
    cfg.validate()?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 3));
    let mut model = Transformer::<f32>::new(model_cfg.clone(), &mut rng)?;
    let window_len = model_cfg.seq_len * model_cfg.d_model / 2;
    let stride = cfg.stride.unwrap_or(window_len);
    let seqs = usable_sequences(corpus, window_len, stride)?;
    if seqs.is_empty() {
        bail!(InvalidInput, "training corpus has no usable windows");
    }
    let (train, _) = split_sequences(seqs, cfg.validation_fraction, cfg.seed);
    let mut loader = Loader {
        corpus: &mut *corpus,
        window_len,
        stride,
        cfg,
    };
    let mut rows = Vec::new();
    for _ in 0..STATISTICS_WINDOWS.min(train.len()) {
        let s = train[rng.random_range(0..train.len())];
        rows.push(loader.load_cropped(s, &mut rng)?.0);
    }
    model.fit_input_statistics(rows.iter().map(|r| r.as_slice()))?;
    let history = fit(&mut model, corpus, cfg, on_epoch)?;
    Ok((model, history))
}

/// Logits of `net` for an interleaved input given in f64.
pub fn logits_f64<T: Scalar, N: Network<T>>(net: &N, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != net.input_len() {
        bail!(Shape, "input of length {} for a network expecting {}", input.len(), net.input_len());
    }
    Ok(net.logits(&to_scalar::<T>(input)).iter().map(|v| v.to_f64_lossy()).collect())
}
