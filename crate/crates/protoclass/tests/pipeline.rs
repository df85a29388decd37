use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use protoclass::checkpoint::{Net, TrainedModel};
use protoclass::pipeline::*;
use protoclass::Error;
use protoclass_core::channel::ChannelModel;
use protoclass_core::model::{Cnn, CnnConfig, Transformer, TransformerConfig};
use protoclass_core::signal::NormalizationMode;
use protoclass_core::waveform::ProtocolId;
use protoclass_core::rng_from_seed;

fn tiny_model() -> Arc<TrainedModel> {
    let cfg = TransformerConfig {
        seq_len: 4,
        d_model: 64,
        num_layers: 1,
        num_heads: 4,
        d_ff: 32,
        fc_hidden: 16,
        num_classes: 4,
        multi_label: false,
        positional_encoding: false,
    };
    let t = Transformer::<f32>::new(cfg, &mut rng_from_seed(5)).unwrap();
    Arc::new(TrainedModel::new(Net::Transformer(t), Some(NormalizationMode::Rms), ProtocolId::PROTOCOLS.to_vec()).unwrap())
}

fn chunks() -> Vec<Vec<i16>> {
    LoopingSource::synthetic(ProtocolId::G80211, 20.0, ChannelModel::Rayleigh, 2, 9)
        .unwrap()
        .chunks()
        .to_vec()
}

fn source(looping: bool) -> Box<dyn ChunkSource> {
    Box::new(LoopingSource::new(chunks(), looping).unwrap())
}

/// Every received sequence number is predicted or dropped exactly once.
fn assert_partition(run: &PipelineRun) {
    let mut seen = BTreeSet::new();
    for s in run.records.iter().map(|r| r.seq).chain(run.dropped_q1.iter().copied()).chain(run.dropped_q2.iter().copied()) {
        assert!(seen.insert(s), "sequence {s} accounted twice");
    }
    assert_eq!(seen.len() as u64, run.counters.chunks_in);
    assert_eq!(seen.last().copied(), run.counters.chunks_in.checked_sub(1));
    let c = run.counters;
    assert_eq!(c.in_flight, 0);
    assert_eq!(c.chunks_in, c.predictions + c.drops_q1 + c.drops_q2 + c.in_flight);
}

fn assert_ordered(run: &PipelineRun) {
    assert!(run.records.windows(2).all(|w| w[0].seq < w[1].seq));
    for r in &run.records {
        assert!(r.received_ns <= r.processed_ns && r.processed_ns <= r.predicted_ns);
    }
}

#[test]
fn streaming_matches_offline_path_bit_for_bit() {
    let model = tiny_model();
    let cfg = PipelineConfig {
        queues: QueueConfig {
            q1_capacity: 64,
            q2_capacity: 64,
        },
        pacing: 0.0,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(source(false), model.clone(), &cfg).unwrap();
    let all = chunks();
    assert_eq!(run.counters.chunks_in as usize, all.len());
    assert!(!run.records.is_empty());
    for r in &run.records {
        let (label, scores) = classify_chunk(&model, &all[r.seq as usize]).unwrap();
        assert_eq!(label, r.label);
        assert_eq!(
            scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            r.log_scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    assert_partition(&run);
}

#[test]
fn conservation_ordering_and_occupancy_under_jitter() {
    let model = tiny_model();
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("pred.log");
        let ms = |v: u64| Duration::from_micros(v * 100 + seed * 37);
        let cfg = PipelineConfig {
            pacing: 0.5,
            max_chunks: Some(60),
            hooks: StageHooks {
                delays: [ms(1), ms(seed % 3), ms(5)],
                jitter: [ms(2), ms(10), ms(20)],
                seed,
            },
            log_path: Some(log.clone()),
            ..PipelineConfig::default()
        };
        let run = run_pipeline(source(true), model.clone(), &cfg).unwrap();
        assert_eq!(run.counters.chunks_in, 60);
        assert!(run.counters.max_q1 <= 2 && run.counters.max_q2 <= 2);
        assert_partition(&run);
        assert_ordered(&run);
        let text = std::fs::read_to_string(&log).unwrap();
        let seqs: Vec<u64> = text.lines().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(seqs, run.records.iter().map(|r| r.seq).collect::<Vec<_>>());
    }
}

#[test]
fn log_line_layout() {
    let run = run_pipeline(
        source(false),
        tiny_model(),
        &PipelineConfig {
            pacing: 0.0,
            max_chunks: Some(1),
            ..PipelineConfig::default()
        },
    )
    .unwrap();
    let line = run.records[0].log_line();
    let fields: Vec<&str> = line.split(',').collect();
    assert_eq!(fields.len(), 3 + 4);
    assert_eq!(fields[0], "0");
    assert!(fields[1].parse::<u64>().is_ok());
    assert!(["b", "g", "n", "ax"].contains(&fields[2]));
    let total: f64 = fields[3..].iter().map(|v| v.parse::<f64>().unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-4);
}

#[test]
fn stalled_inference_drops_without_deadlock() {
    let cfg = PipelineConfig {
        pacing: 1.0,
        duration: Some(Duration::from_millis(1500)),
        hooks: StageHooks {
            delays: [Duration::ZERO, Duration::ZERO, Duration::from_secs(1)],
            ..StageHooks::default()
        },
        ..PipelineConfig::default()
    };
    let t0 = Instant::now();
    let run = run_pipeline(source(true), tiny_model(), &cfg).unwrap();
    // two inference items at most are pending when the stop signal arrives
    assert!(t0.elapsed() < Duration::from_secs(7), "{:?}", t0.elapsed());
    assert!(run.counters.drops_q1 + run.counters.drops_q2 > 100);
    assert!(run.counters.predictions >= 1);
    assert_partition(&run);
}

#[test]
fn throughput_follows_the_slowest_stage() {
    let ms = Duration::from_millis;
    // receiver fastest: drops at q1, inference sets the pace
    let cfg = PipelineConfig {
        pacing: 0.0,
        duration: Some(Duration::from_secs(3)),
        hooks: StageHooks {
            delays: [ms(5), ms(10), ms(15)],
            ..StageHooks::default()
        },
        ..PipelineConfig::default()
    };
    let t = run_pipeline(source(true), tiny_model(), &cfg).unwrap().profile().unwrap();
    let target = 1000.0 / 15.0;
    assert!((t.predictions_per_second - target).abs() < 0.2 * target, "{}", t.predictions_per_second);

    // receiver slowest: nothing is dropped
    let cfg = PipelineConfig {
        hooks: StageHooks {
            delays: [ms(15), ms(5), ms(10)],
            ..StageHooks::default()
        },
        ..cfg
    };
    let t = run_pipeline(source(true), tiny_model(), &cfg).unwrap().profile().unwrap();
    assert_eq!(t.counters.drops_q1 + t.counters.drops_q2, 0);
    assert!((t.predictions_per_second - target).abs() < 0.2 * target, "{}", t.predictions_per_second);
    assert!((t.predictions_per_second - t.bottleneck_rate).abs() < 0.2 * t.bottleneck_rate);
    assert!(t.end_to_end.mean_ms > 0.0);
}

#[test]
fn zero_delay_latency_is_positive() {
    let cfg = PipelineConfig {
        pacing: 0.0,
        max_chunks: Some(30),
        queues: QueueConfig {
            q1_capacity: 32,
            q2_capacity: 32,
        },
        ..PipelineConfig::default()
    };
    let t = run_pipeline(source(true), tiny_model(), &cfg).unwrap().profile().unwrap();
    assert!(t.end_to_end.mean_ms > 0.0);
    assert!(t.end_to_end.max_ms >= t.end_to_end.mean_ms);
}

#[test]
fn profile_needs_ten_predictions() {
    let cfg = PipelineConfig {
        pacing: 0.0,
        max_chunks: Some(5),
        ..PipelineConfig::default()
    };
    let run = run_pipeline(source(true), tiny_model(), &cfg).unwrap();
    assert!(matches!(
        run.profile(),
        Err(Error::Core(protoclass_core::Error::InsufficientData(_)))
    ));
}

#[test]
fn incompatible_model_is_rejected_at_startup() {
    let cnn = Cnn::<f32>::new(
        CnnConfig {
            input_len: 2 * 8200,
            conv_channels: vec![1],
            kernel_size: 1,
            dense_hidden: 1,
            num_classes: 4,
            multi_label: false,
        },
        &mut rng_from_seed(1),
    )
    .unwrap();
    let model = Arc::new(TrainedModel::new(Net::Cnn(cnn), None, ProtocolId::PROTOCOLS.to_vec()).unwrap());
    assert!(matches!(
        run_pipeline(source(true), model, &PipelineConfig::default()),
        Err(Error::Config(_))
    ));
    let bad = PipelineConfig {
        queues: QueueConfig {
            q1_capacity: 0,
            q2_capacity: 2,
        },
        ..PipelineConfig::default()
    };
    assert!(run_pipeline(source(true), tiny_model(), &bad).is_err());
}
