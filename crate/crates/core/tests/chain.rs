use proptest::prelude::*;
use protoclass_core::channel::{apply_channel, draw_realization, ChannelModel};
use protoclass_core::model::{logits_f64, prepare_window, Transformer, TransformerConfig};
use protoclass_core::signal::{add_awgn, mean_power, power_normalize, NormalizationMode};
use protoclass_core::tokenizer::{reassemble, tokenize};
use protoclass_core::waveform::{generate_burst, BurstSpec, ProtocolId};
use protoclass_core::{derive_seed, rng_from_seed, ComplexSignal};

fn burst(p: ProtocolId, seed: u64) -> ComplexSignal {
    generate_burst(&BurstSpec::default_for(p), &mut rng_from_seed(seed)).unwrap()
}

#[test]
fn received_bursts_tokenize_and_classify() {
    let cfg = TransformerConfig::desk(4);
    let model = Transformer::<f32>::new(cfg.clone(), &mut rng_from_seed(1)).unwrap();
    let n = cfg.tokenization().sequence_len();
    for (k, p) in ProtocolId::PROTOCOLS.into_iter().enumerate() {
        for ch in ChannelModel::ALL {
            let mut rng = rng_from_seed(derive_seed(7, k as u64));
            let b = burst(p, k as u64);
            let y = apply_channel(&b.slice(0, n).unwrap(), &draw_realization(ch, &mut rng)).unwrap();
            let y = add_awgn(&y, 10.0, &mut rng).unwrap();
            let t = tokenize(&y, &cfg.tokenization()).unwrap();
            assert_eq!(reassemble(&t), y.samples());
            let x = prepare_window(&y, None, Some(NormalizationMode::Rms), &mut rng).unwrap();
            let logits = logits_f64(&model, &x).unwrap();
            assert_eq!(logits.len(), 4);
            assert!(logits.iter().all(|v| v.is_finite()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalized_windows_have_unit_power(
        k in 0usize..4,
        seed in any::<u64>(),
        gain_db in -60.0f64..40.0,
        snr_db in -5.0f64..30.0,
    ) {
        let mut rng = rng_from_seed(seed);
        let b = burst(ProtocolId::PROTOCOLS[k], seed).slice(0, 1024).unwrap();
        let y = add_awgn(&b, snr_db, &mut rng).unwrap();
        let y = y.scaled(protoclass_core::Complex::new(10f64.powf(gain_db / 20.0), 0.0));
        let z = power_normalize(&y, NormalizationMode::Rms).unwrap();
        prop_assert!((mean_power(&z).unwrap() - 1.0).abs() < 1e-9);
    }
}
