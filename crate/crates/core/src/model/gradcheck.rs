//! Finite-difference verification of the hand-written backward passes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::network::{batch_loss_and_grad, Network, Target};
use super::transformer::{Transformer, TransformerConfig};
use crate::error::Result;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per named tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
    /// Parameters skipped because the ±step perturbation flipped a ReLU.
    pub skipped_kinks: usize,
}

fn batch_signature<N: Network<f64>>(net: &N, inputs: &[&[f64]]) -> u64 {
    inputs.iter().fold(0u64, |acc, x| {
        let (_, cache) = net.forward_train(x);
        acc.rotate_left(7) ^ net.kink_signature(&cache)
    })
}

/// Compares analytic and central-difference gradients for every parameter.
pub fn check_network<N: Network<f64>>(
    net: &mut N,
    inputs: &[&[f64]],
    targets: &[Target],
    step: f64,
) -> Result<GradCheckReport> {
    let mut analytic = vec![0.0; net.num_params()];
    batch_loss_and_grad(net, inputs, targets, Some(&mut analytic))?;
    let base_sig = batch_signature(net, inputs);

    let mut per_tensor = Vec::new();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for info in net.tensors() {
        let mut worst: f64 = 0.0;
        for i in info.range.clone() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + step;
            let plus = batch_loss_and_grad(net, inputs, targets, None)?.loss;
            let sig_plus = batch_signature(net, inputs);
            net.params_mut()[i] = orig - step;
            let minus = batch_loss_and_grad(net, inputs, targets, None)?.loss;
            let sig_minus = batch_signature(net, inputs);
            net.params_mut()[i] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
        max_rel = max_rel.max(worst);
        per_tensor.push((info.name, worst));
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        per_tensor,
        checked,
        skipped_kinks: skipped,
    })
}

/// Builds an f64 transformer for `config`, draws a random batch of two
/// inputs with random targets and checks every parameter gradient.
pub fn grad_check<R: Rng + ?Sized>(config: &TransformerConfig, rng: &mut R) -> Result<GradCheckReport> {
    let mut net = Transformer::<f64>::new(config.clone(), rng)?;
    let len = config.seq_len * config.d_model;
    let inputs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let targets: Vec<Target> = (0..2)
        .map(|_| {
            if config.multi_label {
                Target::Set(rng.random_range(0..1u32 << config.num_classes))
            } else {
                Target::Class(rng.random_range(0..config.num_classes))
            }
        })
        .collect();
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    check_network(&mut net, &refs, &targets, GRAD_CHECK_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::Network;
    use crate::rng_from_seed;

    fn tiny(multi: bool, pe: bool) -> TransformerConfig {
        TransformerConfig {
            seq_len: 4,
            d_model: 8,
            num_layers: 1,
            num_heads: 2,
            d_ff: 16,
            fc_hidden: 12,
            num_classes: 4,
            multi_label: multi,
            positional_encoding: pe,
        }
    }

    #[test]
    fn single_label_gradients() {
        let r = grad_check(&tiny(false, false), &mut rng_from_seed(11)).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.skipped_kinks * 20 < r.checked);
    }

    #[test]
    fn multi_label_two_layer_gradients() {
        let cfg = TransformerConfig {
            num_layers: 2,
            num_classes: 5,
            ..tiny(true, true)
        };
        let r = grad_check(&cfg, &mut rng_from_seed(12)).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn dead_unit_has_zero_gradient() {
        let cfg = tiny(false, false);
        let mut net = Transformer::<f64>::new(cfg.clone(), &mut rng_from_seed(13)).unwrap();
        let fc_b = net.tensors().into_iter().find(|t| t.name == "head.fc.bias").unwrap();
        let fc_w = net.tensors().into_iter().find(|t| t.name == "head.fc.weight").unwrap();
        // hidden unit 0 never activates, so its incoming weights learn nothing
        net.params_mut()[fc_b.range.start] = -1e6;
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut g = vec![0.0; net.num_params()];
        batch_loss_and_grad(&net, &[&x], &[Target::Class(1)], Some(&mut g)).unwrap();
        for row in 0..32 {
            assert_eq!(g[fc_w.range.start + row * cfg.fc_hidden], 0.0);
        }
        assert_eq!(g[fc_b.range.start], 0.0);
    }

    #[test]
    fn duplicated_batch_same_mean_gradient() {
        let cfg = tiny(false, false);
        let net = Transformer::<f64>::new(cfg, &mut rng_from_seed(14)).unwrap();
        let a: Vec<f64> = (0..32).map(|i| (i as f64 * 0.11).cos()).collect();
        let b: Vec<f64> = (0..32).map(|i| (i as f64 * 0.23).sin()).collect();
        let mut g1 = vec![0.0; net.num_params()];
        let mut g2 = vec![0.0; net.num_params()];
        batch_loss_and_grad(&net, &[&a, &b], &[Target::Class(0), Target::Class(2)], Some(&mut g1)).unwrap();
        batch_loss_and_grad(
            &net,
            &[&a, &b, &a, &b],
            &[Target::Class(0), Target::Class(2), Target::Class(0), Target::Class(2)],
            Some(&mut g2),
        )
        .unwrap();
        for (x, y) in g1.iter().zip(&g2) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
