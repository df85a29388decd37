//! The interface shared by the transformer and the CNN baseline, plus the
//! losses and the batched loss/gradient evaluation built on it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;

use super::kernels::{log_softmax, sigmoid, Scalar};
use crate::error::{bail, Result};

/// Name, shape and position of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

/// Training target of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Index of the true class.
    Class(usize),
    /// Bit `c` set when class `c` is present.
    Set(u32),
}

impl Target {
    pub fn contains(&self, class: usize) -> bool {
        match *self {
            Target::Class(c) => c == class,
            Target::Set(bits) => class < 32 && bits & (1 << class) != 0,
        }
    }

    pub fn validate(&self, num_classes: usize, multi_label: bool) -> Result<()> {
        match (*self, multi_label) {
            (Target::Class(c), false) if c < num_classes => Ok(()),
            (Target::Set(bits), true) if num_classes >= 32 || bits >> num_classes == 0 => Ok(()),
            (t, _) => bail!(
                InvalidLabel,
                "target {t:?} is not valid for {num_classes} classes (multi_label = {multi_label})"
            ),
        }
    }
}

/// Loss variant matching the model head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Mean negative log-likelihood of log-probabilities.
    Nll,
    /// Mean binary cross-entropy of per-class probabilities.
    Bce,
}

/// Differentiable classifier over a flat input vector.
pub trait Network<T: Scalar> {
    type Cache;

    fn input_len(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn multi_label(&self) -> bool;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
    fn tensors(&self) -> Vec<TensorInfo>;
    fn logits(&self, input: &[T]) -> Vec<T>;
    fn forward_train(&self, input: &[T]) -> (Vec<T>, Self::Cache);
    /// Adds the parameter gradient for `dlogits` into `grad`.
    fn backward(&self, cache: &Self::Cache, dlogits: &[T], grad: &mut [T]);
    /// Hash of the piecewise-linear activation pattern; finite differences
    /// are only meaningful when it does not change.
    fn kink_signature(&self, cache: &Self::Cache) -> u64;

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn loss_mode(&self) -> LossMode {
        if self.multi_label() {
            LossMode::Bce
        } else {
            LossMode::Nll
        }
    }
}

/// Mean loss over a batch of score vectors (log-probabilities for
/// [`LossMode::Nll`], probabilities for [`LossMode::Bce`]).
pub fn loss(scores: &[Vec<f64>], targets: &[Target], mode: LossMode) -> Result<f64> {
    if scores.len() != targets.len() || scores.is_empty() {
        bail!(Shape, "{} score rows for {} targets", scores.len(), targets.len());
    }
    let mut total = 0.0;
    for (s, t) in scores.iter().zip(targets) {
        t.validate(s.len(), mode == LossMode::Bce)?;
        total += match (mode, *t) {
            (LossMode::Nll, Target::Class(c)) => -s[c],
            (LossMode::Bce, t) => {
                let per: f64 = s
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| {
                        // log clamped at -100 so saturated outputs stay finite
                        let lp = p.ln().max(-100.0);
                        let lq = (1.0 - p).ln().max(-100.0);
                        if t.contains(c) {
                            -lp
                        } else {
                            -lq
                        }
                    })
                    .sum();
                per / s.len() as f64
            }
            _ => unreachable!("validated above"),
        };
    }
    Ok(total / scores.len() as f64)
}

/// Loss of one example and its gradient with respect to the logits.
pub fn loss_from_logits(logits: &[f64], target: Target, multi_label: bool) -> Result<(f64, Vec<f64>)> {
    target.validate(logits.len(), multi_label)?;
    if multi_label {
        let c = logits.len() as f64;
        let mut grad = vec![0.0; logits.len()];
        let mut total = 0.0;
        for (k, &z) in logits.iter().enumerate() {
            let y = if target.contains(k) { 1.0 } else { 0.0 };
            // softplus(z) - y·z, computed stably
            total += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
            grad[k] = (sigmoid(z) - y) / c;
        }
        Ok((total / c, grad))
    } else {
        let Target::Class(y) = target else { unreachable!() };
        let lp = log_softmax(logits);
        let grad = lp
            .iter()
            .enumerate()
            .map(|(k, &l)| l.exp() - if k == y { 1.0 } else { 0.0 })
            .collect();
        Ok((-lp[y], grad))
    }
}

/// Summary of a batch evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    /// Single-label: argmax equals the class. Multi-label: thresholded set
    /// equals the truth set.
    pub correct: usize,
    pub count: usize,
}

/// Whether the logits of one example count as a correct prediction.
pub fn is_correct(logits: &[f64], target: Target, threshold: f64) -> bool {
    match target {
        Target::Class(c) => argmax(logits) == c,
        Target::Set(bits) => predicted_set(logits, threshold) == bits,
    }
}

/// Classes whose sigmoid score reaches `threshold`, as a bitmask.
pub fn predicted_set(logits: &[f64], threshold: f64) -> u32 {
    logits
        .iter()
        .enumerate()
        .filter(|(_, &z)| sigmoid(z) >= threshold)
        .fold(0, |acc, (c, _)| acc | (1 << c))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean loss over the batch; when `grad` is given, adds the gradient of
/// that mean loss.
pub fn batch_loss_and_grad<T: Scalar, N: Network<T>>(
    net: &N,
    inputs: &[&[T]],
    targets: &[Target],
    mut grad: Option<&mut [T]>,
) -> Result<BatchStats> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        bail!(Shape, "{} inputs for {} targets", inputs.len(), targets.len());
    }
    let inv_b = 1.0 / inputs.len() as f64;
    let mut total = 0.0;
    let mut correct = 0;
    for (x, &t) in inputs.iter().zip(targets) {
        if x.len() != net.input_len() {
            bail!(Shape, "input of length {} for a network expecting {}", x.len(), net.input_len());
        }
        let (logits, cache) = net.forward_train(x);
        let z: Vec<f64> = logits.iter().map(|v| v.to_f64_lossy()).collect();
        let (l, dz) = loss_from_logits(&z, t, net.multi_label())?;
        total += l;
        if is_correct(&z, t, 0.5) {
            correct += 1;
        }
        if let Some(g) = grad.as_deref_mut() {
            let dz: Vec<T> = dz.iter().map(|&v| T::of(v * inv_b)).collect();
            net.backward(&cache, &dz, g);
        }
    }
    Ok(BatchStats {
        loss: total * inv_b,
        correct,
        count: inputs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn analytic_losses() {
        let perfect = vec![vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]];
        assert_eq!(loss(&perfect, &[Target::Class(0)], LossMode::Nll).unwrap(), 0.0);
        let uniform = vec![vec![-(4f64.ln()); 4]; 3];
        let l = loss(&uniform, &[Target::Class(0), Target::Class(3), Target::Class(1)], LossMode::Nll).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let half = vec![vec![0.5; 5]; 2];
        let l = loss(&half, &[Target::Set(0b10011), Target::Set(0)], LossMode::Bce).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_labels() {
        let s = vec![vec![-(4f64.ln()); 4]];
        assert!(matches!(loss(&s, &[Target::Class(4)], LossMode::Nll), Err(crate::Error::InvalidLabel(_))));
        assert!(matches!(loss(&s, &[Target::Set(1 << 4)], LossMode::Bce), Err(crate::Error::InvalidLabel(_))));
        assert!(loss_from_logits(&[0.0; 4], Target::Set(1), false).is_err());
    }

    #[test]
    fn logits_loss_agrees_with_score_loss() {
        let z = [0.3, -1.2, 2.0, 0.1];
        let (l, g) = loss_from_logits(&z, Target::Class(2), false).unwrap();
        let expect = loss(&[log_softmax(&z)], &[Target::Class(2)], LossMode::Nll).unwrap();
        assert!((l - expect).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        let (l, _) = loss_from_logits(&z, Target::Set(0b0101), true).unwrap();
        let probs: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let expect = loss(&[probs], &[Target::Set(0b0101)], LossMode::Bce).unwrap();
        assert!((l - expect).abs() < 1e-12);
        // all-zero logits: BCE is ln 2 whatever the labels
        let (l, _) = loss_from_logits(&[0.0; 5], Target::Set(0b10110), true).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn predictions() {
        assert_eq!(argmax(&[0.1, 3.0, 3.0, -1.0]), 1);
        assert_eq!(predicted_set(&[1.0, -1.0, 0.0, -5.0], 0.5), 0b101);
        assert!(is_correct(&[1.0, -1.0, 0.0], Target::Set(0b101), 0.5));
        assert!(!is_correct(&[1.0, -1.0, 0.0], Target::Class(2), 0.5));
    }
}
