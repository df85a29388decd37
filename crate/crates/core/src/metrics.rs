//! Classification metrics: confusion matrices, multi-label set accuracies,
//! per-class precision/recall, one-vs-rest ROC AUC and rank correlation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::model::sigmoid;

/// Rows are the true class, columns the prediction. Examples for which no
/// class was predicted at all (a detector that stays silent) are counted in
/// a separate per-row `undetected` column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<usize>,
    undetected: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            undetected: vec![0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, truth: usize, predicted: Option<usize>) {
        match predicted {
            Some(p) => self.counts[truth * self.num_classes + p] += 1,
            None => self.undetected[truth] += 1,
        }
    }

    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn undetected(&self, truth: usize) -> usize {
        self.undetected[truth]
    }

    /// Examples whose true class is `truth`.
    pub fn support(&self, truth: usize) -> usize {
        (0..self.num_classes).map(|p| self.count(truth, p)).sum::<usize>() + self.undetected[truth]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.undetected.iter().sum::<usize>()
    }

    pub fn trace(&self) -> usize {
        (0..self.num_classes).map(|c| self.count(c, c)).sum()
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.trace() as f64 / t as f64
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes, "class counts differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.undetected.iter_mut().zip(&other.undetected) {
            *a += b;
        }
    }

    /// Row-normalized rates (each row sums to 1 including undetected).
    pub fn row_rates(&self) -> Vec<Vec<f64>> {
        (0..self.num_classes)
            .map(|t| {
                let s = self.support(t).max(1) as f64;
                (0..self.num_classes).map(|p| self.count(t, p) as f64 / s).collect()
            })
            .collect()
    }
}

/// The three set-based multi-label accuracies of one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SetOutcome {
    /// Predicted set equals the truth set.
    pub exact: bool,
    /// Predicted set shares at least one class with the truth set.
    pub single: bool,
    /// Predicted set is non-empty and contained in the truth set.
    pub single_exact: bool,
}

/// Set outcome for bitmask-encoded predicted and true sets.
pub fn set_outcome(predicted: u32, truth: u32) -> SetOutcome {
    SetOutcome {
        exact: predicted == truth,
        single: predicted & truth != 0,
        single_exact: predicted != 0 && predicted & !truth == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    /// TP / (TP + FP); 0 when nothing was predicted for the class.
    pub precision: f64,
    /// TP / (TP + FN); 0 when the class never occurs.
    pub recall: f64,
    pub support: usize,
}

/// Detection rates of every class over the examples sharing one truth set
/// (for overlap captures: one incumbent/interferer pairing).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRates {
    pub truth: u32,
    pub count: usize,
    pub detected: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelMetrics {
    pub count: usize,
    pub exact: f64,
    pub single: f64,
    pub single_exact: f64,
    /// Macro-averaged one-vs-rest ROC AUC over classes that have both
    /// positive and negative examples; NaN if no class qualifies.
    pub auc: f64,
    pub per_class: Vec<ClassStats>,
    pub per_group: Vec<GroupRates>,
}

/// Bitmask of classes whose probability reaches `threshold`.
pub fn threshold_set(probs: &[f64], threshold: f64) -> u32 {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .fold(0, |acc, (c, _)| acc | 1 << c)
}

/// Multi-label metrics from per-class probabilities (sigmoid outputs).
pub fn multilabel_metrics(probs: &[Vec<f64>], truth: &[u32], threshold: f64) -> Result<MultiLabelMetrics> {
    if !(threshold > 0.0 && threshold < 1.0) {
        bail!(InvalidSpec, "threshold must lie in (0, 1), got {threshold}");
    }
    if probs.len() != truth.len() || probs.is_empty() {
        bail!(Shape, "{} score rows for {} truth sets", probs.len(), truth.len());
    }
    let nc = probs[0].len();
    if nc == 0 || nc > 32 || probs.iter().any(|p| p.len() != nc) {
        bail!(Shape, "score rows must share a class count in 1..=32");
    }
    let n = probs.len();
    let (mut exact, mut single, mut single_exact) = (0usize, 0usize, 0usize);
    let mut tp = vec![0usize; nc];
    let mut fp = vec![0usize; nc];
    let mut fneg = vec![0usize; nc];
    let mut groups: Vec<(u32, usize, Vec<usize>)> = Vec::new();
    for (p, &t) in probs.iter().zip(truth) {
        let pred = threshold_set(p, threshold);
        let o = set_outcome(pred, t);
        exact += o.exact as usize;
        single += o.single as usize;
        single_exact += o.single_exact as usize;
        for c in 0..nc {
            let (pc, tc) = (pred >> c & 1 == 1, t >> c & 1 == 1);
            match (pc, tc) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fneg[c] += 1,
                _ => {}
            }
        }
        let gi = match groups.iter().position(|g| g.0 == t) {
            Some(i) => i,
            None => {
                groups.push((t, 0, vec![0; nc]));
                groups.len() - 1
            }
        };
        groups[gi].1 += 1;
        for c in 0..nc {
            if pred >> c & 1 == 1 {
                groups[gi].2[c] += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class = (0..nc)
        .map(|c| ClassStats {
            precision: ratio(tp[c], tp[c] + fp[c]),
            recall: ratio(tp[c], tp[c] + fneg[c]),
            support: tp[c] + fneg[c],
        })
        .collect();
    groups.sort_by_key(|g| g.0);
    let per_group = groups
        .into_iter()
        .map(|(t, count, det)| GroupRates {
            truth: t,
            count,
            detected: det.iter().map(|&d| d as f64 / count as f64).collect(),
        })
        .collect();
    Ok(MultiLabelMetrics {
        count: n,
        exact: exact as f64 / n as f64,
        single: single as f64 / n as f64,
        single_exact: single_exact as f64 / n as f64,
        auc: macro_auc(probs, truth),
        per_class,
        per_group,
    })
}

/// Area under the ROC curve (Mann-Whitney statistic, ties count one half).
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let r = ranks(scores);
    let rank_sum: f64 = r.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro average of one-vs-rest AUCs.
pub fn macro_auc(probs: &[Vec<f64>], truth: &[u32]) -> f64 {
    let nc = probs.first().map_or(0, |p| p.len());
    let aucs: Vec<f64> = (0..nc)
        .filter_map(|c| {
            let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let y: Vec<bool> = truth.iter().map(|t| t >> c & 1 == 1).collect();
            roc_auc(&s, &y)
        })
        .collect();
    if aucs.is_empty() {
        f64::NAN
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    }
}

/// 1-based ranks with ties receiving their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks). NaN
/// when either input is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Outcome of [`metrics_oracle_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleReport {
    pub instances: usize,
    pub mismatches: usize,
    pub ordering_violations: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.ordering_violations == 0
    }
}

/// Recomputes the set metrics by enumeration and compares them with
/// [`set_outcome`] and [`multilabel_metrics`].
///
/// For every instance a non-empty truth set over `num_classes` classes is
/// drawn and all `2^num_classes` predicted subsets are enumerated. Each subset is
/// classified from element-wise definitions (list membership, no bit
/// tricks); the per-subset outcomes and the aggregate rates over all
/// subsets must agree exactly with the implementation, and the aggregate
/// counts must match the closed forms 1, `2^n - 2^(n-|T|)` and `2^|T| - 1`.
pub fn metrics_oracle_check<R: Rng + ?Sized>(instances: usize, num_classes: usize, rng: &mut R) -> OracleReport {
    let nc = num_classes.clamp(1, 16);
    let mut mismatches = 0;
    let mut ordering = 0;
    for _ in 0..instances {
        let truth_bits: u32 = rng.random_range(1..1u32 << nc);
        let truth_list: Vec<usize> = (0..nc).filter(|c| truth_bits >> c & 1 == 1).collect();
        let mut probs = Vec::new();
        let mut truths = Vec::new();
        let (mut n_exact, mut n_single, mut n_single_exact) = (0usize, 0usize, 0usize);
        for subset in 0..1u32 << nc {
            let pred_list: Vec<usize> = (0..nc).filter(|c| subset >> c & 1 == 1).collect();
            let exact = pred_list.len() == truth_list.len() && pred_list.iter().all(|c| truth_list.contains(c));
            let single = pred_list.iter().any(|c| truth_list.contains(c));
            let single_exact = !pred_list.is_empty() && pred_list.iter().all(|c| truth_list.contains(c));
            let got = set_outcome(subset, truth_bits);
            if got
                != (SetOutcome {
                    exact,
                    single,
                    single_exact,
                })
            {
                mismatches += 1;
            }
            n_exact += exact as usize;
            n_single += single as usize;
            n_single_exact += single_exact as usize;
            // scores away from the threshold so the thresholded set is `subset`
            probs.push((0..nc).map(|c| if subset >> c & 1 == 1 { 0.9 } else { 0.1 }).collect::<Vec<f64>>());
            truths.push(truth_bits);
        }
        let total = 1usize << nc;
        let k = truth_list.len();
        if n_exact != 1 || n_single != total - (1 << (nc - k)) || n_single_exact != (1 << k) - 1 {
            mismatches += 1;
        }
        match multilabel_metrics(&probs, &truths, 0.5) {
            Ok(m) => {
                let t = total as f64;
                if m.exact != n_exact as f64 / t
                    || m.single != n_single as f64 / t
                    || m.single_exact != n_single_exact as f64 / t
                {
                    mismatches += 1;
                }
                if !(m.single >= m.single_exact && m.single_exact >= m.exact) {
                    ordering += 1;
                }
            }
            Err(_) => mismatches += 1,
        }
    }
    OracleReport {
        instances,
        mismatches,
        ordering_violations: ordering,
    }
}

/// Per-class probabilities from logits.
pub fn probabilities(logits: &[f64]) -> Vec<f64> {
    logits.iter().map(|&z| sigmoid(z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn confusion_basics() {
        let mut m = ConfusionMatrix::new(3);
        m.record(0, Some(0));
        m.record(0, Some(1));
        m.record(1, Some(1));
        m.record(2, None);
        assert_eq!(m.support(0), 2);
        assert_eq!(m.support(2), 1);
        assert_eq!(m.total(), 4);
        assert_eq!(m.accuracy(), 0.5);
        let mut n = m.clone();
        n.merge(&m);
        assert_eq!(n.count(0, 1), 2);
        assert_eq!(n.undetected(2), 2);
    }

    #[test]
    fn set_outcome_examples() {
        let (b, g, ax) = (1u32, 2u32, 8u32);
        let o = set_outcome(b, b | g);
        assert!(!o.exact && o.single && o.single_exact);
        let o = set_outcome(b | ax, b | g);
        assert!(!o.exact && o.single && !o.single_exact);
        let o = set_outcome(0, b | g);
        assert!(!o.exact && !o.single && !o.single_exact);
        let all = 0b11111;
        assert_eq!(set_outcome(all, all), SetOutcome { exact: true, single: true, single_exact: true });
    }

    #[test]
    fn perfect_predictions() {
        let truth = vec![0b011, 0b101, 0b110, 0b001];
        let probs: Vec<Vec<f64>> = truth
            .iter()
            .map(|t| (0..3).map(|c| if t >> c & 1 == 1 { 0.8 } else { 0.2 }).collect())
            .collect();
        let m = multilabel_metrics(&probs, &truth, 0.5).unwrap();
        assert_eq!((m.exact, m.single, m.single_exact, m.auc), (1.0, 1.0, 1.0, 1.0));
        assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0));
        assert_eq!(m.per_group.len(), 4);
        assert!(multilabel_metrics(&probs, &truth, 1.0).is_err());
    }

    #[test]
    fn oracle_agrees() {
        let r = metrics_oracle_check(1000, 5, &mut rng_from_seed(1));
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.instances, 1000);
    }

    #[test]
    fn auc_values() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]), Some(0.0));
        assert_eq!(roc_auc(&[0.5; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(roc_auc(&[0.5; 2], &[true, true]), None);
        // random scores independent of labels
        let mut rng = rng_from_seed(2);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let y: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
        assert!((roc_auc(&s, &y).unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let s: Vec<f64> = (0..30).map(|_| (rng.random_range(0..6) as f64) / 5.0).collect();
            let y: Vec<bool> = (0..30).map(|_| rng.random()).collect();
            let Some(auc) = roc_auc(&s, &y) else { continue };
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..30 {
                for j in 0..30 {
                    if y[i] && !y[j] {
                        den += 1.0;
                        num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                    }
                }
            }
            assert!((auc - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 9.0, 16.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&x, &[1.0; 5]).is_nan());
        // textbook: d² formula without ties
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let rho = 1.0 - 6.0 * (1.0 + 1.0 + 1.0 + 1.0) / (5.0 * 24.0);
        assert!((spearman(&x, &y) - rho).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ordering_invariant(seed in any::<u64>(), n in 1usize..50) {
            let mut rng = rng_from_seed(seed);
            let probs: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
            let truth: Vec<u32> = (0..n).map(|_| rng.random_range(1..32)).collect();
            let m = multilabel_metrics(&probs, &truth, 0.5).unwrap();
            prop_assert!(m.single >= m.single_exact && m.single_exact >= m.exact);
            for c in &m.per_class {
                prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.recall));
            }
        }

        #[test]
        fn confusion_rows_sum_to_support(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let mut m = ConfusionMatrix::new(4);
            let mut support = [0usize; 4];
            for _ in 0..100 {
                let t = rng.random_range(0..4);
                support[t] += 1;
                let p = if rng.random_bool(0.1) { None } else { Some(rng.random_range(0..4)) };
                m.record(t, p);
            }
            for t in 0..4 {
                prop_assert_eq!(m.support(t), support[t]);
            }
        }
    }
}
