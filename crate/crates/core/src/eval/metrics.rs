use serde::{Deserialize, Serialize};

use super::EvalError;

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, EvalError> {
    check_lengths(predictions.len(), labels.len())?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Raw counts, `counts[true][predicted]`.
pub fn confusion_counts(predictions: &[usize], labels: &[usize], k: usize) -> Result<Vec<Vec<u64>>, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(EvalError::LabelOutOfRange { label: p.max(l), k });
        }
        counts[l][p] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    /// row-normalized, `matrix[true][predicted]`
    pub matrix: Vec<Vec<f64>>,
    pub support: Vec<u64>,
    /// classes with no true samples; their rows are all zero
    pub zero_support: Vec<usize>,
}

pub fn confusion_proportional(predictions: &[usize], labels: &[usize], k: usize) -> Result<Confusion, EvalError> {
    let counts = confusion_counts(predictions, labels, k)?;
    let support: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let matrix = counts
        .iter()
        .zip(&support)
        .map(|(row, &s)| row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect())
        .collect();
    let zero_support = support.iter().enumerate().filter(|(_, &s)| s == 0).map(|(i, _)| i).collect();
    Ok(Confusion {
        matrix,
        support,
        zero_support,
    })
}

/// 1-based ranks with ties given their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share rank mean(i+1..=j)
        let r = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

/// Binary AUC via the Mann-Whitney U statistic; tied pairs count one half.
/// `None` when either class is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n1 = positive.iter().filter(|&&p| p).count();
    let n0 = positive.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Some(u / (n1 as f64 * n0 as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    /// `None` for classes absent from the labels (or present in every row)
    pub per_class: Vec<Option<f64>>,
    /// unweighted mean over classes with a defined AUC
    pub macro_auc: f64,
    pub degenerate: Vec<usize>,
}

/// One-vs-rest AUC for each column of `scores`.
pub fn roc_auc_ovr(scores: &[Vec<f64>], labels: &[usize]) -> Result<AucSummary, EvalError> {
    check_lengths(scores.len(), labels.len())?;
    let k = scores[0].len();
    if scores.iter().any(|r| r.len() != k) {
        return Err(EvalError::RaggedScores);
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(EvalError::LabelOutOfRange { label: l, k });
    }
    let mut per_class = Vec::with_capacity(k);
    let mut degenerate = Vec::new();
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let auc = binary_auc(&col, &pos);
        if auc.is_none() {
            degenerate.push(c);
        }
        per_class.push(auc);
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(EvalError::NoValidClass);
    }
    let macro_auc = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(AucSummary {
        per_class,
        macro_auc,
        degenerate,
    })
}

/// Index of the largest score, first on ties.
pub fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert_eq!(accuracy(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn confusion_by_hand() {
        let c = confusion_proportional(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(c.matrix, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let c = confusion_proportional(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(c.matrix[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(c.matrix[2], vec![0.0; 3]);
        assert_eq!(c.zero_support, vec![2]);
    }

    #[test]
    fn auc_cases() {
        let s = [0.9, 0.8, 0.3, 0.1];
        assert_eq!(binary_auc(&s, &[true, true, false, false]), Some(1.0));
        assert_eq!(binary_auc(&s, &[true, false, true, false]), Some(0.75));
        assert_eq!(binary_auc(&[0.5; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(binary_auc(&s, &[false; 4]), None);
    }

    #[test]
    fn ovr_flags_absent_class() {
        let scores = vec![vec![0.8, 0.1, 0.1], vec![0.2, 0.7, 0.1], vec![0.6, 0.3, 0.1]];
        let a = roc_auc_ovr(&scores, &[0, 1, 0]).unwrap();
        assert_eq!(a.per_class, vec![Some(1.0), Some(1.0), None]);
        assert_eq!(a.degenerate, vec![2]);
        assert_eq!(a.macro_auc, 1.0);
    }

    #[test]
    fn random_scores_near_half() {
        let mut inside = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
            let pos: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
            let a = binary_auc(&scores, &pos).unwrap();
            if (0.45..=0.55).contains(&a) {
                inside += 1;
            }
        }
        assert!(inside >= 95, "{inside}");
    }

    proptest! {
        #[test]
        fn monotone_transform_invariant(scores in prop::collection::vec(-5.0f64..5.0, 2..60), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pos: Vec<bool> = scores.iter().map(|_| rng.gen()).collect();
            pos[0] = true;
            pos[1] = false;
            let a = binary_auc(&scores, &pos).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(a, binary_auc(&t, &pos).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn accuracy_is_confusion_trace(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..100)) {
            let (p, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let counts = confusion_counts(&p, &l, 5).unwrap();
            let trace: u64 = (0..5).map(|i| counts[i][i]).sum();
            prop_assert_eq!(accuracy(&p, &l).unwrap(), trace as f64 / p.len() as f64);
            let c = confusion_proportional(&p, &l, 5).unwrap();
            for (row, s) in c.matrix.iter().zip(&c.support) {
                if *s > 0 {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
