use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Train / test / validation fractions.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.80, 0.16, 0.04];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub val: Vec<usize>,
    pub seed: u64,
    pub fractions: [f64; 3],
    /// true when whole groups (tracks) were assigned to one partition
    #[serde(default)]
    pub grouped: bool,
}

impl SplitIndices {
    pub fn partition(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "test" => Some(&self.test),
            "val" | "validation" => Some(&self.val),
            _ => None,
        }
    }
}

fn check_fractions(f: [f64; 3]) -> Result<(), EvalError> {
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(EvalError::InvalidFractions(f));
    }
    Ok(())
}

/// Split `n` items into three counts by largest remainder; ties in the
/// remainder go to the earlier partition.
pub fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified shuffle split. Each class's indices are shuffled with a
/// generator derived from `seed` and cut by largest-remainder counts.
/// Partitions are returned sorted.
pub fn stratified_split(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<SplitIndices, EvalError> {
    let groups: Vec<usize> = (0..labels.len()).collect();
    let mut s = grouped_split(labels, &groups, fractions, seed)?;
    s.grouped = false;
    Ok(s)
}

/// Stratified split that keeps every group (e.g. all segments of one track)
/// inside a single partition. A group's class is the label of its first item;
/// counting is done in groups, not items.
pub fn grouped_split(labels: &[usize], groups: &[usize], fractions: [f64; 3], seed: u64) -> Result<SplitIndices, EvalError> {
    check_fractions(fractions)?;
    if labels.len() != groups.len() {
        return Err(EvalError::LengthMismatch {
            left: labels.len(),
            right: groups.len(),
        });
    }
    // class -> groups (in first-seen order), group -> items
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (&l, &g)) in labels.iter().zip(groups).enumerate() {
        let m = members.entry(g).or_default();
        if m.is_empty() {
            by_class.entry(l).or_default().push(g);
        }
        m.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (_, mut gs) in by_class {
        gs.shuffle(&mut rng);
        let counts = largest_remainder(gs.len(), fractions);
        let mut it = gs.into_iter();
        for (p, &c) in parts.iter_mut().zip(&counts) {
            for g in it.by_ref().take(c) {
                p.extend(&members[&g]);
            }
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, test, val] = parts;
    Ok(SplitIndices {
        train,
        test,
        val,
        seed,
        fractions,
        grouped: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_thousand() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let s = stratified_split(&labels, DEFAULT_FRACTIONS, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.val.len()), (800, 160, 40));
        assert_eq!(s, stratified_split(&labels, DEFAULT_FRACTIONS, 7).unwrap());
        assert_ne!(s.train, stratified_split(&labels, DEFAULT_FRACTIONS, 8).unwrap().train);
    }

    #[test]
    fn bad_fractions() {
        assert!(stratified_split(&[0, 1], [0.5, 0.5, 0.0], 0).is_err());
        assert!(stratified_split(&[0, 1], [0.5, 0.3, 0.3], 0).is_err());
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(largest_remainder(100, DEFAULT_FRACTIONS), [80, 16, 4]);
        assert_eq!(largest_remainder(99, DEFAULT_FRACTIONS), [79, 16, 4]);
        assert_eq!(largest_remainder(7, DEFAULT_FRACTIONS), [6, 1, 0]);
        assert_eq!(largest_remainder(0, DEFAULT_FRACTIONS), [0, 0, 0]);
    }

    #[test]
    fn groups_stay_together() {
        let groups: Vec<usize> = (0..200).map(|i| i / 10).collect();
        let labels: Vec<usize> = groups.iter().map(|g| g % 2).collect();
        let s = grouped_split(&labels, &groups, DEFAULT_FRACTIONS, 3).unwrap();
        let side = |i: usize| {
            if s.train.contains(&i) {
                0
            } else if s.test.contains(&i) {
                1
            } else {
                2
            }
        };
        for g in 0..20 {
            let sides: Vec<_> = (g * 10..g * 10 + 10).map(side).collect();
            assert!(sides.iter().all(|&x| x == sides[0]));
        }
        assert_eq!(s.train.len() + s.test.len() + s.val.len(), 200);
    }

    proptest! {
        #[test]
        fn disjoint_cover_and_proportional(labels in prop::collection::vec(0usize..4, 1..300), seed in any::<u64>()) {
            let s = stratified_split(&labels, DEFAULT_FRACTIONS, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).chain(&s.val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for k in 0..4 {
                let n_k = labels.iter().filter(|&&l| l == k).count() as f64;
                for (part, f) in [&s.train, &s.test, &s.val].iter().zip(DEFAULT_FRACTIONS) {
                    let c = part.iter().filter(|&&i| labels[i] == k).count() as f64;
                    prop_assert!((c - f * n_k).abs() <= 1.0);
                }
            }
        }
    }
}
