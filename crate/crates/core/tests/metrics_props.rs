use fairdc::metrics::{accuracy, balance, contingency, fairness, nmi, MetricsReport, NmiNorm};
use fairdc::{GroupMembership, HardAssignment};
use proptest::prelude::*;

fn labeling(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, usize)> {
    (1..=max_k).prop_flat_map(move |k| (prop::collection::vec(0..k, 1..=max_n), Just(k)))
}

/// Best matched mass over every injective cluster -> class map.
fn matching_oracle(pred: &[usize], k: usize, truth: &[usize], c: usize) -> usize {
    fn go(j: usize, k: usize, c: usize, used: &mut Vec<bool>, table: &[Vec<usize>]) -> usize {
        if j == k {
            return 0;
        }
        let mut best = go(j + 1, k, c, used, table);
        for class in 0..c {
            if !used[class] {
                used[class] = true;
                best = best.max(table[j][class] + go(j + 1, k, c, used, table));
                used[class] = false;
            }
        }
        best
    }
    let mut table = vec![vec![0; c]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    go(0, k, c, &mut vec![false; c], &table)
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Arithmetic-mean NMI straight from pair counts.
fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::HashMap;
    let n = a.len() as f64;
    let mut pa: HashMap<usize, usize> = HashMap::new();
    let mut pb: HashMap<usize, usize> = HashMap::new();
    let mut pab: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *pa.entry(x).or_default() += 1;
        *pb.entry(y).or_default() += 1;
        *pab.entry((x, y)).or_default() += 1;
    }
    let ha = entropy_of(pa.values().copied(), n);
    let hb = entropy_of(pb.values().copied(), n);
    let mut mi = 0.0;
    for (&(x, y), &c) in &pab {
        let pxy = c as f64 / n;
        mi += pxy * (pxy * n * n / (pa[&x] as f64 * pb[&y] as f64)).ln();
    }
    if ha == 0.0 && hb == 0.0 {
        return if a.len() == b.len() { 1.0 } else { 0.0 };
    }
    mi / ((ha + hb) / 2.0)
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(
        (labels, k) in labeling(30, 5),
        seed in any::<u64>(),
    ) {
        let groups: Vec<usize> = labels.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 1) as usize).collect();
        let m = GroupMembership::new(groups.clone(), 2).unwrap();
        let h = HardAssignment::new(labels.clone(), k).unwrap();
        let truth: Vec<usize> = labels.iter().zip(&groups).map(|(l, g)| (l + g) % 3).collect();
        let r = MetricsReport::evaluate(&h, &m, Some(&truth), NmiNorm::Arithmetic).unwrap();
        for v in [r.balance, r.fairness, r.accuracy.unwrap(), r.nmi.unwrap()] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{v}");
        }
    }

    #[test]
    fn two_group_balance_matches_pairwise_ratio(
        (labels, k) in labeling(40, 4),
        bits in prop::collection::vec(0..2usize, 40),
    ) {
        let groups = bits[..labels.len()].to_vec();
        let m = GroupMembership::new(groups.clone(), 2).unwrap();
        let h = HardAssignment::new(labels.clone(), k).unwrap();
        let b = balance(&h, &m).unwrap();
        for j in 0..k {
            let c0 = labels.iter().zip(&groups).filter(|(l, g)| **l == j && **g == 0).count();
            let c1 = labels.iter().zip(&groups).filter(|(l, g)| **l == j && **g == 1).count();
            let expected = if c0 == 0 || c1 == 0 {
                0.0
            } else {
                (c0 as f64 / c1 as f64).min(c1 as f64 / c0 as f64)
            };
            prop_assert_eq!(b.per_cluster[j], expected);
        }
    }

    #[test]
    fn relabeling_invariance(
        (labels, k) in labeling(30, 4),
        groups in prop::collection::vec(0..3usize, 30),
        perm_seed in any::<u64>(),
    ) {
        let n = labels.len();
        let groups = groups[..n].to_vec();
        let m = GroupMembership::new(groups.clone(), 3).unwrap();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut s = perm_seed;
        for i in (1..k).rev() {
            perm.swap(i, (s % (i as u64 + 1)) as usize);
            s /= i as u64 + 1;
        }
        let h = HardAssignment::new(labels.clone(), k).unwrap();
        let hp = HardAssignment::new(labels.iter().map(|&l| perm[l]).collect(), k).unwrap();
        let (b, bp) = (balance(&h, &m).unwrap().overall, balance(&hp, &m).unwrap().overall);
        prop_assert_eq!(b, bp);
        let (f, fp) = (fairness(&h, &m).unwrap().overall, fairness(&hp, &m).unwrap().overall);
        prop_assert_eq!(f, fp);

        let truth: Vec<usize> = groups.clone();
        let truth_perm: Vec<usize> = truth.iter().map(|&t| (t + 1) % 3).collect();
        let acc = accuracy(&h, &truth).unwrap();
        prop_assert!((acc - accuracy(&hp, &truth).unwrap()).abs() < 1e-12);
        prop_assert!((acc - accuracy(&h, &truth_perm).unwrap()).abs() < 1e-12);
        let v = nmi(&h, &truth, NmiNorm::Arithmetic).unwrap();
        prop_assert!((v - nmi(&hp, &truth_perm, NmiNorm::Arithmetic).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_matches_exhaustive_matching(
        (labels, k) in labeling(25, 4),
        truth in prop::collection::vec(0..4usize, 25),
    ) {
        let n = labels.len();
        let truth = truth[..n].to_vec();
        let h = HardAssignment::new(labels.clone(), k).unwrap();
        let best = matching_oracle(&labels, k, &truth, 4);
        prop_assert_eq!(accuracy(&h, &truth).unwrap(), best as f64 / n as f64);
    }

    #[test]
    fn nmi_matches_direct_formula(
        (labels, k) in labeling(40, 4),
        truth in prop::collection::vec(0..3usize, 40),
    ) {
        let n = labels.len();
        let truth = truth[..n].to_vec();
        let h = HardAssignment::new(labels.clone(), k).unwrap();
        let got = nmi(&h, &truth, NmiNorm::Arithmetic).unwrap();
        let ha = entropy_of((0..k).map(|j| labels.iter().filter(|&&l| l == j).count()), n as f64);
        let hb = entropy_of((0..3).map(|c| truth.iter().filter(|&&t| t == c).count()), n as f64);
        if ha > 0.0 || hb > 0.0 {
            prop_assert!((got - nmi_oracle(&labels, &truth)).abs() < 1e-12);
        }
    }
}

#[test]
fn proportional_composition_has_fairness_one() {
    // 3 clusters each holding 2 of group 0 and 1 of group 1
    let groups = vec![0, 0, 1, 0, 0, 1, 0, 0, 1];
    let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
    let m = GroupMembership::new(groups, 2).unwrap();
    let h = HardAssignment::new(labels, 3).unwrap();
    assert_eq!(fairness(&h, &m).unwrap().overall, 1.0);
    assert_eq!(balance(&h, &m).unwrap().overall, m.optimal_balance());
    let moved = HardAssignment::new(vec![0, 0, 1, 0, 1, 1, 2, 2, 2], 3).unwrap();
    assert!(fairness(&moved, &m).unwrap().overall < 1.0);
}

#[test]
fn independent_partitions_have_zero_nmi() {
    let a: Vec<usize> = (0..36).map(|i| i % 3).collect();
    let b: Vec<usize> = (0..36).map(|i| (i / 3) % 4).collect();
    let h = HardAssignment::new(a, 3).unwrap();
    assert!(nmi(&h, &b, NmiNorm::Arithmetic).unwrap().abs() < 1e-12);
    assert!(nmi(&h, &b, NmiNorm::Geometric).unwrap().abs() < 1e-12);
}

#[test]
fn contingency_has_the_right_margins() {
    let h = HardAssignment::new(vec![0, 1, 1, 2, 2, 2], 3).unwrap();
    let table = contingency(&h, &[1, 0, 1, 0, 0, 1]).unwrap();
    assert_eq!(table.sum_axis(ndarray::Axis(1)).to_vec(), vec![1, 2, 3]);
    assert_eq!(table.sum_axis(ndarray::Axis(0)).to_vec(), vec![3, 3]);
}
