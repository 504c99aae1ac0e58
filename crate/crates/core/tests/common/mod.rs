#![allow(dead_code)]

use fairdc::{GroupMembership, SoftAssignment};
use ndarray::Array2;
use rand::Rng;

/// Row-stochastic matrix with entries on a grid of `1 / 2^bits`, so every
/// partial sum of `1 - y` is exact in binary floating point.
pub fn dyadic_soft<R: Rng>(n: usize, k: usize, bits: u32, rng: &mut R) -> SoftAssignment {
    let total = 1u64 << bits;
    let mut m = Array2::zeros((n, k));
    for mut row in m.rows_mut() {
        let mut cuts: Vec<u64> = (0..k - 1).map(|_| rng.random_range(0..=total)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        for (j, c) in cuts.iter().chain(std::iter::once(&total)).enumerate() {
            row[j] = (c - prev) as f64 / total as f64;
            prev = *c;
        }
    }
    SoftAssignment::new(m).unwrap()
}

/// Softmax of Gaussian-ish logits; generic real-valued probabilities.
pub fn random_soft<R: Rng>(n: usize, k: usize, rng: &mut R) -> SoftAssignment {
    let mut m = Array2::from_shape_simple_fn((n, k), || rng.random_range(-3.0..3.0f64));
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    SoftAssignment::new(m).unwrap()
}

/// Membership in which every one of the `t` groups is non-empty.
pub fn random_membership<R: Rng>(n: usize, t: usize, rng: &mut R) -> GroupMembership {
    assert!(n >= t);
    let mut groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..t)).collect();
    for (g, slot) in rand::seq::index::sample(rng, n, t).into_iter().enumerate() {
        groups[slot] = g;
    }
    GroupMembership::new(groups, t).unwrap()
}

/// Every labeling of `n` items into `k` clusters, in lexicographic order.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(k.pow(n as u32));
    let mut cur = vec![0; n];
    loop {
        out.push(cur.clone());
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < k {
                break;
            }
            cur[pos] = 0;
        }
    }
}

/// The four-blob configuration used by end-to-end runs.
pub fn blob_config(seed: u64) -> fairdc::trainer::TrainConfig {
    fairdc::trainer::TrainConfig {
        k: 4,
        hidden: vec![128, 128],
        batch_size: 64,
        pretrain_epochs: 30,
        seed,
        ..Default::default()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error between `grads` and central differences of `f`
/// at `count` random parameter coordinates.
pub fn worst_fd_error<F>(
    params: &fairdc::tensornet::ModelParams,
    grads: &fairdc::tensornet::GradientSet,
    count: usize,
    seed: u64,
    h: f64,
    f: F,
) -> f64
where
    F: Fn(&fairdc::tensornet::ModelParams) -> f64,
{
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let i = rng.random_range(0..params.num_params());
        let mut p = params.clone();
        let v = params.param(i);
        p.set_param(i, v + h);
        let up = f(&p);
        p.set_param(i, v - h);
        let down = f(&p);
        worst = worst.max(rel_err(grads.get(i), (up - down) / (2.0 * h)));
    }
    worst
}
