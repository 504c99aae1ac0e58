mod common;

use common::{rel_err, worst_fd_error};
use fairdc::objectives::{
    augmentation_grad_logits, augmentation_loss, clustering_loss, entropy_terms_grad,
    evaluate_objective, fairness_grad_logits, fairness_loss, vat_perturbation, LossWeights,
};
use fairdc::tensornet::{softmax_backward, Activation, GradientSet, ModelParams};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn tiny_net(seed: u64) -> (ModelParams, Array2<f64>, Vec<usize>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(3, &[5, 4], 3, Activation::Tanh, &mut rng).unwrap();
    let x = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-1.5..1.5));
    let fair = (0..6).map(|_| rng.random_range(0..3)).collect();
    let r = Array2::from_shape_simple_fn((6, 3), || rng.random_range(-0.3..0.3));
    (params, x, fair, r)
}

fn check<F>(params: &ModelParams, grads: &GradientSet, count: usize, seed: u64, f: F)
where
    F: Fn(&ModelParams) -> f64,
{
    let worst = worst_fd_error(params, grads, count, seed, H, f);
    assert!(worst <= TOL, "worst relative error {worst}");
}

fn forward(p: &ModelParams, x: ArrayView2<f64>) -> Array2<f64> {
    p.forward(x).unwrap()
}

#[test]
fn clustering_loss_gradient() {
    let (params, x, _, _) = tiny_net(1);
    let w = LossWeights {
        alpha: 0.03,
        beta: 0.0,
        gamma: 0.0,
        ..Default::default()
    };
    let (_, grads) = evaluate_objective(&params, x.view(), None, None, &w).unwrap();
    check(&params, &grads, 25, 100, |p| {
        clustering_loss(forward(p, x.view()).view(), p, 0.03).unwrap()
    });
}

#[test]
fn clustering_entropy_gradient_through_tape() {
    let (params, x, _, _) = tiny_net(2);
    let tape = params.record(x.view()).unwrap();
    let dz = softmax_backward(tape.probs(), &entropy_terms_grad(tape.probs().view()));
    let (grads, _) = params.backward(&tape, &dz).unwrap();
    check(&params, &grads, 25, 101, |p| {
        clustering_loss(forward(p, x.view()).view(), p, 0.0).unwrap()
    });
}

#[test]
fn fairness_loss_gradient() {
    let (params, x, fair, _) = tiny_net(3);
    let tape = params.record(x.view()).unwrap();
    let dz = fairness_grad_logits(tape.probs().view(), &fair);
    let (grads, _) = params.backward(&tape, &dz).unwrap();
    check(&params, &grads, 25, 102, |p| {
        fairness_loss(forward(p, x.view()).view(), &fair).unwrap()
    });
}

#[test]
fn augmentation_loss_gradient_with_frozen_target() {
    let (params, x, _, r) = tiny_net(4);
    let target = forward(&params, x.view());
    let shifted = &x + &r;
    let tape = params.record(shifted.view()).unwrap();
    let dz = augmentation_grad_logits(target.view(), tape.probs().view());
    let (grads, _) = params.backward(&tape, &dz).unwrap();
    check(&params, &grads, 25, 103, |p| {
        augmentation_loss(target.view(), forward(p, shifted.view()).view()).unwrap()
    });
}

#[test]
fn total_loss_gradient() {
    let (params, x, fair, r) = tiny_net(5);
    let w = LossWeights {
        alpha: 1e-2,
        beta: 4.0,
        gamma: 1.0,
        ..Default::default()
    };
    let (_, grads) =
        evaluate_objective(&params, x.view(), Some(&fair), Some(r.view()), &w).unwrap();
    let target = forward(&params, x.view());
    let shifted = &x + &r;
    check(&params, &grads, 30, 104, |p| {
        let probs = forward(p, x.view());
        clustering_loss(probs.view(), p, w.alpha).unwrap()
            + w.beta * fairness_loss(probs.view(), &fair).unwrap()
            + w.gamma * augmentation_loss(target.view(), forward(p, shifted.view()).view()).unwrap()
    });
}

#[test]
fn input_gradient_matches_finite_differences() {
    let (params, x, _, _) = tiny_net(6);
    let target = Array2::from_shape_fn((6, 3), |(i, j)| if (i + j) % 3 == 0 { 0.8 } else { 0.1 });
    let tape = params.record(x.view()).unwrap();
    let dz = augmentation_grad_logits(target.view(), tape.probs().view());
    let g = params.input_gradient(&tape, &dz).unwrap();
    let loss = |x: &Array2<f64>| augmentation_loss(target.view(), forward(&params, x.view()).view()).unwrap();
    for i in 0..6 {
        for d in 0..3 {
            let mut up = x.clone();
            up[[i, d]] += H;
            let mut down = x.clone();
            down[[i, d]] -= H;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * H);
            assert!(rel_err(g[[i, d]], numeric) <= TOL, "({i},{d})");
        }
    }
}

fn kl_at(params: &ModelParams, x: &Array1<f64>, t: &Array1<f64>) -> f64 {
    let clean = forward(params, x.view().insert_axis(Axis(0)));
    let moved = forward(params, (x + t).view().insert_axis(Axis(0)));
    augmentation_loss(clean.view(), moved.view()).unwrap()
}

/// 40 seeded toy networks, 50 random same-norm directions each.
/// Returns how many comparisons `t_adv` wins.
fn adversarial_duel(iters: usize) -> usize {
    let mut won = 0;
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let params = ModelParams::init(2, &[16], 3, Activation::Tanh, &mut rng).unwrap();
        let x = Array1::from_shape_simple_fn(2, || rng.random_range(-1.0..1.0));
        let w = LossWeights {
            vat_epsilon: 0.05,
            vat_xi: 1e-4,
            vat_power_iters: iters,
            ..Default::default()
        };
        let t_adv = vat_perturbation(&params, x.view(), &w, &mut rng).unwrap();
        assert!((t_adv.dot(&t_adv).sqrt() - 0.05).abs() < 1e-9);
        let adv = kl_at(&params, &x, &t_adv);
        for _ in 0..50 {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let t = Array1::from(vec![0.05 * angle.cos(), 0.05 * angle.sin()]);
            if adv >= kl_at(&params, &x, &t) {
                won += 1;
            }
        }
    }
    won
}

#[test]
fn adversarial_direction_beats_random_directions() {
    let won = adversarial_duel(2);
    assert!(won >= 1800, "adversarial direction won {won}/2000 comparisons");
}

#[test]
fn more_power_iterations_do_not_hurt() {
    let one = adversarial_duel(1);
    let three = adversarial_duel(3);
    assert!(three >= one, "{three} < {one}");
}
