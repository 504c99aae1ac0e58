//! Training objectives: the clustering loss, the pseudo-label fairness loss,
//! the virtual-adversarial augmentation loss, and their weighted sum.
//!
//! Every loss comes with the gradient the trainer needs. Gradients with
//! respect to parameters are produced by [`batch_objective`] and
//! [`evaluate_objective`]; the per-loss helpers return gradients on the
//! softmax logits or probabilities.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensornet::{
    entropy_unchecked, softmax_backward, GradientSet, ModelParams, Tape, PROB_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// L2 penalty on all weights and biases.
    pub alpha: f64,
    /// Weight of the fairness (pseudo-label) loss.
    pub beta: f64,
    /// Weight of the augmentation loss.
    pub gamma: f64,
    /// Radius of the adversarial perturbation.
    pub vat_epsilon: f64,
    /// Step used when probing for the adversarial direction.
    pub vat_xi: f64,
    pub vat_power_iters: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta: 4.0,
            gamma: 1.0,
            vat_epsilon: 1.0,
            vat_xi: 10.0,
            vat_power_iters: 1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        for (name, v) in [("vat_epsilon", self.vat_epsilon), ("vat_xi", self.vat_xi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.vat_power_iters == 0 {
            return Err(Error::Config("vat_power_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_batch(probs: &ArrayView2<f64>) -> Result<()> {
    if probs.nrows() == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    Ok(())
}

fn ln_floor(v: f64) -> f64 {
    v.max(PROB_FLOOR).ln()
}

/// Mean row entropy minus entropy of the mean row.
pub fn entropy_terms(probs: ArrayView2<f64>) -> Result<f64> {
    check_batch(&probs)?;
    let n = probs.nrows() as f64;
    let mean_h = probs
        .rows()
        .into_iter()
        .map(|r| entropy_unchecked(r.iter().copied()))
        .sum::<f64>()
        / n;
    let p_bar = probs.mean_axis(Axis(0)).expect("non-empty batch");
    Ok(mean_h - entropy_unchecked(p_bar.iter().copied()))
}

/// `(1/n) sum_i h(p_i) - h(p_bar) + alpha * ||theta||^2`.
pub fn clustering_loss(probs: ArrayView2<f64>, params: &ModelParams, alpha: f64) -> Result<f64> {
    Ok(entropy_terms(probs)? + alpha * params.squared_norm())
}

/// Gradient of [`entropy_terms`] with respect to the probabilities:
/// `(ln p_bar_k - ln p_ik) / n`.
pub fn entropy_terms_grad(probs: ArrayView2<f64>) -> Array2<f64> {
    let n = probs.nrows() as f64;
    let log_bar = probs
        .mean_axis(Axis(0))
        .expect("non-empty batch")
        .mapv(ln_floor);
    let mut g = probs.mapv(|p| -ln_floor(p));
    g += &log_bar;
    g / n
}

fn check_labels(probs: &ArrayView2<f64>, fair: &[usize]) -> Result<()> {
    check_batch(probs)?;
    if fair.len() != probs.nrows() {
        return Err(Error::Domain(format!(
            "{} pseudo-labels for a batch of {}",
            fair.len(),
            probs.nrows()
        )));
    }
    if let Some(l) = fair.iter().find(|&&l| l >= probs.ncols()) {
        return Err(Error::Domain(format!(
            "pseudo-label {l} out of range for K = {}",
            probs.ncols()
        )));
    }
    Ok(())
}

/// Cross-entropy against the fair pseudo-labels, `-(1/n) sum_i ln p_i[y_i]`.
pub fn fairness_loss(probs: ArrayView2<f64>, fair: &[usize]) -> Result<f64> {
    check_labels(&probs, fair)?;
    let n = probs.nrows() as f64;
    Ok(-fair
        .iter()
        .enumerate()
        .map(|(i, &l)| ln_floor(probs[[i, l]]))
        .sum::<f64>()
        / n)
}

/// Logit gradient of [`fairness_loss`]: `(p - onehot) / n`.
pub fn fairness_grad_logits(probs: ArrayView2<f64>, fair: &[usize]) -> Array2<f64> {
    let n = probs.nrows() as f64;
    let mut g = probs.to_owned();
    for (i, &l) in fair.iter().enumerate() {
        g[[i, l]] -= 1.0;
    }
    g / n
}

/// `sum_i KL(p_i || p'_i)`; `p` is the fixed target.
pub fn augmentation_loss(probs: ArrayView2<f64>, perturbed: ArrayView2<f64>) -> Result<f64> {
    if probs.dim() != perturbed.dim() {
        return Err(Error::Domain(format!(
            "clean probabilities {:?} and perturbed {:?} differ in shape",
            probs.dim(),
            perturbed.dim()
        )));
    }
    let mut kl = 0.0;
    Zip::from(&probs).and(&perturbed).for_each(|&p, &q| {
        if p > 0.0 {
            kl += p * (ln_floor(p) - ln_floor(q));
        }
    });
    Ok(kl)
}

/// Logit gradient of [`augmentation_loss`] on the perturbed side: `p' - p`.
pub fn augmentation_grad_logits(probs: ArrayView2<f64>, perturbed: ArrayView2<f64>) -> Array2<f64> {
    &perturbed - &probs
}

/// `l_C + beta * l_Fair + gamma * l_Aug`.
///
/// With no pseudo-labels the fairness term is zero; with no perturbed
/// probabilities the augmentation term is zero.
pub fn total_loss(
    probs: ArrayView2<f64>,
    perturbed: Option<ArrayView2<f64>>,
    fair: Option<&[usize]>,
    params: &ModelParams,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(breakdown(probs, perturbed, fair, params, weights)?.total)
}

fn breakdown(
    probs: ArrayView2<f64>,
    perturbed: Option<ArrayView2<f64>>,
    fair: Option<&[usize]>,
    params: &ModelParams,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let clustering = clustering_loss(probs, params, weights.alpha)?;
    let fairness = fair
        .map(|f| fairness_loss(probs, f))
        .transpose()?
        .unwrap_or(0.0);
    let augmentation = perturbed
        .map(|q| augmentation_loss(probs, q))
        .transpose()?
        .unwrap_or(0.0);
    Ok(LossBreakdown {
        clustering,
        fairness,
        augmentation,
        total: clustering + weights.beta * fairness + weights.gamma * augmentation,
    })
}

/// Scales `v` to unit Euclidean norm; `None` if it is zero or not finite.
fn normalize(v: ArrayView1<f64>) -> Option<Array1<f64>> {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    let w = v.mapv(|x| x / scale);
    let norm = w.dot(&w).sqrt();
    Some(w / norm)
}

/// Uniformly random unit vector in `dim` dimensions.
pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let d = Array1::from_shape_simple_fn(dim, || rng.sample::<f64, _>(StandardNormal));
        if let Some(u) = normalize(d.view()) {
            return u;
        }
    }
}

/// Adversarial perturbations of norm `vat_epsilon`, one per row of `x`.
///
/// Each row starts from a random unit direction `d` and runs power
/// iterations `d <- normalize(grad_d KL(p(x) || p(x + xi d)))`, holding the
/// clean prediction fixed. A row whose gradient vanishes keeps its random
/// starting direction.
pub fn vat_perturbations<R: Rng + ?Sized>(
    params: &ModelParams,
    x: ArrayView2<f64>,
    clean: ArrayView2<f64>,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, dim) = x.dim();
    if clean.nrows() != n {
        return Err(Error::Domain(
            "clean probabilities do not match the batch".into(),
        ));
    }
    let seeds: Vec<Array1<f64>> = (0..n).map(|_| random_unit(dim, rng)).collect();
    let mut d = Array2::zeros((n, dim));
    for (mut row, s) in d.rows_mut().into_iter().zip(&seeds) {
        row.assign(s);
    }
    for _ in 0..weights.vat_power_iters {
        let probe = &x + &(&d * weights.vat_xi);
        let tape = params.record(probe.view())?;
        let dz = augmentation_grad_logits(clean, tape.probs().view());
        let g = params.input_gradient(&tape, &dz)?;
        for (i, mut row) in d.rows_mut().into_iter().enumerate() {
            match normalize(g.row(i)) {
                Some(u) => row.assign(&u),
                None => row.assign(&seeds[i]),
            }
        }
    }
    Ok(d * weights.vat_epsilon)
}

/// Single-instance form of [`vat_perturbations`].
pub fn vat_perturbation<R: Rng + ?Sized>(
    params: &ModelParams,
    x: ArrayView1<f64>,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let batch = x.insert_axis(Axis(0));
    let clean = params.forward(batch)?;
    let r = vat_perturbations(params, batch, clean.view(), weights, rng)?;
    Ok(r.row(0).to_owned())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub clustering: f64,
    pub fairness: f64,
    pub augmentation: f64,
    pub total: f64,
}

/// Loss and parameter gradient for one batch with a fixed perturbation.
///
/// `perturbation` is added to `x` for the augmentation term; the clean
/// prediction enters that term as a constant. The augmentation term is
/// skipped when `perturbation` is `None` or `gamma` is zero, the fairness
/// term when `fair` is `None` or `beta` is zero.
pub fn evaluate_objective(
    params: &ModelParams,
    x: ArrayView2<f64>,
    fair: Option<&[usize]>,
    perturbation: Option<ArrayView2<f64>>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let tape = params.record(x)?;
    let clean = tape.probs().clone();
    evaluate_with_tape(params, &tape, clean.view(), x, fair, perturbation, weights)
}

fn evaluate_with_tape(
    params: &ModelParams,
    tape: &Tape,
    target: ArrayView2<f64>,
    x: ArrayView2<f64>,
    fair: Option<&[usize]>,
    perturbation: Option<ArrayView2<f64>>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradientSet)> {
    let probs = tape.probs().view();
    let fair = fair.filter(|_| weights.beta > 0.0);
    if let Some(f) = fair {
        check_labels(&probs, f)?;
    }
    let mut dz = softmax_backward(tape.probs(), &entropy_terms_grad(probs));
    if let Some(f) = fair {
        dz.scaled_add(weights.beta, &fairness_grad_logits(probs, f));
    }
    let (mut grads, _) = params.backward(tape, &dz)?;
    grads.add_scaled_params(2.0 * weights.alpha, params);

    let mut perturbed_probs = None;
    if let Some(r) = perturbation.filter(|_| weights.gamma > 0.0) {
        if r.dim() != x.dim() {
            return Err(Error::Domain(
                "perturbation shape does not match the batch".into(),
            ));
        }
        let shifted = &x + &r;
        let ptape = params.record(shifted.view())?;
        let dzp = augmentation_grad_logits(target, ptape.probs().view()) * weights.gamma;
        let (g_aug, _) = params.backward(&ptape, &dzp)?;
        grads.add_scaled(1.0, &g_aug);
        perturbed_probs = Some(ptape.probs().clone());
    }

    let mut losses = breakdown(probs, None, fair, params, weights)?;
    if let Some(q) = &perturbed_probs {
        losses.augmentation = augmentation_loss(target, q.view())?;
        losses.total += weights.gamma * losses.augmentation;
    }
    if !losses.total.is_finite() {
        return Err(Error::NonFinite {
            node: "total loss".into(),
        });
    }
    Ok((losses, grads))
}

/// Loss and gradient for one batch, drawing the adversarial perturbation
/// from `rng` when `gamma > 0`.
pub fn batch_objective<R: Rng + ?Sized>(
    params: &ModelParams,
    x: ArrayView2<f64>,
    fair: Option<&[usize]>,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<(LossBreakdown, GradientSet)> {
    let tape = params.record(x)?;
    let clean = tape.probs().clone();
    let r = if weights.gamma > 0.0 {
        Some(vat_perturbations(params, x, clean.view(), weights, rng)?)
    } else {
        None
    };
    evaluate_with_tape(
        params,
        &tape,
        clean.view(),
        x,
        fair,
        r.as_ref().map(|r| r.view()),
        weights,
    )
}
