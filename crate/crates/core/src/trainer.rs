//! Pretraining and fairness refinement of the clustering network.
//!
//! Pretraining minimizes `l_C + gamma * l_Aug` over shuffled minibatches.
//! Each refinement epoch first predicts on the whole dataset, solves for the
//! nearest fair hard assignment, then trains on `l_C + beta * l_Fair +
//! gamma * l_Aug` using that assignment as pseudo-labels. Refinement stops
//! once the network's own predictions are fair enough, or after
//! `max_refine_epochs`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::fairsolve::{
    group_counts, round_assignment, solve_fair_assignment, GroupMembership, HardAssignment,
    SoftAssignment,
};
use crate::metrics::{balance, GroupComposition, MetricsReport, NmiNorm};
use crate::objectives::{batch_objective, LossBreakdown, LossWeights};
use crate::tensornet::{Activation, AdamConfig, ModelParams, OptimizerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of clusters.
    pub k: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub pretrain_epochs: usize,
    pub max_refine_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    /// Allowed deviation of in-cluster group proportions; exact quotas when absent.
    pub fairness_relax: Option<f64>,
    /// Refinement stops once balance reaches `(1 - stop_tolerance)` of the optimum.
    pub stop_tolerance: f64,
    pub shuffle: bool,
    pub nmi_norm: NmiNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 2,
            hidden: vec![256, 256],
            activation: Activation::Relu,
            pretrain_epochs: 50,
            max_refine_epochs: 100,
            batch_size: 256,
            seed: 0,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            fairness_relax: None,
            stop_tolerance: 0.01,
            shuffle: true,
            nmi_norm: NmiNorm::Arithmetic,
        }
    }
}

impl TrainConfig {
    /// Every offending field, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k < 2 {
            out.push(format!("k must be at least 2, got {}", self.k));
        }
        if self.hidden.contains(&0) {
            out.push("hidden layer widths must be positive".into());
        }
        if self.batch_size < 2 {
            out.push(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if !(0.0..1.0).contains(&self.stop_tolerance) {
            out.push(format!(
                "stop_tolerance must lie in [0, 1), got {}",
                self.stop_tolerance
            ));
        }
        if let Some(eps) = self.fairness_relax {
            if !(0.0..1.0).contains(&eps) {
                out.push(format!("fairness_relax must lie in [0, 1), got {eps}"));
            }
        }
        if let Err(e) = self.weights.validate() {
            out.push(e.to_string());
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            out.push(format!(
                "adam.learning_rate must be positive, got {}",
                a.learning_rate
            ));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            out.push("adam.beta1 and adam.beta2 must lie in [0, 1)".into());
        }
        if !(a.epsilon > 0.0) {
            out.push(format!("adam.epsilon must be positive, got {}", a.epsilon));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Refine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// Zero-based count over both phases.
    pub epoch: usize,
    /// Batch-size weighted means over the epoch.
    pub loss: LossBreakdown,
    /// Measured on the network's predictions after the epoch.
    pub metrics: Option<MetricsReport>,
    /// Total change `sum_i (1 - y_i[chosen])` of this epoch's fair assignment.
    pub fair_objective: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub soft: SoftAssignment,
    pub hard: HardAssignment,
}

/// `balance(assign) >= (1 - delta) * |G_min| / |G_max|`.
pub fn stopping_check(assign: &HardAssignment, membership: &GroupMembership, delta: f64) -> bool {
    match balance(assign, membership) {
        Ok(b) => b.overall >= (1.0 - delta) * membership.optimal_balance(),
        Err(_) => false,
    }
}

/// Every non-empty cluster holds each group at a proportion within
/// `epsilon` of the population proportion, and no cluster is empty.
pub fn relaxed_stopping_check(
    assign: &HardAssignment,
    membership: &GroupMembership,
    epsilon: f64,
) -> bool {
    let Ok(comp) = GroupComposition::new(assign, membership) else {
        return false;
    };
    let rho = membership.proportions();
    let props = comp.proportions();
    comp.cluster_sizes().iter().all(|&s| s > 0)
        && props.rows().into_iter().all(|r| {
            r.iter()
                .zip(&rho)
                .all(|(p, q)| (p - q).abs() <= epsilon + 1e-12)
        })
}

pub struct Trainer {
    cfg: TrainConfig,
    params: ModelParams,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    trace: TrainTrace,
}

impl Trainer {
    /// Fresh network for `input_dim` features; all randomness comes from `cfg.seed`.
    pub fn new(cfg: TrainConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = ModelParams::init(input_dim, &cfg.hidden, cfg.k, cfg.activation, &mut rng)?;
        let opt = OptimizerState::new(&params, cfg.adam);
        Ok(Self {
            cfg,
            params,
            opt,
            rng,
            trace: TrainTrace::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn into_parts(self) -> (ModelParams, TrainTrace) {
        (self.params, self.trace)
    }

    /// Minibatch index sets for one epoch over `n` rows; a singleton tail joins the previous batch.
    pub fn batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut out: Vec<Vec<usize>> = order
            .chunks(self.cfg.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        if out.len() > 1 && out.last().unwrap().len() < 2 {
            let tail = out.pop().unwrap();
            out.last_mut().unwrap().extend(tail);
        }
        out
    }

    fn run_epoch(
        &mut self,
        x: ArrayView2<f64>,
        fair: Option<&[usize]>,
        weights: LossWeights,
    ) -> Result<LossBreakdown> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Domain("training needs at least two rows".into()));
        }
        let epoch = self.trace.epochs.len();
        let mut sum = LossBreakdown::default();
        for (b, idx) in self.batches(n).into_iter().enumerate() {
            let xb = x.select(Axis(0), &idx);
            let fb: Option<Vec<usize>> = fair.map(|f| idx.iter().map(|&i| f[i]).collect());
            let (loss, grads) = batch_objective(
                &self.params,
                xb.view(),
                fb.as_deref(),
                &weights,
                &mut self.rng,
            )
            .map_err(|e| e.context(format!("epoch {epoch}, batch {b}")))?;
            self.opt.step(&mut self.params, &grads)?;
            if !self.params.is_finite() {
                return Err(Error::NonFinite {
                    node: "parameters after update".into(),
                }
                .context(format!("epoch {epoch}, batch {b}")));
            }
            let w = idx.len() as f64 / n as f64;
            sum.clustering += w * loss.clustering;
            sum.fairness += w * loss.fairness;
            sum.augmentation += w * loss.augmentation;
            sum.total += w * loss.total;
        }
        Ok(sum)
    }

    fn measure(&self, data: &Dataset, hard: &HardAssignment) -> Result<Option<MetricsReport>> {
        let Some(m) = &data.membership else {
            return Ok(None);
        };
        let mut report =
            MetricsReport::evaluate(hard, m, data.labels.as_deref(), self.cfg.nmi_norm)?;
        report.epoch = Some(self.trace.epochs.len());
        Ok(Some(report))
    }

    /// One epoch on `l_C + gamma * l_Aug`.
    pub fn pretrain_epoch(&mut self, data: &Dataset) -> Result<&EpochRecord> {
        let weights = LossWeights {
            beta: 0.0,
            ..self.cfg.weights
        };
        let loss = self.run_epoch(data.features.view(), None, weights)?;
        let pred = self.predict(data.features.view())?;
        let metrics = self.measure(data, &pred.hard)?;
        self.trace.epochs.push(EpochRecord {
            phase: Phase::Pretrain,
            epoch: self.trace.epochs.len(),
            loss,
            metrics,
            fair_objective: None,
        });
        Ok(self.trace.epochs.last().unwrap())
    }

    pub fn pretrain(&mut self, data: &Dataset) -> Result<()> {
        for _ in 0..self.cfg.pretrain_epochs {
            let rec = self.pretrain_epoch(data)?;
            log::debug!("pretrain epoch {}: loss {:.6}", rec.epoch, rec.loss.total);
        }
        Ok(())
    }

    /// Fair assignment of the current predictions over the whole dataset.
    pub fn fair_targets(
        &self,
        x: ArrayView2<f64>,
        membership: &GroupMembership,
    ) -> Result<(HardAssignment, f64)> {
        let soft = self.predict(x)?.soft;
        let sol = solve_fair_assignment(&soft, membership, self.cfg.fairness_relax)?;
        let counts = group_counts(sol.assignment.labels(), membership, self.cfg.k);
        if !sol.plan.admits(&counts) || sol.assignment.cluster_sizes() != sol.plan.cluster_sizes {
            return Err(Error::Domain(
                "fair assignment violates its quota plan".into(),
            ));
        }
        Ok((sol.assignment, sol.objective))
    }

    /// One refinement epoch. Returns whether the stopping rule fired on the
    /// post-epoch predictions.
    pub fn refine_epoch(&mut self, data: &Dataset) -> Result<bool> {
        let membership = data
            .membership
            .as_ref()
            .ok_or_else(|| Error::Config("refinement needs protected-group membership".into()))?;
        let epoch = self.trace.epochs.len();
        let (fair, objective) = self
            .fair_targets(data.features.view(), membership)
            .map_err(|e| e.context(format!("epoch {epoch}: fair assignment")))?;
        let loss = self.run_epoch(data.features.view(), Some(fair.labels()), self.cfg.weights)?;
        let pred = self.predict(data.features.view())?;
        let metrics = self.measure(data, &pred.hard)?;
        self.trace.epochs.push(EpochRecord {
            phase: Phase::Refine,
            epoch,
            loss,
            metrics,
            fair_objective: Some(objective),
        });
        Ok(match self.cfg.fairness_relax {
            Some(eps) => relaxed_stopping_check(&pred.hard, membership, eps),
            None => stopping_check(&pred.hard, membership, self.cfg.stop_tolerance),
        })
    }

    /// Refines until the stopping rule fires; returns whether it did.
    pub fn refine(&mut self, data: &Dataset) -> Result<bool> {
        for _ in 0..self.cfg.max_refine_epochs {
            if self.refine_epoch(data)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Cluster probabilities and argmax labels; needs no group information.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Prediction> {
        predict(&self.params, x)
    }

    /// Last-hidden-layer activations.
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.params.embed(x)
    }
}

pub fn predict(params: &ModelParams, x: ArrayView2<f64>) -> Result<Prediction> {
    let soft = SoftAssignment::new(params.forward(x)?)?;
    let hard = round_assignment(&soft);
    Ok(Prediction { soft, hard })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: TrainTrace,
    pub prediction: Prediction,
    /// Whether refinement ended by the stopping rule rather than the epoch cap.
    pub converged: bool,
}

/// Pretraining followed by refinement (skipped when the dataset has no
/// group membership).
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    data.validate()?;
    if data.n() < cfg.k {
        return Err(Error::Config(format!(
            "{} rows cannot fill {} clusters",
            data.n(),
            cfg.k
        )));
    }
    let mut trainer = Trainer::new(cfg.clone(), data.d())?;
    trainer.pretrain(data)?;
    let converged = if data.membership.is_some() {
        trainer.refine(data)?
    } else {
        false
    };
    let prediction = trainer.predict(data.features.view())?;
    let (params, trace) = trainer.into_parts();
    Ok(TrainOutcome {
        params,
        trace,
        prediction,
        converged,
    })
}
