//! Browser bindings: every operation takes and returns a JSON string.

use fairdc::dataio::{BlobSpec, Dataset};
use fairdc::fairsolve::solve_fair_assignment;
use fairdc::metrics::{balance, fairness, MetricsReport};
use fairdc::trainer::{Phase, TrainConfig, Trainer};
use fairdc::{GroupMembership, SoftAssignment};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct Points {
    pub x: Vec<Vec<f64>>,
    pub groups: Vec<usize>,
    pub labels: Vec<usize>,
    pub optimal_balance: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub data: BlobSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Serialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub refine: bool,
    pub loss: f64,
    pub balance: f64,
    pub accuracy: f64,
}

#[derive(Serialize)]
pub struct TrainResponse {
    pub points: Points,
    pub labels: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub trace: Vec<EpochPoint>,
    pub pretrained_probs: Vec<Vec<f64>>,
    pub metrics: MetricsReport,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignRequest {
    pub probs: Vec<Vec<f64>>,
    pub groups: Vec<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Serialize)]
pub struct AssignResponse {
    pub labels: Vec<usize>,
    pub objective: f64,
    pub moved: usize,
    pub balance: f64,
    pub fairness: f64,
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn points(data: &Dataset) -> Points {
    let m = data.membership.as_ref().expect("blobs carry membership");
    Points {
        x: data
            .features
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        groups: m.groups().to_vec(),
        labels: data.labels.clone().unwrap_or_default(),
        optimal_balance: m.optimal_balance(),
    }
}

fn rows(s: &SoftAssignment) -> Vec<Vec<f64>> {
    s.view().rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn generate(request: &str) -> Result<String, String> {
    let spec: BlobSpec = serde_json::from_str(request).map_err(fail)?;
    let data = spec.generate().map_err(fail)?;
    serde_json::to_string(&points(&data)).map_err(fail)
}

pub fn train(request: &str) -> Result<String, String> {
    let req: TrainRequest = serde_json::from_str(request).map_err(fail)?;
    req.train.validate().map_err(fail)?;
    let data = req.data.generate().map_err(fail)?;
    let mut trainer = Trainer::new(req.train.clone(), data.d()).map_err(fail)?;
    trainer.pretrain(&data).map_err(fail)?;
    let pretrained = trainer.predict(data.features.view()).map_err(fail)?;
    trainer.refine(&data).map_err(fail)?;
    let pred = trainer.predict(data.features.view()).map_err(fail)?;
    let metrics = MetricsReport::evaluate(
        &pred.hard,
        data.membership.as_ref().unwrap(),
        data.labels.as_deref(),
        req.train.nmi_norm,
    )
    .map_err(fail)?;
    let trace = trainer
        .trace()
        .epochs
        .iter()
        .map(|r| {
            let m = r.metrics.as_ref();
            EpochPoint {
                epoch: r.epoch,
                refine: r.phase == Phase::Refine,
                loss: r.loss.total,
                balance: m.map_or(0.0, |m| m.balance),
                accuracy: m.and_then(|m| m.accuracy).unwrap_or(0.0),
            }
        })
        .collect();
    let response = TrainResponse {
        points: points(&data),
        labels: pred.hard.labels().to_vec(),
        probs: rows(&pred.soft),
        trace,
        pretrained_probs: rows(&pretrained.soft),
        metrics,
    };
    serde_json::to_string(&response).map_err(fail)
}

pub fn assign(request: &str) -> Result<String, String> {
    let req: AssignRequest = serde_json::from_str(request).map_err(fail)?;
    let y = SoftAssignment::from_rows(&req.probs).map_err(fail)?;
    let t = req.groups.iter().max().map_or(0, |g| g + 1);
    let m = GroupMembership::new(req.groups, t).map_err(fail)?;
    if m.n() != y.n() {
        return Err(format!("{} probability rows but {} groups", y.n(), m.n()));
    }
    let sol = solve_fair_assignment(&y, &m, req.epsilon).map_err(fail)?;
    let argmax = fairdc::fairsolve::round_assignment(&y);
    let moved = argmax
        .labels()
        .iter()
        .zip(sol.assignment.labels())
        .filter(|(a, b)| a != b)
        .count();
    let response = AssignResponse {
        labels: sol.assignment.labels().to_vec(),
        objective: sol.objective,
        moved,
        balance: balance(&sol.assignment, &m).map_err(fail)?.overall,
        fairness: fairness(&sol.assignment, &m).map_err(fail)?.overall,
    };
    serde_json::to_string(&response).map_err(fail)
}

/// Biased blobs: `BlobSpec` JSON in, points with groups and labels out.
#[wasm_bindgen(js_name = generateBlobs)]
pub fn generate_blobs(request: &str) -> Result<String, JsError> {
    generate(request).map_err(|e| JsError::new(&e))
}

/// Pretrains and fairly refines a network on generated blobs.
#[wasm_bindgen(js_name = trainBlobs)]
pub fn train_blobs(request: &str) -> Result<String, JsError> {
    train(request).map_err(|e| JsError::new(&e))
}

/// Fair hard assignment of probability rows under group quotas.
#[wasm_bindgen(js_name = fairAssign)]
pub fn fair_assign(request: &str) -> Result<String, JsError> {
    assign(request).map_err(|e| JsError::new(&e))
}
