//! Fairness and clustering-quality measures.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairsolve::{solve_min_cost_flow, FlowNetwork, GroupMembership, HardAssignment};

/// Group counts per cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupComposition {
    /// `K x T`: `counts[[k, t]] = |C_k ∩ G_t|`.
    pub counts: Array2<usize>,
}

impl GroupComposition {
    pub fn new(assign: &HardAssignment, membership: &GroupMembership) -> Result<Self> {
        if assign.len() != membership.n() {
            return Err(Error::Domain(format!(
                "{} labels for {} instances",
                assign.len(),
                membership.n()
            )));
        }
        let mut counts = Array2::zeros((assign.k(), membership.t()));
        for (&k, &t) in assign.labels().iter().zip(membership.groups()) {
            counts[[k, t]] += 1;
        }
        Ok(Self { counts })
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.counts.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// `rho_t(k) = N_k^t / |C_k|`; zero for an empty cluster.
    pub fn proportions(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.counts.dim());
        for (k, row) in self.counts.rows().into_iter().enumerate() {
            let size = row.sum();
            if size > 0 {
                for (t, &c) in row.iter().enumerate() {
                    out[[k, t]] = c as f64 / size as f64;
                }
            }
        }
        out
    }

    /// Per-cluster `N_k^min / N_k^max`.
    pub fn cluster_balance(&self) -> Vec<f64> {
        self.counts
            .rows()
            .into_iter()
            .map(|r| {
                let min = *r.iter().min().unwrap();
                let max = *r.iter().max().unwrap();
                if min == 0 {
                    0.0
                } else {
                    min as f64 / max as f64
                }
            })
            .collect()
    }

    /// Per-cluster `min_t min(rho_t / rho_t(k), rho_t(k) / rho_t)`.
    pub fn cluster_fairness(&self) -> Vec<f64> {
        let groups = self.group_sizes();
        let n: usize = groups.iter().sum();
        let props = self.proportions();
        props
            .rows()
            .into_iter()
            .map(|r| {
                let mut f = 1.0f64;
                for (t, &rk) in r.iter().enumerate() {
                    let rho = groups[t] as f64 / n as f64;
                    if rho == 0.0 {
                        continue;
                    }
                    f = f.min(if rk == 0.0 {
                        0.0
                    } else {
                        (rho / rk).min(rk / rho)
                    });
                }
                f
            })
            .collect()
    }
}

fn minimum(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub overall: f64,
    pub per_cluster: Vec<f64>,
}

/// Overall balance (minimum over clusters) and the per-cluster values.
pub fn balance(assign: &HardAssignment, membership: &GroupMembership) -> Result<ClusterScores> {
    let per_cluster = GroupComposition::new(assign, membership)?.cluster_balance();
    Ok(ClusterScores {
        overall: minimum(&per_cluster),
        per_cluster,
    })
}

/// Overall fairness (minimum over clusters) and the per-cluster values.
pub fn fairness(assign: &HardAssignment, membership: &GroupMembership) -> Result<ClusterScores> {
    let per_cluster = GroupComposition::new(assign, membership)?.cluster_fairness();
    Ok(ClusterScores {
        overall: minimum(&per_cluster),
        per_cluster,
    })
}

/// `K x C` contingency table of clusters against classes.
pub fn contingency(assign: &HardAssignment, labels: &[usize]) -> Result<Array2<usize>> {
    if assign.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} cluster labels but {} class labels",
            assign.len(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = Array2::zeros((assign.k(), classes));
    for (&k, &c) in assign.labels().iter().zip(labels) {
        table[[k, c]] += 1;
    }
    Ok(table)
}

/// Largest total count over one-to-one cluster-to-class matchings.
pub fn best_matching(table: &Array2<usize>) -> Result<usize> {
    let m = table.nrows().max(table.ncols());
    if m == 0 {
        return Ok(0);
    }
    let mut net = FlowNetwork::with_nodes(2 * m);
    for r in 0..m {
        net.set_supply(r, 1);
        net.set_supply(m + r, -1);
    }
    for r in 0..m {
        for c in 0..m {
            let count = table.get((r, c)).copied().unwrap_or(0);
            net.add_arc(r, m + c, 0, 1, -(count as f64));
        }
    }
    let sol = solve_min_cost_flow(&net)?;
    let mut matched = 0;
    for (arc, &f) in net.arcs().iter().zip(&sol.flow) {
        if f == 1 {
            let (r, c) = (arc.from, arc.to - m);
            matched += table.get((r, c)).copied().unwrap_or(0);
        }
    }
    Ok(matched)
}

/// Fraction of instances whose cluster maps to their class under the best
/// one-to-one matching.
pub fn accuracy(assign: &HardAssignment, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Domain("accuracy of an empty assignment".into()));
    }
    let table = contingency(assign, labels)?;
    Ok(best_matching(&table)? as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    #[default]
    Arithmetic,
    Geometric,
}

/// Normalized mutual information between a clustering and a labeling.
///
/// Partitions that coincide up to relabeling score exactly 1. Otherwise a
/// vanishing normalizer (one side single-block) gives 0.
pub fn nmi(assign: &HardAssignment, labels: &[usize], norm: NmiNorm) -> Result<f64> {
    let table = contingency(assign, labels)?;
    Ok(nmi_from_table(&table, norm))
}

pub fn nmi_from_table(table: &Array2<usize>, norm: NmiNorm) -> f64 {
    let n: usize = table.sum();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let rows: Vec<f64> = table.rows().into_iter().map(|r| r.sum() as f64).collect();
    let cols: Vec<f64> = table
        .columns()
        .into_iter()
        .map(|c| c.sum() as f64)
        .collect();
    let h = |v: &[f64]| -> f64 {
        -v.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| (c / nf) * (c / nf).ln())
            .sum::<f64>()
    };
    let nonzero_rows = rows.iter().filter(|&&c| c > 0.0).count();
    let nonzero_cols = cols.iter().filter(|&&c| c > 0.0).count();
    let cells = table.iter().filter(|&&c| c > 0).count();
    let relabeling = cells == nonzero_rows && cells == nonzero_cols;
    if relabeling {
        return 1.0;
    }
    let (hu, hv) = (h(&rows), h(&cols));
    let mut mi = 0.0;
    for ((r, c), &count) in table.indexed_iter() {
        if count > 0 {
            let p = count as f64 / nf;
            mi += p * (p * nf * nf / (rows[r] * cols[c])).ln();
        }
    }
    let denom = match norm {
        NmiNorm::Arithmetic => (hu + hv) / 2.0,
        NmiNorm::Geometric => (hu * hv).sqrt(),
    };
    if denom <= 0.0 {
        return 0.0;
    }
    (mi / denom).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    pub balance: f64,
    pub fairness: f64,
    pub cluster_balance: Vec<f64>,
    pub cluster_fairness: Vec<f64>,
}

impl MetricsReport {
    /// Fairness metrics, plus accuracy and NMI when class labels are given.
    pub fn evaluate(
        assign: &HardAssignment,
        membership: &GroupMembership,
        labels: Option<&[usize]>,
        norm: NmiNorm,
    ) -> Result<Self> {
        let comp = GroupComposition::new(assign, membership)?;
        let cluster_balance = comp.cluster_balance();
        let cluster_fairness = comp.cluster_fairness();
        let (accuracy, nmi) = match labels {
            Some(l) => (Some(accuracy(assign, l)?), Some(nmi(assign, l, norm)?)),
            None => (None, None),
        };
        Ok(Self {
            epoch: None,
            accuracy,
            nmi,
            balance: minimum(&cluster_balance),
            fairness: minimum(&cluster_fairness),
            cluster_balance,
            cluster_fairness,
        })
    }
}
