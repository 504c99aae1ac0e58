use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::flow::{solve_min_cost_flow, FlowNetwork};
use super::types::{GroupMembership, HardAssignment, SoftAssignment};
use crate::error::{Error, Infeasibility, Result};

/// Slack when turning real bounds into integers, so that e.g.
/// `(0.12 - 0.02) * 100` still rounds up to 10.
const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum QuotaMode {
    /// Every cluster mirrors the population proportions (after rounding).
    Exact,
    /// In-cluster proportions may deviate from the population by `epsilon`.
    Relaxed { epsilon: f64 },
}

/// Integral per-(group, cluster) count bounds. `lower`/`upper` are `T x K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotaPlan {
    pub cluster_sizes: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub lower: Array2<usize>,
    pub upper: Array2<usize>,
    pub mode: QuotaMode,
}

impl QuotaPlan {
    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn t(&self) -> usize {
        self.group_sizes.len()
    }

    /// Checks the aggregate conditions every feasible plan must meet.
    pub fn check_feasible(&self) -> Result<()> {
        for t in 0..self.t() {
            for j in 0..self.k() {
                let (lower, upper) = (self.lower[[t, j]], self.upper[[t, j]]);
                if lower > upper {
                    return Err(Error::Infeasible(Infeasibility::EmptyCell {
                        group: t,
                        cluster: j,
                        lower,
                        upper,
                    }));
                }
            }
        }
        for (j, &size) in self.cluster_sizes.iter().enumerate() {
            let lower_sum = self.lower.column(j).sum();
            let upper_sum = self.upper.column(j).sum();
            if lower_sum > size || size > upper_sum {
                return Err(Error::Infeasible(Infeasibility::Cluster {
                    cluster: j,
                    lower_sum,
                    size,
                    upper_sum,
                }));
            }
        }
        for (t, &size) in self.group_sizes.iter().enumerate() {
            let lower_sum = self.lower.row(t).sum();
            let upper_sum = self.upper.row(t).sum();
            if lower_sum > size || size > upper_sum {
                return Err(Error::Infeasible(Infeasibility::Group {
                    group: t,
                    lower_sum,
                    size,
                    upper_sum,
                }));
            }
        }
        Ok(())
    }

    /// Whether a `T x K` count matrix respects every bound.
    pub fn admits(&self, counts: &Array2<usize>) -> bool {
        counts.dim() == self.lower.dim()
            && counts
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(c, (l, u))| l <= c && c <= u)
    }
}

/// Per-row argmax; ties go to the lowest cluster index.
pub fn round_assignment(y: &SoftAssignment) -> HardAssignment {
    let labels = y
        .view()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    HardAssignment::new(labels, y.k()).expect("argmax is in range")
}

/// Per-(group, cluster) count bounds for the given cluster sizes.
///
/// Exact mode rounds the targets `|C_j| * rho_t` to integers that keep every
/// cluster total and every group total, minimizing the total absolute
/// rounding error. Relaxed mode allows `[rho_t - eps, rho_t + eps]`.
pub fn plan_quotas(
    cluster_sizes: &[usize],
    membership: &GroupMembership,
    relax: Option<f64>,
) -> Result<QuotaPlan> {
    let n: usize = cluster_sizes.iter().sum();
    if n != membership.n() {
        return Err(Error::Domain(format!(
            "cluster sizes sum to {n}, but there are {} instances",
            membership.n()
        )));
    }
    let plan = match relax {
        None => {
            let counts = controlled_rounding(cluster_sizes, membership.sizes())?;
            QuotaPlan {
                cluster_sizes: cluster_sizes.to_vec(),
                group_sizes: membership.sizes().to_vec(),
                lower: counts.clone(),
                upper: counts,
                mode: QuotaMode::Exact,
            }
        }
        Some(eps) => {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Domain(format!(
                    "relaxation {eps} must lie in [0, 1)"
                )));
            }
            let rho = membership.proportions();
            let (t, k) = (membership.t(), cluster_sizes.len());
            let mut lower = Array2::zeros((t, k));
            let mut upper = Array2::zeros((t, k));
            for g in 0..t {
                for (j, &size) in cluster_sizes.iter().enumerate() {
                    let c = size as f64;
                    let lo = ((rho[g] - eps) * c - BOUND_TOL).ceil().max(0.0);
                    let hi = ((rho[g] + eps) * c + BOUND_TOL).floor().min(c);
                    lower[[g, j]] = lo as usize;
                    upper[[g, j]] = hi.max(0.0) as usize;
                }
            }
            QuotaPlan {
                cluster_sizes: cluster_sizes.to_vec(),
                group_sizes: membership.sizes().to_vec(),
                lower,
                upper,
                mode: QuotaMode::Relaxed { epsilon: eps },
            }
        }
    };
    plan.check_feasible()?;
    Ok(plan)
}

/// Integer `T x K` matrix with row sums `group_sizes` and column sums
/// `cluster_sizes` closest (in L1) to the proportional targets
/// `cluster_sizes[j] * group_sizes[t] / N`.
///
/// Solved as a min-cost flow from clusters to groups whose per-cell cost
/// is the convex piecewise-linear `|q - target|`: slope -1 up to the floor,
/// `1 - 2 frac` for the step to the ceiling, +1 beyond.
pub fn controlled_rounding(
    cluster_sizes: &[usize],
    group_sizes: &[usize],
) -> Result<Array2<usize>> {
    let n: usize = cluster_sizes.iter().sum();
    if n != group_sizes.iter().sum::<usize>() {
        return Err(Error::Domain("cluster and group totals differ".into()));
    }
    let (k, t) = (cluster_sizes.len(), group_sizes.len());
    let mut counts = Array2::zeros((t, k));
    if n == 0 {
        return Ok(counts);
    }
    let mut net = FlowNetwork::with_nodes(k + t);
    for (j, &c) in cluster_sizes.iter().enumerate() {
        net.set_supply(j, c as i64);
    }
    for (g, &s) in group_sizes.iter().enumerate() {
        net.set_supply(k + g, -(s as i64));
    }
    let mut cells = Vec::with_capacity(k * t);
    for (j, &c) in cluster_sizes.iter().enumerate() {
        for (g, &s) in group_sizes.iter().enumerate() {
            let numer = c * s;
            let (floor, rem) = (numer / n, numer % n);
            let mut arcs = Vec::with_capacity(3);
            if floor > 0 {
                arcs.push(net.add_arc(j, k + g, 0, floor as i64, -1.0));
            }
            if rem > 0 {
                let frac = rem as f64 / n as f64;
                arcs.push(net.add_arc(j, k + g, 0, 1, 1.0 - 2.0 * frac));
            }
            arcs.push(net.add_arc(j, k + g, 0, c as i64, 1.0));
            cells.push((g, j, arcs));
        }
    }
    let sol = solve_min_cost_flow(&net)?;
    for (g, j, arcs) in cells {
        counts[[g, j]] = arcs.iter().map(|&a| sol.flow[a] as usize).sum();
    }
    Ok(counts)
}
