use ndarray::Array2;

use super::flow::{solve_min_cost_flow, FlowNetwork};
use super::quota::{plan_quotas, round_assignment, QuotaPlan};
use super::types::{GroupMembership, HardAssignment, SoftAssignment};
use crate::error::{Error, Infeasibility, Result};

/// Largest instance count [`brute_force_assign`] will enumerate.
pub const BRUTE_FORCE_CAP: usize = 12;

/// Flow encoding of the minimum-change fair assignment problem.
///
/// Node layout: instances `0..N` (supply 1 each), then one node per
/// (group, cluster) pair, one per cluster, and a sink with demand `N`.
/// Arc layout: `N * K` instance arcs (instance-major), `T * K` quota arcs
/// (group-major), `K` cluster-size arcs.
#[derive(Clone, Debug)]
pub struct FairNetwork {
    pub network: FlowNetwork,
    n: usize,
    k: usize,
    t: usize,
}

impl FairNetwork {
    pub fn instance_arc(&self, i: usize, j: usize) -> usize {
        i * self.k + j
    }

    pub fn quota_arc(&self, t: usize, j: usize) -> usize {
        self.n * self.k + t * self.k + j
    }

    pub fn cluster_arc(&self, j: usize) -> usize {
        self.n * self.k + self.t * self.k + j
    }

    pub fn sink(&self) -> usize {
        self.network.num_nodes() - 1
    }

    /// The unique flow induced by a labeling.
    pub fn flow_of(&self, labels: &[usize], membership: &GroupMembership) -> Vec<i64> {
        let mut flow = vec![0; self.network.arcs().len()];
        for (i, &j) in labels.iter().enumerate() {
            flow[self.instance_arc(i, j)] = 1;
            flow[self.quota_arc(membership.group(i), j)] += 1;
            flow[self.cluster_arc(j)] += 1;
        }
        flow
    }

    /// Reads the chosen cluster of each instance off an integral flow.
    pub fn labels_of(&self, flow: &[i64]) -> Result<Vec<usize>> {
        (0..self.n)
            .map(|i| {
                let chosen: Vec<usize> = (0..self.k)
                    .filter(|&j| flow[self.instance_arc(i, j)] == 1)
                    .collect();
                match chosen.as_slice() {
                    [j] => Ok(*j),
                    _ => Err(Error::Domain(format!(
                        "instance {i} carries {} units of flow",
                        chosen.len()
                    ))),
                }
            })
            .collect()
    }
}

pub fn build_network(
    y: &SoftAssignment,
    membership: &GroupMembership,
    plan: &QuotaPlan,
) -> Result<FairNetwork> {
    let (n, k, t) = (y.n(), y.k(), membership.t());
    if membership.n() != n {
        return Err(Error::Domain(format!(
            "soft assignment has {n} rows, membership has {}",
            membership.n()
        )));
    }
    if plan.k() != k || plan.t() != t {
        return Err(Error::Domain(format!(
            "plan is {}x{} (groups x clusters), expected {t}x{k}",
            plan.t(),
            plan.k()
        )));
    }
    if plan.cluster_sizes.iter().sum::<usize>() != n {
        return Err(Error::Domain("plan cluster sizes do not sum to N".into()));
    }
    let quota_base = n;
    let cluster_base = n + t * k;
    let sink = cluster_base + k;
    let mut net = FlowNetwork::with_nodes(sink + 1);
    for i in 0..n {
        net.set_supply(i, 1);
    }
    net.set_supply(sink, -(n as i64));
    for i in 0..n {
        let g = membership.group(i);
        for j in 0..k {
            net.add_arc(i, quota_base + g * k + j, 0, 1, 1.0 - y.get(i, j));
        }
    }
    for g in 0..t {
        for j in 0..k {
            net.add_arc(
                quota_base + g * k + j,
                cluster_base + j,
                plan.lower[[g, j]] as i64,
                plan.upper[[g, j]] as i64,
                0.0,
            );
        }
    }
    for (j, &size) in plan.cluster_sizes.iter().enumerate() {
        net.add_arc(cluster_base + j, sink, size as i64, size as i64, 0.0);
    }
    Ok(FairNetwork {
        network: net,
        n,
        k,
        t,
    })
}

/// `sum_i (1 - y[i, labels[i]])`, accumulated in instance order.
pub fn assignment_cost(y: &SoftAssignment, labels: &[usize]) -> f64 {
    let mut cost = 0.0;
    for (i, &j) in labels.iter().enumerate() {
        cost += 1.0 - y.get(i, j);
    }
    cost
}

/// `T x K` matrix of group counts per cluster.
pub fn group_counts(labels: &[usize], membership: &GroupMembership, k: usize) -> Array2<usize> {
    let mut counts = Array2::zeros((membership.t(), k));
    for (i, &j) in labels.iter().enumerate() {
        counts[[membership.group(i), j]] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct FairSolution {
    pub assignment: HardAssignment,
    /// Total change `sum_i (1 - y[i, chosen])`.
    pub objective: f64,
    pub plan: QuotaPlan,
}

/// Minimum-change assignment meeting `plan`, via min-cost flow.
pub fn solve_with_plan(
    y: &SoftAssignment,
    membership: &GroupMembership,
    plan: &QuotaPlan,
) -> Result<FairSolution> {
    let fair = build_network(y, membership, plan)?;
    let flow = solve_min_cost_flow(&fair.network)?;
    let labels = fair.labels_of(&flow.flow)?;
    let objective = assignment_cost(y, &labels);
    Ok(FairSolution {
        assignment: HardAssignment::new(labels, y.k())?,
        objective,
        plan: plan.clone(),
    })
}

/// Rounds `y` to fix cluster sizes, plans quotas, and solves for the
/// fair assignment closest to `y`.
pub fn solve_fair_assignment(
    y: &SoftAssignment,
    membership: &GroupMembership,
    relax: Option<f64>,
) -> Result<FairSolution> {
    if y.n() != membership.n() {
        return Err(Error::Domain(format!(
            "soft assignment has {} rows, membership has {}",
            y.n(),
            membership.n()
        )));
    }
    let sizes = round_assignment(y).cluster_sizes();
    let plan = plan_quotas(&sizes, membership, relax)?;
    solve_with_plan(y, membership, &plan)
}

/// Exhaustive search over every labeling that satisfies `plan`.
///
/// Test oracle; refuses more than [`BRUTE_FORCE_CAP`] instances.
pub fn brute_force_assign(
    y: &SoftAssignment,
    membership: &GroupMembership,
    plan: &QuotaPlan,
) -> Result<FairSolution> {
    let (n, k) = (y.n(), y.k());
    if n > BRUTE_FORCE_CAP {
        return Err(Error::Refused(format!(
            "brute force is capped at {BRUTE_FORCE_CAP} instances, got {n}"
        )));
    }
    if membership.n() != n || plan.k() != k || plan.t() != membership.t() {
        return Err(Error::Domain(
            "shapes of y, membership, and plan disagree".into(),
        ));
    }
    let mut search = Search {
        y,
        membership,
        plan,
        labels: vec![0; n],
        counts: Array2::zeros((membership.t(), k)),
        sizes: vec![0; k],
        best: None,
    };
    search.visit(0, 0.0);
    match search.best {
        Some((labels, _)) => {
            let objective = assignment_cost(y, &labels);
            Ok(FairSolution {
                assignment: HardAssignment::new(labels, k)?,
                objective,
                plan: plan.clone(),
            })
        }
        None => Err(Error::Infeasible(Infeasibility::Network {
            routed: 0,
            required: n as i64,
        })),
    }
}

struct Search<'a> {
    y: &'a SoftAssignment,
    membership: &'a GroupMembership,
    plan: &'a QuotaPlan,
    labels: Vec<usize>,
    counts: Array2<usize>,
    sizes: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
}

impl Search<'_> {
    fn visit(&mut self, i: usize, cost: f64) {
        if i == self.labels.len() {
            let complete = self.sizes == self.plan.cluster_sizes && self.plan.admits(&self.counts);
            let better = self.best.as_ref().is_none_or(|(_, c)| cost < *c);
            if complete && better {
                self.best = Some((self.labels.clone(), cost));
            }
            return;
        }
        let g = self.membership.group(i);
        for j in 0..self.y.k() {
            if self.sizes[j] == self.plan.cluster_sizes[j]
                || self.counts[[g, j]] == self.plan.upper[[g, j]]
            {
                continue;
            }
            self.labels[i] = j;
            self.sizes[j] += 1;
            self.counts[[g, j]] += 1;
            self.visit(i + 1, cost + (1.0 - self.y.get(i, j)));
            self.sizes[j] -= 1;
            self.counts[[g, j]] -= 1;
        }
    }
}
