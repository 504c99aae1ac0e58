//! Integral min-cost flow with arc lower bounds.
//!
//! Successive shortest paths: lower bounds are removed by pre-routing them and
//! adjusting node imbalances, a super source/sink pair absorbs the imbalances,
//! and Dijkstra on reduced costs (Johnson potentials) finds each augmenting
//! path. Capacities are integers, so every flow value stays integral.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Infeasibility, Result};

/// Reduced costs above `-COST_TOL` are treated as zero.
const COST_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    pub capacity: i64,
    pub cost: f64,
}

/// Directed network with per-node supply (positive) or demand (negative).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowNetwork {
    supply: Vec<i64>,
    arcs: Vec<FlowArc>,
}

impl FlowNetwork {
    pub fn with_nodes(n: usize) -> Self {
        Self {
            supply: vec![0; n],
            arcs: Vec::new(),
        }
    }

    pub fn add_node(&mut self, supply: i64) -> usize {
        self.supply.push(supply);
        self.supply.len() - 1
    }

    pub fn set_supply(&mut self, node: usize, supply: i64) {
        self.supply[node] = supply;
    }

    pub fn add_arc(
        &mut self,
        from: usize,
        to: usize,
        lower: i64,
        capacity: i64,
        cost: f64,
    ) -> usize {
        self.arcs.push(FlowArc {
            from,
            to,
            lower,
            capacity,
            cost,
        });
        self.arcs.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.supply.len()
    }

    pub fn arcs(&self) -> &[FlowArc] {
        &self.arcs
    }

    pub fn arcs_mut(&mut self) -> &mut [FlowArc] {
        &mut self.arcs
    }

    pub fn supply(&self) -> &[i64] {
        &self.supply
    }

    /// Sum of positive supplies.
    pub fn total_supply(&self) -> i64 {
        self.supply.iter().filter(|s| **s > 0).sum()
    }

    /// Cost of an arbitrary flow vector under this network's arc costs.
    pub fn cost_of(&self, flow: &[i64]) -> f64 {
        self.arcs
            .iter()
            .zip(flow)
            .map(|(a, &f)| f as f64 * a.cost)
            .sum()
    }

    /// Checks bounds and conservation for a candidate flow.
    pub fn is_feasible(&self, flow: &[i64]) -> bool {
        if flow.len() != self.arcs.len() {
            return false;
        }
        let mut balance = self.supply.clone();
        for (a, &f) in self.arcs.iter().zip(flow) {
            if f < a.lower || f > a.capacity {
                return false;
            }
            balance[a.from] -= f;
            balance[a.to] += f;
        }
        balance.iter().all(|b| *b == 0)
    }

    fn validate(&self) -> Result<()> {
        let total: i64 = self.supply.iter().sum();
        if total != 0 {
            return Err(Error::Domain(format!(
                "supplies do not balance (net {total})"
            )));
        }
        let n = self.num_nodes();
        for (i, a) in self.arcs.iter().enumerate() {
            if a.from >= n || a.to >= n {
                return Err(Error::Domain(format!("arc {i} references a missing node")));
            }
            if a.lower < 0 || a.lower > a.capacity {
                return Err(Error::Domain(format!(
                    "arc {i} has bounds [{}, {}]",
                    a.lower, a.capacity
                )));
            }
            if !a.cost.is_finite() {
                return Err(Error::NonFinite {
                    node: format!("cost of arc {i}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution {
    /// Flow on each arc, in the network's arc order.
    pub flow: Vec<i64>,
    pub cost: f64,
}

struct Residual {
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Self {
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    /// Adds an edge and its reverse twin; returns the forward edge id.
    fn add(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        let id = self.to.len();
        self.to.extend([v, u]);
        self.cap.extend([cap, 0]);
        self.cost.extend([cost, -cost]);
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
        id
    }
}

#[derive(PartialEq)]
struct Queued {
    dist: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost feasible integral flow.
///
/// The network must not contain a negative-cost cycle of positive capacity.
pub fn solve_min_cost_flow(net: &FlowNetwork) -> Result<FlowSolution> {
    net.validate()?;
    let n = net.num_nodes();
    let (source, sink) = (n, n + 1);
    let mut res = Residual::new(n + 2);

    let mut excess = net.supply.clone();
    let mut edge_of_arc = Vec::with_capacity(net.arcs.len());
    for a in &net.arcs {
        excess[a.from] -= a.lower;
        excess[a.to] += a.lower;
        edge_of_arc.push(res.add(a.from, a.to, a.capacity - a.lower, a.cost));
    }
    let mut required = 0;
    for (v, &e) in excess.iter().enumerate() {
        if e > 0 {
            res.add(source, v, e, 0.0);
            required += e;
        } else if e < 0 {
            res.add(v, sink, -e, 0.0);
        }
    }

    let mut potential = initial_potentials(&res, source)?;
    let nv = n + 2;
    let mut dist = vec![f64::INFINITY; nv];
    let mut prev = vec![usize::MAX; nv];
    let mut heap = BinaryHeap::new();
    let mut routed = 0;

    while routed < required {
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        dist[source] = 0.0;
        heap.push(Queued {
            dist: 0.0,
            node: source,
        });
        while let Some(Queued { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == sink {
                break;
            }
            for &e in &res.adj[u] {
                if res.cap[e] <= 0 {
                    continue;
                }
                let v = res.to[e];
                let mut rc = res.cost[e] + potential[u] - potential[v];
                if rc < 0.0 {
                    debug_assert!(rc > -1e-6, "reduced cost {rc} is far below zero");
                    rc = 0.0;
                }
                let nd = d + rc;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = e;
                    heap.push(Queued { dist: nd, node: v });
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Infeasible(Infeasibility::Network {
                routed,
                required,
            }));
        }
        // nodes not settled before the sink get the sink's distance, which
        // keeps every residual reduced cost non-negative
        let reach = dist[sink];
        for v in 0..nv {
            potential[v] += dist[v].min(reach);
        }
        heap.clear();
        let mut push = required - routed;
        let mut v = sink;
        while v != source {
            let e = prev[v];
            push = push.min(res.cap[e]);
            v = res.to[e ^ 1];
        }
        let mut v = sink;
        while v != source {
            let e = prev[v];
            res.cap[e] -= push;
            res.cap[e ^ 1] += push;
            v = res.to[e ^ 1];
        }
        routed += push;
    }

    let flow: Vec<i64> = net
        .arcs
        .iter()
        .zip(&edge_of_arc)
        .map(|(a, &e)| a.lower + (a.capacity - a.lower - res.cap[e]))
        .collect();
    let cost = net.cost_of(&flow);
    Ok(FlowSolution { flow, cost })
}

/// Shortest-path distances from `source` when some residual cost is
/// negative (queue-based Bellman-Ford); all zeros otherwise.
fn initial_potentials(res: &Residual, source: usize) -> Result<Vec<f64>> {
    let nv = res.adj.len();
    let negative = (0..res.to.len()).any(|e| res.cap[e] > 0 && res.cost[e] < 0.0);
    if !negative {
        return Ok(vec![0.0; nv]);
    }
    let mut dist = vec![f64::INFINITY; nv];
    let mut in_queue = vec![false; nv];
    let mut relaxations = vec![0usize; nv];
    let mut queue = VecDeque::new();
    dist[source] = 0.0;
    queue.push_back(source);
    in_queue[source] = true;
    while let Some(u) = queue.pop_front() {
        in_queue[u] = false;
        for &e in &res.adj[u] {
            if res.cap[e] <= 0 {
                continue;
            }
            let v = res.to[e];
            let nd = dist[u] + res.cost[e];
            if nd < dist[v] - COST_TOL {
                dist[v] = nd;
                relaxations[v] += 1;
                if relaxations[v] > nv {
                    return Err(Error::Domain("network has a negative-cost cycle".into()));
                }
                if !in_queue[v] {
                    in_queue[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(dist
        .into_iter()
        .map(|d| if d.is_finite() { d } else { 0.0 })
        .collect())
}
