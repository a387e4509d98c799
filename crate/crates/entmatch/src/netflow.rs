//! Minimum-cost flow over directed graphs with integer capacities and costs.
//!
//! Successive shortest augmenting paths with node potentials; shortest paths
//! are found with Dijkstra on reduced costs, so every augmentation is exact
//! integer arithmetic and the returned flow is an integral optimum.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Per-entry cap on integerized costs, leaving headroom for penalty arcs
/// and path sums inside the solver.
const MAX_SCALED_COST: f64 = (1i64 << 40) as f64;

const INF: i128 = i128::MAX / 4;

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: i64,
    pub cost: i64,
}

/// A directed flow network. Positive supply injects flow at a node,
/// negative supply demands it; supplies must sum to zero.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    supplies: Vec<i64>,
    arcs: Vec<Arc>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        FlowNetwork {
            supplies: vec![0; num_nodes],
            arcs: Vec::new(),
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.supplies.push(0);
        self.supplies.len() - 1
    }

    pub fn set_supply(&mut self, node: usize, supply: i64) {
        self.supplies[node] = supply;
    }

    /// Adds a directed arc and returns its index, used later to read back flow.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: i64, cost: i64) -> usize {
        assert!(from < self.supplies.len() && to < self.supplies.len());
        self.arcs.push(Arc {
            from,
            to,
            capacity,
            cost,
        });
        self.arcs.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.supplies.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Plain-text arc-list dump: one `supply` line per nonzero node and one
    /// `arc` line per arc, for debugging network constructions.
    pub fn to_arc_list(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.supplies.iter().enumerate() {
            if *s != 0 {
                writeln!(out, "supply {i} {s}").unwrap();
            }
        }
        for a in &self.arcs {
            writeln!(out, "arc {} {} cap {} cost {}", a.from, a.to, a.capacity, a.cost).unwrap();
        }
        out
    }
}

/// An integral flow together with its total cost.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Flow on each arc, indexed as the arcs were added.
    pub flows: Vec<i64>,
    pub total_cost: i64,
    /// False when the supplies cannot be routed to the demands.
    pub feasible: bool,
}

struct Residual {
    // edges stored as twin pairs: forward at 2i, reverse at 2i+1
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Residual {
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, from: usize, to: usize, cap: i64, cost: i64) {
        let e = self.to.len();
        self.to.push(to);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[from].push(e);
        self.to.push(from);
        self.cap.push(0);
        self.cost.push(-cost);
        self.adj[to].push(e + 1);
    }

    fn tail(&self, e: usize) -> usize {
        self.to[e ^ 1]
    }
}

/// Solves for a minimum-cost flow routing all supplies to all demands.
///
/// Returns `feasible = false` when the demands cannot all be met; a partial
/// routing is never reported as a solution.
pub fn solve_mcf(net: &FlowNetwork) -> Result<FlowSolution> {
    let total: i64 = net.supplies.iter().sum();
    if total != 0 {
        return Err(Error::UnbalancedSupplies { total });
    }
    for (index, arc) in net.arcs.iter().enumerate() {
        if arc.capacity < 0 {
            return Err(Error::NegativeCapacity {
                index,
                capacity: arc.capacity,
            });
        }
    }

    let n = net.num_nodes();
    let source = n;
    let sink = n + 1;
    let mut res = Residual::new(n + 2);
    for arc in &net.arcs {
        res.push(arc.from, arc.to, arc.capacity, arc.cost);
    }
    let mut required = 0i64;
    for (i, &s) in net.supplies.iter().enumerate() {
        if s > 0 {
            res.push(source, i, s, 0);
            required += s;
        } else if s < 0 {
            res.push(i, sink, -s, 0);
        }
    }

    let nn = n + 2;
    let mut potential = vec![0i128; nn];
    if net.arcs.iter().any(|a| a.cost < 0) {
        bellman_ford_potentials(&res, &mut potential);
    }

    let mut dist = vec![INF; nn];
    let mut parent = vec![usize::MAX; nn];
    let mut shipped = 0i64;
    while shipped < required {
        // Dijkstra on reduced costs; heap ordered by (distance, node) so
        // equal-cost paths resolve toward lower node indices.
        dist.fill(INF);
        parent.fill(usize::MAX);
        dist[source] = 0;
        let mut heap: BinaryHeap<Reverse<(i128, usize)>> = BinaryHeap::new();
        heap.push(Reverse((0, source)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &res.adj[u] {
                if res.cap[e] <= 0 {
                    continue;
                }
                let v = res.to[e];
                let nd = d + res.cost[e] as i128 + potential[u] - potential[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = e;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        if dist[sink] >= INF {
            break;
        }
        for v in 0..nn {
            if dist[v] < INF {
                potential[v] += dist[v];
            }
        }
        // bottleneck along the augmenting path
        let mut push = i64::MAX;
        let mut v = sink;
        while v != source {
            let e = parent[v];
            push = push.min(res.cap[e]);
            v = res.tail(e);
        }
        let mut v = sink;
        while v != source {
            let e = parent[v];
            res.cap[e] -= push;
            res.cap[e ^ 1] += push;
            v = res.tail(e);
        }
        shipped += push;
    }

    let feasible = shipped == required;
    let mut flows = vec![0i64; net.arcs.len()];
    let mut total_cost: i128 = 0;
    for (i, arc) in net.arcs.iter().enumerate() {
        let f = res.cap[2 * i + 1]; // reverse capacity equals flow pushed
        flows[i] = f;
        total_cost += f as i128 * arc.cost as i128;
    }
    if feasible {
        debug_assert!(residual_is_optimal(&res), "residual graph has a negative cycle");
    }
    let total_cost = i64::try_from(total_cost).map_err(|_| Error::CostOverflow {
        scaled: total_cost as f64,
    })?;
    Ok(FlowSolution {
        flows,
        total_cost,
        feasible,
    })
}

fn bellman_ford_potentials(res: &Residual, potential: &mut [i128]) {
    let n = potential.len();
    for _ in 0..n {
        let mut changed = false;
        for e in 0..res.to.len() {
            if res.cap[e] <= 0 {
                continue;
            }
            let u = res.tail(e);
            let v = res.to[e];
            let nd = potential[u] + res.cost[e] as i128;
            if nd < potential[v] {
                potential[v] = nd;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Optimality certificate: a feasible flow is minimum-cost iff the residual
/// graph admits consistent potentials, i.e. contains no negative-cost cycle.
/// As a corollary every arc carrying flow has reduced cost <= 0.
#[cfg(debug_assertions)]
fn residual_is_optimal(res: &Residual) -> bool {
    let n = res.adj.len();
    let mut pot = vec![0i128; n];
    for round in 0..=n {
        let mut changed = false;
        for e in 0..res.to.len() {
            if res.cap[e] <= 0 {
                continue;
            }
            let u = res.tail(e);
            let v = res.to[e];
            let nd = pot[u] + res.cost[e] as i128;
            if nd < pot[v] {
                pot[v] = nd;
                changed = true;
            }
        }
        if !changed {
            // flow > 0 on a forward edge leaves a reverse residual edge, so
            // convergence here forces cost + pot[u] - pot[v] <= 0 on it
            for e in (0..res.to.len()).step_by(2) {
                let flow = res.cap[e ^ 1];
                if flow > 0 {
                    let u = res.tail(e);
                    let v = res.to[e];
                    if res.cost[e] as i128 + pot[u] - pot[v] > 0 {
                        return false;
                    }
                }
            }
            return true;
        }
        if round == n {
            return false; // still relaxing after n rounds: negative cycle
        }
    }
    true
}

#[cfg(not(debug_assertions))]
fn residual_is_optimal(_res: &Residual) -> bool {
    true
}

/// Rounds a nonnegative real matrix to integers at the given scale
/// (cost = round(entry * scale)), refusing entries that would overflow
/// the solver's cost range.
pub fn integerize(d: &[Vec<f64>], scale: i64) -> Result<Vec<Vec<i64>>> {
    let mut out = Vec::with_capacity(d.len());
    for row in d {
        let mut r = Vec::with_capacity(row.len());
        for &entry in row {
            debug_assert!(entry.is_finite() && entry >= 0.0);
            let scaled = entry * scale as f64;
            if !scaled.is_finite() || scaled.abs() > MAX_SCALED_COST {
                return Err(Error::CostOverflow { scaled });
            }
            r.push(scaled.round() as i64);
        }
        out.push(r);
    }
    Ok(out)
}
