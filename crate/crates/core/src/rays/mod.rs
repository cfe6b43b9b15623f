//! Ray structure of a dual potential: the subgraph of edges the potential
//! saturates, its longest-path time coordinates, and the chain geometry the
//! transport follows.
//!
//! An edge is calibrated when `u(target) - u(source)` matches its weight
//! within the calibration tolerance. Over supercritical weights that
//! subgraph must be acyclic, so forward and backward longest traversal
//! times are plain DAG programs, and every calibrated edge can be covered
//! by maximal source-to-sink chains.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::cost::EdgeCosts;
use crate::error::{Error, Result};
use crate::geometry::DiscreteManifold;
use crate::selector::{extract_map, MASS_DUST};
use crate::solver::{DualPotential, Marginals, TransportPlan};

/// A saturated edge with its action-minimizing traversal time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CalibratedEdge {
    /// Edge id in the manifold.
    pub edge: usize,
    pub source: usize,
    pub target: usize,
    pub time: f64,
    /// Potential gain `u(target) - u(source)`.
    pub gain: f64,
}

/// The acyclic subgraph of calibrated edges, topologically ordered.
#[derive(Clone, Debug, Serialize)]
pub struct CalibratedGraph {
    edges: Vec<CalibratedEdge>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    topo: Vec<usize>,
    node_count: usize,
    pub tol_cal: f64,
}

impl CalibratedGraph {
    pub fn edges(&self) -> &[CalibratedEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn out(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.inc[node]
    }

    /// Nodes in a topological order of the calibrated subgraph, lowest
    /// index first among independent nodes.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// True when a calibrated path leads from `x` to `y`.
    pub fn reaches(&self, x: usize, y: usize) -> bool {
        if x == y {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(v) = queue.pop_front() {
            for &ce in &self.out[v] {
                let w = self.edges[ce].target;
                if w == y {
                    return true;
                }
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }
}

/// Collects the edges whose weight the potential attains and orders them
/// topologically. A cycle of saturated edges means the calibration
/// tolerance swallowed a genuine weight and is reported as an error.
pub fn calibrated_edges(
    manifold: &DiscreteManifold,
    costs: &EdgeCosts,
    potential: &DualPotential,
    tol_cal: f64,
) -> Result<CalibratedGraph> {
    let n = manifold.node_count();
    if potential.u.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} potential values for {n} nodes",
            potential.u.len()
        )));
    }
    if !(tol_cal >= 0.0) {
        return Err(Error::InvalidConfig(format!("calibration tolerance {tol_cal} is negative")));
    }

    let mut edges = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut inc: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, e) in manifold.edges().iter().enumerate() {
        let gain = potential.gain(e.source, e.target);
        if (gain - costs.weight(id)).abs() <= tol_cal {
            let ce = CalibratedEdge {
                edge: id,
                source: e.source,
                target: e.target,
                time: costs.costs[id].time,
                gain,
            };
            out[e.source].push(edges.len());
            inc[e.target].push(edges.len());
            edges.push(ce);
        }
    }

    let mut indegree: Vec<usize> = inc.iter().map(|v| v.len()).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(Reverse)
        .collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        topo.push(v);
        for &ce in &out[v] {
            let w = edges[ce].target;
            indegree[w] -= 1;
            if indegree[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    if topo.len() != n {
        let stuck = (0..n).filter(|&v| indegree[v] > 0).count();
        return Err(Error::ToleranceCycle(format!(
            "calibrated subgraph has a cycle through {stuck} nodes at tolerance {tol_cal:e}; \
             tighten it below the smallest edge weight"
        )));
    }

    Ok(CalibratedGraph { edges, out, inc, topo, node_count: n, tol_cal })
}

/// Longest calibrated time into each node (`alpha`) and out of each node
/// (`beta`).
pub fn alpha_beta(graph: &CalibratedGraph) -> (Vec<f64>, Vec<f64>) {
    let n = graph.node_count;
    let mut alpha = vec![0.0f64; n];
    let mut beta = vec![0.0f64; n];
    for &v in &graph.topo {
        for &ce in &graph.inc[v] {
            let e = &graph.edges[ce];
            alpha[v] = alpha[v].max(alpha[e.source] + e.time);
        }
    }
    for &v in graph.topo.iter().rev() {
        for &ce in &graph.out[v] {
            let e = &graph.edges[ce];
            beta[v] = beta[v].max(e.time + beta[e.target]);
        }
    }
    (alpha, beta)
}

/// Node classification and chain cover of the calibrated subgraph.
#[derive(Clone, Debug, Serialize)]
pub struct RayDecomposition {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Nodes touched by transport: alpha + beta > 0.
    pub transport_set: Vec<usize>,
    /// Nodes strictly inside a chain: alpha > 0 and beta > 0.
    pub interior: Vec<usize>,
    /// Nodes at least `epsilon` of time from both chain ends.
    pub interior_eps: Vec<usize>,
    /// Transport nodes that start or finish a chain.
    pub ends: Vec<usize>,
    /// Maximal chains covering every calibrated edge, as node sequences.
    pub chains: Vec<Vec<usize>>,
    pub epsilon: f64,
}

/// Runs the longest-time programs, classifies nodes, and covers the
/// calibrated edges with maximal chains.
pub fn decompose(graph: &CalibratedGraph, epsilon: f64) -> Result<RayDecomposition> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} is negative")));
    }
    let (alpha, beta) = alpha_beta(graph);
    let mut transport_set = Vec::new();
    let mut interior = Vec::new();
    let mut interior_eps = Vec::new();
    let mut ends = Vec::new();
    for v in 0..graph.node_count {
        let (a, b) = (alpha[v], beta[v]);
        if a + b > 0.0 {
            transport_set.push(v);
            if a > 0.0 && b > 0.0 {
                interior.push(v);
            } else {
                ends.push(v);
            }
            if a > epsilon && b > epsilon {
                interior_eps.push(v);
            }
        }
    }
    let chains = maximal_chains(graph, &alpha, &beta);
    Ok(RayDecomposition {
        alpha,
        beta,
        transport_set,
        interior,
        interior_eps,
        ends,
        chains,
        epsilon,
    })
}

/// Greedy chain cover: for each not-yet-covered edge in id order, extend it
/// backward and forward along longest continuations (ties to the lowest
/// edge id) and record the resulting source-to-sink chain.
pub fn maximal_chains(graph: &CalibratedGraph, alpha: &[f64], beta: &[f64]) -> Vec<Vec<usize>> {
    let mut covered = vec![false; graph.edges.len()];
    let mut chains = Vec::new();
    for seed in 0..graph.edges.len() {
        if covered[seed] {
            continue;
        }
        let mut back = Vec::new();
        let mut v = graph.edges[seed].source;
        while let Some(&ce) = graph.inc[v]
            .iter()
            .max_by(|&&a, &&b| {
                let la = alpha[graph.edges[a].source] + graph.edges[a].time;
                let lb = alpha[graph.edges[b].source] + graph.edges[b].time;
                la.total_cmp(&lb).then(b.cmp(&a))
            })
        {
            back.push(ce);
            v = graph.edges[ce].source;
        }
        let mut chain_edges: Vec<usize> = back.into_iter().rev().collect();
        chain_edges.push(seed);
        let mut w = graph.edges[seed].target;
        while let Some(&ce) = graph.out[w]
            .iter()
            .max_by(|&&a, &&b| {
                let la = graph.edges[a].time + beta[graph.edges[a].target];
                let lb = graph.edges[b].time + beta[graph.edges[b].target];
                la.total_cmp(&lb).then(b.cmp(&a))
            })
        {
            chain_edges.push(ce);
            w = graph.edges[ce].target;
        }

        let mut nodes = Vec::with_capacity(chain_edges.len() + 1);
        nodes.push(graph.edges[chain_edges[0]].source);
        for &ce in &chain_edges {
            covered[ce] = true;
            nodes.push(graph.edges[ce].target);
        }
        chains.push(nodes);
    }
    chains
}

/// Speed, ordering, and splitting diagnostics along the rays.
#[derive(Clone, Debug, Serialize)]
pub struct RayAuditReport {
    pub delta: f64,
    pub calibrated_edges: usize,
    /// Min of gain / time over calibrated edges; infinite when none exist.
    pub min_speed: f64,
    /// Edges slower than `delta - 1e-9`.
    pub speed_floor_violations: usize,
    /// Support-entry pairs sharing a chain that were order-checked.
    pub order_checked_pairs: usize,
    /// Pairs whose sources and targets appear in opposite orders.
    pub order_violations: usize,
    /// Multivalued plan sources found on each chain.
    pub lambda_chain_counts: Vec<usize>,
}

/// Audits a plan against the ray structure: every calibrated edge should
/// move at least at the critical speed floor, and entries sharing a chain
/// must pair in the order the chain visits them.
pub fn ray_audits(
    graph: &CalibratedGraph,
    decomposition: &RayDecomposition,
    plan: &TransportPlan,
    marginals: &Marginals,
    delta: f64,
) -> RayAuditReport {
    let mut min_speed = f64::INFINITY;
    let mut speed_floor_violations = 0;
    for e in &graph.edges {
        let speed = e.gain / e.time;
        min_speed = min_speed.min(speed);
        if speed < delta - 1e-9 {
            speed_floor_violations += 1;
        }
    }

    let support: Vec<(usize, usize)> = plan
        .entries
        .iter()
        .filter(|e| e.mass > MASS_DUST)
        .map(|e| (e.source, e.target))
        .collect();
    let lambda: HashSet<usize> = extract_map(plan, marginals).lambda.into_iter().collect();

    let mut order_checked_pairs = 0;
    let mut order_violations = 0;
    let mut lambda_chain_counts = Vec::with_capacity(decomposition.chains.len());
    for chain in &decomposition.chains {
        let mut pos: HashMap<usize, usize> = HashMap::with_capacity(chain.len());
        for (i, &v) in chain.iter().enumerate() {
            pos.entry(v).or_insert(i);
        }
        lambda_chain_counts.push(chain.iter().filter(|v| lambda.contains(v)).count());

        let on_chain: Vec<(usize, usize)> = support
            .iter()
            .filter_map(|&(x, y)| Some((*pos.get(&x)?, *pos.get(&y)?)))
            .collect();
        for i in 0..on_chain.len() {
            for j in (i + 1)..on_chain.len() {
                let (s, t) = on_chain[i];
                let (s2, t2) = on_chain[j];
                order_checked_pairs += 1;
                if (s < s2 && t > t2) || (s > s2 && t < t2) {
                    order_violations += 1;
                }
            }
        }
    }

    RayAuditReport {
        delta,
        calibrated_edges: graph.edges.len(),
        min_speed,
        speed_floor_violations,
        order_checked_pairs,
        order_violations,
        lambda_chain_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostModel;
    use crate::geometry::{FinslerMetric, GraphSpec};
    use crate::solver::{atom_density, PlanEntry};
    use approx::assert_abs_diff_eq;

    fn euclid_costs(m: &DiscreteManifold) -> EdgeCosts {
        CostModel::Finsler { metric: FinslerMetric::euclidean() }
            .edge_costs(m, 1e-12)
            .unwrap()
    }

    fn path4() -> DiscreteManifold {
        let spec = GraphSpec::parse(
            "node 0 0\nnode 1 0\nnode 2 0\nnode 3 0\n\
             edge 0 1\nedge 1 0\nedge 1 2\nedge 2 1\nedge 2 3\nedge 3 2\n",
        )
        .unwrap();
        DiscreteManifold::from_graph_spec(&spec).unwrap()
    }

    fn potential(u: Vec<f64>) -> DualPotential {
        DualPotential { u, anchor: 0 }
    }

    #[test]
    fn unit_chain_classifies_interior_and_ends() {
        let m = path4();
        let costs = euclid_costs(&m);
        let g = calibrated_edges(&m, &costs, &potential(vec![0.0, 1.0, 2.0, 3.0]), 1e-9).unwrap();
        assert_eq!(g.edges().len(), 3);
        assert!(g.edges().iter().all(|e| e.gain > 0.0));

        let d = decompose(&g, 0.5).unwrap();
        assert_eq!(d.alpha, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(d.beta, vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(d.transport_set, vec![0, 1, 2, 3]);
        assert_eq!(d.interior, vec![1, 2]);
        assert_eq!(d.ends, vec![0, 3]);
        assert_eq!(d.interior_eps, vec![1, 2]);
        assert_eq!(d.chains, vec![vec![0, 1, 2, 3]]);

        // Alpha is compatible with every calibrated edge.
        for e in g.edges() {
            assert!(d.alpha[e.source] + e.time <= d.alpha[e.target] + 1e-12);
        }

        let wide = decompose(&g, 10.0).unwrap();
        assert!(wide.interior_eps.is_empty());
    }

    #[test]
    fn diamond_takes_the_longer_time_on_both_sides() {
        // Two parallel two-hop routes with times (1, 2) and (2, 1).
        let spec = GraphSpec::parse(
            "node 0 0\nnode 1 0\nnode 2 0\nnode 3 0\n\
             edge 0 1\nedge 1 3\nedge 0 2\nedge 2 3\n\
             edge 1 0\nedge 3 1\nedge 2 0\nedge 3 2\n",
        )
        .unwrap();
        let m = DiscreteManifold::from_graph_spec(&spec).unwrap();
        let costs = euclid_costs(&m);
        let u = potential(vec![0.0, 1.0, 2.0, 3.0]);
        let g = calibrated_edges(&m, &costs, &u, 1e-9).unwrap();
        assert_eq!(g.edges().len(), 4);

        let d = decompose(&g, 0.0).unwrap();
        assert_abs_diff_eq!(d.alpha[3], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.beta[0], 3.0, epsilon = 1e-15);
        assert_eq!(d.chains.len(), 2);
        let covered: usize = d.chains.iter().map(|c| c.len() - 1).sum();
        assert_eq!(covered, 4);
    }

    #[test]
    fn flat_potential_calibrates_nothing() {
        let m = path4();
        let costs = euclid_costs(&m);
        let g = calibrated_edges(&m, &costs, &potential(vec![0.0; 4]), 1e-9).unwrap();
        assert!(g.edges().is_empty());
        let d = decompose(&g, 0.0).unwrap();
        assert!(d.transport_set.is_empty());
        assert!(d.chains.is_empty());

        let marginals = Marginals::new(
            atom_density(4, &[(0, 1.0)]).unwrap(),
            atom_density(4, &[(0, 1.0)]).unwrap(),
        )
        .unwrap();
        let plan = TransportPlan {
            entries: vec![PlanEntry { source: 0, target: 0, mass: 1.0 }],
            cost: 0.0,
        };
        let audit = ray_audits(&g, &d, &plan, &marginals, 0.5);
        assert_eq!(audit.calibrated_edges, 0);
        assert!(audit.min_speed.is_infinite());
        assert_eq!(audit.order_violations, 0);
    }

    #[test]
    fn oversized_tolerance_reports_a_cycle() {
        let spec = GraphSpec::parse("node 0 0\nnode 0.5 0\nedge 0 1\nedge 1 0\n").unwrap();
        let m = DiscreteManifold::from_graph_spec(&spec).unwrap();
        let costs = euclid_costs(&m);
        let err = calibrated_edges(&m, &costs, &potential(vec![0.0, 0.0]), 0.6);
        assert!(matches!(err, Err(Error::ToleranceCycle(_))));
    }

    #[test]
    fn speeds_and_order_are_audited_along_the_chain() {
        let m = path4();
        let costs = euclid_costs(&m);
        let u = potential(vec![0.0, 1.0, 2.0, 3.0]);
        let g = calibrated_edges(&m, &costs, &u, 1e-9).unwrap();
        let d = decompose(&g, 0.0).unwrap();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 0.5), (1, 0.5)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();

        let straight = TransportPlan {
            entries: vec![
                PlanEntry { source: 0, target: 2, mass: 0.5 },
                PlanEntry { source: 1, target: 3, mass: 0.5 },
            ],
            cost: 2.0,
        };
        let good = ray_audits(&g, &d, &straight, &marginals, 0.5);
        assert_abs_diff_eq!(good.min_speed, 1.0, epsilon = 1e-12);
        assert_eq!(good.speed_floor_violations, 0);
        assert_eq!(good.order_checked_pairs, 1);
        assert_eq!(good.order_violations, 0);
        assert_eq!(good.lambda_chain_counts, vec![0]);

        let crossing = TransportPlan {
            entries: vec![
                PlanEntry { source: 0, target: 3, mass: 0.5 },
                PlanEntry { source: 1, target: 2, mass: 0.5 },
            ],
            cost: 2.0,
        };
        let bad = ray_audits(&g, &d, &crossing, &marginals, 0.5);
        assert_eq!(bad.order_violations, 1);
    }

    #[test]
    fn split_source_is_counted_on_its_chain() {
        let m = path4();
        let costs = euclid_costs(&m);
        let u = potential(vec![0.0, 1.0, 2.0, 3.0]);
        let g = calibrated_edges(&m, &costs, &u, 1e-9).unwrap();
        let d = decompose(&g, 0.0).unwrap();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 1.0)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();
        let plan = TransportPlan {
            entries: vec![
                PlanEntry { source: 0, target: 2, mass: 0.5 },
                PlanEntry { source: 0, target: 3, mass: 0.5 },
            ],
            cost: 2.5,
        };
        let audit = ray_audits(&g, &d, &plan, &marginals, 0.5);
        assert_eq!(audit.lambda_chain_counts, vec![1]);
        assert_eq!(audit.order_violations, 0);
        assert!(g.reaches(0, 2) && g.reaches(0, 3) && !g.reaches(3, 0));
    }
}
