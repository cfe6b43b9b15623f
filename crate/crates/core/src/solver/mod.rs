//! Primary transport stage: optimal plans and dual potentials for a pair of
//! probability densities on the discrete manifold.
//!
//! The excess `mu1 - mu0` is routed through the weighted edge graph by
//! min-cost flow; the flow's node potentials become the dual potential `u`
//! and the flow itself is decomposed into source-to-target paths to recover
//! a sparse plan. Optimality is certified a posteriori against cost rows:
//! dual feasibility `u(y) - u(x) <= c(x,y)`, complementary slackness on the
//! plan support, and the primal-dual gap.

pub mod flow;

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::mane::CostTable;
use crate::cost::EdgeCosts;
use crate::error::{Error, Result};
use crate::geometry::{wrap_min, DiscreteManifold, Topology, Vec2};
use flow::{min_cost_flow, FlowArc, FlowProblem};

/// Each density must sum to one within this tolerance.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// A pair of probability densities indexed by node.
#[derive(Clone, Debug, Serialize)]
pub struct Marginals {
    mu0: Vec<f64>,
    mu1: Vec<f64>,
}

impl Marginals {
    pub fn new(mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        if mu0.len() != mu1.len() {
            return Err(Error::Marginal(format!(
                "density lengths differ: {} vs {}",
                mu0.len(),
                mu1.len()
            )));
        }
        for (name, density) in [("mu0", &mu0), ("mu1", &mu1)] {
            let mut sum = 0.0;
            for (i, &m) in density.iter().enumerate() {
                if !(m >= 0.0) || !m.is_finite() {
                    return Err(Error::Marginal(format!("{name}[{i}] = {m} is not a mass")));
                }
                sum += m;
            }
            if (sum - 1.0).abs() > MASS_SUM_TOL {
                return Err(Error::Marginal(format!(
                    "{name} sums to {sum}, off by {:e}",
                    sum - 1.0
                )));
            }
        }
        Ok(Marginals { mu0, mu1 })
    }

    /// Normalizes two nonnegative densities to unit mass first.
    pub fn from_unnormalized(d0: Vec<f64>, d1: Vec<f64>) -> Result<Self> {
        let norm = |name: &str, mut d: Vec<f64>| -> Result<Vec<f64>> {
            let sum: f64 = d.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::Marginal(format!("{name} has total mass {sum}")));
            }
            d.iter_mut().for_each(|m| *m /= sum);
            Ok(d)
        };
        Marginals::new(norm("mu0", d0)?, norm("mu1", d1)?)
    }

    pub fn node_count(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn support0(&self) -> Vec<usize> {
        (0..self.mu0.len()).filter(|&i| self.mu0[i] > 0.0).collect()
    }

    pub fn support1(&self) -> Vec<usize> {
        (0..self.mu1.len()).filter(|&i| self.mu1[i] > 0.0).collect()
    }

    /// True when the first density is positive everywhere, the convention
    /// standing in for absolute continuity on the discrete manifold.
    pub fn strictly_positive0(&self) -> bool {
        self.mu0.iter().all(|&m| m > 0.0)
    }
}

/// Wrapped distance from a node position to an arbitrary point.
fn point_distance(manifold: &DiscreteManifold, node: usize, point: Vec2) -> f64 {
    let d = manifold.position(node) - point;
    match manifold.topology() {
        Topology::Torus2d { .. } => {
            let wx = wrap_min(d.x, 1.0);
            let wy = wrap_min(d.y, 1.0);
            (wx * wx + wy * wy).sqrt()
        }
        Topology::General => d.norm(),
    }
}

/// Unnormalized bump density `exp(-d^2 / (2 width^2)) + floor` with `d` the
/// wrapped distance to `center`. A positive floor keeps every node in the
/// support.
pub fn gaussian_density(
    manifold: &DiscreteManifold,
    center: Vec2,
    width: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidConfig(format!("bump width {width} must be positive")));
    }
    if !(floor >= 0.0) || !floor.is_finite() {
        return Err(Error::InvalidConfig(format!("density floor {floor} must be nonnegative")));
    }
    Ok((0..manifold.node_count())
        .map(|v| {
            let d = point_distance(manifold, v, center);
            (-0.5 * (d / width).powi(2)).exp() + floor
        })
        .collect())
}

pub fn uniform_density(node_count: usize) -> Vec<f64> {
    vec![1.0; node_count]
}

/// Point masses at the listed nodes, zero elsewhere.
pub fn atom_density(node_count: usize, atoms: &[(usize, f64)]) -> Result<Vec<f64>> {
    let mut d = vec![0.0; node_count];
    for &(node, mass) in atoms {
        if node >= node_count {
            return Err(Error::InvalidConfig(format!(
                "atom at node {node} out of range ({node_count} nodes)"
            )));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Marginal(format!("atom mass {mass} at node {node}")));
        }
        d[node] += mass;
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Sparse coupling between the marginals, entries sorted by (source, target).
#[derive(Clone, Debug, Serialize)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    /// Transport cost of the plan under the cost closure it was built from.
    pub cost: f64,
}

impl TransportPlan {
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.source, e.target)).collect()
    }

    pub fn marginals(&self, node_count: usize) -> (Vec<f64>, Vec<f64>) {
        let mut m0 = vec![0.0; node_count];
        let mut m1 = vec![0.0; node_count];
        for e in &self.entries {
            m0[e.source] += e.mass;
            m1[e.target] += e.mass;
        }
        (m0, m1)
    }

    /// Largest per-node deviation of the plan's marginals from the target
    /// densities.
    pub fn max_marginal_residual(&self, marginals: &Marginals) -> f64 {
        let (m0, m1) = self.marginals(marginals.node_count());
        let mut worst = 0.0f64;
        for v in 0..marginals.node_count() {
            worst = worst.max((m0[v] - marginals.mu0[v]).abs());
            worst = worst.max((m1[v] - marginals.mu1[v]).abs());
        }
        worst
    }
}

/// Kantorovich dual potential, anchored to zero at a fixed support node so
/// reruns are comparable.
#[derive(Clone, Debug, Serialize)]
pub struct DualPotential {
    pub u: Vec<f64>,
    pub anchor: usize,
}

impl DualPotential {
    pub fn new(u: Vec<f64>, anchor: usize) -> Result<Self> {
        if anchor >= u.len() {
            return Err(Error::InvalidConfig(format!(
                "anchor {anchor} out of range ({} nodes)",
                u.len()
            )));
        }
        if u[anchor] != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "potential not anchored: u[{anchor}] = {}",
                u[anchor]
            )));
        }
        Ok(DualPotential { u, anchor })
    }

    pub fn gain(&self, x: usize, y: usize) -> f64 {
        self.u[y] - self.u[x]
    }
}

/// Minimal transport cost and a certifying dual, by min-cost flow of the
/// excess over the edge graph.
///
/// The plan fixes the common mass `min(mu0, mu1)` in place and decomposes
/// the flow into shortest source-to-target paths; the potential is the
/// flow's dual, anchored at the lowest-index support node of `mu0`.
pub fn solve_primary(
    manifold: &DiscreteManifold,
    costs: &EdgeCosts,
    marginals: &Marginals,
) -> Result<(TransportPlan, DualPotential)> {
    let n = manifold.node_count();
    if marginals.node_count() != n {
        return Err(Error::Marginal(format!(
            "{} masses for {n} nodes",
            marginals.node_count()
        )));
    }
    if costs.len() != manifold.edge_count() {
        return Err(Error::InvalidConfig(format!(
            "{} edge costs for {} edges",
            costs.len(),
            manifold.edge_count()
        )));
    }
    if !(costs.min_weight() > 0.0) {
        return Err(Error::SupercriticalityViolated(format!(
            "minimum edge weight {} is not positive",
            costs.min_weight()
        )));
    }

    let anchor = *marginals
        .support0()
        .first()
        .ok_or_else(|| Error::Marginal("mu0 has empty support".into()))?;

    let supply: Vec<f64> = (0..n).map(|v| marginals.mu0[v] - marginals.mu1[v]).collect();
    let arcs: Vec<FlowArc> = manifold
        .edges()
        .iter()
        .enumerate()
        .map(|(id, e)| FlowArc { from: e.source, to: e.target, cost: costs.weight(id) })
        .collect();
    let solution = min_cost_flow(&FlowProblem { node_count: n, arcs, supply })?;

    let u: Vec<f64> = solution
        .potentials
        .iter()
        .map(|p| p - solution.potentials[anchor])
        .collect();
    let potential = DualPotential { u, anchor };

    let plan = decompose_flow(manifold, costs, marginals, &solution.flows)?;
    Ok((plan, potential))
}

/// Path decomposition of an acyclic flow into plan entries, plus diagonal
/// entries for the mass that never moves.
fn decompose_flow(
    manifold: &DiscreteManifold,
    costs: &EdgeCosts,
    marginals: &Marginals,
    flows: &[f64],
) -> Result<TransportPlan> {
    let n = manifold.node_count();
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut cost_total = 0.0f64;

    for v in 0..n {
        let stay = marginals.mu0[v].min(marginals.mu1[v]);
        if stay > 0.0 {
            entries.insert((v, v), stay);
        }
    }

    let mut surplus: Vec<f64> = (0..n)
        .map(|v| (marginals.mu0[v] - marginals.mu1[v]).max(0.0))
        .collect();
    let mut deficit: Vec<f64> = (0..n)
        .map(|v| (marginals.mu1[v] - marginals.mu0[v]).max(0.0))
        .collect();
    let mut rem: Vec<f64> = flows.to_vec();
    // Cursor per node past exhausted out-arcs; arcs leave in edge-id order.
    let mut cursor = vec![0usize; n];
    let total: f64 = surplus.iter().sum();
    let dust = 1e-14 * (1.0 + total);

    for s in 0..n {
        while surplus[s] > dust {
            let mut v = s;
            let mut path: Vec<usize> = Vec::new();
            let mut bottleneck = surplus[s];
            // An optimal flow over positive weights is acyclic, so the walk
            // reaches a deficit node in at most edge-many steps.
            loop {
                if deficit[v] > dust {
                    break;
                }
                let out = manifold.out_edges(v);
                while cursor[v] < out.len() && rem[out[cursor[v]]] <= dust {
                    cursor[v] += 1;
                }
                if cursor[v] >= out.len() || path.len() > manifold.edge_count() {
                    return Err(Error::Numerical(format!(
                        "flow decomposition stranded at node {v} with surplus {:e}",
                        surplus[s]
                    )));
                }
                let eid = out[cursor[v]];
                path.push(eid);
                bottleneck = bottleneck.min(rem[eid]);
                v = manifold.edge(eid).target;
            }
            let t = v;
            bottleneck = bottleneck.min(deficit[t]);
            let mut length = 0.0;
            for &eid in &path {
                rem[eid] -= bottleneck;
                length += costs.weight(eid);
            }
            surplus[s] -= bottleneck;
            deficit[t] -= bottleneck;
            cost_total += bottleneck * length;
            *entries.entry((s, t)).or_insert(0.0) += bottleneck;
        }
    }

    let entries: Vec<PlanEntry> = entries
        .into_iter()
        .filter(|&(_, mass)| mass > 0.0)
        .map(|((source, target), mass)| PlanEntry { source, target, mass })
        .collect();
    Ok(TransportPlan { entries, cost: cost_total })
}

/// A posteriori optimality evidence for a (plan, potential) pair.
#[derive(Clone, Debug, Serialize)]
pub struct OptimalityCertificate {
    /// Plan cost recomputed from cost rows.
    pub primal_value: f64,
    /// Dual objective: sum of u (mu1 - mu0).
    pub dual_value: f64,
    pub duality_gap: f64,
    /// Gap scaled by 1 + |primal|.
    pub relative_gap: f64,
    /// Max of u(y) - u(x) - c(x,y) over sampled pairs; positive means the
    /// dual is infeasible.
    pub max_feasibility_violation: f64,
    pub feasibility_pairs: usize,
    /// Max of |c(x,y) - (u(y) - u(x))| over plan support pairs.
    pub max_slackness_residual: f64,
    pub max_marginal_residual: f64,
}

/// Checks feasibility on sampled pairs, slackness on every support pair, and
/// the duality gap. Requires cost rows for every plan source and sampled
/// origin.
pub fn certify_optimality(
    plan: &TransportPlan,
    potential: &DualPotential,
    table: &CostTable,
    marginals: &Marginals,
    pair_samples: usize,
    seed: u64,
) -> Result<OptimalityCertificate> {
    let n = marginals.node_count();
    if potential.u.len() != n || table.node_count() != n {
        return Err(Error::InvalidConfig(
            "potential, cost table, and marginals disagree on node count".into(),
        ));
    }

    let mut primal = 0.0f64;
    let mut max_slack = 0.0f64;
    for e in &plan.entries {
        let c = table.value(e.source, e.target).ok_or_else(|| {
            Error::InvalidConfig(format!("cost table lacks a row for plan source {}", e.source))
        })?;
        primal += e.mass * c;
        max_slack = max_slack.max((c - potential.gain(e.source, e.target)).abs());
    }

    let dual: f64 = (0..n)
        .map(|v| potential.u[v] * (marginals.mu1[v] - marginals.mu0[v]))
        .sum();
    let gap = (primal - dual).abs();

    let sources: Vec<usize> = table.sources().collect();
    if sources.is_empty() {
        return Err(Error::InvalidConfig("empty cost table".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    for _ in 0..pair_samples {
        let x = sources[rng.gen_range(0..sources.len())];
        let y = rng.gen_range(0..n);
        let c = table.value(x, y).expect("sampled source has a row");
        max_violation = max_violation.max(potential.gain(x, y) - c);
    }

    Ok(OptimalityCertificate {
        primal_value: primal,
        dual_value: dual,
        duality_gap: gap,
        relative_gap: gap / (1.0 + primal.abs()),
        max_feasibility_violation: max_violation,
        feasibility_pairs: pair_samples,
        max_slackness_residual: max_slack,
        max_marginal_residual: plan.max_marginal_residual(marginals),
    })
}

/// Default tightness tolerance, scaled to the largest edge weight.
pub fn default_tight_tol(costs: &EdgeCosts) -> f64 {
    1e-9 * (1.0 + costs.max_weight())
}

/// Support pairs of the dual equality set: (x, y) with x in supp mu0, y in
/// supp mu1, and u(y) - u(x) within `tol` of c(x, y). Needs a cost row for
/// every mu0 support node.
pub fn tight_set(
    potential: &DualPotential,
    table: &CostTable,
    marginals: &Marginals,
    tol: f64,
) -> Result<Vec<(usize, usize)>> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("tightness tolerance {tol} is negative")));
    }
    let support1 = marginals.support1();
    let mut pairs = Vec::new();
    for x in marginals.support0() {
        let row = table.row(x).ok_or_else(|| {
            Error::InvalidConfig(format!("cost table lacks a row for support node {x}"))
        })?;
        for &y in &support1 {
            if (row.values[y] - potential.gain(x, y)).abs() <= tol {
                pairs.push((x, y));
            }
        }
    }
    Ok(pairs)
}
