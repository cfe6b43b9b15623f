//! Secondary selection stage: among all plans supported on the tight set of
//! a primary solution, pick the one minimizing the squared-cost objective.
//!
//! The tight pairs form a bipartite transportation problem between the two
//! supports. It is solved by the same min-cost flow core as the primary
//! stage, then canonicalized to a vertex of the transportation polytope by
//! canceling alternating cycles in the support, so the result is an extreme
//! plan with at most `|supp mu0| + |supp mu1| - 1` entries and reruns are
//! bit-identical.

use std::collections::{BTreeMap, HashSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::mane::CostTable;
use crate::error::{Error, Result};
use crate::solver::flow::{min_cost_flow, FlowArc, FlowProblem};
use crate::solver::{DualPotential, Marginals, PlanEntry, TransportPlan};

/// Plan entries at or below this mass are treated as numerical dust and
/// pruned before map extraction or support counting.
pub const MASS_DUST: f64 = 1e-12;

/// One allowed pairing in a bipartite transport problem; indices refer to
/// the caller's source and target lists.
#[derive(Clone, Copy, Debug)]
pub struct BipartiteArc {
    pub source: usize,
    pub target: usize,
    pub cost: f64,
}

/// An extreme-point solution of a bipartite transportation problem.
#[derive(Clone, Debug)]
pub struct VertexTransport {
    /// (source index, target index, mass), sorted, forest-supported.
    pub entries: Vec<(usize, usize, f64)>,
    pub source_potentials: Vec<f64>,
    pub target_potentials: Vec<f64>,
    pub cost: f64,
    /// Alternating cycles canceled at exactly zero cost change; a nonzero
    /// count means the optimum is not unique.
    pub degenerate_pivots: usize,
}

/// Optimal bipartite transport in vertex form.
///
/// Solves min-cost flow from `source_masses` to `target_masses` over the
/// allowed arcs, then cancels alternating cycles (orienting each so the
/// objective does not increase, ties kept as found) until the support is a
/// forest.
pub fn vertex_transport(
    source_masses: &[f64],
    target_masses: &[f64],
    arcs: &[BipartiteArc],
) -> Result<VertexTransport> {
    let s0 = source_masses.len();
    let s1 = target_masses.len();
    for (i, a) in arcs.iter().enumerate() {
        if a.source >= s0 || a.target >= s1 {
            return Err(Error::InvalidConfig(format!("bipartite arc {i} out of range")));
        }
    }

    let mut supply = Vec::with_capacity(s0 + s1);
    supply.extend_from_slice(source_masses);
    supply.extend(target_masses.iter().map(|m| -m));
    let flow_arcs: Vec<FlowArc> = arcs
        .iter()
        .map(|a| FlowArc { from: a.source, to: s0 + a.target, cost: a.cost })
        .collect();
    let solution = min_cost_flow(&FlowProblem {
        node_count: s0 + s1,
        arcs: flow_arcs,
        supply,
    })?;

    let mut flows = solution.flows;
    let degenerate_pivots = cancel_cycles(s0, s1, arcs, &mut flows)?;

    let mut entries: Vec<(usize, usize, f64)> = arcs
        .iter()
        .zip(&flows)
        .filter(|(_, f)| **f > 0.0)
        .map(|(a, f)| (a.source, a.target, *f))
        .collect();
    entries.sort_by_key(|&(s, t, _)| (s, t));
    let cost = arcs.iter().zip(&flows).map(|(a, f)| a.cost * f).sum::<f64>();

    Ok(VertexTransport {
        entries,
        source_potentials: solution.potentials[..s0].to_vec(),
        target_potentials: solution.potentials[s0..].to_vec(),
        cost,
        degenerate_pivots,
    })
}

/// Cancels undirected cycles in the bipartite support until it is a forest.
/// Returns the number of exactly-degenerate cancellations.
fn cancel_cycles(
    s0: usize,
    s1: usize,
    arcs: &[BipartiteArc],
    flows: &mut [f64],
) -> Result<usize> {
    let n = s0 + s1;
    let mut degenerate = 0usize;
    loop {
        // Support adjacency, arc ids ascending for a deterministic search.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (id, a) in arcs.iter().enumerate() {
            if flows[id] > 0.0 {
                adj[a.source].push(id);
                adj[s0 + a.target].push(id);
            }
        }

        let mut visited = vec![false; n];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n]; // (node, arc)
        let mut found: Option<(usize, usize, usize)> = None; // (arc, from, ancestor)
        'roots: for root in 0..n {
            if visited[root] || adj[root].is_empty() {
                continue;
            }
            visited[root] = true;
            let mut stack = vec![(root, 0usize)];
            while let Some(&mut (v, ref mut cursor)) = stack.last_mut() {
                if *cursor >= adj[v].len() {
                    stack.pop();
                    continue;
                }
                let id = adj[v][*cursor];
                *cursor += 1;
                if parent[v].is_some_and(|(_, pa)| pa == id) {
                    continue;
                }
                let a = &arcs[id];
                let w = if v == a.source { s0 + a.target } else { a.source };
                if visited[w] {
                    // Depth-first search of an undirected graph only meets
                    // visited nodes that are ancestors, closing a cycle.
                    found = Some((id, v, w));
                    break 'roots;
                }
                visited[w] = true;
                parent[w] = Some((v, id));
                stack.push((w, 0));
            }
        }

        let Some((closing, from, ancestor)) = found else {
            return Ok(degenerate);
        };

        // Arcs of the cycle: tree path from `from` up to `ancestor`, then
        // the closing arc back down.
        let mut cycle = Vec::new();
        let mut v = from;
        let mut steps = 0;
        while v != ancestor {
            let (p, id) = parent[v].ok_or_else(|| {
                Error::Numerical("support cycle walk escaped its tree".into())
            })?;
            cycle.push((id, p, v));
            v = p;
            steps += 1;
            if steps > n {
                return Err(Error::Numerical("support cycle walk did not terminate".into()));
            }
        }
        cycle.reverse(); // now ancestor -> ... -> from
        cycle.push((closing, from, ancestor));

        // Walking direction vs arc direction gives the alternating signs.
        let mut signs = Vec::with_capacity(cycle.len());
        let mut balance = 0.0f64;
        let mut scale = 0.0f64;
        for &(id, a_node, _) in &cycle {
            let fwd = a_node == arcs[id].source;
            signs.push(fwd);
            scale = scale.max(arcs[id].cost.abs());
            balance += if fwd { arcs[id].cost } else { -arcs[id].cost };
        }
        let tol = 1e-12 * (1.0 + scale);
        if balance > tol {
            signs.iter_mut().for_each(|s| *s = !*s);
            balance = -balance;
        }
        if balance.abs() <= tol {
            degenerate += 1;
        }

        let mut theta = f64::INFINITY;
        for (&(id, _, _), &fwd) in cycle.iter().zip(&signs) {
            if !fwd {
                theta = theta.min(flows[id]);
            }
        }
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Numerical(format!(
                "degenerate alternating cycle with shift {theta}"
            )));
        }
        for (&(id, _, _), &fwd) in cycle.iter().zip(&signs) {
            if fwd {
                flows[id] += theta;
            } else {
                flows[id] -= theta;
            }
        }
    }
}

/// Map structure extracted from a plan: sources pairing with a single
/// target versus the multivalued set.
#[derive(Clone, Debug, Serialize)]
pub struct MapExtraction {
    /// (source, unique target) for every single-valued support source.
    pub map: Vec<(usize, usize)>,
    /// Sources whose mass splits across two or more targets.
    pub lambda: Vec<usize>,
    /// Total mu0-mass sitting on the multivalued sources.
    pub lambda_mass: f64,
}

/// Classifies plan sources after pruning dust entries.
pub fn extract_map(plan: &TransportPlan, marginals: &Marginals) -> MapExtraction {
    let mut targets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &plan.entries {
        if e.mass > MASS_DUST {
            targets.entry(e.source).or_default().push(e.target);
        }
    }
    let mut map = Vec::new();
    let mut lambda = Vec::new();
    let mut lambda_mass = 0.0;
    for (source, tgts) in targets {
        if tgts.len() == 1 {
            map.push((source, tgts[0]));
        } else {
            lambda_mass += marginals.mu0()[source];
            lambda.push(source);
        }
    }
    MapExtraction { map, lambda, lambda_mass }
}

/// Output of the secondary stage.
#[derive(Clone, Debug, Serialize)]
pub struct SelectionResult {
    /// The selected plan; `cost` is its primary transport cost.
    pub plan: TransportPlan,
    /// Squared-cost objective of the selected plan.
    pub secondary_objective: f64,
    pub support: Vec<(usize, usize)>,
    pub map: Vec<(usize, usize)>,
    pub lambda: Vec<usize>,
    pub lambda_mass: f64,
    /// Zero-gain cycle cancellations; nonzero signals a non-unique optimum.
    pub degenerate_pivots: usize,
}

/// Minimizes the squared-cost objective over plans supported on the tight
/// pairs. Fails with a restriction error when the tight set cannot carry
/// the marginals.
pub fn solve_secondary(
    tight_pairs: &[(usize, usize)],
    table: &CostTable,
    marginals: &Marginals,
) -> Result<SelectionResult> {
    let sources = marginals.support0();
    let targets = marginals.support1();
    let source_index: BTreeMap<usize, usize> =
        sources.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let target_index: BTreeMap<usize, usize> =
        targets.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut arcs = Vec::with_capacity(tight_pairs.len());
    for &(x, y) in tight_pairs {
        let (&si, &ti) = match (source_index.get(&x), target_index.get(&y)) {
            (Some(s), Some(t)) => (s, t),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "tight pair ({x}, {y}) lies outside the marginal supports"
                )))
            }
        };
        let c = table.value(x, y).ok_or_else(|| {
            Error::InvalidConfig(format!("cost table lacks a row for tight source {x}"))
        })?;
        arcs.push(BipartiteArc { source: si, target: ti, cost: c * c });
    }

    let source_masses: Vec<f64> = sources.iter().map(|&v| marginals.mu0()[v]).collect();
    let target_masses: Vec<f64> = targets.iter().map(|&v| marginals.mu1()[v]).collect();
    let vt = vertex_transport(&source_masses, &target_masses, &arcs).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Restriction(format!(
            "tight set cannot carry the marginals ({msg}); loosen the tightness tolerance"
        )),
        other => other,
    })?;

    let mut entries = Vec::new();
    let mut primary = 0.0f64;
    let mut secondary = 0.0f64;
    for &(si, ti, mass) in &vt.entries {
        if mass <= MASS_DUST {
            continue;
        }
        let (source, target) = (sources[si], targets[ti]);
        let c = table.value(source, target).expect("row checked above");
        primary += mass * c;
        secondary += mass * c * c;
        entries.push(PlanEntry { source, target, mass });
    }
    entries.sort_by_key(|e| (e.source, e.target));
    let plan = TransportPlan { entries, cost: primary };
    let extraction = extract_map(&plan, marginals);
    let support = plan.support();
    Ok(SelectionResult {
        plan,
        secondary_objective: secondary,
        support,
        map: extraction.map,
        lambda: extraction.lambda,
        lambda_mass: extraction.lambda_mass,
        degenerate_pivots: vt.degenerate_pivots,
    })
}

/// Cyclical-monotonicity evidence for a plan on its tight set.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub sampled_quadruples: usize,
    /// Quadruples whose swapped pairs are both tight.
    pub applicable_quadruples: usize,
    /// Min over applicable quadruples of the squared-cost swap increment;
    /// infinite when no quadruple applies.
    pub min_swap_increment: f64,
    /// Increments below -1e-9.
    pub negative_increments: usize,
    /// Min of (u(x) - u(x'))(u(y) - u(y')) over applicable quadruples, the
    /// factored order product along a shared ray; infinite when none apply.
    pub min_order_product: f64,
    /// Products below -1e-9.
    pub order_product_violations: usize,
}

/// Samples support quadruples (x, y), (x', y') and, where both swapped
/// pairs are tight, accumulates the swap increment
/// `sigma(x,y') + sigma(x',y) - sigma(x,y) - sigma(x',y')` and the factored
/// order product of the potential values.
pub fn monotonicity_check(
    plan: &TransportPlan,
    potential: &DualPotential,
    table: &CostTable,
    tight_pairs: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let support: Vec<&PlanEntry> =
        plan.entries.iter().filter(|e| e.mass > MASS_DUST).collect();
    let mut report = MonotonicityReport {
        sampled_quadruples: 0,
        applicable_quadruples: 0,
        min_swap_increment: f64::INFINITY,
        negative_increments: 0,
        min_order_product: f64::INFINITY,
        order_product_violations: 0,
    };
    if support.len() < 2 {
        return Ok(report);
    }
    let tight: HashSet<(usize, usize)> = tight_pairs.iter().copied().collect();
    let sigma = |x: usize, y: usize| -> Result<f64> {
        let c = table.value(x, y).ok_or_else(|| {
            Error::InvalidConfig(format!("cost table lacks a row for support source {x}"))
        })?;
        Ok(c * c)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = support[rng.gen_range(0..support.len())];
        let b = support[rng.gen_range(0..support.len())];
        report.sampled_quadruples += 1;
        if a.source == b.source || a.target == b.target {
            continue;
        }
        if !tight.contains(&(a.source, b.target)) || !tight.contains(&(b.source, a.target)) {
            continue;
        }
        report.applicable_quadruples += 1;

        let increment = sigma(a.source, b.target)? + sigma(b.source, a.target)?
            - sigma(a.source, a.target)?
            - sigma(b.source, b.target)?;
        report.min_swap_increment = report.min_swap_increment.min(increment);
        if increment < -1e-9 {
            report.negative_increments += 1;
        }

        let product = (potential.u[a.source] - potential.u[b.source])
            * (potential.u[a.target] - potential.u[b.target]);
        report.min_order_product = report.min_order_product.min(product);
        if product < -1e-9 {
            report.order_product_violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostModel;
    use crate::geometry::{DiscreteManifold, FinslerMetric, GraphSpec, Stencil};
    use crate::solver::{
        atom_density, certify_optimality, default_tight_tol, solve_primary, tight_set,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn path4() -> DiscreteManifold {
        let spec = GraphSpec::parse(
            "node 0 0\nnode 1 0\nnode 2 0\nnode 3 0\n\
             edge 0 1\nedge 1 0\nedge 1 2\nedge 2 1\nedge 2 3\nedge 3 2\n",
        )
        .unwrap();
        DiscreteManifold::from_graph_spec(&spec).unwrap()
    }

    struct Stage1 {
        marginals: Marginals,
        potential: DualPotential,
        table: CostTable,
        tight: Vec<(usize, usize)>,
        primary_cost: f64,
    }

    fn run_stage1(manifold: &DiscreteManifold, marginals: Marginals) -> Stage1 {
        let model = CostModel::Finsler { metric: FinslerMetric::euclidean() };
        let costs = model.edge_costs(manifold, 1e-12).unwrap();
        let (plan, potential) = solve_primary(manifold, &costs, &marginals).unwrap();
        let table = CostTable::full(manifold, &costs).unwrap();
        let tight =
            tight_set(&potential, &table, &marginals, default_tight_tol(&costs)).unwrap();
        Stage1 { marginals, potential, table, tight, primary_cost: plan.cost }
    }

    #[test]
    fn path_pairing_prefers_the_smaller_squares() {
        let m = path4();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 0.5), (1, 0.5)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        let sel = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();

        // Both pairings cost 2; squares 4 + 4 beat 9 + 1.
        assert_eq!(sel.support, vec![(0, 2), (1, 3)]);
        assert_abs_diff_eq!(sel.secondary_objective, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sel.plan.cost, s1.primary_cost, epsilon = 4.0 * 1e-9);
        assert_eq!(sel.map, vec![(0, 2), (1, 3)]);
        assert!(sel.lambda.is_empty());
        assert_eq!(sel.lambda_mass, 0.0);
    }

    #[test]
    fn selected_plan_passes_monotonicity_and_crossing_fails() {
        let m = path4();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 0.5), (1, 0.5)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        let sel = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();

        let good =
            monotonicity_check(&sel.plan, &s1.potential, &s1.table, &s1.tight, 500, 17).unwrap();
        assert!(good.applicable_quadruples > 0);
        assert_abs_diff_eq!(good.min_swap_increment, 2.0, epsilon = 1e-12);
        assert_eq!(good.negative_increments, 0);
        assert!(good.min_order_product > 0.0);
        assert_eq!(good.order_product_violations, 0);

        let crossing = TransportPlan {
            entries: vec![
                PlanEntry { source: 0, target: 3, mass: 0.5 },
                PlanEntry { source: 1, target: 2, mass: 0.5 },
            ],
            cost: 2.0,
        };
        let bad =
            monotonicity_check(&crossing, &s1.potential, &s1.table, &s1.tight, 500, 17).unwrap();
        assert_abs_diff_eq!(bad.min_swap_increment, -2.0, epsilon = 1e-12);
        assert!(bad.negative_increments > 0);
        assert!(bad.min_order_product < 0.0);
        assert!(bad.order_product_violations > 0);
    }

    #[test]
    fn uniform_atoms_select_a_permutation() {
        let m = DiscreteManifold::torus(5, Stencil::Eight).unwrap();
        let third = 1.0 / 3.0;
        let marginals = Marginals::new(
            atom_density(25, &[(0, third), (6, third), (12, third)]).unwrap(),
            atom_density(25, &[(3, third), (9, third), (21, third)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        let sel = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();

        assert_eq!(sel.plan.entries.len(), 3);
        let mut sources: Vec<usize> = sel.plan.entries.iter().map(|e| e.source).collect();
        let mut targets: Vec<usize> = sel.plan.entries.iter().map(|e| e.target).collect();
        sources.dedup();
        targets.sort_unstable();
        targets.dedup();
        assert_eq!(sources.len(), 3);
        assert_eq!(targets.len(), 3);
        for e in &sel.plan.entries {
            assert_abs_diff_eq!(e.mass, third, epsilon = 1e-12);
        }
        assert!(sel.lambda.is_empty());
        assert_eq!(sel.map.len(), 3);
    }

    #[test]
    fn forced_split_reports_the_multivalued_source() {
        let m = path4();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 1.0)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        let sel = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();

        assert_eq!(sel.support, vec![(0, 2), (0, 3)]);
        assert!(sel.plan.entries.len() <= 2); // s0 + s1 - 1
        assert_eq!(sel.lambda, vec![0]);
        assert_abs_diff_eq!(sel.lambda_mass, 1.0, epsilon = 1e-15);
        assert!(sel.map.is_empty());
    }

    #[test]
    fn infeasible_tight_set_is_a_restriction_error() {
        let m = path4();
        let marginals = Marginals::new(
            atom_density(4, &[(0, 0.5), (1, 0.5)]).unwrap(),
            atom_density(4, &[(2, 0.5), (3, 0.5)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        // Starve source 1 of arcs.
        let crippled: Vec<(usize, usize)> =
            s1.tight.iter().copied().filter(|&(x, _)| x == 0).collect();
        assert!(matches!(
            solve_secondary(&crippled, &s1.table, &s1.marginals),
            Err(Error::Restriction(_))
        ));
        assert!(matches!(
            solve_secondary(&[], &s1.table, &s1.marginals),
            Err(Error::Restriction(_))
        ));
    }

    #[test]
    fn reruns_are_bit_identical() {
        let m = DiscreteManifold::torus(4, Stencil::Eight).unwrap();
        let q = 0.25;
        let marginals = Marginals::new(
            atom_density(16, &[(0, q), (2, q), (5, q), (10, q)]).unwrap(),
            atom_density(16, &[(3, q), (7, q), (12, q), (15, q)]).unwrap(),
        )
        .unwrap();
        let s1 = run_stage1(&m, marginals);
        let a = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();
        let b = solve_secondary(&s1.tight, &s1.table, &s1.marginals).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.plan.entries, b.plan.entries);
        assert_eq!(a.secondary_objective, b.secondary_objective);
        assert_eq!(a.degenerate_pivots, b.degenerate_pivots);
    }

    #[test]
    fn vertex_core_cancels_a_square_cycle() {
        // Doubly stochastic 2x2 with all four arcs usable at equal cost:
        // the flow may use all four, the vertex form must drop to <= 3.
        let arcs = vec![
            BipartiteArc { source: 0, target: 0, cost: 1.0 },
            BipartiteArc { source: 0, target: 1, cost: 1.0 },
            BipartiteArc { source: 1, target: 0, cost: 1.0 },
            BipartiteArc { source: 1, target: 1, cost: 1.0 },
        ];
        let vt = vertex_transport(&[0.5, 0.5], &[0.5, 0.5], &arcs).unwrap();
        assert!(vt.entries.len() <= 3);
        assert_abs_diff_eq!(vt.cost, 1.0, epsilon = 1e-12);
        let shipped: f64 = vt.entries.iter().map(|&(_, _, m)| m).sum();
        assert_abs_diff_eq!(shipped, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// Random overlapping marginals on a torus: the second stage keeps
        /// the primary cost, respects the vertex support bound, reproduces
        /// the marginals, and shows no negative swap increments.
        #[test]
        fn secondary_stage_preserves_primary_optimality(
            raw0 in proptest::collection::vec(0.05f64..1.0, 4),
            raw1 in proptest::collection::vec(0.05f64..1.0, 6),
            spots in proptest::collection::vec(0usize..16, 10),
        ) {
            let m = DiscreteManifold::torus(4, Stencil::Eight).unwrap();
            let mut d0 = vec![0.0; 16];
            let mut d1 = vec![0.0; 16];
            for (i, &v) in spots.iter().take(4).enumerate() {
                d0[v] += raw0[i];
            }
            for (i, &v) in spots.iter().skip(4).enumerate() {
                d1[v] += raw1[i];
            }
            let marginals = Marginals::from_unnormalized(d0, d1).unwrap();
            let model = CostModel::Finsler { metric: FinslerMetric::euclidean() };
            let costs = model.edge_costs(&m, 1e-12).unwrap();
            let (plan1, potential) = solve_primary(&m, &costs, &marginals).unwrap();
            let table = CostTable::full(&m, &costs).unwrap();
            let tol = default_tight_tol(&costs);
            let tight = tight_set(&potential, &table, &marginals, tol).unwrap();
            let sel = solve_secondary(&tight, &table, &marginals).unwrap();

            let s0 = marginals.support0().len();
            let s1 = marginals.support1().len();
            prop_assert!(sel.plan.entries.len() <= s0 + s1 - 1);
            let bound = (sel.plan.entries.len() as f64) * tol + 1e-12;
            prop_assert!((sel.plan.cost - plan1.cost).abs() <= bound);
            prop_assert!(sel.plan.max_marginal_residual(&marginals) <= 1e-10);
            prop_assert!(sel.secondary_objective >= -1e-15);

            let cert =
                certify_optimality(&sel.plan, &potential, &table, &marginals, 200, 3).unwrap();
            prop_assert!(cert.max_slackness_residual <= tol + 1e-12);

            let report =
                monotonicity_check(&sel.plan, &potential, &table, &tight, 2000, 29).unwrap();
            prop_assert_eq!(report.negative_increments, 0);
            prop_assert_eq!(report.order_product_violations, 0);
        }
    }
}
