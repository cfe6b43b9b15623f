//! Uncapacitated min-cost flow by successive shortest paths with node
//! potentials. Arc costs must be nonnegative; the potentials keep reduced
//! costs nonnegative throughout, so each phase is a Dijkstra search from all
//! remaining surplus nodes, stopped at the first reachable deficit.
//!
//! The final potentials are a feasible dual: `cost + p(x) - p(y) >= 0` on
//! every arc, with equality on arcs carrying flow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub node_count: usize,
    pub arcs: Vec<FlowArc>,
    /// Positive entries ship mass out, negative entries absorb it; must
    /// balance to zero.
    pub supply: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowSolution {
    /// Flow per arc, same order as the problem's arc list.
    pub flows: Vec<f64>,
    /// Feasible dual potentials certifying optimality.
    pub potentials: Vec<f64>,
    pub cost: f64,
    pub augmentations: usize,
}

/// Residual supplies below this fraction of the total shipped mass are
/// treated as fully routed.
const DUST_FRACTION: f64 = 1e-14;

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn min_cost_flow(problem: &FlowProblem) -> Result<FlowSolution> {
    let n = problem.node_count;
    if problem.supply.len() != n {
        return Err(Error::InvalidConfig(format!(
            "{} supplies for {n} nodes",
            problem.supply.len()
        )));
    }
    for (i, a) in problem.arcs.iter().enumerate() {
        if a.from >= n || a.to >= n {
            return Err(Error::InvalidConfig(format!("arc {i} endpoint out of range")));
        }
        if !(a.cost >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "arc {i} has negative or non-finite cost {}",
                a.cost
            )));
        }
    }
    let total_out: f64 = problem.supply.iter().filter(|s| **s > 0.0).sum();
    let imbalance: f64 = problem.supply.iter().sum();
    if imbalance.abs() > 1e-9 * (1.0 + total_out) {
        return Err(Error::Marginal(format!(
            "supplies do not balance: net {imbalance:e} on total {total_out:e}"
        )));
    }

    let mut flows = vec![0.0f64; problem.arcs.len()];
    let mut potentials = vec![0.0f64; n];
    let mut supply = problem.supply.clone();
    let dust = DUST_FRACTION * (1.0 + total_out);

    if total_out <= dust {
        return Ok(FlowSolution { flows, potentials, cost: 0.0, augmentations: 0 });
    }

    // Static adjacency: forward arcs by source, backward (residual) arcs by
    // target; backward arcs are usable only while they carry flow.
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut bwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, a) in problem.arcs.iter().enumerate() {
        fwd[a.from].push(id);
        bwd[a.to].push(id);
    }

    let max_augmentations = 50 * n + 10 * problem.arcs.len() + 16;
    let mut augmentations = 0usize;
    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    // Predecessor arc and traversal direction (true = forward).
    let mut pred: Vec<Option<(usize, bool)>> = vec![None; n];

    while supply.iter().any(|&s| s > dust) {
        if augmentations >= max_augmentations {
            return Err(Error::Numerical(format!(
                "augmentation cap {max_augmentations} reached; flow not converging"
            )));
        }

        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        settled.iter_mut().for_each(|s| *s = false);
        pred.iter_mut().for_each(|p| *p = None);
        let mut heap = BinaryHeap::new();
        for v in 0..n {
            if supply[v] > dust {
                dist[v] = 0.0;
                heap.push(HeapEntry { dist: 0.0, node: v });
            }
        }

        let mut sink = None;
        while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
            if settled[v] {
                continue;
            }
            settled[v] = true;
            if supply[v] < -dust {
                sink = Some((v, d));
                break;
            }
            for &id in &fwd[v] {
                let a = &problem.arcs[id];
                let rc = a.cost + potentials[v] - potentials[a.to];
                let nd = d + rc.max(0.0);
                if nd < dist[a.to] {
                    dist[a.to] = nd;
                    pred[a.to] = Some((id, true));
                    heap.push(HeapEntry { dist: nd, node: a.to });
                }
            }
            for &id in &bwd[v] {
                if flows[id] <= 0.0 {
                    continue;
                }
                let a = &problem.arcs[id];
                let rc = -a.cost + potentials[v] - potentials[a.from];
                let nd = d + rc.max(0.0);
                if nd < dist[a.from] {
                    dist[a.from] = nd;
                    pred[a.from] = Some((id, false));
                    heap.push(HeapEntry { dist: nd, node: a.from });
                }
            }
        }

        let Some((t, dist_t)) = sink else {
            return Err(Error::Infeasible(
                "no augmenting path from remaining surplus to remaining deficit".into(),
            ));
        };

        for v in 0..n {
            potentials[v] += dist[v].min(dist_t);
        }

        // Walk predecessors to the seeding surplus node; the bottleneck is
        // capped by both endpoint residuals and backward-arc flows.
        let mut theta = -supply[t];
        let mut v = t;
        while let Some((id, forward)) = pred[v] {
            let a = &problem.arcs[id];
            if forward {
                v = a.from;
            } else {
                theta = theta.min(flows[id]);
                v = a.to;
            }
        }
        let s = v;
        theta = theta.min(supply[s]);

        let mut w = t;
        while let Some((id, forward)) = pred[w] {
            let a = &problem.arcs[id];
            if forward {
                flows[id] += theta;
                w = a.from;
            } else {
                flows[id] -= theta;
                w = a.to;
            }
        }
        supply[s] -= theta;
        supply[t] += theta;
        augmentations += 1;
    }

    let cost = problem
        .arcs
        .iter()
        .zip(&flows)
        .map(|(a, f)| a.cost * f)
        .sum();
    Ok(FlowSolution { flows, potentials, cost, augmentations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn arc(from: usize, to: usize, cost: f64) -> FlowArc {
        FlowArc { from, to, cost }
    }

    #[test]
    fn single_arc_ships_all_mass() {
        let p = FlowProblem {
            node_count: 2,
            arcs: vec![arc(0, 1, 3.0)],
            supply: vec![1.0, -1.0],
        };
        let sol = min_cost_flow(&p).unwrap();
        assert_eq!(sol.flows, vec![1.0]);
        assert_eq!(sol.cost, 3.0);
        // Dual feasibility with equality on the used arc.
        assert_abs_diff_eq!(
            3.0 + sol.potentials[0] - sol.potentials[1],
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn path_graph_example_builds_unit_slope_potentials() {
        // Bidirectional unit path 0-1-2-3; surplus at {0,1}, deficit {2,3}.
        let mut arcs = Vec::new();
        for i in 0..3 {
            arcs.push(arc(i, i + 1, 1.0));
            arcs.push(arc(i + 1, i, 1.0));
        }
        let p = FlowProblem {
            node_count: 4,
            arcs,
            supply: vec![0.5, 0.5, -0.5, -0.5],
        };
        let sol = min_cost_flow(&p).unwrap();
        assert_abs_diff_eq!(sol.cost, 2.0, epsilon = 1e-12);
        let u: Vec<f64> = sol.potentials.iter().map(|p| p - sol.potentials[0]).collect();
        assert_eq!(u, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_excess_means_zero_flow() {
        let p = FlowProblem {
            node_count: 3,
            arcs: vec![arc(0, 1, 1.0), arc(1, 2, 1.0), arc(2, 0, 1.0)],
            supply: vec![0.0, 0.0, 0.0],
        };
        let sol = min_cost_flow(&p).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert!(sol.flows.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn disconnected_deficit_is_infeasible() {
        let p = FlowProblem {
            node_count: 3,
            arcs: vec![arc(0, 1, 1.0)],
            supply: vec![1.0, 0.0, -1.0],
        };
        assert!(matches!(min_cost_flow(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let negative = FlowProblem {
            node_count: 2,
            arcs: vec![arc(0, 1, -1.0)],
            supply: vec![1.0, -1.0],
        };
        assert!(matches!(min_cost_flow(&negative), Err(Error::InvalidConfig(_))));

        let unbalanced = FlowProblem {
            node_count: 2,
            arcs: vec![arc(0, 1, 1.0)],
            supply: vec![1.0, -0.5],
        };
        assert!(matches!(min_cost_flow(&unbalanced), Err(Error::Marginal(_))));
    }

    #[test]
    fn repeated_runs_are_identical_under_cost_ties() {
        let p = FlowProblem {
            node_count: 4,
            arcs: vec![arc(0, 1, 1.0), arc(0, 2, 1.0), arc(1, 3, 1.0), arc(2, 3, 1.0)],
            supply: vec![1.0, 0.0, 0.0, -1.0],
        };
        let a = min_cost_flow(&p).unwrap();
        let b = min_cost_flow(&p).unwrap();
        assert_eq!(a.flows, b.flows);
        assert_eq!(a.potentials, b.potentials);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// On a complete digraph with random costs and balanced supplies,
        /// the solution conserves mass and its potentials certify
        /// optimality: reduced costs nonnegative everywhere, zero on arcs
        /// with flow.
        #[test]
        fn solution_is_self_certifying(
            costs in proptest::collection::vec(0.1f64..2.0, 12),
            raw in proptest::collection::vec(0.0f64..1.0, 4),
        ) {
            let mut arcs = Vec::new();
            let mut idx = 0;
            for i in 0..4usize {
                for j in 0..4usize {
                    if i != j {
                        arcs.push(arc(i, j, costs[idx]));
                        idx += 1;
                    }
                }
            }
            let mean = raw.iter().sum::<f64>() / 4.0;
            let supply: Vec<f64> = raw.iter().map(|r| r - mean).collect();
            let p = FlowProblem { node_count: 4, arcs, supply: supply.clone() };
            let sol = min_cost_flow(&p).unwrap();

            let mut net = supply.clone();
            for (a, f) in p.arcs.iter().zip(&sol.flows) {
                prop_assert!(*f >= 0.0);
                net[a.from] -= f;
                net[a.to] += f;
            }
            for v in 0..4 {
                prop_assert!(net[v].abs() <= 1e-12);
            }
            for (a, f) in p.arcs.iter().zip(&sol.flows) {
                let rc = a.cost + sol.potentials[a.from] - sol.potentials[a.to];
                prop_assert!(rc >= -1e-12);
                if *f > 0.0 {
                    prop_assert!(rc.abs() <= 1e-9);
                }
            }
        }
    }
}
