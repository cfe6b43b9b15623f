//! Shortest-path closure of the edge costs: the Mañé potential of the
//! shifted running cost, restricted to paths in the edge graph. Rows are
//! computed by Dijkstra search, which is exact because supercritical edge
//! weights are strictly positive.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::EdgeCosts;
use crate::error::{Error, Result};
use crate::geometry::DiscreteManifold;

/// Full n x n tables are refused above this node count; compute rows per
/// source instead.
pub const FULL_TABLE_NODE_CAP: usize = 2048;

/// One row of the cost closure: distances from `source` to every node.
#[derive(Clone, Debug, Serialize)]
pub struct CostField {
    pub source: usize,
    pub values: Vec<f64>,
    pub model_digest: String,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Max-heap: "largest" entry is the smallest distance, ties to the
    // lowest node index so exploration order is deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` under the given edge weights.
pub fn mane_row(
    manifold: &DiscreteManifold,
    costs: &EdgeCosts,
    source: usize,
) -> Result<CostField> {
    let n = manifold.node_count();
    if source >= n {
        return Err(Error::InvalidConfig(format!("source {source} out of range ({n} nodes)")));
    }
    if costs.len() != manifold.edge_count() {
        return Err(Error::InvalidConfig(format!(
            "{} edge costs for {} edges",
            costs.len(),
            manifold.edge_count()
        )));
    }
    let min_w = costs.min_weight();
    if !(min_w > 0.0) {
        return Err(Error::SupercriticalityViolated(format!(
            "minimum edge weight {min_w} is not positive; shortest-path closure undefined"
        )));
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(n);
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
        if settled[v] {
            continue;
        }
        settled[v] = true;
        for &eid in manifold.out_edges(v) {
            let e = manifold.edge(eid);
            let nd = d + costs.weight(eid);
            if nd < dist[e.target] {
                dist[e.target] = nd;
                heap.push(HeapEntry { dist: nd, node: e.target });
            }
        }
    }

    Ok(CostField { source, values: dist, model_digest: costs.model_digest.clone() })
}

/// A set of cost rows keyed by source node.
#[derive(Clone, Debug, Serialize)]
pub struct CostTable {
    rows: BTreeMap<usize, CostField>,
    node_count: usize,
    pub model_digest: String,
}

impl CostTable {
    /// Rows for every node. Refused above [`FULL_TABLE_NODE_CAP`] nodes.
    pub fn full(manifold: &DiscreteManifold, costs: &EdgeCosts) -> Result<Self> {
        let n = manifold.node_count();
        if n > FULL_TABLE_NODE_CAP {
            return Err(Error::TooLarge(format!(
                "full cost table for {n} nodes exceeds the {FULL_TABLE_NODE_CAP}-node cap; \
                 compute rows per source instead"
            )));
        }
        let all: Vec<usize> = (0..n).collect();
        Self::for_sources(manifold, costs, &all)
    }

    /// Rows for the given sources (deduplicated), computed in parallel.
    pub fn for_sources(
        manifold: &DiscreteManifold,
        costs: &EdgeCosts,
        sources: &[usize],
    ) -> Result<Self> {
        let unique: Vec<usize> = sources.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let computed: Vec<Result<CostField>> = unique
            .par_iter()
            .map(|&s| mane_row(manifold, costs, s))
            .collect();
        let mut rows = BTreeMap::new();
        for r in computed {
            let row = r?;
            rows.insert(row.source, row);
        }
        Ok(CostTable {
            rows,
            node_count: manifold.node_count(),
            model_digest: costs.model_digest.clone(),
        })
    }

    pub fn row(&self, source: usize) -> Option<&CostField> {
        self.rows.get(&source)
    }

    /// `c(x, y)` if the row for `x` is present.
    pub fn value(&self, x: usize, y: usize) -> Option<f64> {
        self.rows.get(&x).map(|r| r.values[y])
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn source_count(&self) -> usize {
        self.rows.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricCertificate {
    pub triple_samples: usize,
    /// Max of `c(x,z) - c(x,y) - c(y,z)` over sampled triples; positive
    /// values break the triangle inequality.
    pub max_triangle_violation: f64,
    pub max_diagonal_abs: f64,
    /// Min of `c(x,y) + c(y,x)` over sampled distinct pairs; positive in a
    /// supercritical regime.
    pub min_pair_sum: f64,
}

/// Samples metric axioms over the rows available in `table`. Triangle
/// triples draw x, y from row sources and z from all nodes.
pub fn certify_metric_axioms(
    table: &CostTable,
    triple_samples: usize,
    seed: u64,
) -> MetricCertificate {
    let sources: Vec<usize> = table.sources().collect();
    let n = table.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut max_triangle = f64::NEG_INFINITY;
    let mut min_pair_sum = f64::INFINITY;
    for _ in 0..triple_samples {
        let x = sources[rng.gen_range(0..sources.len())];
        let y = sources[rng.gen_range(0..sources.len())];
        let z = rng.gen_range(0..n);
        let direct = table.value(x, z).unwrap();
        let via = table.value(x, y).unwrap() + table.value(y, z).unwrap();
        max_triangle = max_triangle.max(direct - via);
        if x != y {
            let pair = table.value(x, y).unwrap() + table.value(y, x).unwrap();
            min_pair_sum = min_pair_sum.min(pair);
        }
    }

    let max_diag = sources
        .iter()
        .map(|&x| table.value(x, x).unwrap().abs())
        .fold(0.0f64, f64::max);

    MetricCertificate {
        triple_samples,
        max_triangle_violation: max_triangle,
        max_diagonal_abs: max_diag,
        min_pair_sum,
    }
}
