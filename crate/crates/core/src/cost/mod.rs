//! Per-edge action costs. A cost model is either a Finsler metric (edge cost
//! is the norm of the displacement at the source node) or a shifted
//! Lagrangian, whose edge cost is
//!
//! ```text
//! w(x, y) = min over t > 0 of  t * L(x, d / t)
//! ```
//!
//! for the edge displacement `d`. The objective is strictly convex in `t`
//! with derivative `-E(x, d/t)`, so the minimizer is the unique traversal
//! time at which the conserved energy of the shifted running cost vanishes.

pub mod critical;
pub mod mane;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::short_digest;
use crate::error::{Error, Result};
use crate::geometry::{DiscreteManifold, FinslerMetric, Lagrangian};

pub use critical::{critical_value, CriticalValue, HighCertificate, LowCertificate};
pub use mane::{certify_metric_axioms, mane_row, CostField, CostTable, MetricCertificate};

/// Traversal speeds outside `[V_MIN, V_MAX]` are treated as out of domain
/// for the per-edge time minimization.
pub const V_MIN: f64 = 1e-6;
pub const V_MAX: f64 = 1e6;

/// Default relative tolerance on the minimizing traversal time.
pub const TIME_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EdgeCost {
    pub edge: usize,
    /// Minimized action over the edge.
    pub weight: f64,
    /// Minimizing traversal time (equals `weight` for metric models, which
    /// traverse at unit norm speed).
    pub time: f64,
    /// Energy of the shifted running cost at the minimizer; zero at an exact
    /// interior minimum.
    pub energy_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeCosts {
    /// Indexed by edge id.
    pub costs: Vec<EdgeCost>,
    pub model_digest: String,
}

impl EdgeCosts {
    pub fn weight(&self, edge: usize) -> f64 {
        self.costs[edge].weight
    }

    pub fn min_weight(&self) -> f64 {
        self.costs.iter().map(|c| c.weight).fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.costs.iter().map(|c| c.weight).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CostModel {
    /// Edge cost is the anisotropic norm of the displacement at the source.
    Finsler { metric: FinslerMetric },
    /// Edge cost is the time-minimized action of a shifted running cost.
    Lagrangian { lagrangian: Lagrangian },
}

impl CostModel {
    pub fn validate(&self, node_count: usize) -> Result<()> {
        match self {
            CostModel::Finsler { metric } => metric.validate(node_count),
            CostModel::Lagrangian { lagrangian } => lagrangian.validate(node_count),
        }
    }

    /// Digest of the serialized model; stamped on every derived table so
    /// that outputs name the model that produced them.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("cost model serializes");
        short_digest(&bytes)
    }

    pub fn edge_cost(
        &self,
        manifold: &DiscreteManifold,
        edge_id: usize,
        time_tol: f64,
    ) -> Result<EdgeCost> {
        let edge = manifold.edge(edge_id);
        match self {
            CostModel::Finsler { metric } => {
                let w = metric.eval(edge.source, edge.displacement)?;
                Ok(EdgeCost { edge: edge_id, weight: w, time: w, energy_residual: 0.0 })
            }
            CostModel::Lagrangian { lagrangian } => {
                minimize_edge_action(lagrangian, edge_id, edge, time_tol)
            }
        }
    }

    /// All edge costs, computed in parallel. On failure the error for the
    /// lowest failing edge id is reported.
    pub fn edge_costs(&self, manifold: &DiscreteManifold, time_tol: f64) -> Result<EdgeCosts> {
        let results: Vec<Result<EdgeCost>> = (0..manifold.edge_count())
            .into_par_iter()
            .map(|id| self.edge_cost(manifold, id, time_tol))
            .collect();
        let mut costs = Vec::with_capacity(results.len());
        for r in results {
            costs.push(r?);
        }
        Ok(EdgeCosts { costs, model_digest: self.digest() })
    }
}

/// Minimizes `t -> t * L(x, d/t)` by geometric bracketing of the energy sign
/// change, a golden-section sweep, and a bracketed Newton polish on the
/// energy (whose root is the minimizer).
fn minimize_edge_action(
    lag: &Lagrangian,
    edge_id: usize,
    edge: &crate::geometry::Edge,
    time_tol: f64,
) -> Result<EdgeCost> {
    let x = edge.source;
    let d = edge.displacement;
    let rest = lag.rest_value(x);
    if rest <= 0.0 {
        return Err(Error::Subcritical { edge: edge_id, floor: rest });
    }

    let energy_at = |t: f64| lag.energy(x, d * (1.0 / t));
    let action_at = |t: f64| t * lag.eval(x, d * (1.0 / t));

    let t_min = edge.length / V_MAX;
    let t_max = edge.length / V_MIN;

    // Geometric expansion from unit speed until the energy changes sign.
    // Energy decreases in t, from superlinear growth toward -rest < 0.
    let mut lo = edge.length;
    let mut hi = edge.length;
    if energy_at(lo) > 0.0 {
        loop {
            hi = (hi * 8.0).min(t_max);
            if energy_at(hi) < 0.0 {
                break;
            }
            if hi >= t_max {
                return Err(Error::Bracket(format!(
                    "edge {edge_id}: energy still nonnegative at speed {V_MIN:e}; \
                     shift too close to critical"
                )));
            }
        }
    } else {
        loop {
            lo = (lo / 8.0).max(t_min);
            if energy_at(lo) > 0.0 {
                break;
            }
            if lo <= t_min {
                return Err(Error::Bracket(format!(
                    "edge {edge_id}: energy not positive at speed {V_MAX:e}; \
                     running cost not superlinear along this ray"
                )));
            }
        }
    }

    // Golden-section on the action narrows the bracket before polishing.
    let inv_gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c1 = b - inv_gr * (b - a);
    let mut c2 = a + inv_gr * (b - a);
    let mut f1 = action_at(c1);
    let mut f2 = action_at(c2);
    while b - a > 0.05 * a {
        if f1 <= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_gr * (b - a);
            f1 = action_at(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_gr * (b - a);
            f2 = action_at(c2);
        }
    }

    // Newton on the energy, kept inside the sign bracket [lo, hi].
    let mut t = 0.5 * (a + b);
    for _ in 0..60 {
        let e = energy_at(t);
        if e > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let q = lag.ray_curvature(x, d * (1.0 / t));
        let mut next = t + e * t / q;
        if !(next > lo && next < hi) {
            next = (lo * hi).sqrt();
        }
        let done = (next - t).abs() <= time_tol * t;
        t = next;
        if done {
            break;
        }
    }

    Ok(EdgeCost {
        edge: edge_id,
        weight: action_at(t),
        time: t,
        energy_residual: energy_at(t),
    })
}
