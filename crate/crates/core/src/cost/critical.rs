//! Bisection for the critical shift: the threshold value below which the
//! shifted action admits arbitrarily negative closed paths (or subcritical
//! rays) and above which every cycle has positive cost. Each probe produces
//! an independently recheckable certificate for its side of the bracket.

use serde::Serialize;

use super::{CostModel, EdgeCosts, TIME_TOL};
use crate::error::{Error, Result};
use crate::geometry::{DiscreteManifold, Lagrangian};

#[derive(Clone, Debug, Serialize)]
pub enum LowCertificate {
    /// An edge whose source has nonpositive shifted rest cost: the time
    /// minimization along that edge's ray has no interior minimizer.
    SubcriticalEdge { edge: usize, rest_value: f64 },
    /// Edge ids forming a directed cycle with negative total weight.
    NegativeCycle { edges: Vec<usize>, total_weight: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct HighCertificate {
    /// Node potentials under which every reduced edge weight
    /// `w + p(x) - p(y)` is nonnegative, certifying that no cycle has
    /// negative total weight.
    pub potentials: Vec<f64>,
    pub min_reduced_weight: f64,
    pub min_edge_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalValue {
    pub k_lo: f64,
    pub k_hi: f64,
    /// Bracket midpoint; within half the bracket width of the critical shift.
    pub estimate: f64,
    /// Certificate exhibited at `k_lo`.
    pub low_certificate: LowCertificate,
    /// Certificate exhibited at `k_hi`.
    pub high_certificate: HighCertificate,
}

enum Probe {
    Low(LowCertificate),
    High(HighCertificate),
}

enum Relaxation {
    Converged(Vec<f64>),
    Cycle { edges: Vec<usize>, total_weight: f64 },
}

/// Label-correcting relaxation from a virtual source attached to every node
/// at zero cost, with a vertex-count pass cutoff. Deterministic: edges are
/// relaxed in id order.
fn relax_all(manifold: &DiscreteManifold, costs: &EdgeCosts) -> Relaxation {
    let n = manifold.node_count();
    let mut dist = vec![0.0f64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];

    for _ in 0..n {
        let mut improved = false;
        for (eid, e) in manifold.edges().iter().enumerate() {
            let nd = dist[e.source] + costs.weight(eid);
            if nd < dist[e.target] {
                dist[e.target] = nd;
                pred[e.target] = Some(eid);
                improved = true;
            }
        }
        if !improved {
            return Relaxation::Converged(dist);
        }
    }

    // Still improving after n passes: some predecessor chain contains a
    // negative cycle. Find a relaxable edge and walk n predecessor steps to
    // land inside the cycle, then collect it.
    for (eid, e) in manifold.edges().iter().enumerate() {
        if dist[e.source] + costs.weight(eid) < dist[e.target] {
            let mut x = e.source;
            for _ in 0..n {
                x = manifold.edge(pred[x].expect("improved node has a predecessor")).source;
            }
            let start = x;
            let mut edges = Vec::new();
            let mut total = 0.0;
            loop {
                let back = pred[x].expect("cycle node has a predecessor");
                edges.push(back);
                total += costs.weight(back);
                x = manifold.edge(back).source;
                if x == start {
                    break;
                }
            }
            edges.reverse();
            return Relaxation::Cycle { edges, total_weight: total };
        }
    }
    Relaxation::Converged(dist)
}

fn probe(manifold: &DiscreteManifold, base: &Lagrangian, k: f64) -> Result<Probe> {
    let lag = base.with_shift(k);
    for node in 0..manifold.node_count() {
        let rest = lag.rest_value(node);
        if rest <= 0.0 {
            let edge = manifold.out_edges(node)[0];
            return Ok(Probe::Low(LowCertificate::SubcriticalEdge { edge, rest_value: rest }));
        }
    }
    let costs = CostModel::Lagrangian { lagrangian: lag }.edge_costs(manifold, TIME_TOL)?;
    match relax_all(manifold, &costs) {
        Relaxation::Cycle { edges, total_weight } => {
            Ok(Probe::Low(LowCertificate::NegativeCycle { edges, total_weight }))
        }
        Relaxation::Converged(potentials) => {
            let min_reduced = manifold
                .edges()
                .iter()
                .enumerate()
                .map(|(eid, e)| costs.weight(eid) + potentials[e.source] - potentials[e.target])
                .fold(f64::INFINITY, f64::min);
            Ok(Probe::High(HighCertificate {
                potentials,
                min_reduced_weight: min_reduced,
                min_edge_weight: costs.min_weight(),
            }))
        }
    }
}

/// Bisects the shift between a certified-low and a certified-high endpoint.
/// The base Lagrangian's own shift is ignored; probed shifts are absolute.
pub fn critical_value(
    manifold: &DiscreteManifold,
    base: &Lagrangian,
    bracket: (f64, f64),
    tol: f64,
) -> Result<CriticalValue> {
    let (mut k_lo, mut k_hi) = bracket;
    if !(tol > 0.0) || !k_lo.is_finite() || !k_hi.is_finite() || k_lo >= k_hi {
        return Err(Error::InvalidConfig(format!(
            "bad critical search parameters: bracket ({k_lo}, {k_hi}), tol {tol}"
        )));
    }
    base.validate(manifold.node_count())?;

    let mut low_cert = match probe(manifold, base, k_lo)? {
        Probe::Low(c) => c,
        Probe::High(_) => {
            return Err(Error::Bracket(format!(
                "lower endpoint {k_lo} has no subcritical ray and no negative cycle"
            )))
        }
    };
    let mut high_cert = match probe(manifold, base, k_hi)? {
        Probe::High(h) if h.min_edge_weight > 0.0 => h,
        Probe::High(h) => {
            return Err(Error::Bracket(format!(
                "upper endpoint {k_hi} has a nonpositive edge weight {}",
                h.min_edge_weight
            )))
        }
        Probe::Low(_) => {
            return Err(Error::Bracket(format!(
                "upper endpoint {k_hi} is still below the critical shift"
            )))
        }
    };

    while k_hi - k_lo > tol {
        let mid = 0.5 * (k_lo + k_hi);
        if mid <= k_lo || mid >= k_hi {
            break;
        }
        match probe(manifold, base, mid)? {
            Probe::Low(c) => {
                k_lo = mid;
                low_cert = c;
            }
            Probe::High(h) => {
                k_hi = mid;
                high_cert = h;
            }
        }
    }

    Ok(CriticalValue {
        k_lo,
        k_hi,
        estimate: 0.5 * (k_lo + k_hi),
        low_certificate: low_cert,
        high_certificate: high_cert,
    })
}

/// Re-derives a low certificate from scratch at shift `k`.
pub fn recheck_low(
    manifold: &DiscreteManifold,
    base: &Lagrangian,
    k: f64,
    cert: &LowCertificate,
) -> bool {
    let lag = base.with_shift(k);
    match cert {
        LowCertificate::SubcriticalEdge { edge, .. } => {
            *edge < manifold.edge_count()
                && lag.rest_value(manifold.edge(*edge).source) <= 0.0
        }
        LowCertificate::NegativeCycle { edges, .. } => {
            if edges.is_empty() {
                return false;
            }
            let model = CostModel::Lagrangian { lagrangian: lag };
            let mut total = 0.0;
            for (i, &eid) in edges.iter().enumerate() {
                if eid >= manifold.edge_count() {
                    return false;
                }
                let next = edges[(i + 1) % edges.len()];
                if manifold.edge(eid).target != manifold.edge(next).source {
                    return false;
                }
                match model.edge_cost(manifold, eid, TIME_TOL) {
                    Ok(c) => total += c.weight,
                    Err(_) => return false,
                }
            }
            total < 0.0
        }
    }
}

/// Re-derives a high certificate from scratch at shift `k`: recomputes all
/// edge weights and checks every reduced weight against the stored
/// potentials.
pub fn recheck_high(
    manifold: &DiscreteManifold,
    base: &Lagrangian,
    k: f64,
    cert: &HighCertificate,
) -> bool {
    if cert.potentials.len() != manifold.node_count() {
        return false;
    }
    let model = CostModel::Lagrangian { lagrangian: base.with_shift(k) };
    let Ok(costs) = model.edge_costs(manifold, TIME_TOL) else {
        return false;
    };
    manifold.edges().iter().enumerate().all(|(eid, e)| {
        let w = costs.weight(eid);
        w + cert.potentials[e.source] - cert.potentials[e.target] >= -1e-12 * (1.0 + w.abs())
    })
}
