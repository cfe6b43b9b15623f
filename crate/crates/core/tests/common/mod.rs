//! Shared instance builders for the integration suites.

use monge_core::geometry::{
    DiscreteManifold, FinslerMetric, Lagrangian, MetricField, Sym2, Vec2,
};
use monge_core::solver::{gaussian_density, Marginals};

pub const TAU: f64 = std::f64::consts::TAU;

/// Smoothly varying anisotropic norm with drift. The tensor axes breathe
/// with position and the drift swirls; its dual norm stays below ~0.45, far
/// from the degeneracy margin.
pub fn swirl_randers(manifold: &DiscreteManifold) -> FinslerMetric {
    let n = manifold.node_count();
    let mut g = Vec::with_capacity(n);
    let mut drift = Vec::with_capacity(n);
    for v in 0..n {
        let p = manifold.position(v);
        g.push(Sym2::new(
            1.0 + 0.25 * (TAU * p.x).sin(),
            0.1 * (TAU * (p.x + p.y)).cos(),
            1.0 + 0.25 * (TAU * p.y).cos(),
        ));
        drift.push(Vec2::new(0.3 * (TAU * p.y).sin(), 0.2 * (TAU * p.x).cos()));
    }
    FinslerMetric::randers(MetricField::PerNode(g), MetricField::PerNode(drift))
}

/// Running cost `1/2 v'Gv + w.v + V` with node-varying coefficients and a
/// potential bounded away from the drift's dual energy, so every
/// nonnegative shift stays supercritical.
pub fn swirl_quadratic(manifold: &DiscreteManifold) -> Lagrangian {
    let n = manifold.node_count();
    let mut kinetic = Vec::with_capacity(n);
    let mut drift = Vec::with_capacity(n);
    let mut potential = Vec::with_capacity(n);
    for v in 0..n {
        let p = manifold.position(v);
        kinetic.push(Sym2::new(
            1.0 + 0.3 * (TAU * p.y).cos(),
            0.15 * (TAU * p.x).sin(),
            1.0 + 0.3 * (TAU * p.x).sin(),
        ));
        drift.push(Vec2::new(0.2 * (TAU * p.x).cos(), -0.2 * (TAU * p.y).sin()));
        potential.push(1.0 + 0.25 * (TAU * (p.x - p.y)).sin());
    }
    Lagrangian::quadratic(
        MetricField::PerNode(kinetic),
        MetricField::PerNode(drift),
        MetricField::PerNode(potential),
    )
}

/// Two diagonal gaussian bumps, mu0 at (1/4, 1/4) and mu1 at (3/4, 3/4).
/// A positive floor keeps both supports full.
pub fn bump_marginals(manifold: &DiscreteManifold, width: f64, floor: f64) -> Marginals {
    let d0 = gaussian_density(manifold, Vec2::new(0.25, 0.25), width, floor)
        .expect("bump density parameters are valid");
    let d1 = gaussian_density(manifold, Vec2::new(0.75, 0.75), width, floor)
        .expect("bump density parameters are valid");
    Marginals::from_unnormalized(d0, d1).expect("bump densities carry positive mass")
}

/// The same bumps truncated to discs: mass below `rel_cutoff` of the peak
/// is zeroed, so support sizes stay proportional to area under refinement.
pub fn truncated_bump_marginals(
    manifold: &DiscreteManifold,
    width: f64,
    rel_cutoff: f64,
) -> Marginals {
    let truncate = |mut d: Vec<f64>| {
        let peak = d.iter().cloned().fold(0.0, f64::max);
        for m in &mut d {
            if *m < rel_cutoff * peak {
                *m = 0.0;
            }
        }
        d
    };
    let d0 = truncate(
        gaussian_density(manifold, Vec2::new(0.25, 0.25), width, 0.0)
            .expect("bump density parameters are valid"),
    );
    let d1 = truncate(
        gaussian_density(manifold, Vec2::new(0.75, 0.75), width, 0.0)
            .expect("bump density parameters are valid"),
    );
    Marginals::from_unnormalized(d0, d1).expect("truncated bumps keep positive mass")
}
