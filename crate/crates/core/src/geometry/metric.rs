//! Pointwise norm data: Euclidean, Riemannian and Randers (drifted) norms
//! sampled per node. Randers norms `|v|_x = sqrt(v' G v) + w . v` are
//! asymmetric; they stay positive for nonzero `v` exactly when the drift `w`
//! has `G`-dual norm below one, and that margin is what the audit watches.

use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiscreteManifold;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Symmetric 2x2 matrix, stored as its upper triangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_positive_definite(self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    /// v' A v
    pub fn quad(self, v: Vec2) -> f64 {
        self.xx * v.x * v.x + 2.0 * self.xy * v.x * v.y + self.yy * v.y * v.y
    }

    /// A v
    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// w' A^{-1} w. Requires positive definiteness.
    pub fn inv_quad(self, w: Vec2) -> f64 {
        let det = self.det();
        (self.yy * w.x * w.x - 2.0 * self.xy * w.x * w.y + self.xx * w.y * w.y) / det
    }
}

/// A quantity attached to every node, either shared or sampled per node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum MetricField<T> {
    Constant(T),
    PerNode(Vec<T>),
}

impl<T> MetricField<T> {
    pub fn at(&self, node: usize) -> &T {
        match self {
            MetricField::Constant(t) => t,
            MetricField::PerNode(v) => &v[node],
        }
    }

    pub fn check_len(&self, node_count: usize, what: &str) -> Result<()> {
        match self {
            MetricField::Constant(_) => Ok(()),
            MetricField::PerNode(v) if v.len() == node_count => Ok(()),
            MetricField::PerNode(v) => Err(Error::InvalidConfig(format!(
                "{what} field has {} entries for {node_count} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FinslerMetric {
    Euclidean,
    Riemannian { g: MetricField<Sym2> },
    Randers { g: MetricField<Sym2>, drift: MetricField<Vec2> },
}

impl FinslerMetric {
    pub fn euclidean() -> Self {
        FinslerMetric::Euclidean
    }

    pub fn riemannian(g: MetricField<Sym2>) -> Self {
        FinslerMetric::Riemannian { g }
    }

    pub fn randers(g: MetricField<Sym2>, drift: MetricField<Vec2>) -> Self {
        FinslerMetric::Randers { g, drift }
    }

    /// Shape and positive-definiteness checks. The Randers drift condition is
    /// deliberately not enforced here so that degenerate inputs can still be
    /// audited; evaluation rejects them per node instead.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        let check_spd = |g: &MetricField<Sym2>| -> Result<()> {
            g.check_len(node_count, "metric tensor")?;
            let bad = |s: &Sym2| !s.is_positive_definite() || !s.xx.is_finite();
            let violated = match g {
                MetricField::Constant(s) => bad(s).then_some(0),
                MetricField::PerNode(v) => v.iter().position(bad),
            };
            match violated {
                Some(node) => Err(Error::InvalidConfig(format!(
                    "metric tensor not positive definite at node {node}"
                ))),
                None => Ok(()),
            }
        };
        match self {
            FinslerMetric::Euclidean => Ok(()),
            FinslerMetric::Riemannian { g } => check_spd(g),
            FinslerMetric::Randers { g, drift } => {
                check_spd(g)?;
                drift.check_len(node_count, "drift")
            }
        }
    }

    /// Positivity margin of the norm at `node`: the minimum of `|v|_x` over
    /// `G`-unit vectors. Equals `1 - |w|_{G^{-1}}` for Randers, 1 otherwise.
    pub fn positivity_margin(&self, node: usize) -> f64 {
        match self {
            FinslerMetric::Randers { g, drift } => {
                1.0 - g.at(node).inv_quad(*drift.at(node)).max(0.0).sqrt()
            }
            _ => 1.0,
        }
    }

    /// Norm value without the degeneracy gate. Used by audits.
    pub(crate) fn eval_raw(&self, node: usize, v: Vec2) -> f64 {
        match self {
            FinslerMetric::Euclidean => v.norm(),
            FinslerMetric::Riemannian { g } => g.at(node).quad(v).max(0.0).sqrt(),
            FinslerMetric::Randers { g, drift } => {
                g.at(node).quad(v).max(0.0).sqrt() + drift.at(node).dot(v)
            }
        }
    }

    /// `|v|` at `node`. Fails when the drift destroys positivity there.
    pub fn eval(&self, node: usize, v: Vec2) -> Result<f64> {
        let margin = self.positivity_margin(node);
        if margin <= 0.0 {
            return Err(Error::MetricDegenerate { node, drift_norm: 1.0 - margin });
        }
        Ok(self.eval_raw(node, v))
    }

    /// Gradient of the norm at `v != 0`, without the degeneracy gate.
    pub(crate) fn grad_raw(&self, node: usize, v: Vec2) -> Vec2 {
        match self {
            FinslerMetric::Euclidean => v * (1.0 / v.norm()),
            FinslerMetric::Riemannian { g } => {
                let s = *g.at(node);
                s.mul_vec(v) * (1.0 / s.quad(v).sqrt())
            }
            FinslerMetric::Randers { g, drift } => {
                let s = *g.at(node);
                s.mul_vec(v) * (1.0 / s.quad(v).sqrt()) + *drift.at(node)
            }
        }
    }

    /// Sampled audit of the norm axioms: positivity rate on unit vectors,
    /// absolute one-homogeneity defect (per unit of scaling), midpoint
    /// convexity defect, and the worst drift margin over all nodes.
    pub fn audit(&self, manifold: &DiscreteManifold, samples: usize, seed: u64) -> MetricAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = manifold.node_count();
        let mut min_unit_rate = f64::INFINITY;
        let mut max_homogeneity = 0.0f64;
        let mut max_midpoint = 0.0f64;

        let rand_dir = |rng: &mut ChaCha8Rng| {
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            Vec2::new(a.cos(), a.sin())
        };

        for _ in 0..samples {
            let x = rng.gen_range(0..n);
            let u = rand_dir(&mut rng);
            let v = u * rng.gen_range(0.5..2.0);
            min_unit_rate = min_unit_rate.min(self.eval_raw(x, u));

            for lambda in [0.5, 2.0, rng.gen_range(0.1..10.0)] {
                let defect =
                    (self.eval_raw(x, v * lambda) - lambda * self.eval_raw(x, v)).abs() / lambda;
                max_homogeneity = max_homogeneity.max(defect);
            }

            let w = rand_dir(&mut rng) * rng.gen_range(0.5..2.0);
            let mid = (v + w) * 0.5;
            let defect =
                self.eval_raw(x, mid) - 0.5 * (self.eval_raw(x, v) + self.eval_raw(x, w));
            max_midpoint = max_midpoint.max(defect);
        }

        let min_margin = (0..n)
            .map(|x| self.positivity_margin(x))
            .fold(f64::INFINITY, f64::min);

        MetricAudit {
            samples,
            min_unit_rate,
            max_homogeneity_defect: max_homogeneity,
            max_midpoint_defect: max_midpoint,
            min_drift_margin: min_margin,
            positivity_violated: min_margin <= 0.0 || min_unit_rate <= 0.0,
            near_degenerate: min_margin > 0.0 && min_margin < NEAR_DEGENERATE_MARGIN,
        }
    }
}

/// Drift margins below this are reported as near-degenerate.
pub const NEAR_DEGENERATE_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct MetricAudit {
    pub samples: usize,
    pub min_unit_rate: f64,
    pub max_homogeneity_defect: f64,
    pub max_midpoint_defect: f64,
    pub min_drift_margin: f64,
    pub positivity_violated: bool,
    pub near_degenerate: bool,
}
