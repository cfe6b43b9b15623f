//! Running costs `L(x, v)` over the discrete base space, convex and
//! superlinear in the velocity, plus an additive shift used when probing
//! criticality. Two families are supported: the quadratic form
//! `v' G v / 2 + w . v + V` and the norm-squared form `(1 + |v|_x^2) / 2`
//! built from a Finsler metric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteManifold, FinslerMetric, MetricField, Sym2, Vec2};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum LagrangianForm {
    /// `(1 + |v|_x^2) / 2` for a Finsler norm `|.|_x`.
    FinslerQuad { metric: FinslerMetric },
    /// `v' G(x) v / 2 + w(x) . v + V(x)`.
    Quadratic {
        kinetic: MetricField<Sym2>,
        drift: MetricField<Vec2>,
        potential: MetricField<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lagrangian {
    pub form: LagrangianForm,
    /// Constant added to the running cost everywhere; the criticality search
    /// sweeps this value.
    pub shift: f64,
}

impl Lagrangian {
    pub fn finsler_quad(metric: FinslerMetric) -> Self {
        Lagrangian { form: LagrangianForm::FinslerQuad { metric }, shift: 0.0 }
    }

    pub fn quadratic(
        kinetic: MetricField<Sym2>,
        drift: MetricField<Vec2>,
        potential: MetricField<f64>,
    ) -> Self {
        Lagrangian { form: LagrangianForm::Quadratic { kinetic, drift, potential }, shift: 0.0 }
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        Lagrangian { form: self.form.clone(), shift }
    }

    /// Shape, finiteness and convexity-structure checks. Norms whose drift
    /// destroys positivity at some node are rejected here, so every later
    /// evaluation can assume a genuine (possibly asymmetric) norm.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        if !self.shift.is_finite() {
            return Err(Error::InvalidConfig(format!("shift {} is not finite", self.shift)));
        }
        match &self.form {
            LagrangianForm::FinslerQuad { metric } => {
                metric.validate(node_count)?;
                for node in 0..node_count {
                    let margin = metric.positivity_margin(node);
                    if margin <= 0.0 {
                        return Err(Error::MetricDegenerate { node, drift_norm: 1.0 - margin });
                    }
                }
                Ok(())
            }
            LagrangianForm::Quadratic { kinetic, drift, potential } => {
                kinetic.check_len(node_count, "kinetic tensor")?;
                drift.check_len(node_count, "drift")?;
                potential.check_len(node_count, "potential")?;
                for node in 0..node_count {
                    let g = *kinetic.at(node);
                    if !g.is_positive_definite() || !g.xx.is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "kinetic tensor not positive definite at node {node}"
                        )));
                    }
                    if !potential.at(node).is_finite() {
                        return Err(Error::InvalidConfig(format!(
                            "potential not finite at node {node}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, node: usize, v: Vec2) -> f64 {
        match &self.form {
            LagrangianForm::FinslerQuad { metric } => {
                let f = metric.eval_raw(node, v);
                0.5 * (1.0 + f * f) + self.shift
            }
            LagrangianForm::Quadratic { kinetic, drift, potential } => {
                0.5 * kinetic.at(node).quad(v)
                    + drift.at(node).dot(v)
                    + potential.at(node)
                    + self.shift
            }
        }
    }

    /// `L(x, 0)`: the cost of standing still. Its sign decides whether the
    /// per-edge time minimization has an interior minimizer.
    pub fn rest_value(&self, node: usize) -> f64 {
        self.eval(node, Vec2::ZERO)
    }

    /// Velocity gradient of `L`. Both families are differentiable at `v = 0`.
    pub fn grad_v(&self, node: usize, v: Vec2) -> Vec2 {
        match &self.form {
            LagrangianForm::FinslerQuad { metric } => {
                if v.is_zero() {
                    return Vec2::ZERO;
                }
                metric.grad_raw(node, v) * metric.eval_raw(node, v)
            }
            LagrangianForm::Quadratic { kinetic, drift, .. } => {
                kinetic.at(node).mul_vec(v) + *drift.at(node)
            }
        }
    }

    /// Conserved energy `E = dL/dv . v - L`. The per-edge time minimization
    /// is stationary exactly where `E(x, d/t)` equals the shift's negation,
    /// i.e. where the traversal runs at the probed energy level.
    pub fn energy(&self, node: usize, v: Vec2) -> f64 {
        self.grad_v(node, v).dot(v) - self.eval(node, v)
    }

    /// Second derivative of `s -> L(x, s v)` at `s = 1`. Positive for
    /// `v != 0`; controls the curvature of the time minimization.
    pub fn ray_curvature(&self, node: usize, v: Vec2) -> f64 {
        match &self.form {
            LagrangianForm::FinslerQuad { metric } => {
                let f = metric.eval_raw(node, v);
                f * f
            }
            LagrangianForm::Quadratic { kinetic, .. } => kinetic.at(node).quad(v),
        }
    }

    /// Convex dual `H(x, p) = sup_v p . v - L(x, v)` in closed form.
    pub fn hamiltonian(&self, node: usize, p: Vec2) -> f64 {
        match &self.form {
            LagrangianForm::FinslerQuad { metric } => {
                let dual = dual_norm(metric, node, p);
                0.5 * (dual * dual - 1.0) - self.shift
            }
            LagrangianForm::Quadratic { kinetic, drift, potential } => {
                let r = p - *drift.at(node);
                0.5 * kinetic.at(node).inv_quad(r) - potential.at(node) - self.shift
            }
        }
    }

    /// `min_x inf_v L(x, v)`: a uniform lower bound on the running cost, and
    /// hence on `weight / time` for every computed edge cost.
    pub fn delta_floor(&self, node_count: usize) -> f64 {
        match &self.form {
            LagrangianForm::FinslerQuad { .. } => 0.5 + self.shift,
            LagrangianForm::Quadratic { kinetic, drift, potential } => {
                let mut floor = f64::INFINITY;
                for node in 0..node_count {
                    let w = *drift.at(node);
                    let best = potential.at(node) - 0.5 * kinetic.at(node).inv_quad(w);
                    floor = floor.min(best);
                }
                floor + self.shift
            }
        }
    }

    /// Sampled audit of the structural assumptions: midpoint convexity, the
    /// analytic velocity gradient against central differences, the energy
    /// identity `E = H(dL/dv)`, and the ray curvature against a second
    /// difference along the sampled ray.
    pub fn audit(&self, manifold: &DiscreteManifold, samples: usize, seed: u64) -> LagrangianAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = manifold.node_count();
        let mut max_convexity = 0.0f64;
        let mut max_gradient = 0.0f64;
        let mut max_energy = 0.0f64;
        let mut max_curvature = 0.0f64;
        let mut min_ray_curvature = f64::INFINITY;

        let rand_vec = |rng: &mut ChaCha8Rng| {
            let a = rng.gen::<f64>() * std::f64::consts::TAU;
            Vec2::new(a.cos(), a.sin()) * rng.gen_range(0.25..2.5)
        };

        for _ in 0..samples {
            let x = rng.gen_range(0..n);
            let v = rand_vec(&mut rng);
            let w = rand_vec(&mut rng);

            let mid = (v + w) * 0.5;
            max_convexity = max_convexity
                .max(self.eval(x, mid) - 0.5 * (self.eval(x, v) + self.eval(x, w)));

            let h = 1e-5;
            let dir = Vec2::new(-v.y, v.x) * (1.0 / v.norm());
            let fd = (self.eval(x, v + dir * h) - self.eval(x, v - dir * h)) / (2.0 * h);
            let an = self.grad_v(x, v).dot(dir);
            max_gradient = max_gradient.max((fd - an).abs() / (1.0 + an.abs()));

            let e = self.energy(x, v);
            let via_dual = self.hamiltonian(x, self.grad_v(x, v));
            max_energy = max_energy.max((e - via_dual).abs() / (1.0 + e.abs()));

            let q = self.ray_curvature(x, v);
            min_ray_curvature = min_ray_curvature.min(q);
            let s = 1e-4;
            let second = (self.eval(x, v * (1.0 + s)) - 2.0 * self.eval(x, v)
                + self.eval(x, v * (1.0 - s)))
                / (s * s);
            max_curvature = max_curvature.max((second - q).abs() / (1.0 + q.abs()));
        }

        LagrangianAudit {
            samples,
            max_convexity_defect: max_convexity,
            max_gradient_defect: max_gradient,
            max_energy_defect: max_energy,
            max_curvature_defect: max_curvature,
            min_ray_curvature,
        }
    }
}

/// Dual norm `sup { p . v : |v|_x <= 1 }` of a Finsler norm.
fn dual_norm(metric: &FinslerMetric, node: usize, p: Vec2) -> f64 {
    match metric {
        FinslerMetric::Euclidean => p.norm(),
        FinslerMetric::Riemannian { g } => g.at(node).inv_quad(p).max(0.0).sqrt(),
        FinslerMetric::Randers { g, drift } => {
            let g = *g.at(node);
            let w = *drift.at(node);
            let beta_sq = g.inv_quad(w);
            // p' G^{-1} w by polarization, avoiding an explicit inverse.
            let s = 0.25 * (g.inv_quad(p + w) - g.inv_quad(p - w));
            let q = g.inv_quad(p);
            let denom = 1.0 - beta_sq;
            ((s * s + denom * q).max(0.0).sqrt() - s) / denom
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LagrangianAudit {
    pub samples: usize,
    pub max_convexity_defect: f64,
    pub max_gradient_defect: f64,
    pub max_energy_defect: f64,
    pub max_curvature_defect: f64,
    pub min_ray_curvature: f64,
}
