//! TOML run configuration and the builders that turn it into core objects.
//!
//! A config names a manifold, a cost model, a marginal pair, and the
//! tolerance policy. Every command stamps its outputs with the digest of
//! the resolved configuration (seed override applied), so artifacts name
//! the exact setup that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use monge_core::cost::CostModel;
use monge_core::digest::short_digest;
use monge_core::geometry::{
    DiscreteManifold, FinslerMetric, GraphSpec, Lagrangian, MetricField, Stencil, Sym2, Vec2,
};
use monge_core::pipeline::Tolerances;
use monge_core::solver::{gaussian_density, uniform_density, Marginals};
use monge_core::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub manifold: ManifoldConfig,
    pub cost: CostConfig,
    pub marginals: MarginalConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldConfig {
    /// `side x side` grid on the unit torus.
    Torus {
        side: usize,
        /// Move set size: 8 or 16.
        #[serde(default = "default_stencil")]
        stencil: usize,
    },
    /// Explicit node/edge listing parsed from a text file.
    Graph { file: PathBuf },
}

fn default_stencil() -> usize {
    16
}

/// Cost model selection. `kind` is one of `euclidean`, `riemannian`,
/// `randers`, `quad-norm` (time-optimized quadratic embedding of a norm),
/// or `quadratic` (running cost `1/2 v'Gv + w.v + V`). Constant
/// coefficients come from `g`/`drift`/`potential`; `preset = "swirl"`
/// swaps in smoothly varying fields instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub kind: String,
    #[serde(default)]
    pub preset: Option<String>,
    /// Symmetric tensor `[xx, xy, yy]`.
    #[serde(default)]
    pub g: Option<[f64; 3]>,
    #[serde(default)]
    pub drift: Option<[f64; 2]>,
    #[serde(default)]
    pub potential: Option<f64>,
    /// Additive shift `k` of the running cost (lagrangian kinds only).
    #[serde(default)]
    pub shift: Option<f64>,
    /// Search bracket for `cost --critical`.
    #[serde(default)]
    pub critical_bracket: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    /// `bumps`, `uniform`, or `file`.
    pub kind: String,
    #[serde(default)]
    pub center0: Option<[f64; 2]>,
    #[serde(default)]
    pub center1: Option<[f64; 2]>,
    #[serde(default)]
    pub width: Option<f64>,
    /// Density floor added before normalization; a positive floor keeps the
    /// first marginal strictly positive, the discrete stand-in for absolute
    /// continuity.
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// CSV of `node,mu0,mu1` rows for `kind = "file"`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_floor() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Relative tolerance of the per-edge traversal-time minimization.
    #[serde(default)]
    pub time: Option<f64>,
    /// Dual-equality tolerance for the tight set.
    #[serde(default)]
    pub tight: Option<f64>,
    /// Calibration tolerance for the ray graph.
    #[serde(default)]
    pub cal: Option<f64>,
    /// Bracket width for the critical-shift bisection.
    #[serde(default)]
    pub critical: Option<f64>,
    /// Interior margin for the trimmed transport set.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output directory; the `--out-dir` flag and `MONGE_OUT_DIR`
    /// both take precedence.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))
    }

    /// Digest of the resolved configuration, stamped on every output.
    pub fn digest(&self) -> String {
        short_digest(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn build_manifold(&self) -> Result<DiscreteManifold> {
        match &self.manifold {
            ManifoldConfig::Torus { side, stencil } => {
                DiscreteManifold::torus(*side, Stencil::from_size(*stencil)?)
            }
            ManifoldConfig::Graph { file } => {
                let text = fs::read_to_string(file).map_err(|e| {
                    Error::InvalidConfig(format!("cannot read graph {}: {e}", file.display()))
                })?;
                DiscreteManifold::from_graph_spec(&GraphSpec::parse(&text)?)
            }
        }
    }

    pub fn build_model(&self, manifold: &DiscreteManifold) -> Result<CostModel> {
        let c = &self.cost;
        let swirl = match c.preset.as_deref() {
            None | Some("constant") => false,
            Some("swirl") => true,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown cost preset {other:?}; expected \"swirl\" or \"constant\""
                )))
            }
        };
        let tensor = |g: Option<[f64; 3]>| {
            MetricField::Constant(g.map_or(Sym2::IDENTITY, |[xx, xy, yy]| Sym2::new(xx, xy, yy)))
        };
        let metric = |c: &CostConfig| -> Result<FinslerMetric> {
            if swirl {
                return Ok(swirl_randers(manifold));
            }
            Ok(match c.drift {
                Some([dx, dy]) => FinslerMetric::randers(
                    tensor(c.g),
                    MetricField::Constant(Vec2::new(dx, dy)),
                ),
                None if c.g.is_some() => FinslerMetric::riemannian(tensor(c.g)),
                None => FinslerMetric::euclidean(),
            })
        };
        let shift = c.shift.unwrap_or(0.0);
        let model = match c.kind.as_str() {
            "euclidean" => CostModel::Finsler { metric: FinslerMetric::euclidean() },
            "riemannian" => CostModel::Finsler {
                metric: FinslerMetric::riemannian(if swirl {
                    swirl_tensor(manifold)
                } else {
                    tensor(Some(c.g.ok_or_else(|| {
                        Error::InvalidConfig("riemannian cost needs `g = [xx, xy, yy]`".into())
                    })?))
                }),
            },
            "randers" => {
                if !swirl && c.drift.is_none() {
                    return Err(Error::InvalidConfig(
                        "randers cost needs `drift = [dx, dy]` or `preset = \"swirl\"`".into(),
                    ));
                }
                CostModel::Finsler { metric: metric(c)? }
            }
            "quad-norm" => CostModel::Lagrangian {
                lagrangian: Lagrangian::finsler_quad(metric(c)?).with_shift(shift),
            },
            "quadratic" => {
                let lagrangian = if swirl {
                    swirl_quadratic(manifold)
                } else {
                    Lagrangian::quadratic(
                        tensor(c.g),
                        MetricField::Constant(
                            c.drift.map_or(Vec2::ZERO, |[dx, dy]| Vec2::new(dx, dy)),
                        ),
                        MetricField::Constant(c.potential.unwrap_or(1.0)),
                    )
                };
                CostModel::Lagrangian { lagrangian: lagrangian.with_shift(shift) }
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown cost kind {other:?}; expected euclidean, riemannian, randers, \
                     quad-norm, or quadratic"
                )))
            }
        };
        model.validate(manifold.node_count())?;
        Ok(model)
    }

    pub fn build_marginals(&self, manifold: &DiscreteManifold) -> Result<Marginals> {
        let m = &self.marginals;
        match m.kind.as_str() {
            "uniform" => {
                let n = manifold.node_count();
                Marginals::from_unnormalized(uniform_density(n), uniform_density(n))
            }
            "bumps" => {
                let width = m.width.unwrap_or(0.12);
                let c0 = m.center0.unwrap_or([0.25, 0.25]);
                let c1 = m.center1.unwrap_or([0.75, 0.75]);
                let d0 =
                    gaussian_density(manifold, Vec2::new(c0[0], c0[1]), width, m.floor)?;
                let d1 =
                    gaussian_density(manifold, Vec2::new(c1[0], c1[1]), width, m.floor)?;
                Marginals::from_unnormalized(d0, d1)
            }
            "file" => {
                let path = m.file.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("marginals kind \"file\" needs `file = ...`".into())
                })?;
                let (d0, d1) = read_marginal_csv(path, manifold.node_count())?;
                Marginals::from_unnormalized(d0, d1)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown marginal kind {other:?}; expected bumps, uniform, or file"
            ))),
        }
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let t = &self.tolerances;
        let positive = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidConfig(format!("tolerances.{name} = {v} must be positive")))
            }
        };
        let mut out = Tolerances::default();
        if let Some(v) = t.time {
            out.time = positive("time", v)?;
        }
        if let Some(v) = t.tight {
            out.tight = Some(positive("tight", v)?);
        }
        if let Some(v) = t.cal {
            out.cal = Some(positive("cal", v)?);
        }
        if let Some(v) = t.critical {
            out.critical = positive("critical", v)?;
        }
        if let Some(v) = t.epsilon {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "tolerances.epsilon = {v} must be nonnegative"
                )));
            }
            out.epsilon = v;
        }
        Ok(out)
    }

    /// Bracket for the critical-shift search.
    pub fn critical_bracket(&self) -> (f64, f64) {
        let [lo, hi] = self.cost.critical_bracket.unwrap_or([-4.0, 4.0]);
        (lo, hi)
    }
}

/// `node,mu0,mu1` rows; `#` comments and one header line are skipped.
fn read_marginal_csv(path: &Path, node_count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot read marginals {}: {e}", path.display()))
    })?;
    let mut d0 = vec![0.0; node_count];
    let mut d1 = vec![0.0; node_count];
    let mut seen = vec![false; node_count];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("node")) {
            continue;
        }
        let bad = |msg: String| {
            Error::InvalidConfig(format!("marginals {} line {}: {msg}", path.display(), lineno + 1))
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected node,mu0,mu1, got {} fields", fields.len())));
        }
        let node: usize =
            fields[0].parse().map_err(|e| bad(format!("bad node {:?}: {e}", fields[0])))?;
        if node >= node_count {
            return Err(bad(format!("node {node} out of range ({node_count} nodes)")));
        }
        if seen[node] {
            return Err(bad(format!("duplicate node {node}")));
        }
        seen[node] = true;
        d0[node] =
            fields[1].parse().map_err(|e| bad(format!("bad mu0 {:?}: {e}", fields[1])))?;
        d1[node] =
            fields[2].parse().map_err(|e| bad(format!("bad mu1 {:?}: {e}", fields[2])))?;
    }
    if !seen.iter().all(|&s| s) {
        let missing = seen.iter().position(|&s| !s).unwrap();
        return Err(Error::InvalidConfig(format!(
            "marginals {} has no row for node {missing}",
            path.display()
        )));
    }
    Ok((d0, d1))
}

fn swirl_tensor(manifold: &DiscreteManifold) -> MetricField<Sym2> {
    MetricField::PerNode(
        (0..manifold.node_count())
            .map(|v| {
                let p = manifold.position(v);
                Sym2::new(
                    1.0 + 0.25 * (TAU * p.x).sin(),
                    0.1 * (TAU * (p.x + p.y)).cos(),
                    1.0 + 0.25 * (TAU * p.y).cos(),
                )
            })
            .collect(),
    )
}

/// Demo field with breathing tensor axes and a swirling drift, kept well
/// inside the positivity margin.
fn swirl_randers(manifold: &DiscreteManifold) -> FinslerMetric {
    let drift = MetricField::PerNode(
        (0..manifold.node_count())
            .map(|v| {
                let p = manifold.position(v);
                Vec2::new(0.3 * (TAU * p.y).sin(), 0.2 * (TAU * p.x).cos())
            })
            .collect(),
    );
    FinslerMetric::randers(swirl_tensor(manifold), drift)
}

/// Node-varying running cost with a potential bounded away from the
/// drift's dual energy, so nonnegative shifts stay supercritical.
fn swirl_quadratic(manifold: &DiscreteManifold) -> Lagrangian {
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
