//! Discrete base spaces: strongly connected directed graphs whose edges carry
//! displacement vectors in model coordinates. The flat unit torus comes with
//! a grid constructor; arbitrary structures load from a node/edge listing.

pub mod lagrangian;
pub mod metric;

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use lagrangian::{Lagrangian, LagrangianAudit, LagrangianForm};
pub use metric::{FinslerMetric, MetricAudit, MetricField, Sym2, Vec2};

/// Move set of the torus grid: the 8-neighborhood, or the 16-neighborhood
/// that adds the knight moves for better directional resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    Eight,
    Sixteen,
}

const OFFSETS_EIGHT: [(i64, i64); 8] =
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

const OFFSETS_KNIGHT: [(i64, i64); 8] =
    [(2, 1), (1, 2), (-1, 2), (-2, 1), (-2, -1), (-1, -2), (1, -2), (2, -1)];

impl Stencil {
    pub fn offsets(self) -> Vec<(i64, i64)> {
        match self {
            Stencil::Eight => OFFSETS_EIGHT.to_vec(),
            Stencil::Sixteen => {
                let mut v = OFFSETS_EIGHT.to_vec();
                v.extend_from_slice(&OFFSETS_KNIGHT);
                v
            }
        }
    }

    /// Largest offset norm, in cells.
    pub fn diameter(self) -> f64 {
        match self {
            Stencil::Eight => 2f64.sqrt(),
            Stencil::Sixteen => 5f64.sqrt(),
        }
    }

    pub fn from_size(size: usize) -> Result<Self> {
        match size {
            8 => Ok(Stencil::Eight),
            16 => Ok(Stencil::Sixteen),
            other => Err(Error::InvalidConfig(format!(
                "stencil must be 8 or 16, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    /// Flat unit torus, `side x side` grid with spacing `1/side`.
    Torus2d { side: usize, spacing: f64 },
    General,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub displacement: Vec2,
    /// Euclidean length of the displacement; sets the bracket scale when
    /// minimizing over traversal time.
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct DiscreteManifold {
    positions: Vec<Vec2>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    topology: Topology,
}

/// Wraps `raw` into the minimal-magnitude representative modulo `period`,
/// keeping the sign of `raw` on exact half-period ties so that opposite
/// stencil offsets stay exact negations of each other.
pub(crate) fn wrap_min(raw: f64, period: f64) -> f64 {
    let mut w = raw;
    while w > period / 2.0 {
        w -= period;
    }
    while w < -period / 2.0 {
        w += period;
    }
    if w.abs() == period / 2.0 && w.signum() != raw.signum() {
        -w
    } else {
        w
    }
}

impl DiscreteManifold {
    /// `side x side` grid on the unit torus with the given move set.
    /// Displacements use the minimal periodic wrap; wraps that land back on
    /// the source node are dropped, as are exact duplicates of an already
    /// generated (target, displacement) pair.
    pub fn torus(side: usize, stencil: Stencil) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidConfig(format!(
                "torus side must be at least 2, got {side}"
            )));
        }
        let n = side * side;
        let h = 1.0 / side as f64;
        let offsets = stencil.offsets();

        let mut positions = Vec::with_capacity(n);
        for iy in 0..side {
            for ix in 0..side {
                positions.push(Vec2::new(ix as f64 * h, iy as f64 * h));
            }
        }

        let index = |ix: i64, iy: i64| -> usize {
            let s = side as i64;
            (ix.rem_euclid(s) + s * iy.rem_euclid(s)) as usize
        };

        let mut edges = Vec::with_capacity(n * offsets.len());
        let mut seen: HashSet<(usize, u64, u64)> = HashSet::new();
        for iy in 0..side as i64 {
            for ix in 0..side as i64 {
                let src = index(ix, iy);
                seen.clear();
                for &(dx, dy) in &offsets {
                    let tgt = index(ix + dx, iy + dy);
                    let d = Vec2::new(
                        wrap_min(dx as f64 * h, 1.0),
                        wrap_min(dy as f64 * h, 1.0),
                    );
                    if tgt == src && d.is_zero() {
                        continue;
                    }
                    if !seen.insert((tgt, d.x.to_bits(), d.y.to_bits())) {
                        continue;
                    }
                    edges.push(Edge { source: src, target: tgt, displacement: d, length: d.norm() });
                }
            }
        }

        Self::assemble(positions, edges, Topology::Torus2d { side, spacing: h })
    }

    pub fn from_graph_spec(spec: &GraphSpec) -> Result<Self> {
        let n = spec.nodes.len();
        if n == 0 {
            return Err(Error::InvalidConfig("graph has no nodes".into()));
        }
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut edges = Vec::with_capacity(spec.edges.len());
        for (i, &(src, tgt, disp)) in spec.edges.iter().enumerate() {
            if src >= n || tgt >= n {
                return Err(Error::InvalidConfig(format!(
                    "edge {i} references node out of range ({src} -> {tgt}, {n} nodes)"
                )));
            }
            if src == tgt {
                return Err(Error::InvalidConfig(format!("edge {i} is a self-loop at {src}")));
            }
            if !seen.insert((src, tgt)) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate edge {src} -> {tgt} at record {i}"
                )));
            }
            let d = disp.unwrap_or(spec.nodes[tgt] - spec.nodes[src]);
            if d.is_zero() {
                return Err(Error::InvalidConfig(format!(
                    "edge {i} ({src} -> {tgt}) has zero displacement"
                )));
            }
            edges.push(Edge { source: src, target: tgt, displacement: d, length: d.norm() });
        }
        Self::assemble(spec.nodes.clone(), edges, Topology::General)
    }

    fn assemble(positions: Vec<Vec2>, edges: Vec<Edge>, topology: Topology) -> Result<Self> {
        let n = positions.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            out_edges[e.source].push(id);
            in_edges[e.target].push(id);
        }
        let m = DiscreteManifold { positions, edges, out_edges, in_edges, topology };
        if !m.is_strongly_connected() {
            return Err(Error::Connectivity(format!(
                "{n} nodes, {} edges: some node unreachable in one direction",
                m.edges.len()
            )));
        }
        Ok(m)
    }

    fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        if n <= 1 {
            return true;
        }
        let reach = |forward: bool| -> usize {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            while let Some(v) = queue.pop_front() {
                let adj = if forward { &self.out_edges[v] } else { &self.in_edges[v] };
                for &e in adj {
                    let w = if forward { self.edges[e].target } else { self.edges[e].source };
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        queue.push_back(w);
                    }
                }
            }
            count
        };
        reach(true) == n && reach(false) == n
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn position(&self, node: usize) -> Vec2 {
        self.positions[node]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Area represented by one node, when the topology defines it.
    pub fn cell_volume(&self) -> Option<f64> {
        match self.topology {
            Topology::Torus2d { spacing, .. } => Some(spacing * spacing),
            Topology::General => None,
        }
    }

    /// Distance between node positions respecting the topology (wrapped on
    /// the torus, straight-line otherwise). This is coordinate geometry, not
    /// the edge-cost metric.
    pub fn coordinate_distance(&self, a: usize, b: usize) -> f64 {
        let d = self.positions[b] - self.positions[a];
        match self.topology {
            Topology::Torus2d { .. } => {
                let wx = wrap_min(d.x, 1.0);
                let wy = wrap_min(d.y, 1.0);
                (wx * wx + wy * wy).sqrt()
            }
            Topology::General => d.norm(),
        }
    }
}

/// Parsed node/edge listing. One record per line:
///
/// ```text
/// node <x> <y>                 # ids assigned in order of appearance
/// edge <src> <dst> [dx dy]     # displacement defaults to position delta
/// ```
///
/// Blank lines and `#` comments are ignored.
#[derive(Clone, Debug, Default)]
pub struct GraphSpec {
    pub nodes: Vec<Vec2>,
    pub edges: Vec<(usize, usize, Option<Vec2>)>,
}

impl GraphSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = GraphSpec::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let kind = tok.next().unwrap();
            let fields: Vec<&str> = tok.collect();
            let bad = |msg: &str| {
                Error::InvalidConfig(format!("graph spec line {}: {msg}", lineno + 1))
            };
            match kind {
                "node" => {
                    if fields.len() != 2 {
                        return Err(bad("expected `node <x> <y>`"));
                    }
                    let x: f64 = fields[0].parse().map_err(|_| bad("bad x coordinate"))?;
                    let y: f64 = fields[1].parse().map_err(|_| bad("bad y coordinate"))?;
                    spec.nodes.push(Vec2::new(x, y));
                }
                "edge" => {
                    if fields.len() != 2 && fields.len() != 4 {
                        return Err(bad("expected `edge <src> <dst> [dx dy]`"));
                    }
                    let src: usize = fields[0].parse().map_err(|_| bad("bad source id"))?;
                    let dst: usize = fields[1].parse().map_err(|_| bad("bad target id"))?;
                    let disp = if fields.len() == 4 {
                        let dx: f64 = fields[2].parse().map_err(|_| bad("bad dx"))?;
                        let dy: f64 = fields[3].parse().map_err(|_| bad("bad dy"))?;
                        Some(Vec2::new(dx, dy))
                    } else {
                        None
                    };
                    spec.edges.push((src, dst, disp));
                }
                other => return Err(bad(&format!("unknown record `{other}`"))),
            }
        }
        Ok(spec)
    }
}
