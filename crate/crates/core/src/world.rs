//! Geo-dense random geometric graph: uniform deployment over a square,
//! unit-disk connectivity and the square-cell partition used by the
//! coverage argument and the hierarchical protocol.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier; ids are dense in `0..n_nodes`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Default deployment density, nodes per square meter.
pub const DEFAULT_DENSITY: f64 = 0.01;

/// Default geo-dense constant: `R^2 = ln(N) / density`, a mean degree of
/// about `pi ln N` away from the boundary.
pub const DEFAULT_GEO_DENSE_C: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_nodes: usize,
    /// Side of the square deployment region, meters.
    pub area_side: f64,
    /// Nodes per square meter.
    pub density: f64,
    /// Communication range, meters.
    pub comm_range: f64,
    pub geo_dense_c: f64,
    pub rng_seed: u64,
}

impl WorldConfig {
    /// Sizes the area from `n` and `density`, and the range so that
    /// `R^2 = 2 c ln(n) / density` holds exactly.
    ///
    /// A single node has no neighbors to reach; its range is sized as if
    /// `n` were 2 so that it stays positive.
    pub fn geo_dense(n_nodes: usize, density: f64, c: f64, rng_seed: u64) -> Self {
        let area_side = (n_nodes as f64 / density).sqrt();
        let ln_n = (n_nodes.max(2) as f64).ln();
        let comm_range = (2.0 * c * ln_n / density).sqrt();
        Self { n_nodes, area_side, density, comm_range, geo_dense_c: c, rng_seed }
    }

    /// [`WorldConfig::geo_dense`] with the default density and constant.
    pub fn standard(n_nodes: usize, rng_seed: u64) -> Self {
        Self::geo_dense(n_nodes, DEFAULT_DENSITY, DEFAULT_GEO_DENSE_C, rng_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 1 {
            return Err(Error::Config("n_nodes must be at least 1".into()));
        }
        for (name, v) in [
            ("area_side", self.area_side),
            ("density", self.density),
            ("comm_range", self.comm_range),
            ("geo_dense_c", self.geo_dense_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let implied = self.area_side * self.area_side * self.density;
        let n = self.n_nodes as f64;
        if ((implied - n) / n).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "area_side^2 * density = {implied} does not match n_nodes = {n}"
            )));
        }
        let need = 2.0 * self.geo_dense_c * n.ln() / self.density;
        if self.comm_range * self.comm_range < need * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "comm_range^2 = {} violates the geo-dense condition (needs >= {need})",
                self.comm_range * self.comm_range
            )));
        }
        Ok(())
    }
}

/// Square cells of side `level0_side * 2^level`; level `max_level` is one
/// cell covering the whole region.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    area_side: f64,
    level0_side: f64,
    max_level: u32,
}

/// Cell index within a level, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub u32);

impl CellGrid {
    /// Smallest hierarchy whose top level is a single cell.
    pub fn new(area_side: f64, level0_side: f64) -> Self {
        let mut max_level = 0;
        while level0_side * f64::from(1u32 << max_level) < area_side {
            max_level += 1;
        }
        Self { area_side, level0_side, max_level }
    }

    /// A grid of exactly `2^levels` cells per side at level 0.
    pub fn tiled(area_side: f64, levels: u32) -> Self {
        Self { area_side, level0_side: area_side / f64::from(1u32 << levels), max_level: levels }
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn cell_side(&self, level: u32) -> f64 {
        self.level0_side * f64::from(1u32 << level)
    }

    /// Cells per row (and per column) at `level`.
    pub fn cols(&self, level: u32) -> u32 {
        ((self.area_side / self.cell_side(level) - 1e-9).ceil() as u32).max(1)
    }

    pub fn cell_count(&self, level: u32) -> u32 {
        let c = self.cols(level);
        c * c
    }

    pub fn cell_of(&self, p: Point, level: u32) -> Result<CellId> {
        if level > self.max_level {
            return Err(Error::LevelOutOfRange { level, max: self.max_level });
        }
        let side = self.cell_side(level);
        let cols = self.cols(level);
        let col = ((p.x / side).floor().max(0.0) as u32).min(cols - 1);
        let row = ((p.y / side).floor().max(0.0) as u32).min(cols - 1);
        Ok(CellId(row * cols + col))
    }

    /// Parent of `cell` (at `level`) one level up.
    pub fn parent(&self, cell: CellId, level: u32) -> Result<CellId> {
        if level >= self.max_level {
            return Err(Error::LevelOutOfRange { level: level + 1, max: self.max_level });
        }
        let cols = self.cols(level);
        let (row, col) = (cell.0 / cols, cell.0 % cols);
        Ok(CellId((row / 2) * self.cols(level + 1) + col / 2))
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub position: Point,
    pub velocity: Point,
}

/// Uniform bucket grid of side >= R so a range query touches 3x3 buckets.
#[derive(Clone, Debug)]
struct SpatialIndex {
    bucket_side: f64,
    cols: usize,
    buckets: Vec<Vec<u32>>,
}

impl SpatialIndex {
    fn new(area_side: f64, range: f64) -> Self {
        let cols = ((area_side / range).floor() as usize).clamp(1, 4096);
        Self { bucket_side: area_side / cols as f64, cols, buckets: vec![Vec::new(); cols * cols] }
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let c = ((p.x / self.bucket_side) as usize).min(self.cols - 1);
        let r = ((p.y / self.bucket_side) as usize).min(self.cols - 1);
        (c, r)
    }

    fn rebuild(&mut self, nodes: &[Node]) {
        for b in &mut self.buckets {
            b.clear();
        }
        for n in nodes {
            let (c, r) = self.bucket(n.position);
            self.buckets[r * self.cols + c].push(n.id.0);
        }
    }
}

/// The evolving geometric graph.
#[derive(Clone, Debug)]
pub struct World {
    config: WorldConfig,
    nodes: Vec<Node>,
    index: SpatialIndex,
    range2: f64,
}

impl World {
    /// Deploys `n_nodes` i.i.d. uniform over the square; reproducible from
    /// `rng_seed`.
    pub fn build(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let side = config.area_side;
        let positions = (0..config.n_nodes)
            .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect();
        Self::from_positions(config, positions)
    }

    /// A world with explicit placement. The geo-dense condition is not
    /// checked, which lets tests build hand-made topologies.
    pub fn from_positions(config: WorldConfig, positions: Vec<Point>) -> Result<Self> {
        if positions.len() != config.n_nodes {
            return Err(Error::Config(format!(
                "{} positions given for {} nodes",
                positions.len(),
                config.n_nodes
            )));
        }
        if !(config.comm_range > 0.0 && config.area_side > 0.0) {
            return Err(Error::Config("comm_range and area_side must be positive".into()));
        }
        for p in &positions {
            if !(0.0..=config.area_side).contains(&p.x) || !(0.0..=config.area_side).contains(&p.y) {
                return Err(Error::Config(format!("position {p:?} outside the region")));
            }
        }
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| Node { id: NodeId::from_index(i), position, velocity: Point::default() })
            .collect();
        let mut world = Self {
            index: SpatialIndex::new(config.area_side, config.comm_range),
            range2: config.comm_range * config.comm_range,
            config,
            nodes,
        };
        world.refresh_index();
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area_side(&self) -> f64 {
        self.config.area_side
    }

    pub fn comm_range(&self) -> f64 {
        self.config.comm_range
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Node] {
        &mut self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.index()).ok_or(Error::UnknownNode(id))
    }

    #[inline]
    pub fn position(&self, id: NodeId) -> Point {
        self.nodes[id.index()].position
    }

    /// Must be called after positions change.
    pub fn refresh_index(&mut self) {
        self.index.rebuild(&self.nodes);
    }

    /// Grid whose level-0 cells have diagonal R.
    pub fn default_grid(&self) -> CellGrid {
        CellGrid::new(self.config.area_side, self.config.comm_range / std::f64::consts::SQRT_2)
    }

    #[inline]
    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.position(a).dist2(self.position(b)) <= self.range2
    }

    /// Calls `f` for every node within the closed ball of radius R around
    /// `id`, excluding `id`, in ascending bucket order.
    pub fn for_each_neighbor(&self, id: NodeId, mut f: impl FnMut(NodeId)) {
        let p = self.position(id);
        let (c, r) = self.index.bucket(p);
        let cols = self.index.cols;
        for rr in r.saturating_sub(1)..=(r + 1).min(cols - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                for &other in &self.index.buckets[rr * cols + cc] {
                    if other != id.0 && self.nodes[other as usize].position.dist2(p) <= self.range2 {
                        f(NodeId(other));
                    }
                }
            }
        }
    }

    /// Sorted neighbor list of `id`.
    pub fn neighbors(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.node(id)?;
        let mut out = Vec::new();
        self.for_each_neighbor(id, |n| out.push(n));
        out.sort_unstable();
        Ok(out)
    }

    pub fn degree(&self, id: NodeId) -> usize {
        let mut d = 0;
        self.for_each_neighbor(id, |_| d += 1);
        d
    }

    /// Nodes reachable from `start` (including it) at current positions.
    pub fn component_of(&self, start: NodeId) -> Result<Vec<NodeId>> {
        self.node(start)?;
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.index()] = true;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            self.for_each_neighbor(u, |v| {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    queue.push_back(v);
                }
            });
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.component_of(NodeId(0)).map(|c| c.len() == self.len()).unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, side: f64, range: f64) -> WorldConfig {
        WorldConfig {
            n_nodes: n,
            area_side: side,
            density: n as f64 / (side * side),
            comm_range: range,
            geo_dense_c: 2.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn single_node_has_no_neighbors() {
        let w = World::build(WorldConfig::geo_dense(1, 0.01, 2.0, 3)).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w.neighbors(NodeId(0)).unwrap().is_empty());
        assert!(w.is_connected());
    }

    #[test]
    fn boundary_distance_is_inclusive() {
        let w = World::from_positions(cfg(2, 10.0, 3.0), vec![Point::new(1.0, 1.0), Point::new(4.0, 1.0)]).unwrap();
        assert_eq!(w.neighbors(NodeId(0)).unwrap(), vec![NodeId(1)]);
        assert_eq!(w.neighbors(NodeId(1)).unwrap(), vec![NodeId(0)]);
    }

    #[test]
    fn far_pair_is_disconnected() {
        let w = World::from_positions(cfg(2, 10.0, 3.0), vec![Point::new(1.0, 1.0), Point::new(4.01, 1.0)]).unwrap();
        assert!(!w.is_connected());
    }

    #[test]
    fn unknown_node_is_an_error() {
        let w = World::build(WorldConfig::geo_dense(5, 0.01, 2.0, 3)).unwrap();
        assert_eq!(w.neighbors(NodeId(5)), Err(Error::UnknownNode(NodeId(5))));
    }

    #[test]
    fn config_errors_name_the_invariant() {
        let mut c = WorldConfig::geo_dense(100, 0.002, 2.0, 1);
        c.comm_range *= 0.9;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("geo-dense"), "{msg}");

        let mut c = WorldConfig::geo_dense(100, 0.002, 2.0, 1);
        c.area_side *= 1.01;
        assert!(c.validate().unwrap_err().to_string().contains("n_nodes"));

        let mut c = WorldConfig::geo_dense(100, 0.002, 2.0, 1);
        c.n_nodes = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn origin_is_cell_zero_and_top_level_is_single_cell() {
        let g = CellGrid::new(100.0, 7.0);
        for level in 0..=g.max_level() {
            assert_eq!(g.cell_of(Point::new(0.0, 0.0), level).unwrap(), CellId(0));
        }
        let top = g.max_level();
        assert_eq!(g.cell_count(top), 1);
        assert_eq!(g.cell_of(Point::new(100.0, 100.0), top).unwrap(), CellId(0));
        assert_eq!(g.cell_of(Point::new(55.0, 3.0), top + 1), Err(Error::LevelOutOfRange { level: top + 1, max: top }));
    }

    #[test]
    fn tiled_grid_has_power_of_two_columns() {
        let g = CellGrid::tiled(80.0, 3);
        assert_eq!(g.cols(0), 8);
        assert_eq!(g.cols(3), 1);
        assert_eq!(g.cell_of(Point::new(79.9, 0.0), 0).unwrap(), CellId(7));
    }
}
