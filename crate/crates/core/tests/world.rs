mod common;

use ezag_core::world::{CellGrid, DEFAULT_DENSITY};
use ezag_core::{Error, NodeId, Point, World, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_neighbors(w: &World, id: NodeId) -> Vec<NodeId> {
    let r2 = w.comm_range() * w.comm_range();
    let p = w.position(id);
    (0..w.len())
        .map(NodeId::from_index)
        .filter(|&o| o != id && w.position(o).dist2(p) <= r2)
        .collect()
}

fn assert_matches_oracle(w: &World) {
    for i in 0..w.len() {
        let id = NodeId::from_index(i);
        assert_eq!(w.neighbors(id).unwrap(), brute_neighbors(w, id), "node {i}");
        assert_eq!(w.degree(id), brute_neighbors(w, id).len());
    }
}

#[test]
fn neighbors_match_all_pairs_reference() {
    assert_matches_oracle(&World::build(WorldConfig::geo_dense(10, DEFAULT_DENSITY, 2.0, 42)).unwrap());
    for seed in 0..5 {
        assert_matches_oracle(&World::build(WorldConfig::standard(50, seed)).unwrap());
    }
    // Sparse enough that the bucket grid has many columns.
    let dense = World::build(WorldConfig::standard(400, 7)).unwrap();
    let cfg = WorldConfig { comm_range: 3.0, ..dense.config().clone() };
    assert_matches_oracle(&World::from_positions(cfg, positions_of(&dense)).unwrap());
}

fn positions_of(w: &World) -> Vec<Point> {
    w.nodes().iter().map(|n| n.position).collect()
}

#[test]
fn range_is_a_closed_ball() {
    let w = common::placed(vec![Point::new(10.0, 10.0), Point::new(20.0, 10.0)], 30.0, 10.0);
    assert_eq!(w.neighbors(NodeId(0)).unwrap(), vec![NodeId(1)]);
    assert_eq!(w.neighbors(NodeId(1)).unwrap(), vec![NodeId(0)]);
    let far = common::placed(vec![Point::new(10.0, 10.0), Point::new(20.5, 10.0)], 30.0, 10.0);
    assert!(far.neighbors(NodeId(0)).unwrap().is_empty());
    assert!(!far.is_connected());
}

#[test]
fn single_node_world() {
    let w = World::build(WorldConfig::standard(1, 3)).unwrap();
    assert!(w.neighbors(NodeId(0)).unwrap().is_empty());
    assert!(w.is_connected());
    assert!(matches!(w.neighbors(NodeId(1)), Err(Error::UnknownNode(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(World::build(WorldConfig::standard(0, 0)).is_err());
    let bad_density = WorldConfig { density: -1.0, ..WorldConfig::standard(10, 0) };
    assert!(World::build(bad_density).is_err());
    let mismatched = WorldConfig { area_side: 5.0, ..WorldConfig::standard(10, 0) };
    assert!(World::build(mismatched).is_err());
}

#[test]
fn cells_nest_and_top_level_is_one_cell() {
    let w = World::build(WorldConfig::standard(1000, 11)).unwrap();
    let grid = w.default_grid();
    let top = grid.max_level();
    assert_eq!(grid.cell_count(top), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let side = w.area_side();
    for _ in 0..1000 {
        let p = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        for level in 0..top {
            let here = grid.cell_of(p, level).unwrap();
            assert_eq!(grid.parent(here, level).unwrap(), grid.cell_of(p, level + 1).unwrap());
        }
        assert_eq!(grid.cell_of(p, top).unwrap().0, 0);
    }
    assert_eq!(grid.cell_of(Point::new(0.0, 0.0), 0).unwrap().0, 0);
    assert!(grid.cell_of(Point::new(0.0, 0.0), top + 1).is_err());
    // Four children per parent where the grid is complete.
    let tiled = CellGrid::tiled(100.0, 3);
    for level in 0..3 {
        let mut children = vec![0; tiled.cell_count(level + 1) as usize];
        for c in 0..tiled.cell_count(level) {
            children[tiled.parent(ezag_core::world::CellId(c), level).unwrap().0 as usize] += 1;
        }
        assert!(children.iter().all(|&k| k == 4));
    }
}

#[test]
fn same_cell_nodes_are_in_range() {
    for seed in 0..20 {
        let w = World::build(WorldConfig::standard(200, seed)).unwrap();
        let grid = w.default_grid();
        let cell: Vec<_> = w.nodes().iter().map(|n| grid.cell_of(n.position, 0).unwrap()).collect();
        for a in 0..w.len() {
            for b in a + 1..w.len() {
                if cell[a] == cell[b] {
                    assert!(w.in_range(NodeId::from_index(a), NodeId::from_index(b)));
                }
            }
        }
    }
}

#[test]
fn geo_dense_c2_is_connected_whp() {
    let connected = (0..50)
        .filter(|&s| World::build(WorldConfig::geo_dense(200, DEFAULT_DENSITY, 2.0, s)).unwrap().is_connected())
        .count();
    assert!(connected >= 49, "{connected}/50 connected");
}

#[test]
fn mean_degree_is_logarithmic() {
    let n = 500;
    let ln_n = (n as f64).ln();
    let mut total = 0.0;
    for seed in 0..50 {
        let w = World::build(WorldConfig::standard(n, seed)).unwrap();
        total += (0..n).map(|i| w.degree(NodeId::from_index(i)) as f64).sum::<f64>() / n as f64;
    }
    let mean = total / 50.0;
    assert!((ln_n..=3.0 * ln_n).contains(&mean), "mean degree {mean}, ln N {ln_n}");
}

#[test]
fn deployment_is_uniform_over_cells() {
    let proto = World::build(WorldConfig::standard(500, 0)).unwrap();
    let grid = proto.default_grid();
    let mut counts = vec![0u64; grid.cell_count(0) as usize];
    for seed in 0..100 {
        common::cell_counts(&World::build(WorldConfig::standard(500, seed)).unwrap(), &grid, &mut counts);
    }
    let (stat, dof) = common::chi2(&counts, &common::clipped_cell_areas(&grid, proto.area_side()));
    assert!(stat < common::chi2_critical_01(dof), "chi2 {stat} on {dof} dof");
}

#[test]
fn placement_is_deterministic() {
    let a = World::build(WorldConfig::standard(300, 5)).unwrap();
    let b = World::build(WorldConfig::standard(300, 5)).unwrap();
    let bits = |w: &World| w.nodes().iter().map(|n| (n.position.x.to_bits(), n.position.y.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = World::build(WorldConfig::standard(300, 6)).unwrap();
    assert_ne!(bits(&a), bits(&c));
}
