#![allow(dead_code)]

use ezag_core::world::CellGrid;
use ezag_core::{Point, World, WorldConfig};

/// Upper 1% point of the chi-square distribution (Wilson-Hilferty).
pub fn chi2_critical_01(dof: f64) -> f64 {
    let z = 2.326_347_874;
    let a = 2.0 / (9.0 * dof);
    dof * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Pearson statistic of `counts` against expectations proportional to
/// `weights`; returns `(statistic, degrees of freedom)`.
pub fn chi2(counts: &[u64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let wsum: f64 = weights.iter().sum();
    let stat = counts
        .iter()
        .zip(weights)
        .map(|(&c, &w)| {
            let e = total * w / wsum;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    (stat, (counts.len() - 1) as f64)
}

/// Area of each level-0 cell clipped to the region, row-major.
pub fn clipped_cell_areas(grid: &CellGrid, area_side: f64) -> Vec<f64> {
    let cols = grid.cols(0);
    let side = grid.cell_side(0);
    let span = |i: u32| (area_side - f64::from(i) * side).min(side);
    (0..cols).flat_map(|r| (0..cols).map(move |c| span(r) * span(c))).collect()
}

pub fn cell_counts(world: &World, grid: &CellGrid, counts: &mut [u64]) {
    for n in world.nodes() {
        counts[grid.cell_of(n.position, 0).unwrap().0 as usize] += 1;
    }
}

/// Hand-placed world on a `side` x `side` region.
pub fn placed(positions: Vec<Point>, side: f64, range: f64) -> World {
    let n = positions.len();
    let cfg = WorldConfig {
        n_nodes: n,
        area_side: side,
        density: n as f64 / (side * side),
        comm_range: range,
        geo_dense_c: 2.0,
        rng_seed: 0,
    };
    World::from_positions(cfg, positions).unwrap()
}

/// First connected standard world at or after `seed`.
pub fn connected_world(n: usize, seed: u64) -> World {
    (seed..)
        .map(|s| World::build(WorldConfig::standard(n, s)).unwrap())
        .find(World::is_connected)
        .unwrap()
}
