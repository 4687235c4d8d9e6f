//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use mixlab_core::dynamics::catalog::system;
use mixlab_core::measures::{Bounds, Grid, GridDensity};
use mixlab_core::noise::{kernel, MarkovKernel};
use mixlab_core::RdsSystem;

/// Kicked linear flow driven by AR(1) truncated-Gaussian noise.
pub fn reference() -> (RdsSystem, Arc<dyn MarkovKernel>) {
    let k = kernel("ar1_truncgauss").expect("catalog kernel");
    let sys = system("kicked_linear_1d", k.support()).expect("catalog system");
    (sys, k)
}

/// Two smooth densities on `[0, 1]` with `cells` cells.
pub fn density_pair(cells: usize) -> (GridDensity, GridDensity) {
    let grid = Grid::uniform(Bounds::cube(1, 0.0, 1.0).expect("unit box"), cells).expect("grid");
    let a = GridDensity::from_fn(grid.clone(), |x| 1.0 + (6.0 * x[0]).sin() * 0.5).expect("density");
    let b = GridDensity::from_fn(grid, |x| 1.0 + x[0] * x[0]).expect("density");
    (a.normalized().expect("mass"), b.normalized().expect("mass"))
}

/// `n` evenly spread atoms with unequal weights.
pub fn atoms(n: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let pts = (0..n).map(|i| vec![(i as f64 + shift) / n as f64]).collect();
    let w = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    (pts, w)
}
