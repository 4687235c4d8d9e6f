use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{Grid, GridDensity};

use super::kernel::{cell_masses, MarkovKernel, DEGENERATE_MASS};

/// Error-bound ceiling above which grid propagation is refused.
pub const MAX_QUADRATURE_BOUND: f64 = 0.1;

/// Dense storage is used up to this many cells; larger grids recompute rows.
const DENSE_LIMIT: usize = 2048;

/// The kernel discretized on a grid: row `w` holds `ρ(c_w, c_z)·vol`
/// normalized to a probability vector.
pub struct TransitionOperator<'a> {
    kernel: &'a dyn MarkovKernel,
    grid: Grid,
    dense: Option<Vec<f64>>,
    row_totals: Vec<f64>,
}

impl<'a> TransitionOperator<'a> {
    pub fn new(kernel: &'a dyn MarkovKernel, grid: Grid) -> Result<Self> {
        if grid.bounds() != kernel.support() {
            return Err(Error::MismatchedSupport("propagation grid must cover the kernel support".into()));
        }
        let n = grid.len();
        let rows: Vec<Vec<f64>> = if n <= DENSE_LIMIT {
            (0..n).into_par_iter().map(|w| cell_masses(kernel, &grid.center(w), &grid)).collect()
        } else {
            Vec::new()
        };
        let row_totals: Vec<f64> = if n <= DENSE_LIMIT {
            rows.iter().map(|r| r.iter().sum()).collect()
        } else {
            (0..n).into_par_iter().map(|w| cell_masses(kernel, &grid.center(w), &grid).iter().sum()).collect()
        };
        if let Some(&mass) = row_totals.iter().find(|&&t| !(t >= DEGENERATE_MASS)) {
            return Err(Error::DegenerateDensity { mass });
        }
        let dense = (n <= DENSE_LIMIT).then(|| {
            rows.into_iter().zip(&row_totals).flat_map(|(r, t)| r.into_iter().map(move |v| v / t)).collect()
        });
        Ok(Self { kernel, grid, dense, row_totals })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &dyn MarkovKernel {
        self.kernel
    }

    fn row(&self, w: usize) -> Vec<f64> {
        let n = self.grid.len();
        match &self.dense {
            Some(m) => m[w * n..(w + 1) * n].to_vec(),
            None => {
                let t = self.row_totals[w];
                cell_masses(self.kernel, &self.grid.center(w), &self.grid).into_iter().map(|v| v / t).collect()
            }
        }
    }

    /// Normalized one-step cell masses of `Q(y; ·)` for an arbitrary `y`.
    pub fn initial(&self, y: &[f64]) -> Result<Vec<f64>> {
        let m = cell_masses(self.kernel, y, &self.grid);
        let total: f64 = m.iter().sum();
        if !(total >= DEGENERATE_MASS) {
            return Err(Error::DegenerateDensity { mass: total });
        }
        Ok(m.into_iter().map(|v| v / total).collect())
    }

    /// `p ↦ pT`: one forward step of cell masses.
    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let out: Vec<f64> = match &self.dense {
            Some(m) => (0..n)
                .into_par_iter()
                .map(|z| p.iter().enumerate().filter(|(_, pw)| **pw != 0.0).map(|(w, pw)| pw * m[w * n + z]).sum())
                .collect(),
            None => {
                let mut acc = vec![0.0; n];
                for (w, &pw) in p.iter().enumerate() {
                    if pw != 0.0 {
                        acc.iter_mut().zip(self.row(w)).for_each(|(a, t)| *a += pw * t);
                    }
                }
                acc
            }
        };
        let total: f64 = out.iter().sum();
        out.into_iter().map(|v| v / total).collect()
    }

    /// `h ↦ Th`: conditional expectation of a cell function one step ahead.
    pub fn backward(&self, h: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|w| self.row(w).iter().zip(h).map(|(t, v)| t * v).sum())
            .collect()
    }

    /// Accumulated quadrature-error bound after `k` steps:
    /// `L × cell diameter × k`.
    pub fn error_bound(&self, k: usize) -> f64 {
        quadrature_bound(self.kernel, &self.grid, k)
    }
}

pub fn quadrature_bound(kernel: &dyn MarkovKernel, grid: &Grid, k: usize) -> f64 {
    let l = kernel.lipschitz_bound();
    if l == 0.0 {
        0.0
    } else {
        l * grid.cell_diameter() * k as f64
    }
}

/// Density of `Q_k(y; ·)` with its accumulated quadrature-error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct KStepDensity {
    pub density: GridDensity,
    pub error_bound: f64,
}

/// `Q_k(y; ·)` by iterated grid convolution on `cells` cells per axis.
pub fn k_step_kernel(kernel: &dyn MarkovKernel, y: &[f64], k: usize, cells: usize) -> Result<KStepDensity> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let grid = Grid::uniform(kernel.support().clone(), cells)?;
    let bound = quadrature_bound(kernel, &grid, k);
    if !(bound <= MAX_QUADRATURE_BOUND) {
        return Err(Error::ResolutionTooCoarse { bound, limit: MAX_QUADRATURE_BOUND });
    }
    let op = TransitionOperator::new(kernel, grid.clone())?;
    let mut p = op.initial(y)?;
    for _ in 1..k {
        p = op.forward(&p);
    }
    Ok(KStepDensity { density: GridDensity::from_masses(grid, &p)?, error_bound: bound })
}

/// Fraction of each cell lying in the Euclidean ball `B(center, radius)`;
/// exact in one dimension, midpoint sub-sampling (16 per axis) otherwise.
pub fn ball_cell_weights(grid: &Grid, center: &[f64], radius: f64) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.len())
        .map(|i| {
            let (lo, hi) = grid.cell_bounds(i);
            if d == 1 {
                let a = lo[0].max(center[0] - radius);
                let b = hi[0].min(center[0] + radius);
                return ((b - a) / (hi[0] - lo[0])).clamp(0.0, 1.0);
            }
            // quick accept / reject on the cell's nearest and farthest points
            let (mut near, mut far) = (0.0, 0.0);
            for j in 0..d {
                let n = (center[j].clamp(lo[j], hi[j]) - center[j]).abs();
                let f = (lo[j] - center[j]).abs().max((hi[j] - center[j]).abs());
                near += n * n;
                far += f * f;
            }
            let r2 = radius * radius;
            if near > r2 {
                return 0.0;
            }
            if far <= r2 {
                return 1.0;
            }
            let sub = 16usize;
            let total = sub.pow(d as u32);
            let mut inside = 0usize;
            for s in 0..total {
                let mut rem = s;
                let mut dist2 = 0.0;
                for j in (0..d).rev() {
                    let t = ((rem % sub) as f64 + 0.5) / sub as f64;
                    rem /= sub;
                    let x = lo[j] + t * (hi[j] - lo[j]) - center[j];
                    dist2 += x * x;
                }
                if dist2 <= r2 {
                    inside += 1;
                }
            }
            inside as f64 / total as f64
        })
        .collect()
}
