use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::{Bounds, Grid};
use crate::rng::StreamRng;

pub const DEFAULT_CELLS_1D: usize = 256;
pub const DEFAULT_CELLS_2D: usize = 64;

/// Smallest total mass a conditional density may have before sampling from
/// it is refused.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// Default resolution per axis for grids over a `dim`-dimensional support.
pub fn default_cells(dim: usize) -> usize {
    match dim {
        1 => DEFAULT_CELLS_1D,
        2 => DEFAULT_CELLS_2D,
        _ => 16,
    }
}

/// Transition probability `Q(y; dz) = ρ(y, z) ℓ(dz)` on a box `𝒦`.
pub trait MarkovKernel: Send + Sync {
    fn name(&self) -> &str;

    /// The noise support `𝒦`.
    fn support(&self) -> &Bounds;

    /// `ρ(y, z)`.
    fn density(&self, y: &[f64], z: &[f64]) -> f64;

    /// Declared `L` with `|ρ(y,z) − ρ(y′,z′)| ≤ L (|y − y′| + |z − z′|)`;
    /// infinite for discontinuous fixtures.
    fn lipschitz_bound(&self) -> f64;

    /// Cells per axis of the sampler grid.
    fn sampler_cells(&self) -> usize {
        default_cells(self.support().dim())
    }

    fn dim(&self) -> usize {
        self.support().dim()
    }

    /// Inverse-CDF transform of `dim` uniforms on `[0, 1)` into a draw from
    /// `Q(y; ·)`. The default works on the sampler grid; kernels with a
    /// closed-form quantile override it.
    fn quantile(&self, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        grid_quantile(self, y, u)
    }

    /// One draw from `Q(y; ·)`, consuming exactly `dim` uniforms.
    fn sample(&self, y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let u: Vec<f64> = (0..self.dim()).map(|_| rng.gen::<f64>()).collect();
        self.quantile(y, &u)
    }

    /// A draw by an algorithm independent of [`MarkovKernel::quantile`], used
    /// to simulate the original noise process when checking the reduction.
    fn sample_direct(&self, y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        rejection_sample(self, y, rng)
    }
}

pub fn sampler_grid<K: MarkovKernel + ?Sized>(kernel: &K) -> Grid {
    Grid::uniform(kernel.support().clone(), kernel.sampler_cells()).expect("kernel support is a valid box")
}

/// Unnormalized cell masses `ρ(y, c_i) · vol` at the centers of `grid`.
pub fn cell_masses<K: MarkovKernel + ?Sized>(kernel: &K, y: &[f64], grid: &Grid) -> Vec<f64> {
    let vol = grid.cell_volume();
    grid.centers().map(|c| kernel.density(y, &c).max(0.0) * vol).collect()
}

/// Inverse CDF on the sampler grid: a conditional sweep picks one cell per
/// axis from the marginal masses, then places the point inside the chosen
/// cell by linear interpolation of the cumulative mass.
pub fn grid_quantile<K: MarkovKernel + ?Sized>(kernel: &K, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let grid = sampler_grid(kernel);
    if u.len() != grid.dim() {
        return Err(Error::invalid(format!("need {} uniforms", grid.dim())));
    }
    let masses = cell_masses(kernel, y, &grid);
    let total: f64 = masses.iter().sum();
    if !(total >= DEGENERATE_MASS) {
        return Err(Error::DegenerateDensity { mass: total });
    }
    let cells = grid.cells_per_axis();
    let widths = grid.cell_widths();
    let mut block: &[f64] = &masses;
    let mut x = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let stride: usize = cells[axis + 1..].iter().product();
        let marginal: Vec<f64> = (0..cells[axis]).map(|i| block[i * stride..(i + 1) * stride].iter().sum()).collect();
        let block_total: f64 = marginal.iter().sum();
        let target = u[axis].clamp(0.0, 1.0) * block_total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &m) in marginal.iter().enumerate() {
            if m > 0.0 && acc + m >= target {
                chosen = Some((i, ((target - acc) / m).clamp(0.0, 1.0)));
                break;
            }
            acc += m;
        }
        // round-off can leave the target just above the last positive cell
        let (i, frac) = chosen.unwrap_or_else(|| (marginal.iter().rposition(|&m| m > 0.0).unwrap_or(0), 1.0));
        x.push(grid.bounds().lo()[axis] + (i as f64 + frac) * widths[axis]);
        block = &block[i * stride..(i + 1) * stride];
    }
    Ok(x)
}

/// Rejection sampling from the uniform proposal on `𝒦`, with the envelope
/// taken from the sampler-grid maximum times a safety factor and raised
/// whenever a larger density value is met.
pub fn rejection_sample<K: MarkovKernel + ?Sized>(kernel: &K, y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
    let grid = sampler_grid(kernel);
    let vol = grid.cell_volume();
    let masses = cell_masses(kernel, y, &grid);
    let total: f64 = masses.iter().sum();
    if !(total >= DEGENERATE_MASS) {
        return Err(Error::DegenerateDensity { mass: total });
    }
    let mut envelope = 2.0 * masses.iter().fold(0.0f64, |a, &m| a.max(m)) / vol;
    let support = kernel.support();
    for _ in 0..10_000_000usize {
        let t: Vec<f64> = (0..support.dim()).map(|_| rng.gen::<f64>()).collect();
        let z = support.lerp(&t);
        let rho = kernel.density(y, &z);
        envelope = envelope.max(rho);
        if rng.gen::<f64>() * envelope < rho {
            return Ok(z);
        }
    }
    Err(Error::BudgetExceeded { budget: 10_000_000, what: "rejection sampler found no acceptance".into() })
}

/// Largest mass defect `|∫ρ(y,z)dz − 1|` over the given probes,
/// by midpoint quadrature on `grid`.
pub fn worst_mass_defect<K: MarkovKernel + ?Sized>(kernel: &K, probes: &[Vec<f64>], grid: &Grid) -> f64 {
    probes
        .iter()
        .map(|y| (cell_masses(kernel, y, grid).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}
