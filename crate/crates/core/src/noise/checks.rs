use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::measures::{Grid, GridDensity};
use crate::rng::{stream, Purpose};

use super::kernel::{default_cells, MarkovKernel};
use super::propagate::{ball_cell_weights, quadrature_bound, TransitionOperator};

/// `L · gap` with the convention `0 · ∞ = 0`.
pub(crate) fn lipschitz_slack(l: f64, gap: f64) -> f64 {
    if l == 0.0 || gap == 0.0 {
        0.0
    } else {
        l * gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorizationConfig {
    /// Grid cells per axis for the lower envelope.
    pub cells: usize,
    /// Lattice points per axis for the `y` probes.
    pub lattice: usize,
    pub random_probes: usize,
    pub seed: u64,
}

impl MinorizationConfig {
    pub fn for_dim(dim: usize) -> Self {
        Self { cells: default_cells(dim), lattice: if dim == 1 { 129 } else { 17 }, random_probes: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationCertificate {
    pub radius_r: f64,
    /// Conservative lower bound of `min_y ρ(y, 0)` over `y ∈ 𝒦 ∩ B̄(r)`.
    pub lower_density_at_zero: f64,
    /// `∫ m dℓ` of the conservative envelope.
    pub minorizing_mass: f64,
    pub probe_count: usize,
    /// Lipschitz slack subtracted from every probed minimum.
    pub slack: f64,
    /// The conservative envelope `m` (not normalized).
    pub envelope: GridDensity,
}

/// Probes of `𝒦 ∩ B̄(r)`: a lattice over the intersection's bounding box plus
/// seeded uniform draws, and the largest distance from a point of the set to
/// the lattice.
pub(crate) fn ball_probes(support: &crate::measures::Bounds, r: f64, cfg: &MinorizationConfig) -> (Vec<Vec<f64>>, f64) {
    let d = support.dim();
    let lo: Vec<f64> = support.lo().iter().map(|&l| l.max(-r)).collect();
    let hi: Vec<f64> = support.hi().iter().map(|&h| h.min(r)).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return (Vec::new(), 0.0);
    }
    let n = cfg.lattice.max(2);
    let mut probes = Vec::new();
    for flat in 0..n.pow(d as u32) {
        let mut rem = flat;
        let mut p = vec![0.0; d];
        for j in (0..d).rev() {
            let t = (rem % n) as f64 / (n - 1) as f64;
            rem /= n;
            p[j] = lo[j] + t * (hi[j] - lo[j]);
        }
        if norm(&p) <= r {
            probes.push(p);
        }
    }
    let mut rng = stream(cfg.seed, Purpose::Probe, 3);
    let mut drawn = 0;
    let mut attempts = 0;
    while drawn < cfg.random_probes && attempts < 100 * cfg.random_probes.max(1) {
        attempts += 1;
        let p: Vec<f64> = (0..d).map(|j| lo[j] + rng.gen::<f64>() * (hi[j] - lo[j])).collect();
        if norm(&p) <= r {
            probes.push(p);
            drawn += 1;
        }
    }
    let gap = 0.5 * (0..d).map(|j| ((hi[j] - lo[j]) / (n - 1) as f64).powi(2)).sum::<f64>().sqrt();
    (probes, gap)
}

/// Lower envelope `m(z) = min_{y ∈ 𝒦 ∩ B̄(r)} ρ(y, z)` on probes, with the
/// Lipschitz discretization slack subtracted.
pub fn check_minorization(
    kernel: &dyn MarkovKernel,
    radius_r: f64,
    cfg: &MinorizationConfig,
) -> Result<MinorizationCertificate> {
    if !(radius_r > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let (probes, gap) = ball_probes(kernel.support(), radius_r, cfg);
    if probes.is_empty() {
        return Err(Error::invalid("the noise support does not meet the ball"));
    }
    let l = kernel.lipschitz_bound();
    let grid = Grid::uniform(kernel.support().clone(), cfg.cells)?;
    let y_slack = lipschitz_slack(l, gap);
    let slack = y_slack + lipschitz_slack(l, 0.5 * grid.cell_diameter());
    let zero = vec![0.0; kernel.dim()];
    let at_zero = probes.iter().map(|y| kernel.density(y, &zero)).fold(f64::INFINITY, f64::min) - y_slack;
    let values: Vec<f64> = grid
        .centers()
        .map(|z| {
            let m = probes.iter().map(|y| kernel.density(y, &z)).fold(f64::INFINITY, f64::min);
            (m - slack).max(0.0)
        })
        .collect();
    let envelope = GridDensity::new(grid, values)?;
    let mass = envelope.mass().min(1.0);
    if !(at_zero > 0.0) {
        return Err(Error::MinorizationFails { value: at_zero });
    }
    Ok(MinorizationCertificate {
        radius_r,
        lower_density_at_zero: at_zero,
        minorizing_mass: mass,
        probe_count: probes.len(),
        slack,
        envelope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceCertificate {
    pub delta: f64,
    pub steps_l: usize,
    /// `ϰ`: the probed infimum minus the quadrature bound.
    pub kappa: f64,
    pub raw_infimum: f64,
    pub quadrature_bound: f64,
    pub probe_count: usize,
}

/// Probes of `𝒦` for infima over the whole support: grid centers and corners.
pub(crate) fn support_probes(grid: &Grid) -> Vec<Vec<f64>> {
    let mut probes: Vec<Vec<f64>> = grid.centers().collect();
    probes.extend(grid.bounds().corners());
    probes
}

/// First `l ≤ budget_l` with `inf_y Q_l(y; B(0, δ)) > 0` after the
/// quadrature bound is subtracted.
pub fn check_strong_recurrence(
    kernel: &dyn MarkovKernel,
    delta: f64,
    budget_l: usize,
    cells: usize,
) -> Result<RecurrenceCertificate> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let grid = Grid::uniform(kernel.support().clone(), cells)?;
    let op = TransitionOperator::new(kernel, grid.clone())?;
    let probes = support_probes(&grid);
    let starts: Vec<Vec<f64>> = probes.iter().map(|y| op.initial(y)).collect::<Result<_>>()?;
    let mut h = ball_cell_weights(&grid, &vec![0.0; kernel.dim()], delta);
    for l in 1..=budget_l {
        if l > 1 {
            h = op.backward(&h);
        }
        let raw = starts
            .iter()
            .map(|p| p.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let bound = quadrature_bound(kernel, &grid, l);
        let kappa = raw - bound;
        log::debug!("strong recurrence l={l}: infimum {raw:.4e}, bound {bound:.4e}");
        if kappa > 0.0 {
            return Ok(RecurrenceCertificate {
                delta,
                steps_l: l,
                kappa,
                raw_infimum: raw,
                quadrature_bound: bound,
                probe_count: probes.len(),
            });
        }
    }
    Err(Error::BudgetExceeded { budget: budget_l, what: format!("no uniform return to B(0, {delta})") })
}
