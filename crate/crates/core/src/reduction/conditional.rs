use crate::error::{Error, Result};
use crate::measures::{Grid, GridDensity};
use crate::noise::{ball_cell_weights, KStepDensity, DEGENERATE_MASS, MAX_QUADRATURE_BOUND};

use super::buffer::PastBuffer;
use super::model::{NoiseModel, NoiseState, StationaryNoiseModel, DEFAULT_SPACING};

/// Largest number of future noises in a joint conditional law.
pub const MAX_CONDITIONAL_STEPS: usize = 3;
const MAX_PRODUCT_CELLS: usize = 1 << 24;

/// Joint density on `𝒦^k` of the next `k` noises given the past `b`, by
/// sequential conditioning `Q(ξ; dy₁) Q((ξ, y₁); dy₂) ⋯` on `cells` cells per
/// noise axis. Each conditional row is normalized on the grid.
pub fn conditional_m_step(
    model: &StationaryNoiseModel,
    b: &PastBuffer,
    k: usize,
    cells: usize,
) -> Result<KStepDensity> {
    if k == 0 || k > MAX_CONDITIONAL_STEPS {
        return Err(Error::invalid(format!("k must lie in 1..={MAX_CONDITIONAL_STEPS}")));
    }
    let grid = Grid::uniform(model.support().clone(), cells)?;
    let l = model.kernel().lipschitz_bound();
    let bound = crate::noise::lipschitz_slack(l, grid.cell_diameter() * k as f64);
    if !(bound <= MAX_QUADRATURE_BOUND) {
        return Err(Error::ResolutionTooCoarse { bound, limit: MAX_QUADRATURE_BOUND });
    }
    let n = grid.len();
    if n.checked_pow(k as u32).is_none_or(|t| t > MAX_PRODUCT_CELLS) {
        return Err(Error::invalid("product grid too large"));
    }
    let centers: Vec<Vec<f64>> = grid.centers().collect();
    let vol = grid.cell_volume();
    // carry only the entries the truncated model can see
    let keep = model.memory().min(model.kernel().memory()).max(1);
    let start = b.tail(keep);
    let mut out = vec![0.0; n.pow(k as u32)];
    let mut stack = vec![(start, 0usize, 1.0f64, 0usize)];
    while let Some((past, prefix, mass, level)) = stack.pop() {
        let row: Vec<f64> = centers.iter().map(|z| model.density(&past, z).max(0.0) * vol).collect();
        let total: f64 = row.iter().sum();
        if !(total >= DEGENERATE_MASS) {
            return Err(Error::DegenerateDensity { mass: total });
        }
        for (j, r) in row.iter().enumerate() {
            let m = mass * r / total;
            if m == 0.0 {
                continue;
            }
            let idx = prefix * n + j;
            if level + 1 == k {
                out[idx] = m;
            } else {
                stack.push((past.pushed(&centers[j]), idx, m, level + 1));
            }
        }
    }
    let product = grid.power(k)?;
    Ok(KStepDensity { density: GridDensity::from_masses(product, &out)?, error_bound: bound })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceToZero {
    pub s: usize,
    /// Conservative lower bound of the infimum.
    pub bound: f64,
    pub raw_infimum: f64,
    pub quadrature_bound: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceToZeroConfig {
    pub cells: usize,
    /// Buffers harvested from the burn-in run.
    pub probes: usize,
    pub seed: u64,
}

impl Default for RecurrenceToZeroConfig {
    fn default() -> Self {
        Self { cells: 256, probes: 64, seed: 0 }
    }
}

/// First `s ≤ budget_s` such that, for every probed past, the `n` consecutive
/// noises starting `s` steps ahead all land in `B(0, δ)` with probability
/// bounded below. Pasts are harvested from a burn-in run as a stand-in for
/// the support of the stationary past law.
pub fn check_recurrence_to_zero(
    model: &StationaryNoiseModel,
    n: usize,
    delta: f64,
    budget_s: usize,
    cfg: &RecurrenceToZeroConfig,
) -> Result<RecurrenceToZero> {
    if n == 0 || n > 2 {
        return Err(Error::invalid("n must be 1 or 2"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let pasts: Vec<PastBuffer> = NoiseModel::Stationary(model.clone())
        .harvest(cfg.probes, DEFAULT_SPACING, cfg.seed, false)?
        .into_iter()
        .map(|s| match s {
            NoiseState::Past(b) => b,
            NoiseState::Markov(_) => unreachable!("stationary model harvests buffers"),
        })
        .collect();
    let grid = Grid::uniform(model.support().clone(), cfg.cells)?;
    let ball = ball_cell_weights(&grid, &vec![0.0; grid.dim()], delta);
    let cells = grid.len();
    for s in 1..=budget_s {
        let k = s + n - 1;
        if k > MAX_CONDITIONAL_STEPS {
            break;
        }
        let mut raw = f64::INFINITY;
        let mut quad = 0.0;
        for past in &pasts {
            let joint = conditional_m_step(model, past, k, cfg.cells)?;
            quad = joint.error_bound;
            let masses = joint.density.masses();
            let p: f64 = masses
                .iter()
                .enumerate()
                .map(|(flat, m)| {
                    // last n of the k noise coordinates must sit in the ball
                    let mut w = 1.0;
                    let mut rem = flat;
                    for pos in (0..k).rev() {
                        if pos >= s - 1 {
                            w *= ball[rem % cells];
                        }
                        rem /= cells;
                    }
                    m * w
                })
                .sum();
            raw = raw.min(p);
        }
        let bound = raw - quad;
        log::debug!("recurrence to zero s={s}: infimum {raw:.4e}, bound {bound:.4e}");
        if bound > 0.0 {
            return Ok(RecurrenceToZero { s, bound, raw_infimum: raw, quadrature_bound: quad, probes: pasts.len() });
        }
    }
    Err(Error::BudgetExceeded { budget: budget_s, what: format!("no uniform return of {n} noises to B(0, {delta})") })
}
