use rayon::prelude::*;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::measures::{counts_from_indices, histogram_from_counts, Grid, GridDensity};
use crate::reduction::{ExtendedState, NoiseModel, DEFAULT_SPACING};
use crate::rng::{child_seed, stream, Purpose};

/// Longest path segment `[u_k, …, u_{k+m}]` binned on a product grid.
pub const MAX_SEGMENT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryConfig {
    /// Steps discarded at the start of every trajectory.
    pub burn_in: usize,
    pub trajectories: usize,
    /// Segments harvested per trajectory.
    pub per_trajectory: usize,
    /// Cells per state axis for `μ₀`.
    pub cells: usize,
    /// Cells per state axis for the segment laws `μ₁, …`.
    pub segment_cells: usize,
    pub segment_m: usize,
    pub pilot_steps: usize,
    pub seed: u64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            burn_in: 200,
            trajectories: 10_000,
            per_trajectory: 20,
            cells: 256,
            segment_cells: 40,
            segment_m: 0,
            pilot_steps: 20_000,
            seed: 0,
        }
    }
}

/// Autocorrelation decay of a pilot run.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFit {
    /// Fitted `γ` of `acf(k) ≈ e^{−γk}`; infinite when the first lag is
    /// already indistinguishable from zero.
    pub gamma: f64,
    /// Lag after which the fitted correlation is below 1%.
    pub lag: usize,
    /// Worst-coordinate autocorrelation at lags `0, 1, …`.
    pub acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    /// `μ₀, …, μ_m`; `μ_j` lives on the `(j+1)`-fold product grid.
    pub marginals: Vec<GridDensity>,
    pub pilot: PilotFit,
    /// Steps between harvested segments.
    pub gap: usize,
    pub samples: usize,
}

fn start_state(sys: &RdsSystem) -> Vec<f64> {
    sys.invariant_set().bounding_box().center()
}

/// Runs one long trajectory and fits `log acf(k) = −γk` on the lags whose
/// correlation is clearly above sampling noise.
pub fn pilot_decorrelation(sys: &RdsSystem, model: &NoiseModel, steps: usize, seed: u64) -> Result<PilotFit> {
    if steps < 100 {
        return Err(Error::InsufficientDecorrelation("pilot run needs at least 100 steps".into()));
    }
    let xi0 = model.harvest(1, DEFAULT_SPACING, child_seed(seed, 1), false)?.remove(0);
    let mut rng = stream(seed, Purpose::Pilot, 0);
    let mut u = ExtendedState { state: start_state(sys), noise: xi0 };
    for _ in 0..model.burn_in().min(1000) {
        crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
    }
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
        path.push(u.state.clone());
    }
    let n = steps as f64;
    let max_lag = 50.min(steps / 4);
    let mut acf = vec![0.0; max_lag + 1];
    for axis in 0..sys.dim_state() {
        let x: Vec<f64> = path.iter().map(|p| p[axis]).collect();
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::InsufficientDecorrelation(format!("state axis {axis} is constant")));
        }
        for (k, a) in acf.iter_mut().enumerate() {
            let c = (0..steps - k).map(|i| (x[i] - mean) * (x[i + k] - mean)).sum::<f64>() / (n * var);
            *a = if axis == 0 { c } else { a.max(c) };
        }
    }
    let noise = 2.0 / n.sqrt();
    let usable: Vec<(f64, f64)> = acf
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, &a)| a > noise.max(0.05))
        .map(|(k, &a)| (k as f64, a.ln()))
        .collect();
    if usable.is_empty() {
        return Ok(PilotFit { gamma: f64::INFINITY, lag: 1, acf });
    }
    // least squares through the origin, log acf(0) = 0
    let sxx: f64 = usable.iter().map(|(k, _)| k * k).sum();
    let sxy: f64 = usable.iter().map(|(k, y)| k * y).sum();
    let gamma = -sxy / sxx;
    if !(gamma > 1e-6) || usable.len() == max_lag {
        return Err(Error::InsufficientDecorrelation(format!(
            "autocorrelation does not decay (fitted rate {gamma:.3e} over {} lags)",
            usable.len()
        )));
    }
    let lag = ((100f64).ln() / gamma).ceil().max(1.0) as usize;
    Ok(PilotFit { gamma, lag, acf })
}

/// Long-run estimate of the stationary law and of its segment laws
/// `[u_k, …, u_{k+m}]` for `m ≤ segment_m`. Segments are harvested from
/// independent trajectories, spaced by the pilot's decorrelation lag.
pub fn estimate_stationary(sys: &RdsSystem, model: &NoiseModel, cfg: &StationaryConfig) -> Result<StationaryEstimate> {
    if cfg.segment_m > MAX_SEGMENT {
        return Err(Error::invalid(format!("segment length must be at most {MAX_SEGMENT}")));
    }
    if cfg.trajectories == 0 || cfg.per_trajectory == 0 {
        return Err(Error::invalid("need at least one segment"));
    }
    let pilot = pilot_decorrelation(sys, model, cfg.pilot_steps, child_seed(cfg.seed, 1))?;
    let gap = pilot.lag.max(cfg.segment_m + 1);
    log::info!("stationary estimate: pilot γ = {:.4}, segment gap {gap}", pilot.gamma);
    let pool = model.harvest(cfg.trajectories, DEFAULT_SPACING, child_seed(cfg.seed, 2), false)?;
    let traj_seed = child_seed(cfg.seed, 3);
    let m = cfg.segment_m;
    let segments: Vec<Vec<Vec<Vec<f64>>>> = pool
        .into_par_iter()
        .enumerate()
        .map(|(i, xi0)| {
            let mut rng = stream(traj_seed, Purpose::Trajectory, i as u64);
            let mut u = ExtendedState { state: start_state(sys), noise: xi0 };
            for _ in 0..cfg.burn_in {
                crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
            }
            let mut out = Vec::with_capacity(cfg.per_trajectory);
            for _ in 0..cfg.per_trajectory {
                let mut seg = vec![u.state.clone()];
                for _ in 0..m {
                    crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
                    seg.push(u.state.clone());
                }
                for _ in m..gap {
                    crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
                }
                out.push(seg);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let segments: Vec<Vec<Vec<f64>>> = segments.into_iter().flatten().collect();
    let bbox = sys.invariant_set().bounding_box();
    let mut marginals = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let cells = if j == 0 { cfg.cells } else { cfg.segment_cells };
        let base = Grid::uniform(bbox.clone(), cells)?;
        let grid = base.power(j + 1)?;
        let idx = segment_indices(&segments, &base, j)?;
        marginals.push(histogram_from_counts(&counts_from_indices(&idx, grid.len()), &grid)?);
    }
    Ok(StationaryEstimate { marginals, pilot, gap, samples: segments.len() })
}

/// Flat index on `base^(j+1)` of every segment prefix `[u_0, …, u_j]`.
pub(crate) fn segment_indices(segments: &[Vec<Vec<f64>>], base: &Grid, j: usize) -> Result<Vec<usize>> {
    let n = base.len();
    segments
        .iter()
        .enumerate()
        .map(|(index, seg)| {
            seg[..=j].iter().try_fold(0usize, |acc, u| {
                base.locate(u).map(|c| acc * n + c).ok_or(Error::SampleOutOfBox { index })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::catalog::system;
    use crate::measures::tv_distance;
    use crate::noise::catalog::kernel;

    #[test]
    fn pure_noise_stationary_law_is_the_noise_marginal() {
        let k = kernel("iid_uniform").unwrap();
        let sys = system("pure_noise", k.support()).unwrap();
        let model = NoiseModel::Markov { kernel: k, burn_in: 100 };
        let cfg = StationaryConfig {
            trajectories: 2000,
            per_trajectory: 10,
            cells: 20,
            burn_in: 5,
            pilot_steps: 2000,
            segment_m: 1,
            segment_cells: 10,
            ..StationaryConfig::default()
        };
        let est = estimate_stationary(&sys, &model, &cfg).unwrap();
        assert_eq!(est.pilot.gamma, f64::INFINITY);
        let uniform = GridDensity::from_fn(est.marginals[0].grid().clone(), |_| 1.0).unwrap().normalized().unwrap();
        assert!(tv_distance(&est.marginals[0], &uniform).unwrap() < 0.05);
        // the m = 0 marginal of the pair law agrees with μ₀ at the coarse resolution
        let first = est.marginals[1].marginal(&[0]).unwrap();
        let coarse = GridDensity::from_fn(first.grid().clone(), |_| 1.0).unwrap().normalized().unwrap();
        assert!(tv_distance(&first, &coarse).unwrap() < 0.05);
    }

    #[test]
    fn iid_kicks_decorrelate_at_the_contraction_rate() {
        // x ↦ e^{-1}x + η with i.i.d. η: acf(k) = e^{-k}
        let k = kernel("iid_uniform").unwrap();
        let sys = system("kicked_linear_1d", k.support()).unwrap();
        let model = NoiseModel::Markov { kernel: k, burn_in: 10 };
        let fit = pilot_decorrelation(&sys, &model, 5000, 3).unwrap();
        assert!((fit.gamma - 1.0).abs() < 0.2, "{}", fit.gamma);
        assert!(matches!(
            pilot_decorrelation(&sys, &model, 10, 3),
            Err(Error::InsufficientDecorrelation(_))
        ));
    }
}
