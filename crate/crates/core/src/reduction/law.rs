use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::measures::{two_sample_tv, Band, BootstrapConfig, Grid};
use crate::rng::{child_seed, stream, Purpose};

use super::model::{NoiseModel, DEFAULT_SPACING};
use super::simulate::{direct_path, reduced_step, ExtendedState};

/// Longest path segment `[u_0, …, u_k]` compared on a product grid.
pub const MAX_LAW_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawEqualityConfig {
    pub horizon_k: usize,
    pub ensemble_n: usize,
    /// Cells per state axis of the product grid.
    pub cells: usize,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
    /// Leave the reduced chain's noise component unshifted (negative control).
    pub mutate: bool,
}

impl Default for LawEqualityConfig {
    fn default() -> Self {
        Self { horizon_k: 2, ensemble_n: 100_000, cells: 40, bootstrap: BootstrapConfig::default(), seed: 0, mutate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawRow {
    pub k: usize,
    pub tv: f64,
    pub band: Band,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawEqualityReport {
    pub rows: Vec<LawRow>,
}

impl LawEqualityReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// CSV with columns `k,tv,band_lo,band_hi,verdict`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,tv,band_lo,band_hi,verdict")?;
        for r in &self.rows {
            let verdict = if r.pass { "pass" } else { "fail" };
            writeln!(w, "{},{},{},{},{}", r.k, r.tv, r.band.lo, r.band.hi, verdict)?;
        }
        Ok(())
    }
}

/// Compares the joint law of `[u_0, …, u_k]` for the original system driven
/// by directly simulated noise against the state component of the reduced
/// chain, for every `k ≤ horizon_k`.
pub fn law_equality_test(
    sys: &RdsSystem,
    model: &NoiseModel,
    u0: &[f64],
    cfg: &LawEqualityConfig,
) -> Result<LawEqualityReport> {
    if cfg.horizon_k == 0 || cfg.horizon_k > MAX_LAW_HORIZON {
        return Err(Error::invalid(format!("horizon must lie in 1..={MAX_LAW_HORIZON}")));
    }
    if cfg.ensemble_n == 0 {
        return Err(Error::invalid("ensemble must be nonempty"));
    }
    let n = cfg.ensemble_n;
    let direct_pool = model.harvest(n, DEFAULT_SPACING, child_seed(cfg.seed, 1), true)?;
    let reduced_pool = model.harvest(n, DEFAULT_SPACING, child_seed(cfg.seed, 2), false)?;
    let direct_seed = child_seed(cfg.seed, 3);
    let reduced_seed = child_seed(cfg.seed, 4);

    let direct: Vec<Vec<Vec<f64>>> = direct_pool
        .into_par_iter()
        .enumerate()
        .map(|(i, eta0)| {
            let mut rng = stream(direct_seed, Purpose::Direct, i as u64);
            direct_path(sys, model, u0, eta0, cfg.horizon_k, &mut rng)
        })
        .collect::<Result<_>>()?;
    let reduced: Vec<Vec<Vec<f64>>> = reduced_pool
        .into_par_iter()
        .enumerate()
        .map(|(i, xi0)| {
            let mut rng = stream(reduced_seed, Purpose::Trajectory, i as u64);
            let mut u = ExtendedState { state: u0.to_vec(), noise: xi0 };
            let mut path = vec![u.state.clone()];
            for _ in 0..cfg.horizon_k {
                reduced_step(sys, model, &mut u, &mut rng, cfg.mutate)?;
                path.push(u.state.clone());
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let grid = Grid::uniform(sys.invariant_set().bounding_box(), cfg.cells)?;
    let mut rows = Vec::with_capacity(cfg.horizon_k);
    for k in 1..=cfg.horizon_k {
        let (a, b, cells) = joint_indices(&direct, &reduced, &grid, k)?;
        let est = two_sample_tv(&a, &b, cells, cfg.bootstrap, child_seed(cfg.seed, 10 + k as u64))?;
        rows.push(LawRow { k, tv: est.tv, band: est.band, pass: est.tv <= est.band.hi });
    }
    Ok(LawEqualityReport { rows })
}

/// Product-grid cell of each path prefix `[u_0, …, u_k]`, relabelled densely
/// over the occupied cells (unoccupied cells do not affect TV).
pub(crate) fn joint_indices(
    a: &[Vec<Vec<f64>>],
    b: &[Vec<Vec<f64>>],
    grid: &Grid,
    k: usize,
) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    let mut labels: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut index = |paths: &[Vec<Vec<f64>>]| -> Result<Vec<usize>> {
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let key: Vec<usize> = p[..=k]
                    .iter()
                    .map(|u| grid.locate(u).ok_or(Error::SampleOutOfBox { index: i }))
                    .collect::<Result<_>>()?;
                let next = labels.len();
                Ok(*labels.entry(key).or_insert(next))
            })
            .collect()
    };
    let ia = index(a)?;
    let ib = index(b)?;
    Ok((ia, ib, labels.len()))
}
