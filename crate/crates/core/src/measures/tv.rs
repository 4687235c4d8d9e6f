//! Total-variation distance on the grid σ-algebra, with bootstrap bands for
//! Monte-Carlo estimates.
//!
//! On a fixed grid the supremum over events is attained by the union of the
//! cells where the first measure outweighs the second, so
//! `TV = ½ Σ |p_i − q_i|` over cell masses.
//!
//! Histogram TV is biased upward: two independent samples of one law never
//! give identical histograms. Every Monte-Carlo distance is therefore paired
//! with a percentile band from resampling, either
//!
//! * a **null band** ([`two_sample_tv`]): both samples redrawn from the pooled
//!   sample, i.e. the distribution of the statistic when the two laws agree;
//! * a **confidence band** ([`tv_to_reference`]): the sample is resampled
//!   against a fixed reference law.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

use super::empirical::{histogram, EmpiricalMeasure};
use super::grid::{Grid, GridDensity};

pub const DEFAULT_RESAMPLES: usize = 200;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// `½ Σ |p_i − q_i|` over two equally long mass vectors.
pub fn tv_from_masses(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// TV between two densities on the same grid. Both are normalized first.
pub fn tv_distance(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let p = a.probabilities()?;
    let q = b.probabilities()?;
    Ok(tv_from_masses(&p, &q).min(1.0))
}

/// TV between two sample clouds after binning both on `grid`.
pub fn tv_empirical(a: &EmpiricalMeasure, b: &EmpiricalMeasure, grid: &Grid) -> Result<f64> {
    tv_distance(&histogram(a, grid)?, &histogram(b, grid)?)
}

/// TV between count vectors (equal-weight samples).
pub fn tv_counts(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedSupport(format!("{} vs {} cells", a.len(), b.len())));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::EmptyMeasure);
    }
    let (na, nb) = (na as f64, nb as f64);
    Ok(0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// A distance estimate with its bootstrap band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub tv: f64,
    pub band: Band,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn band_of(mut stats: Vec<f64>, level: f64) -> Band {
    stats.sort_by(|a, b| a.total_cmp(b));
    let tail = 0.5 * (1.0 - level);
    Band { lo: quantile_sorted(&stats, tail), hi: quantile_sorted(&stats, 1.0 - tail) }
}

fn check_cells(indices: &[usize], cells: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    match indices.iter().position(|&i| i >= cells) {
        Some(index) => Err(Error::SampleOutOfBox { index }),
        None => Ok(()),
    }
}

/// Two-sample TV between binned samples `a` and `b` with the null band
/// obtained by redrawing both from the pooled sample.
pub fn two_sample_tv(a: &[usize], b: &[usize], cells: usize, cfg: BootstrapConfig, seed: u64) -> Result<TvEstimate> {
    check_cells(a, cells)?;
    check_cells(b, cells)?;
    let mut ca = vec![0u64; cells];
    let mut cb = vec![0u64; cells];
    a.iter().for_each(|&i| ca[i] += 1);
    b.iter().for_each(|&i| cb[i] += 1);
    let tv = tv_counts(&ca, &cb)?;
    let pool: Vec<usize> = a.iter().chain(b).copied().collect();
    let stats: Vec<f64> = (0..cfg.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Bootstrap, r as u64);
            let mut xa = vec![0u64; cells];
            let mut xb = vec![0u64; cells];
            for _ in 0..a.len() {
                xa[pool[rng.gen_range(0..pool.len())]] += 1;
            }
            for _ in 0..b.len() {
                xb[pool[rng.gen_range(0..pool.len())]] += 1;
            }
            tv_counts(&xa, &xb).expect("resamples are nonempty")
        })
        .collect();
    Ok(TvEstimate { tv, band: band_of(stats, cfg.level) })
}

/// TV between binned sample `a` and fixed reference cell masses, with a
/// percentile confidence band from resampling `a`.
pub fn tv_to_reference(a: &[usize], reference: &[f64], cfg: BootstrapConfig, seed: u64) -> Result<TvEstimate> {
    let cells = reference.len();
    check_cells(a, cells)?;
    let total: f64 = reference.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let q: Vec<f64> = reference.iter().map(|r| r / total).collect();
    let n = a.len() as f64;
    let stat = |counts: &[u64]| 0.5 * counts.iter().zip(&q).map(|(&c, r)| (c as f64 / n - r).abs()).sum::<f64>();
    let mut ca = vec![0u64; cells];
    a.iter().for_each(|&i| ca[i] += 1);
    let tv = stat(&ca);
    let stats: Vec<f64> = (0..cfg.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Bootstrap, r as u64);
            let mut xa = vec![0u64; cells];
            for _ in 0..a.len() {
                xa[a[rng.gen_range(0..a.len())]] += 1;
            }
            stat(&xa)
        })
        .collect();
    Ok(TvEstimate { tv, band: band_of(stats, cfg.level) })
}
