use crate::error::{Error, Result};

use super::grid::{Bounds, Grid, GridDensity};

/// Weighted sample cloud inside a declared bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    bounds: Bounds,
    seed: u64,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, bounds: Bounds, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!("{} points but {} weights", points.len(), weights.len())));
        }
        if let Some(index) = points.iter().position(|p| !bounds.contains(p)) {
            return Err(Error::SampleOutOfBox { index });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let weights = if (total - 1.0).abs() > 1e-12 {
            weights.into_iter().map(|w| w / total).collect()
        } else {
            weights
        };
        Ok(Self { points, weights, bounds, seed })
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Vec<Vec<f64>>, bounds: Bounds, seed: u64) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n], bounds, seed)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Cell index of every point; fails on the first point outside the grid box.
pub fn bin_indices<'a, I>(points: I, grid: &Grid) -> Result<Vec<usize>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    points
        .into_iter()
        .enumerate()
        .map(|(index, p)| grid.locate(p).ok_or(Error::SampleOutOfBox { index }))
        .collect()
}

/// Occupation counts per cell.
pub fn counts_from_indices(indices: &[usize], cells: usize) -> Vec<u64> {
    let mut counts = vec![0u64; cells];
    for &i in indices {
        counts[i] += 1;
    }
    counts
}

/// Weight-preserving binning of `samples` on `grid`, normalized to unit mass.
pub fn histogram(samples: &EmpiricalMeasure, grid: &Grid) -> Result<GridDensity> {
    let mut masses = vec![0.0; grid.len()];
    for (index, (p, w)) in samples.points.iter().zip(&samples.weights).enumerate() {
        let cell = grid.locate(p).ok_or(Error::SampleOutOfBox { index })?;
        masses[cell] += w;
    }
    GridDensity::from_masses(grid.clone(), &masses)?.normalized()
}

/// Histogram of equally weighted scalar-or-vector samples given as cell indices.
pub fn histogram_from_counts(counts: &[u64], grid: &Grid) -> Result<GridDensity> {
    if counts.len() != grid.len() {
        return Err(Error::MismatchedSupport(format!("{} counts for {} cells", counts.len(), grid.len())));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyMeasure);
    }
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    GridDensity::from_masses(grid.clone(), &masses)
}
