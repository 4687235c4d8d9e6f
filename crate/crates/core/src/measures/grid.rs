use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]` in ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid(format!(
                "box corners have dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::invalid(format!("box axis {i}: need lo < hi, got [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Result<Self> {
        Self::cube(dim, -r, r)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_tol(x, 0.0)
    }

    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// Largest coordinate-wise excess of `x` over the box (0 inside).
    pub fn excess(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest Euclidean norm of a point of the box.
    pub fn max_norm(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &Bounds) -> Bounds {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.extend_from_slice(&other.lo);
        hi.extend_from_slice(&other.hi);
        Bounds { lo, hi }
    }

    /// `self^k`.
    pub fn power(&self, k: usize) -> Result<Bounds> {
        if k == 0 {
            return Err(Error::invalid("box power must be at least 1"));
        }
        Ok(Bounds {
            lo: self.lo.repeat(k),
            hi: self.hi.repeat(k),
        })
    }

    /// Every vertex of the box (2^d points).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }

    /// Point with coordinates `lo + t·(hi − lo)` for `t ∈ [0,1]^d`.
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(t)
            .map(|((l, h), t)| l + t * (h - l))
            .collect()
    }

    /// Euclidean projection onto the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }
}

/// Uniform rectangular grid over a [`Bounds`], cells stored row-major (last
/// axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds: Bounds,
    cells: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Bounds, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != bounds.dim() {
            return Err(Error::invalid(format!(
                "grid has {} axes but box has dimension {}",
                cells.len(),
                bounds.dim()
            )));
        }
        if cells.contains(&0) {
            return Err(Error::invalid("every axis needs at least one cell"));
        }
        let mut strides = vec![1usize; cells.len()];
        for i in (0..cells.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(cells[i + 1])
                .ok_or_else(|| Error::invalid("grid too large"))?;
        }
        strides[0]
            .checked_mul(cells[0])
            .ok_or_else(|| Error::invalid("grid too large"))?;
        Ok(Self { bounds, cells, strides })
    }

    /// Same cell count on every axis.
    pub fn uniform(bounds: Bounds, cells_per_axis: usize) -> Result<Self> {
        let d = bounds.dim();
        Self::new(bounds, vec![cells_per_axis; d])
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.cells[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        self.bounds
            .widths()
            .iter()
            .zip(&self.cells)
            .map(|(w, &c)| w / c as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_widths().iter().product()
    }

    pub fn cell_diameter(&self) -> f64 {
        self.cell_widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Cell index along one axis; the upper face belongs to the last cell.
    #[inline]
    pub fn axis_index(&self, axis: usize, x: f64) -> Option<usize> {
        let lo = self.bounds.lo[axis];
        let hi = self.bounds.hi[axis];
        if !(x >= lo && x <= hi) {
            return None;
        }
        let n = self.cells[axis];
        let i = ((x - lo) / (hi - lo) * n as f64) as usize;
        Some(i.min(n - 1))
    }

    /// Flat index of the cell containing `x`, `None` outside the box.
    #[inline]
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for (axis, &v) in x.iter().enumerate() {
            idx += self.axis_index(axis, v)? * self.strides[axis];
        }
        Some(idx)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (axis, s) in self.strides.iter().enumerate() {
            out[axis] = flat / s;
            flat %= s;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn axis_center(&self, axis: usize, i: usize) -> f64 {
        let w = (self.bounds.hi[axis] - self.bounds.lo[axis]) / self.cells[axis] as f64;
        self.bounds.lo[axis] + (i as f64 + 0.5) * w
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.axis_center(axis, i))
            .collect()
    }

    /// Lower and upper corner of a cell.
    pub fn cell_bounds(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let widths = self.cell_widths();
        let multi = self.multi_index(flat);
        let lo: Vec<f64> = multi
            .iter()
            .enumerate()
            .map(|(a, &i)| self.bounds.lo[a] + i as f64 * widths[a])
            .collect();
        let hi = lo.iter().zip(&widths).map(|(l, w)| l + w).collect();
        (lo, hi)
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.center(i))
    }

    /// Product grid `self × other` (axes of `self` first).
    pub fn product(&self, other: &Grid) -> Result<Grid> {
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        Grid::new(self.bounds.product(&other.bounds), cells)
    }

    pub fn power(&self, k: usize) -> Result<Grid> {
        Grid::new(self.bounds.power(k)?, self.cells.repeat(k))
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.cells == other.cells && self.bounds == other.bounds
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::MismatchedSupport(format!(
                "{:?} on {:?} vs {:?} on {:?}",
                self.cells, self.bounds, other.cells, other.bounds
            )))
        }
    }
}

/// Tolerance on `|∫ρ − 1|` above which a density is renormalized with a warning.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Nonnegative piecewise-constant density on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Wraps raw values without normalizing.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("density value {} at cell {i} is not a finite nonnegative number", values[i])));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        Self::new(grid, values)
    }

    /// Density whose cell masses are `probs`.
    pub fn from_masses(grid: Grid, probs: &[f64]) -> Result<Self> {
        let vol = grid.cell_volume();
        Self::new(grid, probs.iter().map(|p| p / vol).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Cell masses `ρ_i · vol`.
    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.values.iter().map(|v| v * vol).collect()
    }

    /// Cell masses divided by the total mass.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let total: f64 = self.values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        Ok(self.values.iter().map(|v| v / total).collect())
    }

    /// Rescales to unit mass and returns the defect `∫ρ − 1` seen before.
    pub fn normalize(&mut self) -> Result<f64> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        let defect = mass - 1.0;
        if defect.abs() > NORMALIZATION_TOLERANCE {
            log::debug!("renormalizing density with mass defect {defect:.3e}");
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(defect)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Density value of the cell containing `x` (0 outside the box).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.grid.locate(x).map_or(0.0, |i| self.values[i])
    }

    /// Marginal on the listed axes, in the given order.
    pub fn marginal(&self, axes: &[usize]) -> Result<GridDensity> {
        let d = self.grid.dim();
        if axes.is_empty() || axes.iter().any(|&a| a >= d) {
            return Err(Error::invalid(format!("bad marginal axes {axes:?} for dimension {d}")));
        }
        let b = self.grid.bounds();
        let lo = axes.iter().map(|&a| b.lo()[a]).collect();
        let hi = axes.iter().map(|&a| b.hi()[a]).collect();
        let cells = axes.iter().map(|&a| self.grid.cells[a]).collect();
        let target = Grid::new(Bounds::new(lo, hi)?, cells)?;
        let mut masses = vec![0.0; target.len()];
        let vol = self.grid.cell_volume();
        for (i, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let m = self.grid.multi_index(i);
            let sub: Vec<usize> = axes.iter().map(|&a| m[a]).collect();
            masses[target.flat_index(&sub)] += v * vol;
        }
        GridDensity::from_masses(target, &masses)
    }

    /// Little-endian binary: `u64 dim`, `u64 cells[dim]`, `f64 lo[dim]`,
    /// `f64 hi[dim]`, then row-major `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        w.write_all(&(d as u64).to_le_bytes())?;
        for &c in &self.grid.cells {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for v in self.grid.bounds.lo.iter().chain(&self.grid.bounds.hi) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (1 + 3 * self.grid.dim() + self.values.len()));
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
            Ok(buf)
        };
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        if d == 0 || d > 64 {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        let mut cells = Vec::with_capacity(d);
        for _ in 0..d {
            cells.push(u64::from_le_bytes(next(&mut r)?) as usize);
        }
        let mut corners = Vec::with_capacity(2 * d);
        for _ in 0..2 * d {
            corners.push(f64::from_le_bytes(next(&mut r)?));
        }
        let hi = corners.split_off(d);
        let grid = Grid::new(Bounds::new(corners, hi)?, cells)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after density values".into()));
        }
        GridDensity::new(grid, values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_binary(bytes)
    }

    /// CSV with one column per axis (`x0`, `x1`, …) holding cell centers and a
    /// final `density` column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (0..d).map(|i| format!("x{i}")).chain(["density".to_string()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            for c in self.grid.center(i) {
                write!(w, "{c},")?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}
