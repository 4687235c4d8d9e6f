//! Built-in kernels, addressed by name from configuration files.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::measures::{Bounds, Grid};
use crate::rng::StreamRng;

use super::kernel::{MarkovKernel, DEFAULT_CELLS_1D};

pub const KERNEL_NAMES: [&str; 3] = ["iid_uniform", "ar1_truncgauss", "drift_away"];

/// Parameters of a catalog kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// Uniform on `[−h, h]^dim`, independent of the current noise.
    IidUniform { dim: usize, half_width: f64 },
    /// `ρ(y, z) ∝ exp(−(z − a y)²/2s²)` on `[−h, h]`.
    Ar1TruncGauss { a: f64, s: f64, half_width: f64 },
    /// All mass on the sampler cell containing `clamp(y + shift)`.
    DriftAway { shift: f64, half_width: f64, cells: usize },
}

impl KernelSpec {
    /// Catalog entry with its default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "iid_uniform" => Ok(KernelSpec::IidUniform { dim: 1, half_width: 1.0 }),
            "ar1_truncgauss" => Ok(KernelSpec::Ar1TruncGauss { a: 0.5, s: 0.3, half_width: 1.0 }),
            "drift_away" => Ok(KernelSpec::DriftAway { shift: 0.5, half_width: 1.0, cells: DEFAULT_CELLS_1D }),
            other => Err(Error::UnknownCatalogEntry(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::IidUniform { .. } => "iid_uniform",
            KernelSpec::Ar1TruncGauss { .. } => "ar1_truncgauss",
            KernelSpec::DriftAway { .. } => "drift_away",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn MarkovKernel>> {
        Ok(match *self {
            KernelSpec::IidUniform { dim, half_width } => Arc::new(IidUniform::new(dim, half_width)?),
            KernelSpec::Ar1TruncGauss { a, s, half_width } => Arc::new(Ar1TruncGauss::new(a, s, half_width)?),
            KernelSpec::DriftAway { shift, half_width, cells } => Arc::new(DriftAway::new(shift, half_width, cells)?),
        })
    }
}

pub fn kernel(name: &str) -> Result<Arc<dyn MarkovKernel>> {
    KernelSpec::from_name(name)?.build()
}

#[derive(Debug, Clone)]
pub struct IidUniform {
    support: Bounds,
    value: f64,
}

impl IidUniform {
    pub fn new(dim: usize, half_width: f64) -> Result<Self> {
        let support = Bounds::symmetric(dim, half_width)?;
        let value = 1.0 / support.volume();
        Ok(Self { support, value })
    }
}

impl MarkovKernel for IidUniform {
    fn name(&self) -> &str {
        "iid_uniform"
    }
    fn support(&self) -> &Bounds {
        &self.support
    }
    fn density(&self, _y: &[f64], z: &[f64]) -> f64 {
        if self.support.contains(z) {
            self.value
        } else {
            0.0
        }
    }
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
    fn quantile(&self, _y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.support.lerp(u))
    }
    fn sample_direct(&self, _y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let lo = self.support.lo();
        let hi = self.support.hi();
        Ok((0..self.support.dim()).map(|i| rng.gen_range(lo[i]..hi[i])).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Ar1TruncGauss {
    a: f64,
    s: f64,
    support: Bounds,
    std: Normal,
    lipschitz: f64,
}

impl Ar1TruncGauss {
    pub fn new(a: f64, s: f64, half_width: f64) -> Result<Self> {
        if !(s > 0.0 && half_width > 0.0 && a.is_finite()) {
            return Err(Error::invalid("need s > 0, h > 0 and finite a"));
        }
        let support = Bounds::symmetric(1, half_width)?;
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        let mut k = Self { a, s, support, std, lipschitz: 0.0 };
        k.lipschitz = k.lipschitz_estimate();
        Ok(k)
    }

    pub fn parameters(&self) -> (f64, f64) {
        (self.a, self.s)
    }

    /// `Z(y) = Φ((h − a y)/s) − Φ((−h − a y)/s)`.
    pub fn normalizer(&self, y: f64) -> f64 {
        let h = self.support.hi()[0];
        let mean = self.a * y;
        self.std.cdf((h - mean) / self.s) - self.std.cdf((-h - mean) / self.s)
    }

    /// Bound from `|∂_z ρ| ≤ φ(1)/(s² Z_min)` and
    /// `|∂_y ρ| ≤ |a| |∂_z ρ|_max + ρ_max |Z′|_max / Z_min`.
    fn lipschitz_estimate(&self) -> f64 {
        let h = self.support.hi()[0];
        let z_min = (0..=1000)
            .map(|i| self.normalizer(-h + 2.0 * h * i as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        let phi0 = self.std.pdf(0.0);
        let dz = self.std.pdf(1.0) / (self.s * self.s * z_min);
        let rho_max = phi0 / (self.s * z_min);
        let dnorm = self.a.abs() / self.s * phi0;
        let dy = self.a.abs() * dz + rho_max * dnorm / z_min;
        dz.max(dy)
    }
}

impl MarkovKernel for Ar1TruncGauss {
    fn name(&self) -> &str {
        "ar1_truncgauss"
    }
    fn support(&self) -> &Bounds {
        &self.support
    }
    fn density(&self, y: &[f64], z: &[f64]) -> f64 {
        if !self.support.contains(z) {
            return 0.0;
        }
        let t = (z[0] - self.a * y[0]) / self.s;
        self.std.pdf(t) / (self.s * self.normalizer(y[0]))
    }
    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }
    fn quantile(&self, y: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let h = self.support.hi()[0];
        let mean = self.a * y[0];
        let lo = self.std.cdf((-h - mean) / self.s);
        let hi = self.std.cdf((h - mean) / self.s);
        if !(hi - lo >= 1e-12) {
            return Err(Error::DegenerateDensity { mass: hi - lo });
        }
        let p = (lo + u[0] * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
        Ok(vec![(mean + self.s * self.std.inverse_cdf(p)).clamp(-h, h)])
    }
    fn sample_direct(&self, y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let h = self.support.hi()[0];
        let normal = NormalSampler::new(self.a * y[0], self.s).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..1_000_000 {
            let z: f64 = normal.sample(rng);
            if (-h..=h).contains(&z) {
                return Ok(vec![z]);
            }
        }
        Err(Error::DegenerateDensity { mass: 0.0 })
    }
}

#[derive(Debug, Clone)]
pub struct DriftAway {
    shift: f64,
    grid: Grid,
}

impl DriftAway {
    pub fn new(shift: f64, half_width: f64, cells: usize) -> Result<Self> {
        let grid = Grid::uniform(Bounds::symmetric(1, half_width)?, cells)?;
        Ok(Self { shift, grid })
    }

    fn spike_cell(&self, y: f64) -> usize {
        let b = self.grid.bounds();
        let target = (y + self.shift).clamp(b.lo()[0], b.hi()[0]);
        self.grid.locate(&[target]).expect("clamped into the box")
    }
}

impl MarkovKernel for DriftAway {
    fn name(&self) -> &str {
        "drift_away"
    }
    fn support(&self) -> &Bounds {
        self.grid.bounds()
    }
    fn density(&self, y: &[f64], z: &[f64]) -> f64 {
        match self.grid.locate(z) {
            Some(cell) if cell == self.spike_cell(y[0]) => 1.0 / self.grid.cell_volume(),
            _ => 0.0,
        }
    }
    fn lipschitz_bound(&self) -> f64 {
        f64::INFINITY
    }
    fn sampler_cells(&self) -> usize {
        self.grid.len()
    }
    fn sample_direct(&self, y: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let (lo, hi) = self.grid.cell_bounds(self.spike_cell(y[0]));
        Ok(vec![rng.gen_range(lo[0]..hi[0])])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::kernel::{sampler_grid, worst_mass_defect};
    use crate::rng::{stream, Purpose};
    use crate::stats::{ks_p_value, ks_statistic};

    #[test]
    fn catalog_kernels_are_normalized() {
        for name in KERNEL_NAMES {
            let k = kernel(name).unwrap();
            let fine = Grid::uniform(k.support().clone(), 4096).unwrap();
            let probes: Vec<Vec<f64>> = (0..=20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
            assert!(worst_mass_defect(k.as_ref(), &probes, &fine) < 1e-4, "{name}");
        }
        assert!(kernel("nope").is_err());
    }

    #[test]
    fn uniform_samples_pass_ks() {
        let k = kernel("iid_uniform").unwrap();
        let mut rng = stream(11, Purpose::Misc, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| k.sample(&[0.3], &mut rng).unwrap()[0]).collect();
        let d = ks_statistic(&xs, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(ks_p_value(d, xs.len()) > 0.01);
    }

    #[test]
    fn ar1_quantile_inverts_the_cdf() {
        let k = Ar1TruncGauss::new(0.5, 0.3, 1.0).unwrap();
        let y = [0.8];
        let x = k.quantile(&y, &[0.5]).unwrap()[0];
        // median of the truncated law: equal mass on both sides
        let grid = Grid::uniform(Bounds::symmetric(1, 1.0).unwrap(), 20_000).unwrap();
        let below: f64 =
            grid.centers().filter(|c| c[0] < x).map(|c| k.density(&y, &c) * grid.cell_volume()).sum();
        assert!((below - 0.5).abs() < 1e-3);
    }

    #[test]
    fn ar1_lipschitz_bound_dominates_probes() {
        let k = Ar1TruncGauss::new(0.5, 0.3, 1.0).unwrap();
        let mut rng = stream(5, Purpose::Misc, 0);
        for _ in 0..10_000 {
            let (y, z) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (dy, dz) = (rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01));
            let (y2, z2) = (f64::clamp(y + dy, -1.0, 1.0), f64::clamp(z + dz, -1.0, 1.0));
            let gap = (k.density(&[y], &[z]) - k.density(&[y2], &[z2])).abs();
            assert!(gap <= k.lipschitz_bound() * ((y - y2).abs() + (z - z2).abs()) + 1e-12);
        }
    }

    #[test]
    fn spike_samples_stay_in_one_cell() {
        let k = kernel("drift_away").unwrap();
        let grid = sampler_grid(k.as_ref());
        let mut rng = stream(2, Purpose::Misc, 0);
        let cell = grid.locate(&[0.7]).unwrap();
        for _ in 0..1000 {
            assert_eq!(grid.locate(&k.sample(&[0.2], &mut rng).unwrap()), Some(cell));
            assert_eq!(grid.locate(&k.sample_direct(&[0.2], &mut rng).unwrap()), Some(cell));
        }
    }

    #[test]
    fn direct_and_quantile_samplers_agree_in_mean() {
        let k = kernel("ar1_truncgauss").unwrap();
        let mut rng = stream(3, Purpose::Misc, 0);
        let n = 50_000;
        let m1: f64 = (0..n).map(|_| k.sample(&[0.8], &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        let m2: f64 = (0..n).map(|_| k.sample_direct(&[0.8], &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((m1 - m2).abs() < 0.01, "{m1} {m2}");
    }
}
