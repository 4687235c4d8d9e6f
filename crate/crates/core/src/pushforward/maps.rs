use std::sync::Arc;

use crate::dynamics::RdsSystem;
use crate::linalg::{fd_jacobian, relative_discrepancy, surjectivity_margin, Matrix};
use crate::measures::Bounds;
use crate::noise::MarkovKernel;

/// A parameter-dependent smooth map `F(U, y)` from `E` onto `H`,
/// `dim H ≤ dim E`.
pub trait RegularMap: Send + Sync {
    fn dim_param(&self) -> usize;
    /// `dim E`.
    fn dim_in(&self) -> usize;
    /// `dim H`.
    fn dim_out(&self) -> usize;
    fn eval(&self, param: &[f64], y: &[f64]) -> Vec<f64>;
    /// `D_y F(U, y)`, `dim H × dim E`.
    fn d_y(&self, param: &[f64], y: &[f64]) -> Matrix;
    /// Lipschitz constant of `F` in the parameter.
    fn lipschitz_in_param(&self) -> f64;
}

/// A density `ρ(U, y)` on a box, one per parameter.
pub trait ParamDensityKernel: Send + Sync {
    fn support(&self) -> &Bounds;
    fn density(&self, param: &[f64], y: &[f64]) -> f64;
    fn lipschitz_bound(&self) -> f64;
}

/// Largest relative discrepancy between `d_y` and central differences, and
/// smallest surjectivity margin, over the given probes.
pub fn validate_regular_map(map: &dyn RegularMap, probes: &[(Vec<f64>, Vec<f64>)]) -> (f64, f64) {
    let mut worst_fd: f64 = 0.0;
    let mut margin = f64::INFINITY;
    for (p, y) in probes {
        let d = map.d_y(p, y);
        let fd = fd_jacobian(|z| map.eval(p, z), y, 1e-6);
        worst_fd = worst_fd.max(relative_discrepancy(&d, &fd));
        margin = margin.min(surjectivity_margin(&d));
    }
    (worst_fd, margin)
}

/// `F(U, y) = A y` for a fixed full-row-rank matrix.
#[derive(Debug, Clone)]
pub struct LinearMap {
    a: Matrix,
}

impl LinearMap {
    pub fn new(a: Matrix) -> Self {
        Self { a }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim, dim))
    }

    pub fn scaling(dim: usize, factor: f64) -> Self {
        Self::new(Matrix::identity(dim, dim) * factor)
    }

    /// `(y₁, y₂) ↦ y₁ + y₂`.
    pub fn sum() -> Self {
        Self::new(Matrix::from_row_slice(1, 2, &[1.0, 1.0]))
    }
}

impl RegularMap for LinearMap {
    fn dim_param(&self) -> usize {
        0
    }
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, _param: &[f64], y: &[f64]) -> Vec<f64> {
        crate::linalg::mat_vec(&self.a, y)
    }
    fn d_y(&self, _param: &[f64], _y: &[f64]) -> Matrix {
        self.a.clone()
    }
    fn lipschitz_in_param(&self) -> f64 {
        0.0
    }
}

/// The one-step map of a system, `F((v, ξ), y) = S(v, y)`: the parameter is
/// an extended-space point and only its state part enters.
#[derive(Clone)]
pub struct SystemStep {
    sys: RdsSystem,
    lipschitz: f64,
}

impl SystemStep {
    pub fn new(sys: RdsSystem, lipschitz: f64) -> Self {
        Self { sys, lipschitz }
    }

    pub fn system(&self) -> &RdsSystem {
        &self.sys
    }
}

impl RegularMap for SystemStep {
    fn dim_param(&self) -> usize {
        self.sys.dim_state() + self.sys.dim_noise()
    }
    fn dim_in(&self) -> usize {
        self.sys.dim_noise()
    }
    fn dim_out(&self) -> usize {
        self.sys.dim_state()
    }
    fn eval(&self, param: &[f64], y: &[f64]) -> Vec<f64> {
        self.sys.apply(&param[..self.sys.dim_state()], y)
    }
    fn d_y(&self, param: &[f64], y: &[f64]) -> Matrix {
        self.sys.map().d_noise(&param[..self.sys.dim_state()], y)
    }
    fn lipschitz_in_param(&self) -> f64 {
        self.lipschitz
    }
}

/// Uniform density on a box, independent of the parameter.
#[derive(Debug, Clone)]
pub struct UniformDensity {
    support: Bounds,
}

impl UniformDensity {
    pub fn new(support: Bounds) -> Self {
        Self { support }
    }
}

impl ParamDensityKernel for UniformDensity {
    fn support(&self) -> &Bounds {
        &self.support
    }
    fn density(&self, _param: &[f64], y: &[f64]) -> f64 {
        if self.support.contains(y) {
            1.0 / self.support.volume()
        } else {
            0.0
        }
    }
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// `ρ((v, ξ), y) = ρ_Q(ξ, y)`: a Markov kernel read off the noise part of an
/// extended-space parameter.
#[derive(Clone)]
pub struct KernelDensity {
    kernel: Arc<dyn MarkovKernel>,
    offset: usize,
}

impl KernelDensity {
    /// `offset` is the number of leading state coordinates in the parameter.
    pub fn new(kernel: Arc<dyn MarkovKernel>, offset: usize) -> Self {
        Self { kernel, offset }
    }
}

impl ParamDensityKernel for KernelDensity {
    fn support(&self) -> &Bounds {
        self.kernel.support()
    }
    fn density(&self, param: &[f64], y: &[f64]) -> f64 {
        if !self.kernel.support().contains(y) {
            return 0.0;
        }
        self.kernel.density(&param[self.offset..], y)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.kernel.lipschitz_bound()
    }
}
