use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{fd_jacobian, relative_discrepancy, Matrix};
use crate::measures::Bounds;
use crate::rng::{stream, Purpose};

/// Tolerance for leaving the invariant set before a step is rejected.
pub const INVARIANCE_TOLERANCE: f64 = 1e-9;

/// A C²-smooth map `S : H × E → H` with its two partial derivatives.
pub trait RdsMap: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn apply(&self, u: &[f64], eta: &[f64]) -> Vec<f64>;
    /// Fallible evaluation for maps that can fail numerically.
    fn try_apply(&self, u: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply(u, eta))
    }
    /// `D_u S(u, η)`, `dim H × dim H`.
    fn d_state(&self, u: &[f64], eta: &[f64]) -> Matrix;
    /// `D_η S(u, η)`, `dim H × dim E`.
    fn d_noise(&self, u: &[f64], eta: &[f64]) -> Matrix;
}

/// Compact set `X` the map leaves invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum InvariantSet {
    Box(Bounds),
    /// Closed centered ball.
    Ball { radius: f64, dim: usize },
}

impl InvariantSet {
    pub fn dim(&self) -> usize {
        match self {
            InvariantSet::Box(b) => b.dim(),
            InvariantSet::Ball { dim, .. } => *dim,
        }
    }

    /// How far `x` lies outside the set (0 inside).
    pub fn excess(&self, x: &[f64]) -> f64 {
        match self {
            InvariantSet::Box(b) => b.excess(x),
            InvariantSet::Ball { radius, .. } => (crate::linalg::norm(x) - radius).max(0.0),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.excess(x) <= INVARIANCE_TOLERANCE
    }

    /// Smallest box containing the set.
    pub fn bounding_box(&self) -> Bounds {
        match self {
            InvariantSet::Box(b) => b.clone(),
            InvariantSet::Ball { radius, dim } => Bounds::symmetric(*dim, *radius).expect("positive radius"),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            InvariantSet::Box(b) => b.diameter(),
            InvariantSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Uniform draw from the set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InvariantSet::Box(b) => {
                let t: Vec<f64> = (0..b.dim()).map(|_| rng.gen::<f64>()).collect();
                b.lerp(&t)
            }
            InvariantSet::Ball { radius, dim } => {
                let g: Vec<f64> = (0..*dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = crate::linalg::norm(&g).max(1e-300);
                let r = radius * rng.gen::<f64>().powf(1.0 / *dim as f64);
                g.iter().map(|v| v * r / n).collect()
            }
        }
    }

    /// Deterministic extremal points: box corners and face centers, or the
    /// ball's axis poles and normalized diagonals.
    pub fn extremal_points(&self) -> Vec<Vec<f64>> {
        match self {
            InvariantSet::Box(b) => {
                let mut pts = b.corners();
                for axis in 0..b.dim() {
                    for end in [b.lo()[axis], b.hi()[axis]] {
                        let mut c = b.center();
                        c[axis] = end;
                        pts.push(c);
                    }
                }
                pts.push(b.center());
                pts
            }
            InvariantSet::Ball { radius, dim } => {
                let mut pts = Vec::new();
                for axis in 0..*dim {
                    for s in [-1.0, 1.0] {
                        let mut p = vec![0.0; *dim];
                        p[axis] = s * radius;
                        pts.push(p);
                    }
                }
                if *dim > 1 {
                    let scale = radius / (*dim as f64).sqrt();
                    for mask in 0..1usize << dim {
                        pts.push((0..*dim).map(|i| if mask >> i & 1 == 1 { scale } else { -scale }).collect());
                    }
                }
                pts.push(vec![0.0; *dim]);
                pts
            }
        }
    }
}

/// A random dynamical system `u_k = S(u_{k−1}, η_k)` on an invariant
/// compact `X` with noise supported in the box `𝒦`.
#[derive(Clone)]
pub struct RdsSystem {
    name: String,
    map: Arc<dyn RdsMap>,
    invariant_set: InvariantSet,
    noise_support: Bounds,
    zero_fixed_point: bool,
}

impl fmt::Debug for RdsSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RdsSystem")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state())
            .field("dim_noise", &self.dim_noise())
            .field("invariant_set", &self.invariant_set)
            .field("noise_support", &self.noise_support)
            .finish()
    }
}

impl RdsSystem {
    pub fn new(
        name: impl Into<String>,
        map: Arc<dyn RdsMap>,
        invariant_set: InvariantSet,
        noise_support: Bounds,
        zero_fixed_point: bool,
    ) -> Result<Self> {
        if invariant_set.dim() != map.dim_state() {
            return Err(Error::invalid(format!(
                "invariant set has dimension {} but the state space has {}",
                invariant_set.dim(),
                map.dim_state()
            )));
        }
        if noise_support.dim() != map.dim_noise() {
            return Err(Error::invalid(format!(
                "noise support has dimension {} but the noise space has {}",
                noise_support.dim(),
                map.dim_noise()
            )));
        }
        Ok(Self { name: name.into(), map, invariant_set, noise_support, zero_fixed_point })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn map(&self) -> &Arc<dyn RdsMap> {
        &self.map
    }

    pub fn dim_state(&self) -> usize {
        self.map.dim_state()
    }

    pub fn dim_noise(&self) -> usize {
        self.map.dim_noise()
    }

    pub fn invariant_set(&self) -> &InvariantSet {
        &self.invariant_set
    }

    pub fn noise_support(&self) -> &Bounds {
        &self.noise_support
    }

    pub fn has_zero_fixed_point(&self) -> bool {
        self.zero_fixed_point
    }

    /// Same system on a different invariant set.
    pub fn with_invariant_set(mut self, set: InvariantSet) -> Result<Self> {
        if set.dim() != self.dim_state() {
            return Err(Error::invalid("invariant set dimension mismatch"));
        }
        self.invariant_set = set;
        Ok(self)
    }

    /// `S(u, η)` without any membership check.
    #[inline]
    pub fn apply(&self, u: &[f64], eta: &[f64]) -> Vec<f64> {
        self.map.apply(u, eta)
    }

    /// One step; fails if the image leaves `X` by more than
    /// [`INVARIANCE_TOLERANCE`].
    pub fn step(&self, u: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        self.step_indexed(u, eta, 1)
    }

    fn step_indexed(&self, u: &[f64], eta: &[f64], step: usize) -> Result<Vec<f64>> {
        if u.len() != self.dim_state() || eta.len() != self.dim_noise() {
            return Err(Error::invalid(format!(
                "step expects a {}-vector state and {}-vector noise",
                self.dim_state(),
                self.dim_noise()
            )));
        }
        let next = self.map.try_apply(u, eta)?;
        let excess = self.invariant_set.excess(&next);
        if !(excess <= INVARIANCE_TOLERANCE) {
            return Err(Error::LeftInvariantSet { step, excess });
        }
        Ok(next)
    }

    /// `[u_1, …, u_n]` with `u_k = S(u_{k−1}, ζ_k)`. Errors carry the
    /// 1-based index of the failing step.
    pub fn iterate(&self, u0: &[f64], noise: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(noise.len());
        let mut u = u0.to_vec();
        for (k, eta) in noise.iter().enumerate() {
            u = self.step_indexed(&u, eta, k + 1)?;
            out.push(u.clone());
        }
        Ok(out)
    }

    /// Endpoint `S_n(u; ζ_1, …, ζ_n)` without membership checks.
    pub fn compose(&self, u0: &[f64], noise: &[Vec<f64>]) -> Vec<f64> {
        noise.iter().fold(u0.to_vec(), |u, eta| self.map.apply(&u, eta))
    }

    /// Probe-based validation of the structural invariants: invariance of `X`,
    /// the zero fixed point, and the supplied derivatives.
    pub fn validate(&self, cfg: &ValidationConfig) -> SystemValidation {
        let mut rng = stream(cfg.seed, Purpose::Probe, 0);
        let mut worst_excess: f64 = 0.0;
        for _ in 0..cfg.invariance_probes {
            let u = self.invariant_set.sample(&mut rng);
            let eta = sample_box(&self.noise_support, &mut rng);
            worst_excess = worst_excess.max(self.invariant_set.excess(&self.map.apply(&u, &eta)));
        }
        let zero_residual = self.zero_fixed_point.then(|| {
            let zero = self.map.apply(&vec![0.0; self.dim_state()], &vec![0.0; self.dim_noise()]);
            crate::linalg::norm(&zero)
        });
        let mut worst_jacobian: f64 = 0.0;
        for _ in 0..cfg.derivative_probes {
            let u = self.invariant_set.sample(&mut rng);
            let eta = sample_box(&self.noise_support, &mut rng);
            let fd_u = fd_jacobian(|x| self.map.apply(x, &eta), &u, cfg.fd_step);
            let fd_e = fd_jacobian(|e| self.map.apply(&u, e), &eta, cfg.fd_step);
            worst_jacobian = worst_jacobian
                .max(relative_discrepancy(&self.map.d_state(&u, &eta), &fd_u))
                .max(relative_discrepancy(&self.map.d_noise(&u, &eta), &fd_e));
        }
        SystemValidation {
            invariance_probes: cfg.invariance_probes,
            worst_invariance_excess: worst_excess,
            zero_residual,
            derivative_probes: cfg.derivative_probes,
            worst_jacobian_discrepancy: worst_jacobian,
        }
    }
}

pub(crate) fn sample_box<R: Rng>(b: &Bounds, rng: &mut R) -> Vec<f64> {
    let t: Vec<f64> = (0..b.dim()).map(|_| rng.gen::<f64>()).collect();
    b.lerp(&t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationConfig {
    pub invariance_probes: usize,
    pub derivative_probes: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { invariance_probes: 10_000, derivative_probes: 50, fd_step: 1e-5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemValidation {
    pub invariance_probes: usize,
    pub worst_invariance_excess: f64,
    pub zero_residual: Option<f64>,
    pub derivative_probes: usize,
    pub worst_jacobian_discrepancy: f64,
}

impl SystemValidation {
    pub fn passed(&self) -> bool {
        self.worst_invariance_excess <= INVARIANCE_TOLERANCE
            && self.zero_residual.is_none_or(|r| r <= 1e-9)
            && self.worst_jacobian_discrepancy <= 1e-4
    }
}

/// `S(u, η) = A u + B η` with constant matrices.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub a: Matrix,
    pub b: Matrix,
}

impl RdsMap for AffineMap {
    fn dim_state(&self) -> usize {
        self.a.nrows()
    }
    fn dim_noise(&self) -> usize {
        self.b.ncols()
    }
    fn apply(&self, u: &[f64], eta: &[f64]) -> Vec<f64> {
        let au = crate::linalg::mat_vec(&self.a, u);
        let be = crate::linalg::mat_vec(&self.b, eta);
        au.iter().zip(&be).map(|(x, y)| x + y).collect()
    }
    fn d_state(&self, _u: &[f64], _eta: &[f64]) -> Matrix {
        self.a.clone()
    }
    fn d_noise(&self, _u: &[f64], _eta: &[f64]) -> Matrix {
        self.b.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(a: f64, b: f64) -> RdsSystem {
        let map = AffineMap { a: Matrix::from_element(1, 1, a), b: Matrix::from_element(1, 1, b) };
        RdsSystem::new(
            "affine",
            Arc::new(map),
            InvariantSet::Box(Bounds::symmetric(1, 2.0).unwrap()),
            Bounds::symmetric(1, 1.0).unwrap(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn iterate_follows_the_recursion() {
        let sys = affine(0.5, 1.0);
        let out = sys.iterate(&[1.0], &[vec![0.0], vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(out, vec![vec![0.5], vec![1.25], vec![-0.375]]);
        assert!(sys.iterate(&[1.0], &[]).unwrap().is_empty());
    }

    #[test]
    fn leaving_x_reports_the_step() {
        let sys = affine(1.5, 1.0);
        let err = sys.iterate(&[1.0], &[vec![0.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::LeftInvariantSet { step: 2, .. }), "{err:?}");
    }

    #[test]
    fn validation_of_a_sound_system() {
        let v = affine(0.5, 1.0).validate(&ValidationConfig { invariance_probes: 2000, ..Default::default() });
        assert!(v.passed(), "{v:?}");
        let v = affine(1.5, 1.0).validate(&ValidationConfig { invariance_probes: 2000, ..Default::default() });
        assert!(!v.passed());
    }

    #[test]
    fn ball_sampling_stays_inside() {
        let ball = InvariantSet::Ball { radius: 2.0, dim: 3 };
        let mut rng = stream(3, Purpose::Misc, 0);
        for _ in 0..1000 {
            assert!(ball.contains(&ball.sample(&mut rng)));
        }
        assert!(ball.extremal_points().iter().all(|p| ball.contains(p)));
    }
}
