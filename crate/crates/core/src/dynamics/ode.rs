use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::measures::Bounds;
use crate::rng::{stream, Purpose};

use super::system::{InvariantSet, RdsMap, RdsSystem};

/// In-place vector field `out = V(x)`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `DV(x)`.
pub type FieldJacobian = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

pub const DEFAULT_RK4_STEPS: usize = 100;
pub const DEFAULT_FIT_RADII: usize = 10_000;

/// Autonomous ODE `ẋ = V(x)` kicked at integer times.
#[derive(Clone)]
pub struct KickedOde {
    dim: usize,
    field: VectorField,
    jacobian: FieldJacobian,
    dissipation_c: f64,
    dissipation_cc: f64,
    rk4_steps: usize,
    bounding_box: Bounds,
}

impl fmt::Debug for KickedOde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KickedOde")
            .field("dim", &self.dim)
            .field("dissipation_c", &self.dissipation_c)
            .field("dissipation_C", &self.dissipation_cc)
            .field("rk4_steps", &self.rk4_steps)
            .field("bounding_box", &self.bounding_box)
            .finish()
    }
}

impl KickedOde {
    /// `c` and `C` are the declared constants of `⟨V(x), x⟩ ≤ −c|x|² + C`.
    pub fn new(
        dim: usize,
        field: VectorField,
        jacobian: FieldJacobian,
        dissipation_c: f64,
        dissipation_cc: f64,
        bounding_box: Bounds,
    ) -> Result<Self> {
        if bounding_box.dim() != dim {
            return Err(Error::invalid("bounding box dimension differs from the ODE dimension"));
        }
        if !(dissipation_c > 0.0 && dissipation_cc >= 0.0) {
            return Err(Error::invalid("need c > 0 and C >= 0"));
        }
        Ok(Self { dim, field, jacobian, dissipation_c, dissipation_cc, rk4_steps: DEFAULT_RK4_STEPS, bounding_box })
    }

    pub fn with_rk4_steps(mut self, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("rk4_steps must be positive"));
        }
        self.rk4_steps = steps;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rk4_steps(&self) -> usize {
        self.rk4_steps
    }

    pub fn bounding_box(&self) -> &Bounds {
        &self.bounding_box
    }

    pub fn dissipation_constants(&self) -> (f64, f64) {
        (self.dissipation_c, self.dissipation_cc)
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.field)(x, &mut out);
        out
    }

    pub fn field_jacobian(&self, x: &[f64]) -> Matrix {
        (self.jacobian)(x)
    }

    fn blowup_limit(&self) -> f64 {
        10.0 * self.bounding_box.diameter()
    }

    /// Time-1 map `φ(x)` by classical RK4 with `rk4_steps` substeps; global
    /// error `O(h⁴)` with `h = 1/rk4_steps`.
    pub fn flow_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!("expected a {}-vector", self.dim)));
        }
        let field = &self.field;
        rk4(|y, out| field(y, out), x, self.dim, self.rk4_steps, self.blowup_limit())
    }

    /// `φ(x)` together with `Dφ(x)` from the variational equation
    /// `Ṁ = DV(x(t)) M`, `M(0) = I`, integrated alongside.
    pub fn flow_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let d = self.dim;
        let mut y0 = x.to_vec();
        y0.extend(Matrix::identity(d, d).iter());
        let rhs = |y: &[f64], out: &mut [f64]| {
            (self.field)(&y[..d], &mut out[..d]);
            let dv = (self.jacobian)(&y[..d]);
            let m = Matrix::from_column_slice(d, d, &y[d..]);
            out[d..].copy_from_slice((dv * m).as_slice());
        };
        let y = rk4(rhs, &y0, d, self.rk4_steps, self.blowup_limit())?;
        Ok((y[..d].to_vec(), Matrix::from_column_slice(d, d, &y[d..])))
    }

    /// Worst value of `⟨V(x), x⟩ + c|x|² − C` over uniform probes of the
    /// bounding box; nonpositive when the declared constants hold.
    pub fn dissipation_margin(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = stream(seed, Purpose::Probe, 1);
        let mut worst = f64::NEG_INFINITY;
        let mut v = vec![0.0; self.dim];
        for _ in 0..probes {
            let t: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>()).collect();
            let x = self.bounding_box.lerp(&t);
            (self.field)(&x, &mut v);
            let inner: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            let sq: f64 = x.iter().map(|a| a * a).sum();
            worst = worst.max(inner + self.dissipation_c * sq - self.dissipation_cc);
        }
        worst
    }
}

/// Classical RK4 over `[0, 1]`. Only the first `watch` components enter the
/// blow-up test.
fn rk4(f: impl Fn(&[f64], &mut [f64]), x0: &[f64], watch: usize, steps: usize, limit: f64) -> Result<Vec<f64>> {
    let n = x0.len();
    let h = 1.0 / steps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        f(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let r = norm(&x[..watch]);
        if !(r <= limit) {
            return Err(Error::Blowup { norm: r, limit });
        }
    }
    Ok(x)
}

/// `S(x, η) = φ(x) + η`.
#[derive(Debug, Clone)]
pub struct KickedMap {
    ode: KickedOde,
}

impl KickedMap {
    pub fn new(ode: KickedOde) -> Self {
        Self { ode }
    }

    pub fn ode(&self) -> &KickedOde {
        &self.ode
    }
}

impl RdsMap for KickedMap {
    fn dim_state(&self) -> usize {
        self.ode.dim
    }

    fn dim_noise(&self) -> usize {
        self.ode.dim
    }

    fn apply(&self, u: &[f64], eta: &[f64]) -> Vec<f64> {
        self.try_apply(u, eta).unwrap_or_else(|_| vec![f64::NAN; self.ode.dim])
    }

    fn try_apply(&self, u: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.ode.flow_map(u)?;
        x.iter_mut().zip(eta).for_each(|(a, b)| *a += b);
        Ok(x)
    }

    fn d_state(&self, u: &[f64], _eta: &[f64]) -> Matrix {
        match self.ode.flow_with_jacobian(u) {
            Ok((_, m)) => m,
            Err(_) => Matrix::from_element(self.ode.dim, self.ode.dim, f64::NAN),
        }
    }

    fn d_noise(&self, _u: &[f64], _eta: &[f64]) -> Matrix {
        Matrix::identity(self.ode.dim, self.ode.dim)
    }
}

/// Constants of `|φ(x)| ≤ β|x| + C₁` fitted on probe radii, and the
/// absorbing radius `R = 2(ϰ + C₁)/(1 − β)` with `ϰ = max_{η∈𝒦} |η|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationFit {
    pub beta: f64,
    pub c1: f64,
    pub noise_bound: f64,
    pub radius: f64,
    pub radii_probed: usize,
    pub max_probe_radius: f64,
}

/// Directions probed at each radius: coordinate axes both ways, plus the
/// normalized diagonals when `d > 1`.
fn probe_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for axis in 0..dim {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; dim];
            e[axis] = s;
            dirs.push(e);
        }
    }
    if dim > 1 {
        let c = 1.0 / (dim as f64).sqrt();
        for mask in 0..1usize << dim {
            dirs.push((0..dim).map(|i| if mask >> i & 1 == 1 { c } else { -c }).collect());
        }
    }
    dirs
}

/// Least-squares fit of `m(r) = max_e |φ(r e)|` by `β r + C₁` over
/// `radii` equispaced radii in the largest centered ball inside the bounding
/// box, with `β` constrained to `[0, 1)` and `C₁` raised until the bound holds
/// at every probe.
pub fn fit_dissipation(ode: &KickedOde, noise_support: &Bounds, radii: usize) -> Result<DissipationFit> {
    if radii < 2 {
        return Err(Error::invalid("need at least two probe radii"));
    }
    let b = &ode.bounding_box;
    let r_max = (0..ode.dim).map(|i| (-b.lo()[i]).min(b.hi()[i])).fold(f64::INFINITY, f64::min);
    if !(r_max > 0.0) {
        return Err(Error::invalid("bounding box must contain a ball around the origin"));
    }
    let dirs = probe_directions(ode.dim);
    let samples: Vec<(f64, f64)> = (0..radii)
        .map(|j| {
            let r = r_max * (j as f64 + 0.5) / radii as f64;
            let mut worst: f64 = 0.0;
            for e in &dirs {
                let x: Vec<f64> = e.iter().map(|v| v * r).collect();
                worst = worst.max(norm(&ode.flow_map(&x)?));
            }
            Ok((r, worst))
        })
        .collect::<Result<_>>()?;

    let n = samples.len() as f64;
    let mr = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mm = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = samples.iter().map(|(r, m)| (r - mr) * (m - mm)).sum();
    let sxx: f64 = samples.iter().map(|(r, _)| (r - mr) * (r - mr)).sum();
    let mut beta = sxy / sxx;
    if beta >= 1.0 - 1e-3 {
        return Err(Error::NotDissipative { beta });
    }
    beta = beta.max(0.0);
    let mut c1 = mm - beta * mr;
    let worst_residual = samples.iter().map(|(r, m)| m - beta * r - c1).fold(f64::NEG_INFINITY, f64::max);
    c1 = (c1 + worst_residual).max(0.0);
    let noise_bound = noise_support.corners().iter().map(|c| norm(c)).fold(0.0, f64::max);
    let radius = 2.0 * (noise_bound + c1) / (1.0 - beta);
    Ok(DissipationFit { beta, c1, noise_bound, radius, radii_probed: radii, max_probe_radius: r_max })
}

/// The kicked system `S(x, η) = φ(x) + η` on the absorbing ball of radius
/// `R = 2(ϰ + C₁)/(1 − β)`.
pub fn make_kicked_system(ode: KickedOde, noise_support: Bounds) -> Result<(RdsSystem, DissipationFit)> {
    make_kicked_system_named("kicked", ode, noise_support)
}

pub fn make_kicked_system_named(
    name: &str,
    ode: KickedOde,
    noise_support: Bounds,
) -> Result<(RdsSystem, DissipationFit)> {
    if noise_support.dim() != ode.dim {
        return Err(Error::invalid("kicked systems need dim E = dim H"));
    }
    let fit = fit_dissipation(&ode, &noise_support, DEFAULT_FIT_RADII)?;
    if fit.radius > fit.max_probe_radius {
        log::warn!(
            "absorbing radius {:.4} exceeds the probed radius {:.4}; the dissipation fit is extrapolated",
            fit.radius,
            fit.max_probe_radius
        );
    }
    let zero = ode.flow_map(&vec![0.0; ode.dim])?;
    let set = InvariantSet::Ball { radius: fit.radius, dim: ode.dim };
    let system = RdsSystem::new(name, Arc::new(KickedMap::new(ode)), set, noise_support, norm(&zero) <= 1e-9)?;
    Ok((system, fit))
}
