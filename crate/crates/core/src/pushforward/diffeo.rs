use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{distance, isomorphism_margin, mat_vec, Matrix};
use crate::rng::{stream, Purpose, StreamRng};

pub type LocalMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Quintic bump: 1 on `[0, ½]`, 0 on `[1, ∞)`, `C²` in between.
pub fn cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * (1.0 - t);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffeoConfig {
    /// Random pairs per injectivity probe.
    pub probe_pairs: usize,
    /// Pairs must satisfy `|Φ(z) − Φ(z′)| ≥ margin · σ_min(A) · |z − z′|`.
    pub margin: f64,
    pub threshold: f64,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for DiffeoConfig {
    fn default() -> Self {
        Self { probe_pairs: 100_000, margin: 1e-2, threshold: 1e-8, max_halvings: 6, seed: 0 }
    }
}

/// `Φ̃(z) = Φ(z₀) + (1 − χ) A (z − z₀) + χ (Φ(z) − Φ(z₀))`, with
/// `χ = cutoff(|z − z₀| / ε)`: the local map near `z₀`, affine far away.
#[derive(Clone)]
pub struct GlobalDiffeo {
    pub base_point: Vec<f64>,
    pub cutoff_radius: f64,
    pub linearization: Matrix,
    local: LocalMap,
    base_value: Vec<f64>,
}

impl fmt::Debug for GlobalDiffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlobalDiffeo")
            .field("base_point", &self.base_point)
            .field("cutoff_radius", &self.cutoff_radius)
            .field("linearization", &self.linearization)
            .finish()
    }
}

impl GlobalDiffeo {
    fn build(local: LocalMap, base: &[f64], a: &Matrix, eps: f64) -> Self {
        let base_value = local(base);
        Self { base_point: base.to_vec(), cutoff_radius: eps, linearization: a.clone(), local, base_value }
    }

    pub fn local_map(&self) -> &LocalMap {
        &self.local
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let dz: Vec<f64> = z.iter().zip(&self.base_point).map(|(a, b)| a - b).collect();
        let chi = cutoff(distance(z, &self.base_point) / self.cutoff_radius);
        let lin = mat_vec(&self.linearization, &dz);
        if chi == 0.0 {
            return self.base_value.iter().zip(&lin).map(|(b, l)| b + l).collect();
        }
        let loc = (self.local)(z);
        (0..self.base_value.len())
            .map(|i| self.base_value[i] + (1.0 - chi) * lin[i] + chi * (loc[i] - self.base_value[i]))
            .collect()
    }
}

/// Smallest `|f(z) − f(z′)| / |z − z′|` over random pairs in `B(center, r)`.
pub fn injectivity_quotient(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    center: &[f64],
    radius: f64,
    pairs: usize,
    rng: &mut StreamRng,
) -> f64 {
    let draw = |rng: &mut StreamRng| -> Vec<f64> {
        loop {
            let d: Vec<f64> = center.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            if crate::linalg::norm(&d) <= 1.0 {
                return center.iter().zip(&d).map(|(c, x)| c + radius * x).collect();
            }
        }
    };
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let a = draw(rng);
        let b = draw(rng);
        let d = distance(&a, &b);
        if d == 0.0 {
            continue;
        }
        worst = worst.min(distance(&f(&a), &f(&b)) / d);
    }
    worst
}

/// Extends a local diffeomorphism at `base` to a global one by blending into
/// its linearization outside `B(base, ε)`. When the blend fails the
/// injectivity probe, `ε` is halved up to `max_halvings` times.
pub fn extend_local_diffeo(
    local: LocalMap,
    base: &[f64],
    derivative: &Matrix,
    epsilon: f64,
    cfg: &DiffeoConfig,
) -> Result<GlobalDiffeo> {
    if derivative.nrows() != base.len() || derivative.ncols() != base.len() {
        return Err(Error::invalid("derivative must be square of the base point's dimension"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let sigma = isomorphism_margin(derivative);
    if !(sigma > cfg.threshold) {
        return Err(Error::NotLocallyInjective(format!("derivative at base has smallest singular value {sigma:.3e}")));
    }
    let floor = cfg.margin * sigma;
    let mut rng = stream(cfg.seed, Purpose::Probe, 21);
    let q = injectivity_quotient(&*local, base, 2.0 * epsilon, cfg.probe_pairs, &mut rng);
    if !(q >= floor) {
        return Err(Error::NotLocallyInjective(format!("pair quotient {q:.3e} on B(base, 2ε)")));
    }
    let mut eps = epsilon;
    for halvings in 0..=cfg.max_halvings {
        let g = GlobalDiffeo::build(local.clone(), base, derivative, eps);
        let q = injectivity_quotient(&|z| g.apply(z), base, 2.0 * eps, cfg.probe_pairs, &mut rng);
        if q >= floor {
            return Ok(g);
        }
        log::debug!("blend with ε = {eps:.3e} has pair quotient {q:.3e}; halving ({halvings})");
        eps *= 0.5;
    }
    Err(Error::EpsilonTooLarge { halvings: cfg.max_halvings })
}
