use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::measures::{two_sample_tv, BootstrapConfig, Bounds, Grid, GridDensity};
use crate::noise::{ball_probes, default_cells, lipschitz_slack, MarkovKernel, MinorizationConfig};
use crate::pushforward::{cutoff, pushforward_density, ParamDensityKernel, PushforwardConfig, RegularMap};
use crate::rng::{child_seed, stream, Purpose, StreamRng};

use super::recurrence::inner_radius;

const GOLDEN: f64 = 0.618_033_988_749_895;
const SAMPLE_CHUNK: usize = 10_000;

type CellLocator<'a> = dyn Fn(&[f64], &[f64]) -> Option<usize> + Sync + 'a;

/// `(z₁, z₂) ↦ (S(S(v, z₁), z₂), z₂)` for a fixed state `v`.
#[derive(Clone)]
struct TwoStep {
    sys: RdsSystem,
    lipschitz: f64,
}

impl TwoStep {
    fn new(sys: &RdsSystem) -> Self {
        let mut rng = stream(0, Purpose::Probe, 11);
        let mut lipschitz: f64 = 0.0;
        for _ in 0..64 {
            let v = sys.invariant_set().sample(&mut rng);
            let z1 = crate::dynamics::sample_box(sys.noise_support(), &mut rng);
            let z2 = crate::dynamics::sample_box(sys.noise_support(), &mut rng);
            let u1 = sys.apply(&v, &z1);
            let d = sys.map().d_state(&u1, &z2) * sys.map().d_state(&v, &z1);
            lipschitz = lipschitz.max(d.norm());
        }
        Self { sys: sys.clone(), lipschitz }
    }
}

impl RegularMap for TwoStep {
    fn dim_param(&self) -> usize {
        self.sys.dim_state()
    }
    fn dim_in(&self) -> usize {
        2 * self.sys.dim_noise()
    }
    fn dim_out(&self) -> usize {
        self.sys.dim_state() + self.sys.dim_noise()
    }
    fn eval(&self, v: &[f64], y: &[f64]) -> Vec<f64> {
        let e = self.sys.dim_noise();
        let u1 = self.sys.apply(v, &y[..e]);
        let mut out = self.sys.apply(&u1, &y[e..]);
        out.extend_from_slice(&y[e..]);
        out
    }
    fn d_y(&self, v: &[f64], y: &[f64]) -> Matrix {
        let (h, e) = (self.sys.dim_state(), self.sys.dim_noise());
        let (z1, z2) = y.split_at(e);
        let map = self.sys.map();
        let u1 = map.apply(v, z1);
        let mut d = Matrix::zeros(h + e, 2 * e);
        d.view_mut((0, 0), (h, e)).copy_from(&(map.d_state(&u1, z2) * map.d_noise(v, z1)));
        d.view_mut((0, e), (h, e)).copy_from(&map.d_noise(&u1, z2));
        d.view_mut((h, e), (e, e)).copy_from(&Matrix::identity(e, e));
        d
    }
    fn lipschitz_in_param(&self) -> f64 {
        self.lipschitz
    }
}

/// `χ(z₁, z₂) = φ(|z₁|/δ) φ(|z₂|/δ) m(z₁) ρ(z₁, z₂)` with `m` a conservative
/// lower bound of `ρ(ξ, ·)` over `ξ ∈ B(δ)` and `φ` the quintic bump.
struct Chi {
    kernel: Arc<dyn MarkovKernel>,
    support: Bounds,
    probes: Vec<Vec<f64>>,
    slack: f64,
    delta: f64,
}

impl Chi {
    fn new(kernel: &Arc<dyn MarkovKernel>, delta: f64, lattice: usize) -> Result<Self> {
        let k = kernel.support();
        let probe_cfg = MinorizationConfig { lattice, random_probes: 0, ..MinorizationConfig::for_dim(k.dim()) };
        let (probes, gap) = ball_probes(k, delta, &probe_cfg);
        if probes.is_empty() {
            return Err(Error::invalid("the noise support misses the δ-ball"));
        }
        let slack = lipschitz_slack(kernel.lipschitz_bound(), gap);
        let lo: Vec<f64> = k.lo().iter().map(|l| l.max(-delta)).collect();
        let hi: Vec<f64> = k.hi().iter().map(|h| h.min(delta)).collect();
        let half = Bounds::new(lo, hi)?;
        Ok(Self { kernel: kernel.clone(), support: half.product(&half), probes, slack, delta })
    }

    fn lower(&self, z: &[f64]) -> f64 {
        let m = self.probes.iter().map(|p| self.kernel.density(p, z)).fold(f64::INFINITY, f64::min);
        (m - self.slack).max(0.0)
    }
}

impl ParamDensityKernel for Chi {
    fn support(&self) -> &Bounds {
        &self.support
    }
    fn density(&self, _v: &[f64], y: &[f64]) -> f64 {
        let e = self.kernel.dim();
        let (z1, z2) = y.split_at(e);
        let bump = cutoff(norm(z1) / self.delta) * cutoff(norm(z2) / self.delta);
        if bump == 0.0 {
            return 0.0;
        }
        let m = self.lower(z1);
        if m == 0.0 {
            return 0.0;
        }
        bump * m * self.kernel.density(z1, z2)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.kernel.lipschitz_bound()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorizingConfig {
    /// Box size `δ`; `None` searches for the mass-maximizing value.
    pub delta: Option<f64>,
    /// Grid cells per axis of the lower envelope.
    pub cells: usize,
    /// Lattice points per axis of the `v` and `ξ` probes.
    pub v_lattice: usize,
    pub xi_lattice: usize,
    /// Golden-section iterations of the `δ` search.
    pub search_iters: usize,
    pub pushforward: PushforwardConfig,
}

impl Default for MinorizingConfig {
    fn default() -> Self {
        Self {
            delta: None,
            cells: 32,
            v_lattice: 5,
            xi_lattice: 17,
            search_iters: 10,
            pushforward: PushforwardConfig::default(),
        }
    }
}

/// How `λ` sits in the extended space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinorizingSupport {
    /// Grid over state × noise coordinates `(w, z₂)`.
    Joint,
    /// Grid over the noise coordinate alone; the state copies it (`S(u, η) = η`).
    Diagonal,
}

/// `λ = γ 1_{W(γ)} ℓ` with `W(γ) = B_H(γ) × B_E(γ)`, below `𝒫₂(U; ·)` for
/// every `U` in `B̄_𝔛(0, δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizingMeasure {
    pub delta: f64,
    pub gamma: f64,
    /// `γ · vol W(γ)`.
    pub mass: f64,
    /// Cellwise `λ` density (zero outside `W`).
    pub lambda: GridDensity,
    /// Lower envelope of the two-step density over the `v` probes.
    pub envelope: GridDensity,
    /// `∫` envelope: the mass of the best cellwise minorant on the grid.
    pub envelope_mass: f64,
    pub support: MinorizingSupport,
}

fn ball_volume(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0) * r.powi(dim as i32)
}

/// Distance from the origin to the box `[lo, hi]` along the given axes.
fn box_distance(lo: &[f64], hi: &[f64], axes: std::ops::Range<usize>) -> f64 {
    axes.map(|j| {
        let d = if lo[j] > 0.0 {
            lo[j]
        } else if hi[j] < 0.0 {
            -hi[j]
        } else {
            0.0
        };
        d * d
    })
    .sum::<f64>()
    .sqrt()
}

/// Fraction of a cell inside `W(γ)`, by a `sub^d` midpoint lattice.
fn w_fraction(lo: &[f64], hi: &[f64], h: usize, gamma: f64, sub: usize) -> f64 {
    let d = lo.len();
    let total = sub.pow(d as u32);
    let mut inside = 0usize;
    let mut p = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for j in 0..d {
            let t = ((rem % sub) as f64 + 0.5) / sub as f64;
            rem /= sub;
            p[j] = lo[j] + t * (hi[j] - lo[j]);
        }
        if norm(&p[..h]) < gamma && norm(&p[h..]) < gamma {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

/// Largest `γ ≤ γ_max` such that the envelope is at least `γ` on every cell
/// meeting `W(γ)`; `h` leading axes are the `H` block.
fn largest_gamma(envelope: &GridDensity, h: usize, gamma_max: f64) -> f64 {
    let grid = envelope.grid();
    let d = grid.dim();
    let cells: Vec<(f64, f64, f64)> = (0..grid.len())
        .map(|c| {
            let (lo, hi) = grid.cell_bounds(c);
            (box_distance(&lo, &hi, 0..h), box_distance(&lo, &hi, h..d), envelope.values()[c])
        })
        .collect();
    let feasible = |g: f64| cells.iter().all(|&(dh, de, l)| !(dh < g && de < g) || l >= g);
    if !feasible(1e-12) {
        return 0.0;
    }
    if feasible(gamma_max) {
        return gamma_max;
    }
    let (mut lo, mut hi) = (1e-12, gamma_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn noise_copy(sys: &RdsSystem) -> bool {
    if sys.dim_state() != sys.dim_noise() {
        return false;
    }
    let mut rng = stream(0, Purpose::Probe, 12);
    (0..16).all(|_| {
        let v = sys.invariant_set().sample(&mut rng);
        let eta = crate::dynamics::sample_box(sys.noise_support(), &mut rng);
        crate::linalg::distance(&sys.apply(&v, &eta), &eta) <= 1e-12
    })
}

fn state_box(sys: &RdsSystem, r: f64) -> Result<Bounds> {
    let x = sys.invariant_set().bounding_box();
    let lo: Vec<f64> = x.lo().iter().map(|l| l.max(-r)).collect();
    let hi: Vec<f64> = x.hi().iter().map(|h| h.min(r)).collect();
    Bounds::new(lo, hi)
}

fn noise_box(kernel: &dyn MarkovKernel, r: f64) -> Result<Bounds> {
    let k = kernel.support();
    let lo: Vec<f64> = k.lo().iter().map(|l| l.max(-r)).collect();
    let hi: Vec<f64> = k.hi().iter().map(|h| h.min(r)).collect();
    Bounds::new(lo, hi)
}

/// Lower envelope of the two-step density over the `v` probes, on a grid of
/// the `(w, z₂)` box.
fn joint_envelope(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    delta: f64,
    cfg: &MinorizingConfig,
) -> Result<GridDensity> {
    let (h, e) = (sys.dim_state(), sys.dim_noise());
    let chi = Chi::new(kernel, delta, cfg.xi_lattice)?;
    let map = TwoStep::new(sys);
    let x = sys.invariant_set().bounding_box();
    let probe_cfg = MinorizationConfig { lattice: cfg.v_lattice, random_probes: 0, ..MinorizationConfig::for_dim(h) };
    let (mut v_probes, _) = ball_probes(&x, delta, &probe_cfg);
    v_probes.retain(|v| sys.invariant_set().contains(v));
    if v_probes.is_empty() {
        return Err(Error::invalid("the invariant set misses the δ-ball"));
    }
    // the image of B(δ)² lies within a few δ of the origin
    let grid = Grid::uniform(state_box(sys, 2.0 * delta)?.product(&noise_box(kernel.as_ref(), delta)?), cfg.cells)?;
    debug_assert_eq!(grid.dim(), h + e);
    let mut envelope = vec![f64::INFINITY; grid.len()];
    for v in &v_probes {
        match pushforward_density(&map, &chi, v, &grid, &cfg.pushforward) {
            Ok(pf) => {
                for (l, g) in envelope.iter_mut().zip(pf.density.values()) {
                    *l = l.min(g * pf.raw_mass);
                }
            }
            // χ vanishes: no two-step mass near the origin at all
            Err(Error::DegenerateDensity { .. }) => {
                envelope.iter_mut().for_each(|l| *l = 0.0);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    GridDensity::new(grid, envelope)
}

/// Lower envelope of `∫ ρ(ξ, z₁) ρ(z₁, z₂) dz₁` over `ξ ∈ B(δ)` on the
/// `z₂` box, for systems whose state copies the noise.
fn diagonal_envelope(kernel: &Arc<dyn MarkovKernel>, delta: f64, cfg: &MinorizingConfig) -> Result<GridDensity> {
    let k = kernel.support();
    let lattice = if k.dim() == 1 { cfg.xi_lattice.max(129) } else { cfg.xi_lattice };
    let probe_cfg = MinorizationConfig { lattice, random_probes: 0, ..MinorizationConfig::for_dim(k.dim()) };
    let (probes, gap) = ball_probes(k, delta, &probe_cfg);
    if probes.is_empty() {
        return Err(Error::invalid("the noise support misses the δ-ball"));
    }
    let inner = Grid::uniform(k.clone(), 4 * default_cells(k.dim()))?;
    let vol = inner.cell_volume();
    let nodes: Vec<Vec<f64>> = inner.centers().collect();
    let grid = Grid::uniform(noise_box(kernel.as_ref(), delta)?, cfg.cells)?;
    let l = kernel.lipschitz_bound();
    let rho_max = probes
        .iter()
        .chain(&nodes)
        .flat_map(|y| nodes.iter().step_by(8).map(move |z| (y, z)))
        .map(|(y, z)| kernel.density(y, z))
        .fold(0.0, f64::max);
    // the integrand is 2 L ρ_max Lipschitz in z₁ and L ρ_max |K| in ξ
    let slack = lipschitz_slack(l, gap) * rho_max * k.volume()
        + lipschitz_slack(2.0 * l * rho_max, 0.5 * inner.cell_diameter()) * k.volume();
    let values: Vec<f64> = grid
        .centers()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|z2| {
            let two_step = |xi: &Vec<f64>| -> f64 {
                nodes.iter().map(|z1| kernel.density(xi, z1) * kernel.density(z1, z2)).sum::<f64>() * vol
            };
            (probes.iter().map(two_step).fold(f64::INFINITY, f64::min) - slack).max(0.0)
        })
        .collect();
    GridDensity::new(grid, values)
}

fn extract(envelope: GridDensity, h: usize, delta: f64, support: MinorizingSupport) -> Result<MinorizingMeasure> {
    let grid = envelope.grid().clone();
    let d = grid.dim();
    let gamma = largest_gamma(&envelope, h, delta);
    let e = d - h;
    let mass = if gamma > 0.0 { gamma * ball_volume(h, gamma) * ball_volume(e, gamma) } else { 0.0 };
    let sub = if d <= 2 { 8 } else { 3 };
    let lambda: Vec<f64> = (0..grid.len())
        .map(|c| {
            if gamma == 0.0 {
                return 0.0;
            }
            let (lo, hi) = grid.cell_bounds(c);
            gamma * w_fraction(&lo, &hi, h, gamma, sub)
        })
        .collect();
    let envelope_mass = envelope.mass();
    Ok(MinorizingMeasure {
        delta,
        gamma,
        mass,
        lambda: GridDensity::new(grid, lambda)?,
        envelope,
        envelope_mass,
        support,
    })
}

fn minorize_at(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    delta: f64,
    cfg: &MinorizingConfig,
) -> Result<MinorizingMeasure> {
    if noise_copy(sys) {
        // W degenerates to the noise ball on the diagonal w = z₂
        let env = diagonal_envelope(kernel, delta, cfg)?;
        extract(env, 0, delta, MinorizingSupport::Diagonal)
    } else {
        let env = joint_envelope(sys, kernel, delta, cfg)?;
        extract(env, sys.dim_state(), delta, MinorizingSupport::Joint)
    }
}

/// Two-step minorizing measure `λ ≤ 𝒫₂(U; ·)` for `U ∈ B̄_𝔛(0, δ)`.
///
/// The next two noises have density at least `χ(z₁, z₂)`; pushing `χ` through
/// `(z₁, z₂) ↦ (S₂(v; z₁, z₂), z₂)` and minimizing over `v` probes gives a
/// lower envelope, below which the largest box indicator `γ 1_{W(γ)}` is
/// extracted. Without a fixed `δ`, a golden-section search maximizes the mass.
pub fn minorizing_measure(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    cfg: &MinorizingConfig,
) -> Result<MinorizingMeasure> {
    if kernel.dim() != sys.dim_noise() {
        return Err(Error::invalid("kernel and system noise dimensions differ"));
    }
    let attempt = |delta: f64| -> Result<MinorizingMeasure> {
        match minorize_at(sys, kernel, delta, cfg) {
            Err(Error::NewtonDivergence { skipped, total }) => {
                log::debug!("δ = {delta:.4}: Newton diverged at {skipped}/{total}");
                Ok(MinorizingMeasure {
                    delta,
                    gamma: 0.0,
                    mass: 0.0,
                    lambda: GridDensity::zeros(Grid::uniform(Bounds::symmetric(1, delta)?, 1)?),
                    envelope: GridDensity::zeros(Grid::uniform(Bounds::symmetric(1, delta)?, 1)?),
                    envelope_mass: 0.0,
                    support: MinorizingSupport::Joint,
                })
            }
            other => other,
        }
    };
    let best = match cfg.delta {
        Some(delta) => {
            if !(delta > 0.0) {
                return Err(Error::invalid("delta must be positive"));
            }
            attempt(delta)?
        }
        None => {
            let r_max = inner_radius(kernel.support()).min(inner_radius(&sys.invariant_set().bounding_box()));
            if !(r_max > 0.0) {
                return Err(Error::EmptyMinorization);
            }
            let (mut a, mut b) = (0.05 * r_max, r_max);
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let mut fc = attempt(c)?;
            let mut fd = attempt(d)?;
            for _ in 0..cfg.search_iters {
                log::debug!("δ search: {c:.4} → {:.3e}, {d:.4} → {:.3e}", fc.mass, fd.mass);
                if fc.mass >= fd.mass {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = attempt(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = attempt(d)?;
                }
            }
            if fc.mass >= fd.mass {
                fc
            } else {
                fd
            }
        }
    };
    if !(best.mass > 0.0) {
        return Err(Error::EmptyMinorization);
    }
    log::info!(
        "minorizing measure: δ = {:.4}, γ = {:.4}, mass {:.4e}, envelope mass {:.4}",
        best.delta,
        best.gamma,
        best.mass,
        best.envelope_mass
    );
    Ok(best)
}

/// Uniform point of `b ∩ B(0, r)` by rejection.
fn sample_ball_in(b: &Bounds, r: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let lo: Vec<f64> = b.lo().iter().map(|l| l.max(-r)).collect();
    let hi: Vec<f64> = b.hi().iter().map(|h| h.min(r)).collect();
    for _ in 0..100_000 {
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + rng.gen::<f64>() * (h - l)).collect();
        if norm(&p) <= r {
            return Ok(p);
        }
    }
    Err(Error::invalid("ball misses the box"))
}

/// Random `U = (v, ξ)` in `B̄_𝔛(0, r)`.
fn sample_extended_ball(sys: &RdsSystem, kernel: &dyn MarkovKernel, r: f64, rng: &mut StreamRng) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = sys.invariant_set().bounding_box();
    for _ in 0..1000 {
        let v = sample_ball_in(&x, r, rng)?;
        if sys.invariant_set().contains(&v) {
            return Ok((v, sample_ball_in(kernel.support(), r, rng)?));
        }
    }
    Err(Error::invalid("ball misses the invariant set"))
}

/// `(u₂, ζ₂)` after two steps of the extended chain from `(v, ξ)`.
fn two_step_sample(
    sys: &RdsSystem,
    kernel: &dyn MarkovKernel,
    v: &[f64],
    xi: &[f64],
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z1 = kernel.sample(xi, rng)?;
    let z2 = kernel.sample(&z1, rng)?;
    let u2 = sys.apply(&sys.apply(v, &z1), &z2);
    Ok((u2, z2))
}

fn two_step_cells(
    sys: &RdsSystem,
    kernel: &dyn MarkovKernel,
    v: &[f64],
    xi: &[f64],
    n: usize,
    seed: u64,
    locate: &CellLocator<'_>,
) -> Result<Vec<Option<usize>>> {
    let chunks: Vec<Vec<Option<usize>>> = (0..n.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Trajectory, c as u64);
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            (0..len)
                .map(|_| {
                    let (u, z) = two_step_sample(sys, kernel, v, xi, &mut rng)?;
                    Ok(locate(&u, &z))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationConfig {
    pub probes: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for DominationConfig {
    fn default() -> Self {
        Self { probes: 20, samples: 1_000_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    /// Smallest `p̂_c − λ(c) + slack_c` per probe; nonnegative means dominated.
    pub margins: Vec<f64>,
    pub probes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.margins.iter().all(|m| *m >= 0.0)
    }

    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Monte-Carlo check that two-step histograms from random `U ∈ B̄_𝔛(0, δ)`
/// dominate `λ` cellwise, up to `4 √(p(1 − p)/N) + 1/N` per cell.
pub fn verify_domination(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    mm: &MinorizingMeasure,
    cfg: &DominationConfig,
) -> Result<DominationReport> {
    if cfg.probes == 0 || cfg.samples == 0 {
        return Err(Error::invalid("need probes and samples"));
    }
    let grid = mm.lambda.grid();
    let h = sys.dim_state();
    let lam_cells = mm.lambda.masses();
    let locate = |u: &[f64], z: &[f64]| -> Option<usize> {
        match mm.support {
            MinorizingSupport::Joint => {
                let mut p = u.to_vec();
                p.extend_from_slice(z);
                grid.locate(&p)
            }
            MinorizingSupport::Diagonal => grid.locate(z),
        }
    };
    debug_assert!(mm.support == MinorizingSupport::Diagonal || grid.dim() == h + sys.dim_noise());
    let n = cfg.samples as f64;
    let mut margins = Vec::with_capacity(cfg.probes);
    let mut probes = Vec::with_capacity(cfg.probes);
    let mut rng = stream(cfg.seed, Purpose::Probe, 13);
    for i in 0..cfg.probes {
        let (v, xi) = sample_extended_ball(sys, kernel.as_ref(), mm.delta, &mut rng)?;
        let cells = two_step_cells(sys, kernel.as_ref(), &v, &xi, cfg.samples, child_seed(cfg.seed, i as u64), &locate)?;
        let mut counts = vec![0u64; grid.len()];
        cells.iter().flatten().for_each(|&c| counts[c] += 1);
        let margin = lam_cells
            .iter()
            .zip(&counts)
            .filter(|(l, _)| **l > 0.0)
            .map(|(&l, &c)| c as f64 / n - l + 4.0 * (l * (1.0 - l) / n).sqrt() + 1.0 / n)
            .fold(f64::INFINITY, f64::min);
        log::debug!("domination probe {i}: margin {margin:.3e}");
        margins.push(margin);
        probes.push((v, xi));
    }
    Ok(DominationReport { margins, probes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    pub n_steps: usize,
    pub ball_radius: f64,
    pub pairs: usize,
    /// Samples per start point.
    pub ensemble_n: usize,
    /// Grid cells per axis of the `(state, noise)` histogram.
    pub cells: usize,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { n_steps: 2, ball_radius: 0.1, pairs: 50, ensemble_n: 20_000, cells: 40, bootstrap: BootstrapConfig::default(), seed: 0 }
    }
}

/// `‖𝒫_n(U₁; ·) − 𝒫_n(U₂; ·)‖ ≤ 1 − ε` over sampled pairs in the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCertificate {
    pub n_steps: usize,
    pub epsilon: f64,
    pub ball_radius: f64,
    pub worst_pair_tv: f64,
    /// Upper band end of the worst pair.
    pub worst_band_hi: f64,
    pub pairs: usize,
}

/// Pairs `(U₁, U₂)` from `B̄_𝔛(0, r)`, compared through two-sample TV of
/// their two-step laws on a `(state, noise)` grid.
pub fn certify_coupling(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    lam_mass: f64,
    cfg: &CouplingConfig,
) -> Result<CouplingCertificate> {
    if cfg.n_steps != 2 {
        return Err(Error::invalid("the coupling certificate uses two steps"));
    }
    if !(lam_mass > 0.0 && lam_mass < 1.0) {
        return Err(Error::invalid("lam_mass must lie in (0, 1)"));
    }
    if !(cfg.ball_radius > 0.0) || cfg.pairs == 0 || cfg.ensemble_n == 0 {
        return Err(Error::invalid("need a positive radius, pairs and samples"));
    }
    let grid = Grid::uniform(sys.invariant_set().bounding_box().product(kernel.support()), cfg.cells)?;
    let locate = |u: &[f64], z: &[f64]| -> Option<usize> {
        let mut p = u.to_vec();
        p.extend_from_slice(z);
        grid.locate(&p)
    };
    let mut rng = stream(cfg.seed, Purpose::Pairs, 0);
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..cfg.pairs {
        let (v1, x1) = sample_extended_ball(sys, kernel.as_ref(), cfg.ball_radius, &mut rng)?;
        let (v2, x2) = sample_extended_ball(sys, kernel.as_ref(), cfg.ball_radius, &mut rng)?;
        let base = child_seed(cfg.seed, 2 * i as u64 + 1);
        let a = two_step_cells(sys, kernel.as_ref(), &v1, &x1, cfg.ensemble_n, child_seed(base, 1), &locate)?;
        let b = two_step_cells(sys, kernel.as_ref(), &v2, &x2, cfg.ensemble_n, child_seed(base, 2), &locate)?;
        let a: Vec<usize> = a.into_iter().map(|c| c.ok_or(Error::SampleOutOfBox { index: i })).collect::<Result<_>>()?;
        let b: Vec<usize> = b.into_iter().map(|c| c.ok_or(Error::SampleOutOfBox { index: i })).collect::<Result<_>>()?;
        let est = two_sample_tv(&a, &b, grid.len(), cfg.bootstrap, child_seed(base, 3))?;
        let excess = est.tv - (1.0 - lam_mass + est.band.hi);
        if excess > worst.0 {
            worst = (excess, est.tv, est.band.hi);
        }
    }
    let (excess, tv, band_hi) = worst;
    if excess > 0.0 {
        return Err(Error::CertificateContradicted(format!(
            "pair TV {tv:.4} exceeds 1 − ε + band = {:.4}",
            1.0 - lam_mass + band_hi
        )));
    }
    Ok(CouplingCertificate {
        n_steps: cfg.n_steps,
        epsilon: lam_mass,
        ball_radius: cfg.ball_radius,
        worst_pair_tv: tv,
        worst_band_hi: band_hi,
        pairs: cfg.pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::catalog::system;
    use crate::noise::catalog::kernel;

    fn reference() -> (RdsSystem, Arc<dyn MarkovKernel>) {
        let k = kernel("ar1_truncgauss").unwrap();
        (system("kicked_linear_1d", k.support()).unwrap(), k)
    }

    #[test]
    fn two_step_derivative_matches_differences() {
        let (sys, _) = reference();
        let map = TwoStep::new(&sys);
        let probes = vec![(vec![0.3], vec![0.1, -0.2]), (vec![-1.0], vec![0.5, 0.4])];
        let (fd, margin) = crate::pushforward::validate_regular_map(&map, &probes);
        assert!(fd < 1e-5, "{fd}");
        assert!(margin > 0.1);
    }

    #[test]
    fn largest_gamma_on_a_flat_envelope() {
        let grid = Grid::uniform(Bounds::symmetric(2, 1.0).unwrap(), 20).unwrap();
        let env = GridDensity::new(grid, vec![0.3; 400]).unwrap();
        let g = largest_gamma(&env, 1, 1.0);
        assert!((g - 0.3).abs() < 1e-9);
        // a hole at the origin kills every γ
        let mut v = vec![0.3; 400];
        v[10 * 20 + 10] = 0.0;
        let env = GridDensity::new(env.grid().clone(), v).unwrap();
        assert_eq!(largest_gamma(&env, 1, 1.0), 0.0);
    }

    #[test]
    fn pure_noise_matches_direct_two_step_quadrature() {
        let k = kernel("ar1_truncgauss").unwrap();
        let sys = crate::dynamics::catalog::pure_noise(k.support().clone()).unwrap();
        let cfg = MinorizingConfig { delta: Some(0.5), ..MinorizingConfig::default() };
        let mm = minorizing_measure(&sys, &k, &cfg).unwrap();
        assert_eq!(mm.support, MinorizingSupport::Diagonal);
        assert!(mm.gamma > 0.0);
        // oracle: two-step density at z₂ = 0 from the worst lattice start, by Simpson
        let simpson = |xi: f64| {
            let n = 2000;
            let hstep = 2.0 / n as f64;
            (0..=n)
                .map(|i| {
                    let z1 = -1.0 + i as f64 * hstep;
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * k.density(&[xi], &[z1]) * k.density(&[z1], &[0.0])
                })
                .sum::<f64>()
                * hstep
                / 3.0
        };
        let exact = [-0.5, 0.0, 0.5].iter().map(|&x| simpson(x)).fold(f64::INFINITY, f64::min);
        let at0 = mm.envelope.value_at(&[0.0]);
        assert!(at0 <= exact + 1e-9 && at0 > 0.8 * exact, "{at0} vs {exact}");
        assert!((mm.mass - 2.0 * mm.gamma * mm.gamma).abs() < 1e-12);
    }

    #[test]
    fn drift_away_has_no_minorizing_component() {
        let k = kernel("drift_away").unwrap();
        let sys = system("kicked_linear_1d", k.support()).unwrap();
        let cfg = MinorizingConfig { delta: Some(0.3), cells: 16, ..MinorizingConfig::default() };
        assert!(matches!(minorizing_measure(&sys, &k, &cfg), Err(Error::EmptyMinorization)));
    }

    #[test]
    fn reference_minorization_is_dominated() {
        let (sys, k) = reference();
        let cfg = MinorizingConfig { delta: Some(0.4), cells: 24, ..MinorizingConfig::default() };
        let mm = minorizing_measure(&sys, &k, &cfg).unwrap();
        assert!(mm.mass > 0.0 && mm.envelope_mass >= mm.mass);
        let rep = verify_domination(&sys, &k, &mm, &DominationConfig { probes: 3, samples: 100_000, seed: 1 }).unwrap();
        assert!(rep.passed(), "{:?}", rep.margins);
    }

    #[test]
    fn identical_starts_are_within_the_band() {
        let (sys, k) = reference();
        let cfg = CouplingConfig { ball_radius: 1e-9, pairs: 2, ensemble_n: 5000, ..CouplingConfig::default() };
        let cert = certify_coupling(&sys, &k, 0.5, &cfg).unwrap();
        assert!(cert.worst_pair_tv <= cert.worst_band_hi + 0.02);
    }
}
