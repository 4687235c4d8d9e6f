use crate::error::{Error, Result};
use crate::linalg::{isomorphism_margin, norm, surjectivity_margin};
use crate::rng::{stream, Purpose};

use super::system::RdsSystem;

pub const DEFAULT_MARGIN_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityConfig {
    pub budget: usize,
    pub random_probes: usize,
    pub seed: u64,
}

impl Default for DissipativityConfig {
    fn default() -> Self {
        Self { budget: 1000, random_probes: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityCertificate {
    pub n_eps: usize,
    pub eps: f64,
    pub probe_count: usize,
    /// `max |S_n(u; 0, …, 0)|` over the probes at `n = n_eps`.
    pub worst_norm: f64,
}

/// Smallest `n` such that every probe `u ∈ X` satisfies
/// `|S_n(u; 0, …, 0)| ≤ eps`. Probes are the extremal points of `X` plus
/// seeded uniform draws.
pub fn check_dissipativity(sys: &RdsSystem, eps: f64, cfg: &DissipativityConfig) -> Result<DissipativityCertificate> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let zero = vec![0.0; sys.dim_noise()];
    if !sys.noise_support().contains(&zero) {
        return Err(Error::invalid("zero kick lies outside the noise support"));
    }
    let set = sys.invariant_set();
    let mut probes = set.extremal_points();
    let mut rng = stream(cfg.seed, Purpose::Probe, 2);
    probes.extend((0..cfg.random_probes).map(|_| set.sample(&mut rng)));
    let probe_count = probes.len();
    for n in 0..=cfg.budget {
        if n > 0 {
            for u in probes.iter_mut() {
                *u = sys.map().try_apply(u, &zero)?;
            }
        }
        let worst = probes.iter().map(|u| norm(u)).fold(0.0, f64::max);
        if worst <= eps {
            return Ok(DissipativityCertificate { n_eps: n, eps, probe_count, worst_norm: worst });
        }
    }
    Err(Error::BudgetExceeded {
        budget: cfg.budget,
        what: format!("zero-kick trajectories did not enter the {eps}-ball"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllabilityReport {
    /// Smallest singular value of `D_η S(0, 0)` (zero if not surjective).
    pub sigma_min_noise: f64,
    /// Smallest singular value of `D_u S(0, 0)`.
    pub sigma_min_state: f64,
    pub threshold: f64,
}

impl ControllabilityReport {
    pub fn passed(&self) -> bool {
        self.sigma_min_noise > self.threshold && self.sigma_min_state > self.threshold
    }
}

pub fn check_controllability(sys: &RdsSystem, threshold: f64) -> ControllabilityReport {
    let u = vec![0.0; sys.dim_state()];
    let eta = vec![0.0; sys.dim_noise()];
    ControllabilityReport {
        sigma_min_noise: surjectivity_margin(&sys.map().d_noise(&u, &eta)),
        sigma_min_state: isomorphism_margin(&sys.map().d_state(&u, &eta)),
        threshold,
    }
}
