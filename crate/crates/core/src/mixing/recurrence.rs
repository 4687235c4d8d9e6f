use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::{check_dissipativity, DissipativityConfig, RdsSystem};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::measures::{Bounds, Grid};
use crate::noise::{ball_cell_weights, check_strong_recurrence, MarkovKernel, TransitionOperator};
use crate::reduction::{ExtendedState, NoiseModel};
use crate::rng::{child_seed, stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceConfig {
    /// Monte-Carlo trials per start point.
    pub trials: usize,
    /// Grid cells per noise axis for the return probabilities.
    pub cells: usize,
    pub budget_l: usize,
    /// Random state probes in the continuity search.
    pub probes: usize,
    pub seed: u64,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        Self { trials: 100_000, cells: 256, budget_l: 10, probes: 256, seed: 0 }
    }
}

/// Lower bound `p` of `𝒫_{l+m}(U; B_𝔛(0, r))` uniform in `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceReport {
    /// Total steps `l + m`.
    pub m_steps: usize,
    pub p_bound: f64,
    pub target_radius: f64,
    /// Steps for the deterministic part to contract into `B(r/2)`.
    pub contraction_steps: usize,
    /// Steps for the noise to reach `B_E(δ)` from anywhere.
    pub return_steps: usize,
    pub delta: f64,
    /// `inf P(noise stays in B_E(δ) for m steps | it starts there)`.
    pub p_stay: f64,
    /// `inf P(noise reaches B_E(δ) in l steps)`.
    pub p_reach: f64,
    /// Worst hitting frequency over the Monte-Carlo start points.
    pub mc_frequency: f64,
}

/// `U ∈ B_𝔛(0, r)`: both components in their Euclidean `r`-balls.
pub fn in_extended_ball(state: &[f64], noise: &[f64], r: f64) -> bool {
    norm(state) < r && norm(noise) < r
}

/// Kicks of size below `δ` for `m` steps keep `|S_m(v; ζ)| < r` at every probe.
fn kicks_stay_small(sys: &RdsSystem, starts: &[Vec<f64>], m: usize, delta: f64, r: f64, seed: u64) -> bool {
    let e = sys.dim_noise();
    let mut patterns: Vec<Vec<Vec<f64>>> = Vec::new();
    if e == 1 && m <= 12 {
        for mask in 0..(1usize << m) {
            patterns.push((0..m).map(|i| vec![if mask >> i & 1 == 1 { delta } else { -delta }]).collect());
        }
    }
    let mut rng = stream(seed, Purpose::Probe, 31);
    for _ in 0..64 {
        patterns.push(
            (0..m)
                .map(|_| {
                    let d: Vec<f64> = (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = norm(&d).max(1e-300);
                    d.iter().map(|x| x * delta / n).collect()
                })
                .collect(),
        );
    }
    starts.iter().all(|v| patterns.iter().all(|p| norm(&sys.compose(v, p)) < r))
}

/// Two-stage lower bound on returning near `(0, 0)`: the noise first reaches
/// `B_E(δ)` in `l` steps, then stays there for `m` steps while the state
/// contracts into `B(r)`. `m` comes from dissipativity at `r/2`, `δ` from a
/// bisection on the kick size. The bound is cross-checked by simulation
/// from the extreme points of `X × 𝒦`.
pub fn certify_recurrence(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    radius: f64,
    budget_m: usize,
    cfg: &RecurrenceConfig,
) -> Result<RecurrenceReport> {
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let support = kernel.support();
    if support != sys.noise_support() {
        return Err(Error::MismatchedSupport("kernel and system declare different noise supports".into()));
    }
    let dcfg = DissipativityConfig { budget: budget_m, random_probes: cfg.probes, seed: child_seed(cfg.seed, 1) };
    let m = check_dissipativity(sys, radius / 2.0, &dcfg)?.n_eps.max(1);

    let mut starts = sys.invariant_set().extremal_points();
    starts.push(vec![0.0; sys.dim_state()]);
    let mut rng = stream(cfg.seed, Purpose::Probe, 30);
    starts.extend((0..cfg.probes).map(|_| sys.invariant_set().sample(&mut rng)));
    let inner = inner_radius(support);
    let cap = radius.min(inner);
    let probe_seed = child_seed(cfg.seed, 2);
    let delta = if kicks_stay_small(sys, &starts, m, cap, radius, probe_seed) {
        cap
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if kicks_stay_small(sys, &starts, m, mid, radius, probe_seed) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    // continuity margin against probes missing the true supremum
    let delta = 0.9 * delta;
    if !(delta > 0.0) {
        return Err(Error::BudgetExceeded { budget: budget_m, what: "no kick size keeps the state in B(r)".into() });
    }

    let reach = check_strong_recurrence(kernel.as_ref(), delta, cfg.budget_l, cfg.cells)?;
    let grid = Grid::uniform(support.clone(), cfg.cells)?;
    let op = TransitionOperator::new(kernel.as_ref(), grid.clone())?;
    let ball = ball_cell_weights(&grid, &vec![0.0; grid.dim()], delta);
    let mut g = ball.clone();
    for _ in 1..m {
        g = op.backward(&g).iter().zip(&ball).map(|(a, b)| a * b).collect();
    }
    g = op.backward(&g);
    let raw_stay = (0..grid.len())
        .filter(|&c| norm(&grid.center(c)) < delta)
        .map(|c| g[c])
        .fold(f64::INFINITY, f64::min);
    let p_stay = raw_stay - op.error_bound(m);
    if !(p_stay > 0.0) {
        return Err(Error::BudgetExceeded {
            budget: budget_m,
            what: format!("staying in B(0, {delta:.3e}) for {m} steps has no positive certified bound"),
        });
    }
    let p_bound = reach.kappa * p_stay;
    let total = reach.steps_l + m;

    // Monte-Carlo hitting frequency from the extreme points of X × 𝒦
    let model = NoiseModel::Markov { kernel: kernel.clone(), burn_in: 0 };
    let mut mc_starts = Vec::new();
    for v in sys.invariant_set().extremal_points() {
        for xi in support.corners() {
            mc_starts.push(ExtendedState::markov(v.clone(), xi));
        }
    }
    mc_starts.push(ExtendedState::markov(vec![0.0; sys.dim_state()], support.center()));
    let mc_seed = child_seed(cfg.seed, 3);
    let mut mc_frequency = f64::INFINITY;
    for (s, start) in mc_starts.iter().enumerate() {
        let hits: usize = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(mc_seed, Purpose::Trajectory, (s * cfg.trials + t) as u64);
                let mut u = start.clone();
                for _ in 0..total {
                    crate::reduction::reduced_step(sys, &model, &mut u, &mut rng, false)?;
                }
                Ok(usize::from(in_extended_ball(&u.state, u.noise.latest(), radius)))
            })
            .sum::<Result<usize>>()?;
        mc_frequency = mc_frequency.min(hits as f64 / cfg.trials.max(1) as f64);
    }
    log::info!(
        "recurrence: m = {m}, l = {}, δ = {delta:.4}, p = {:.4e} · {:.4e} = {p_bound:.4e}, MC {mc_frequency:.4e}",
        reach.steps_l,
        reach.kappa,
        p_stay
    );
    let report = RecurrenceReport {
        m_steps: total,
        p_bound,
        target_radius: radius,
        contraction_steps: m,
        return_steps: reach.steps_l,
        delta,
        p_stay,
        p_reach: reach.kappa,
        mc_frequency,
    };
    if cfg.trials > 0 && mc_frequency < p_bound {
        return Err(Error::CertificateContradicted(format!(
            "hitting frequency {mc_frequency:.4e} below the certified bound {p_bound:.4e}"
        )));
    }
    Ok(report)
}

/// Radius of the largest Euclidean ball around 0 inside the box.
pub(crate) fn inner_radius(b: &Bounds) -> f64 {
    b.lo().iter().zip(b.hi()).map(|(l, h)| (-l).min(*h)).fold(f64::INFINITY, f64::min).max(0.0)
}
