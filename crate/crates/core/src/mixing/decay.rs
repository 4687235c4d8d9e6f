use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::measures::{tv_counts, tv_to_reference, Band, BootstrapConfig, GridDensity};
use crate::reduction::{ExtendedState, NoiseModel, DEFAULT_SPACING};
use crate::rng::{child_seed, stream, Purpose};

/// Fewest pre-floor points accepted by [`fit_rate`].
pub const MIN_FIT_POINTS: usize = 4;
/// Points enter the fit while `tv > FLOOR_FACTOR × noise floor`.
pub const FLOOR_FACTOR: f64 = 10.0;

/// `‖𝒟(u_k) − μ‖_TV` for `k = 0, …, horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub horizon: usize,
    pub tv: Vec<f64>,
    pub bands: Vec<Band>,
    pub noise_floor: f64,
}

impl DecayCurve {
    /// CSV with columns `k,tv,band_lo,band_hi,floor`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,tv,band_lo,band_hi,floor")?;
        for (k, (tv, b)) in self.tv.iter().zip(&self.bands).enumerate() {
            writeln!(w, "{k},{tv},{},{},{}", b.lo, b.hi, self.noise_floor)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConfig {
    pub horizon: usize,
    pub ensemble_n: usize,
    pub bootstrap: BootstrapConfig,
    /// Pairs of reference samples whose median TV is the noise floor.
    pub floor_repeats: usize,
    pub seed: u64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { horizon: 30, ensemble_n: 100_000, bootstrap: BootstrapConfig::default(), floor_repeats: 21, seed: 0 }
    }
}

/// Cell drawn from `cdf` (cumulative probabilities).
fn draw_cell<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Median TV between two independent `n`-sample histograms of `reference`.
pub fn noise_floor(reference: &GridDensity, n: usize, repeats: usize, seed: u64) -> Result<f64> {
    let p = reference.probabilities()?;
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in &p {
        acc += v;
        cdf.push(acc);
    }
    let mut stats: Vec<f64> = (0..repeats.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Reference, r as u64);
            let mut a = vec![0u64; p.len()];
            let mut b = vec![0u64; p.len()];
            for _ in 0..n {
                a[draw_cell(&cdf, &mut rng)] += 1;
                b[draw_cell(&cdf, &mut rng)] += 1;
            }
            tv_counts(&a, &b)
        })
        .collect::<Result<_>>()?;
    stats.sort_by(|a, b| a.total_cmp(b));
    Ok(stats[stats.len() / 2])
}

/// TV between the law of `u_k`, started from `u0` with the initial noise
/// drawn from its stationary law, and the reference `mu_ref`, for every
/// `k ≤ horizon`.
pub fn decay_curve(
    sys: &RdsSystem,
    model: &NoiseModel,
    u0: &[f64],
    mu_ref: &GridDensity,
    cfg: &DecayConfig,
) -> Result<DecayCurve> {
    if cfg.ensemble_n == 0 {
        return Err(Error::invalid("ensemble must be nonempty"));
    }
    let grid = mu_ref.grid();
    if grid.dim() != sys.dim_state() {
        return Err(Error::MismatchedSupport("reference grid must live on the state space".into()));
    }
    let pool = model.harvest(cfg.ensemble_n, DEFAULT_SPACING, child_seed(cfg.seed, 1), false)?;
    let traj_seed = child_seed(cfg.seed, 2);
    let paths: Vec<Vec<usize>> = pool
        .into_par_iter()
        .enumerate()
        .map(|(i, xi0)| {
            let mut rng = stream(traj_seed, Purpose::Trajectory, i as u64);
            let mut u = ExtendedState { state: u0.to_vec(), noise: xi0 };
            let mut cells = Vec::with_capacity(cfg.horizon + 1);
            for k in 0..=cfg.horizon {
                if k > 0 {
                    crate::reduction::reduced_step(sys, model, &mut u, &mut rng, false)?;
                }
                cells.push(grid.locate(&u.state).ok_or(Error::SampleOutOfBox { index: i })?);
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;
    let reference = mu_ref.probabilities()?;
    let mut tv = Vec::with_capacity(cfg.horizon + 1);
    let mut bands = Vec::with_capacity(cfg.horizon + 1);
    for k in 0..=cfg.horizon {
        let idx: Vec<usize> = paths.iter().map(|p| p[k]).collect();
        let est = tv_to_reference(&idx, &reference, cfg.bootstrap, child_seed(cfg.seed, 100 + k as u64))?;
        tv.push(est.tv);
        bands.push(est.band);
    }
    let noise_floor = noise_floor(mu_ref, cfg.ensemble_n, cfg.floor_repeats, child_seed(cfg.seed, 3))?;
    log::info!("decay curve: tv(0) = {:.4}, floor = {noise_floor:.4e}", tv[0]);
    Ok(DecayCurve { horizon: cfg.horizon, tv, bands, noise_floor })
}

/// `tv_k ≈ C e^{−γk}` fitted on the pre-floor window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub c_fit: f64,
    pub gamma_fit: f64,
    pub r_squared: f64,
    /// Inclusive range of `k` used.
    pub k_range: (usize, usize),
}

impl RateFit {
    pub fn predict(&self, k: usize) -> f64 {
        self.c_fit * (-self.gamma_fit * k as f64).exp()
    }

    /// Key-value block for run manifests.
    pub fn to_text(&self) -> String {
        format!(
            "c_fit = {}\ngamma_fit = {}\nr_squared = {}\nk_min = {}\nk_max = {}\n",
            self.c_fit, self.gamma_fit, self.r_squared, self.k_range.0, self.k_range.1
        )
    }
}

/// Least squares of `log tv_k` against `k` over the first run of points
/// above `10 ×` the noise floor.
pub fn fit_rate(curve: &DecayCurve) -> Result<RateFit> {
    let threshold = FLOOR_FACTOR * curve.noise_floor;
    let above = |v: &f64| *v > threshold && *v > 0.0;
    let Some(start) = curve.tv.iter().position(above) else {
        return Err(Error::TooFewPoints { needed: MIN_FIT_POINTS, found: 0 });
    };
    let len = curve.tv[start..].iter().take_while(|v| above(v)).count();
    if len < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints { needed: MIN_FIT_POINTS, found: len });
    }
    let pts: Vec<(f64, f64)> = (start..start + len).map(|k| (k as f64, curve.tv[k].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    log::info!("rate fit over k = {start}..={}: γ = {:.4}, r² = {r_squared:.4}", start + len - 1, -slope);
    Ok(RateFit { c_fit: intercept.exp(), gamma_fit: -slope, r_squared, k_range: (start, start + len - 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(tv: Vec<f64>, floor: f64) -> DecayCurve {
        let bands = tv.iter().map(|&v| Band { lo: v, hi: v }).collect();
        DecayCurve { horizon: tv.len() - 1, tv, bands, noise_floor: floor }
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let c = curve((0..20).map(|k| 2.0 * (-0.5 * k as f64).exp()).collect(), 1e-12);
        let fit = fit_rate(&c).unwrap();
        assert!((fit.c_fit - 2.0).abs() < 1e-9 && (fit.gamma_fit - 0.5).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn floor_clipped_tail_is_excluded() {
        let c = curve((0..30).map(|k| (2.0 * (-0.5 * k as f64).exp()).max(0.01)).collect(), 0.01);
        let fit = fit_rate(&c).unwrap();
        assert_eq!(fit.k_range, (0, 5));
        assert!((fit.gamma_fit - 0.5).abs() < 0.025);
    }

    #[test]
    fn flat_curve_has_too_few_points() {
        let c = curve(vec![0.01; 10], 0.01);
        assert!(matches!(fit_rate(&c), Err(Error::TooFewPoints { found: 0, .. })));
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let c = curve(vec![0.5, 0.25], 0.01);
        let mut out = Vec::new();
        c.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("k,tv,band_lo,band_hi,floor"));
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
    }
}
