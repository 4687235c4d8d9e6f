use std::sync::Arc;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::measures::{Grid, GridDensity};
use crate::noise::{cell_masses, MarkovKernel, DEGENERATE_MASS};
use crate::pushforward::{pushforward_density, KernelDensity, Pushforward, PushforwardConfig, SystemStep};

use super::model::NoiseState;
use super::simulate::ExtendedState;

/// `𝒫(U; ·)` on a (state × noise) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedKernel {
    /// Cell probabilities on the product grid, state axes first.
    pub joint: GridDensity,
    /// Density of `S(v, ·)_* Q(ξ; ·)`.
    pub state_marginal: Pushforward,
}

/// Law of `(S(v, ζ), ζ)` with `ζ ~ Q(ξ; ·)`. The joint measure sits on the
/// graph of `S(v, ·)`, so it is represented by cell masses: each noise cell
/// carries its `Q`-mass, spread over `sub` points per axis inside the cell and
/// sent to the state cell of `S(v, z)`. The state marginal is computed as a
/// proper density by the pushforward construction.
pub fn extended_kernel(
    sys: &RdsSystem,
    kernel: &Arc<dyn MarkovKernel>,
    u: &ExtendedState,
    state_grid: &Grid,
    noise_grid: &Grid,
    sub: usize,
    cfg: &PushforwardConfig,
) -> Result<ExtendedKernel> {
    let NoiseState::Markov(xi) = &u.noise else {
        return Err(Error::invalid("extended kernel needs a Markovian noise state"));
    };
    if noise_grid.bounds() != kernel.support() {
        return Err(Error::MismatchedSupport("noise grid must cover the kernel support".into()));
    }
    let sub = sub.max(1);
    let q = cell_masses(kernel.as_ref(), xi, noise_grid);
    let total: f64 = q.iter().sum();
    if !(total >= DEGENERATE_MASS) {
        return Err(Error::DegenerateDensity { mass: total });
    }
    let fine = Grid::new(
        noise_grid.bounds().clone(),
        noise_grid.cells_per_axis().iter().map(|c| c * sub).collect(),
    )?;
    let mut joint = vec![0.0; state_grid.len() * noise_grid.len()];
    // fine-cell weights inside each coarse cell
    let mut within = vec![0.0; noise_grid.len()];
    let fine_rho: Vec<(usize, f64, Vec<f64>)> = fine
        .centers()
        .map(|z| {
            let coarse = noise_grid.locate(&z).expect("fine centers lie in the coarse grid");
            let rho = kernel.density(xi, &z).max(0.0);
            within[coarse] += rho;
            (coarse, rho, z)
        })
        .collect();
    let count = sub.pow(noise_grid.dim() as u32) as f64;
    for (coarse, rho, z) in &fine_rho {
        let share = if within[*coarse] > 0.0 { rho / within[*coarse] } else { 1.0 / count };
        let mass = q[*coarse] / total * share;
        if mass == 0.0 {
            continue;
        }
        let x = sys.step(&u.state, z)?;
        let s = state_grid.locate(&x).ok_or(Error::SampleOutOfBox { index: *coarse })?;
        joint[s * noise_grid.len() + coarse] += mass;
    }
    let joint = GridDensity::from_masses(state_grid.product(noise_grid)?, &joint)?;
    let param: Vec<f64> = u.state.iter().chain(xi).copied().collect();
    let step = SystemStep::new(sys.clone(), 0.0);
    let lam = KernelDensity::new(kernel.clone(), sys.dim_state());
    let state_marginal = pushforward_density(&step, &lam, &param, state_grid, cfg)?;
    Ok(ExtendedKernel { joint, state_marginal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::catalog::system;
    use crate::measures::{tv_distance, Bounds};
    use crate::noise::catalog::kernel;

    #[test]
    fn pure_noise_marginals_are_the_kernel() {
        let k = kernel("ar1_truncgauss").unwrap();
        let sys = system("pure_noise", k.support()).unwrap();
        let noise_grid = Grid::uniform(k.support().clone(), 64).unwrap();
        let state_grid = Grid::uniform(sys.invariant_set().bounding_box(), 64).unwrap();
        let u = ExtendedState::markov(vec![0.3], vec![0.4]);
        let ek = extended_kernel(&sys, &k, &u, &state_grid, &noise_grid, 4, &PushforwardConfig::default()).unwrap();
        let q = GridDensity::from_masses(noise_grid.clone(), &cell_masses(k.as_ref(), &[0.4], &noise_grid)).unwrap();
        let noise_marginal = ek.joint.marginal(&[1]).unwrap();
        assert!(tv_distance(&noise_marginal, &q).unwrap() < 1e-12);
        if state_grid.same_as(&noise_grid) {
            assert!(tv_distance(&ek.state_marginal.density, &q).unwrap() < 1e-3);
        }
    }

    #[test]
    fn kicked_state_marginal_is_a_shifted_kernel() {
        let k = kernel("ar1_truncgauss").unwrap();
        let sys = system("kicked_linear_1d", k.support()).unwrap();
        let noise_grid = Grid::uniform(k.support().clone(), 64).unwrap();
        let state_grid = Grid::uniform(Bounds::cube(1, -3.0, 3.0).unwrap(), 120).unwrap();
        let u = ExtendedState::markov(vec![1.0], vec![0.5]);
        let ek = extended_kernel(&sys, &k, &u, &state_grid, &noise_grid, 4, &PushforwardConfig::default()).unwrap();
        let shift = (-1f64).exp();
        let exact = GridDensity::from_fn(state_grid.clone(), |x| k.density(&[0.5], &[x[0] - shift]))
            .unwrap()
            .normalized()
            .unwrap();
        assert!(tv_distance(&ek.state_marginal.density, &exact).unwrap() < 1e-2);
        assert!(ek.state_marginal.mass_defect < 5e-2);
        let from_joint = ek.joint.marginal(&[0]).unwrap();
        assert!(tv_distance(&from_joint, &ek.state_marginal.density).unwrap() < 5e-2);
    }
}
