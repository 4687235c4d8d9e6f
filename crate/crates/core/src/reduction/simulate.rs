use rand::Rng;

use crate::dynamics::RdsSystem;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamRng};

use super::model::{NoiseModel, NoiseState};

/// A point `U = (v, ξ)` of the extended space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub state: Vec<f64>,
    pub noise: NoiseState,
}

impl ExtendedState {
    pub fn markov(state: Vec<f64>, noise: Vec<f64>) -> Self {
        Self { state, noise: NoiseState::Markov(noise) }
    }
}

/// `𝒮(U, ζ) = (S(v, ζ), ζ)`, or `(S(v, ζ), (ξ, ζ))` with the buffer shifted.
pub fn extended_map(sys: &RdsSystem, u: &ExtendedState, zeta: &[f64]) -> Result<ExtendedState> {
    if !sys.noise_support().contains_with_tol(zeta, 1e-12) {
        return Err(Error::invalid("kick lies outside the noise support"));
    }
    let state = sys.step(&u.state, zeta)?;
    let noise = match &u.noise {
        NoiseState::Markov(_) => NoiseState::Markov(zeta.to_vec()),
        NoiseState::Past(b) => NoiseState::Past(b.pushed(zeta)),
    };
    Ok(ExtendedState { state, noise })
}

/// Advances `u` by one step of the reduced chain, drawing the kick from the
/// noise model with fresh uniforms from `rng`. With `frozen_noise` the noise
/// component is left untouched (the mutated reduction used as a negative
/// control).
pub(crate) fn reduced_step(
    sys: &RdsSystem,
    model: &NoiseModel,
    u: &mut ExtendedState,
    rng: &mut StreamRng,
    frozen_noise: bool,
) -> Result<Vec<f64>> {
    let draws: Vec<f64> = (0..model.dim()).map(|_| rng.gen::<f64>()).collect();
    let zeta = model.draw(&u.noise, &draws)?;
    u.state = sys.step(&u.state, &zeta)?;
    if !frozen_noise {
        model.advance(&mut u.noise, &zeta);
    }
    Ok(zeta)
}

/// Trajectory `U_1, …, U_n` of the reduced chain from `u0`.
pub fn simulate_extended(
    sys: &RdsSystem,
    model: &NoiseModel,
    u0: &ExtendedState,
    n: usize,
    seed: u64,
) -> Result<Vec<ExtendedState>> {
    let mut rng = stream(seed, Purpose::Trajectory, 0);
    let mut u = u0.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        reduced_step(sys, model, &mut u, &mut rng, false)?;
        out.push(u.clone());
    }
    Ok(out)
}

/// States `[u_0, …, u_n]` of the original system driven by noise from the
/// direct sampler, starting from the noise state `eta0`.
pub(crate) fn direct_path(
    sys: &RdsSystem,
    model: &NoiseModel,
    u0: &[f64],
    eta0: NoiseState,
    n: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    let mut noise = eta0;
    let mut u = u0.to_vec();
    let mut out = vec![u.clone()];
    for _ in 0..n {
        let eta = model.draw_direct(&noise, rng)?;
        u = sys.step(&u, &eta)?;
        model.advance(&mut noise, &eta);
        out.push(u.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::catalog;
    use crate::measures::Bounds;
    use crate::noise::kernel;
    use crate::reduction::buffer::PastBuffer;
    use crate::reduction::model::{MemoryOne, StationaryNoiseModel};
    use std::sync::Arc;

    fn unit() -> Bounds {
        Bounds::symmetric(1, 1.0).unwrap()
    }

    #[test]
    fn pure_noise_extended_map() {
        let sys = catalog::pure_noise(unit()).unwrap();
        let u = ExtendedState::markov(vec![0.3], vec![0.1]);
        let next = extended_map(&sys, &u, &[0.7]).unwrap();
        assert_eq!(next, ExtendedState::markov(vec![0.7], vec![0.7]));
    }

    #[test]
    fn kicked_linear_extended_map() {
        let sys = catalog::system("kicked_linear_1d", &unit()).unwrap();
        let next = extended_map(&sys, &ExtendedState::markov(vec![1.0], vec![0.5]), &[0.2]).unwrap();
        assert!((next.state[0] - ((-1.0f64).exp() + 0.2)).abs() < 1e-6);
        assert_eq!(next.noise, NoiseState::Markov(vec![0.2]));
    }

    #[test]
    fn stationary_extended_map_shifts() {
        let sys = catalog::pure_noise(unit()).unwrap();
        let b = PastBuffer::new(vec![vec![0.1], vec![0.2], vec![0.3]], 2.0).unwrap();
        let u = ExtendedState { state: vec![0.0], noise: NoiseState::Past(b) };
        let next = extended_map(&sys, &u, &[0.4]).unwrap();
        let expected = PastBuffer::new(vec![vec![0.2], vec![0.3], vec![0.4]], 2.0).unwrap();
        assert_eq!(next.noise, NoiseState::Past(expected));
    }

    #[test]
    fn past_independent_stationary_run_matches_markov_run() {
        let sys = catalog::system("kicked_linear_1d", &unit()).unwrap();
        let k = kernel("iid_uniform").unwrap();
        let markov = NoiseModel::markov(k.clone());
        let stationary =
            NoiseModel::Stationary(StationaryNoiseModel::new(Arc::new(MemoryOne::new(k)), 4, 2.0, 0).unwrap());
        let a = simulate_extended(&sys, &markov, &ExtendedState::markov(vec![1.0], vec![0.0]), 50, 3).unwrap();
        let b0 = ExtendedState { state: vec![1.0], noise: NoiseState::Past(PastBuffer::filled(4, &[0.0], 2.0).unwrap()) };
        let b = simulate_extended(&sys, &stationary, &b0, 50, 3).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.state == y.state));
        assert!(simulate_extended(&sys, &markov, &b0, 0, 3).is_ok_and(|v| v.is_empty()));
    }
}
