use rand::Rng;

use mixlab_core::dynamics::catalog::system;
use mixlab_core::measures::{tv_distance, tv_from_masses, BootstrapConfig, Grid, GridDensity};
use mixlab_core::mixing::{
    certify_coupling, decay_curve, estimate_stationary, fit_rate, CouplingConfig, DecayConfig, StationaryConfig,
};
use mixlab_core::noise::{kernel, TransitionOperator};
use mixlab_core::reduction::NoiseModel;
use mixlab_core::rng::{stream, Purpose};
use mixlab_core::Error;

fn small_stationary(seed: u64) -> StationaryConfig {
    StationaryConfig { trajectories: 4000, per_trajectory: 10, cells: 64, segment_m: 1, segment_cells: 16, seed, ..Default::default() }
}

#[test]
fn kernel_propagation_contracts_tv() {
    let k = kernel("ar1_truncgauss").unwrap();
    let op = TransitionOperator::new(k.as_ref(), Grid::uniform(k.support().clone(), 64).unwrap()).unwrap();
    let mut rng = stream(1, Purpose::Misc, 0);
    for _ in 0..50 {
        let mut draw = || {
            let v: Vec<f64> = (0..64).map(|_| rng.gen::<f64>().powi(3)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(), draw());
        let before = tv_from_masses(&p, &q);
        let after = tv_from_masses(&op.forward(&op.forward(&p)), &op.forward(&op.forward(&q)));
        assert!(after <= before + 1e-12, "{after} > {before}");
    }
}

#[test]
fn segment_marginal_agrees_with_the_point_law() {
    let k = kernel("ar1_truncgauss").unwrap();
    let sys = system("kicked_linear_1d", k.support()).unwrap();
    let est = estimate_stationary(&sys, &NoiseModel::markov(k), &small_stationary(2)).unwrap();
    let first = est.marginals[1].marginal(&[0]).unwrap();
    // coarsen μ₀ from 64 to 16 cells
    let fine = est.marginals[0].masses();
    let coarse: Vec<f64> = fine.chunks(4).map(|c| c.iter().sum()).collect();
    let mu0 = GridDensity::from_masses(first.grid().clone(), &coarse).unwrap();
    assert!(tv_distance(&first, &mu0).unwrap() < 0.03);
}

#[test]
fn disjoint_seeds_give_matching_estimates() {
    let k = kernel("ar1_truncgauss").unwrap();
    let sys = system("kicked_linear_1d", k.support()).unwrap();
    let model = NoiseModel::markov(k);
    let cfg = StationaryConfig { segment_m: 0, ..small_stationary(0) };
    let a = estimate_stationary(&sys, &model, &StationaryConfig { seed: 10, ..cfg }).unwrap();
    let b = estimate_stationary(&sys, &model, &StationaryConfig { seed: 20, ..cfg }).unwrap();
    // two independent 40k-sample histograms on 64 cells differ by about 0.02
    assert!(tv_distance(&a.marginals[0], &b.marginals[0]).unwrap() < 0.05);
}

#[test]
fn stationary_start_stays_at_the_floor() {
    let k = kernel("iid_uniform").unwrap();
    let sys = system("pure_noise", k.support()).unwrap();
    let model = NoiseModel::markov(k);
    let est = estimate_stationary(&sys, &model, &StationaryConfig { segment_m: 0, ..small_stationary(4) }).unwrap();
    let cfg = DecayConfig {
        horizon: 5,
        ensemble_n: 20_000,
        bootstrap: BootstrapConfig { resamples: 100, ..Default::default() },
        seed: 5,
        ..Default::default()
    };
    let curve = decay_curve(&sys, &model, &[0.3], &est.marginals[0], &cfg).unwrap();
    // one step of pure noise couples to the stationary law
    for k in 1..=5 {
        assert!(curve.tv[k] <= curve.bands[k].hi + 3.0 * curve.noise_floor, "k = {k}: {curve:?}");
    }
    assert!(matches!(fit_rate(&curve), Err(Error::TooFewPoints { .. })));
}

#[test]
fn far_apart_drift_away_starts_break_the_coupling_bound() {
    let k = kernel("drift_away").unwrap();
    let sys = system("kicked_linear_1d", k.support()).unwrap();
    let radius = sys.invariant_set().bounding_box().hi()[0] * 2.0;
    let cfg = CouplingConfig { ball_radius: radius, pairs: 10, ensemble_n: 5000, seed: 6, ..Default::default() };
    let res = certify_coupling(&sys, &k, 0.1, &cfg);
    assert!(matches!(res, Err(Error::CertificateContradicted(_))), "{res:?}");
}
