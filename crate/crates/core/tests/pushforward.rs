use std::sync::Arc;

use rand::Rng;

use mixlab_core::dynamics::catalog::system;
use mixlab_core::linalg::Matrix;
use mixlab_core::measures::{tv_distance, Bounds, Grid, GridDensity};
use mixlab_core::noise::catalog::IidUniform;
use mixlab_core::noise::{kernel, MarkovKernel};
use mixlab_core::pushforward::{
    extend_local_diffeo, pushforward_density, DiffeoConfig, KernelDensity, LocalMap, PushforwardConfig, SystemStep,
};
use mixlab_core::rng::{stream, Purpose};
use mixlab_core::Error;

/// Law of `S(v, z)` with `z ~ Q(ξ; ·)`, against a Monte-Carlo histogram.
#[test]
fn one_step_image_matches_monte_carlo() {
    let k = kernel("ar1_truncgauss").unwrap();
    let sys = system("kicked_linear_1d", k.support()).unwrap();
    let grid = Grid::uniform(sys.invariant_set().bounding_box(), 128).unwrap();
    let map = SystemStep::new(sys.clone(), 1.0);
    let lam = KernelDensity::new(k.clone(), 1);
    let (v, xi) = (1.7, -0.4);
    let g = pushforward_density(&map, &lam, &[v, xi], &grid, &PushforwardConfig::default()).unwrap();
    let mut rng = stream(3, Purpose::Misc, 0);
    let mut counts = vec![0.0; grid.len()];
    let n = 400_000;
    for _ in 0..n {
        let z = k.sample(&[xi], &mut rng).unwrap();
        counts[grid.locate(&sys.apply(&[v], &z)).unwrap()] += 1.0 / n as f64;
    }
    let mc = GridDensity::from_masses(grid, &counts).unwrap();
    let tv = tv_distance(&g.density, &mc).unwrap();
    assert!(tv < 2e-2, "{tv}");
    assert!(g.mass_defect < 1e-3);
}

/// Planar rotation-plus-shear map against Monte Carlo.
#[test]
fn planar_image_matches_monte_carlo() {
    let k2: Arc<dyn MarkovKernel> = Arc::new(IidUniform::new(2, 1.0).unwrap());
    let sys = system("kicked_linear_2d", k2.support()).unwrap();
    let grid = Grid::uniform(Bounds::symmetric(2, 1.6).unwrap(), 32).unwrap();
    let map = SystemStep::new(sys.clone(), 1.0);
    let lam = KernelDensity::new(k2.clone(), 2);
    let v = [0.8, -0.5];
    // the image is a translated square with edges inside cells
    let cfg = PushforwardConfig { subcells: 4, ..Default::default() };
    let g = pushforward_density(&map, &lam, &[v[0], v[1], 0.0, 0.0], &grid, &cfg).unwrap();
    let mut rng = stream(4, Purpose::Misc, 0);
    let mut counts = vec![0.0; grid.len()];
    let n = 1_000_000;
    for _ in 0..n {
        let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(c) = grid.locate(&sys.apply(&v, &z)) {
            counts[c] += 1.0 / n as f64;
        }
    }
    let mc = GridDensity::from_masses(grid, &counts).unwrap();
    let tv = tv_distance(&g.density, &mc).unwrap();
    assert!(tv < 2e-2, "{tv}");
}

#[test]
fn local_diffeo_extends_to_a_global_one() {
    let a = Matrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.0]);
    let local: LocalMap = Arc::new(|z: &[f64]| vec![2.0 * z[0] + 0.3 * z[1] + 0.2 * z[0] * z[0], -0.1 * z[0] + z[1]]);
    let g = extend_local_diffeo(local, &[0.0, 0.0], &a, 0.5, &DiffeoConfig::default()).unwrap();
    // near the base point the extension is the local map, far away it is affine
    let near = g.apply(&[0.01, 0.02]);
    assert!((near[0] - (0.02 + 0.006 + 0.2 * 1e-4)).abs() < 1e-12);
    let far = g.apply(&[5.0, -3.0]);
    assert!((far[0] - (10.0 - 0.9)).abs() < 1e-9 && (far[1] - (-0.5 - 3.0)).abs() < 1e-9);
}

#[test]
fn folded_local_map_is_rejected() {
    let a = Matrix::identity(1, 1);
    let fold: LocalMap = Arc::new(|z: &[f64]| vec![z[0] * z[0]]);
    let err = extend_local_diffeo(fold, &[0.0], &a, 0.5, &DiffeoConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NotLocallyInjective(_) | Error::EpsilonTooLarge { .. }), "{err}");
}
