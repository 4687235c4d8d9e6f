use proptest::prelude::*;

use mixlab_core::measures::{
    dual_lipschitz_atoms, dual_lipschitz_distance, histogram, tv_distance, two_sample_tv, BootstrapConfig, Bounds,
    EmpiricalMeasure, Grid, GridDensity,
};

fn density(values: &[f64]) -> GridDensity {
    let grid = Grid::uniform(Bounds::cube(1, 0.0, 1.0).unwrap(), values.len()).unwrap();
    GridDensity::from_masses(grid, values).unwrap()
}

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter("nonzero mass", |v| v.iter().sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tv_is_a_metric_bounded_by_one(a in positive(10), b in positive(10), c in positive(10)) {
        let (a, b, c) = (density(&a), density(&b), density(&c));
        let d = |x: &GridDensity, y: &GridDensity| tv_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);
        prop_assert!(d(&a, &b) <= 1.0);
    }

    #[test]
    fn dual_lipschitz_is_below_twice_tv(a in positive(8), b in positive(8)) {
        let (a, b) = (density(&a), density(&b));
        let dl = dual_lipschitz_distance(&a, &b).unwrap().value;
        prop_assert!(dl <= 2.0 * tv_distance(&a, &b).unwrap() + 1e-9);
    }

    #[test]
    fn histogram_mass_is_one(points in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let pts: Vec<Vec<f64>> = points.iter().map(|x| vec![*x]).collect();
        let m = EmpiricalMeasure::uniform(pts, Bounds::cube(1, 0.0, 1.0).unwrap(), 0).unwrap();
        let h = histogram(&m, &Grid::uniform(Bounds::cube(1, 0.0, 1.0).unwrap(), 17).unwrap()).unwrap();
        prop_assert!((h.mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn two_point_lp_value() {
    let r = dual_lipschitz_atoms(&[vec![0.0]], &[1.0], &[vec![1.0]], &[1.0]).unwrap();
    assert!((r.value - 2.0 / 3.0).abs() < 1e-3);
}

#[test]
fn same_law_samples_fall_inside_the_null_band() {
    let a: Vec<usize> = (0..20_000).map(|i| (i * 7919) % 50).collect();
    let b: Vec<usize> = (0..20_000).map(|i| (i * 104_729 + 3) % 50).collect();
    let est = two_sample_tv(&a, &b, 50, BootstrapConfig::default(), 9).unwrap();
    assert!(est.tv <= est.band.hi);
}
