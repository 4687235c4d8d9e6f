use std::sync::Arc;

use proptest::prelude::*;

use mixlab_core::dynamics::catalog::system;
use mixlab_core::dynamics::{AffineMap, InvariantSet};
use mixlab_core::linalg::Matrix;
use mixlab_core::measures::{Bounds, Grid};
use mixlab_core::noise::kernel;
use mixlab_core::reduction::{
    check_recurrence_to_zero, check_vec_surjectivity, law_equality_test, past_metric, simulate_extended,
    truncation_bound, Ar2TruncGauss, ExtendedState, LawEqualityConfig, MemoryOne, NoiseModel, PastBuffer,
    RecurrenceToZeroConfig, StationaryNoiseModel,
};
use mixlab_core::stats::chi_square_independence;
use mixlab_core::RdsSystem;

fn reference() -> (RdsSystem, NoiseModel) {
    let k = kernel("ar1_truncgauss").unwrap();
    (system("kicked_linear_1d", k.support()).unwrap(), NoiseModel::markov(k))
}

#[test]
fn extended_chain_is_markov() {
    let (sys, model) = reference();
    // given U_k in a small cell around the mode, u_{k-1} and u_{k+1} are independent
    let coarse = Grid::uniform(sys.invariant_set().bounding_box(), 3).unwrap();
    let near = |u: &ExtendedState| u.state[0].abs() < 0.05 && u.noise.latest()[0].abs() < 0.025;
    let mut table = vec![vec![0u64; 3]; 3];
    for seed in 0..40u64 {
        let path = simulate_extended(&sys, &model, &ExtendedState::markov(vec![0.0], vec![0.0]), 50_000, seed).unwrap();
        for k in (100..path.len() - 1).step_by(10) {
            if near(&path[k]) {
                let prev = coarse.locate(&path[k - 1].state).unwrap();
                let next = coarse.locate(&path[k + 1].state).unwrap();
                table[prev][next] += 1;
            }
        }
    }
    let total: u64 = table.iter().flatten().sum();
    assert!(total > 500, "{total} conditioned triples");
    let res = chi_square_independence(&table);
    assert!(res.p_value > 0.01, "{res:?} {table:?}");
}

#[test]
fn memory_one_truncation_is_exact_for_every_memory() {
    let k = kernel("ar1_truncgauss").unwrap();
    let sys = system("kicked_linear_1d", k.support()).unwrap();
    let cfg = LawEqualityConfig { ensemble_n: 20_000, cells: 20, seed: 3, ..Default::default() };
    for m in [1, 2, 4] {
        let model = StationaryNoiseModel::new(Arc::new(MemoryOne::new(k.clone())), m, 2.0, 100).unwrap();
        let rep = law_equality_test(&sys, &NoiseModel::Stationary(model), &[1.0], &cfg).unwrap();
        assert!(rep.passed(), "m = {m}: {:?}", rep.rows);
    }
}

#[test]
fn longer_buffers_do_not_worsen_the_reduction() {
    let ar2 = Arc::new(Ar2TruncGauss::new(0.5, 0.3, 0.3, 1.0, 2.0).unwrap());
    let sys = system("kicked_linear_1d", &Bounds::symmetric(1, 1.0).unwrap()).unwrap();
    let cfg = LawEqualityConfig { ensemble_n: 20_000, cells: 20, seed: 5, ..Default::default() };
    let row = |m: usize| {
        let model = StationaryNoiseModel::new(ar2.clone(), m, 2.0, 100).unwrap();
        law_equality_test(&sys, &NoiseModel::Stationary(model), &[1.0], &cfg).unwrap().rows[1]
    };
    let (short, long) = (row(1), row(2));
    assert!(long.tv <= short.tv + (short.band.hi - short.band.lo), "{short:?} vs {long:?}");
    assert!(long.pass);
}

#[test]
fn mutated_reduction_is_detected() {
    let (sys, model) = reference();
    let cfg = LawEqualityConfig { ensemble_n: 20_000, cells: 20, seed: 7, mutate: true, ..Default::default() };
    let rep = law_equality_test(&sys, &model, &[1.0], &cfg).unwrap();
    assert!(!rep.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn past_metric_is_a_metric(
        a in prop::collection::vec(-1.0f64..1.0, 5),
        b in prop::collection::vec(-1.0f64..1.0, 5),
        c in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let buf = |v: &[f64]| PastBuffer::new(v.iter().map(|x| vec![*x]).collect(), 2.0).unwrap();
        let (a, b, c) = (buf(&a), buf(&b), buf(&c));
        let d = |x: &PastBuffer, y: &PastBuffer| past_metric(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-15);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn truncation_error_is_bounded(
        shared in prop::collection::vec(-1.0f64..1.0, 3),
        x in prop::collection::vec(-1.0f64..1.0, 20),
        y in prop::collection::vec(-1.0f64..1.0, 20),
    ) {
        // pasts agreeing in the last m entries
        let m = shared.len();
        let make = |old: &[f64]| {
            let mut v: Vec<Vec<f64>> = old.iter().map(|t| vec![*t]).collect();
            v.extend(shared.iter().map(|t| vec![*t]));
            PastBuffer::new(v, 2.0).unwrap()
        };
        let d = past_metric(&make(&x), &make(&y)).unwrap();
        prop_assert!(d <= truncation_bound(2.0, 2.0, m) + 1e-12);
    }
}

#[test]
fn vec_surjectivity_examples() {
    let affine = |b: f64| {
        let map = AffineMap { a: Matrix::from_element(1, 1, 0.5), b: Matrix::from_element(1, 1, b) };
        RdsSystem::new(
            "affine",
            Arc::new(map),
            InvariantSet::Box(Bounds::symmetric(1, 2.0).unwrap()),
            Bounds::symmetric(1, 1.0).unwrap(),
            true,
        )
        .unwrap()
    };
    for m in 1..=3 {
        assert!(check_vec_surjectivity(&affine(1.0), m, 16, 1).unwrap().min_singular > 0.1);
        assert_eq!(check_vec_surjectivity(&affine(0.0), m, 16, 1).unwrap().min_singular, 0.0);
    }
    assert!((check_vec_surjectivity(&affine(1.0), 1, 16, 1).unwrap().min_singular - 1.0).abs() < 1e-12);
}

#[test]
fn recurrence_to_zero_for_a_past_independent_kernel() {
    let k = kernel("iid_uniform").unwrap();
    let model = StationaryNoiseModel::new(Arc::new(MemoryOne::new(k)), 2, 2.0, 50).unwrap();
    let cfg = RecurrenceToZeroConfig { probes: 8, ..Default::default() };
    let one = check_recurrence_to_zero(&model, 1, 0.25, 3, &cfg).unwrap();
    assert_eq!(one.s, 1);
    assert!((one.raw_infimum - 0.25).abs() < 1e-2, "{one:?}");
    let two = check_recurrence_to_zero(&model, 2, 0.25, 3, &cfg).unwrap();
    assert!((two.raw_infimum - 0.0625).abs() < 1e-2, "{two:?}");
}
