mod common;

use aufusion::data::Dataset;
use aufusion::model::{NetworkSpec, NodeRef};
use aufusion::params::{fit_all, fit_cpt, SmoothingPolicy};
use aufusion::structure::count_stats;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(rng: &mut impl Rng, rows: usize) -> Dataset {
    let cols = vec![(NodeRef::current("P"), 3), (NodeRef::current("C"), 4)];
    let cells: Vec<Vec<Option<usize>>> = (0..rows)
        .map(|_| {
            let p = rng.random_range(0..3);
            // skewed so that some rows are empty or lopsided
            let c = if rng.random_bool(0.6) { p } else { rng.random_range(0..4) };
            vec![Some(p), if rng.random_bool(0.1) { None } else { Some(c) }]
        })
        .collect();
    Dataset::from_rows(cols, &cells).unwrap()
}

fn distance_from_uniform(row: &[f64]) -> f64 {
    let u = 1.0 / row.len() as f64;
    row.iter().map(|p| (p - u).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fitted_rows_sum_to_one(seed in any::<u64>(), alpha in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(0..40);
        let data = random_data(&mut rng, rows);
        let stats = count_stats(&data, &NodeRef::current("C"), &[NodeRef::current("P")]).unwrap();
        let cpt = fit_cpt(&stats, SmoothingPolicy::new(alpha).unwrap());
        prop_assert_eq!(cpt.table.len(), 12);
        for row in cpt.table.chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn larger_alpha_moves_rows_toward_uniform(seed in any::<u64>(), a in 0.0f64..3.0, step in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&mut rng, 30);
        let stats = count_stats(&data, &NodeRef::current("C"), &[NodeRef::current("P")]).unwrap();
        let lo = fit_cpt(&stats, SmoothingPolicy::new(a).unwrap());
        let hi = fit_cpt(&stats, SmoothingPolicy::new(a + step).unwrap());
        for (r_lo, r_hi) in lo.table.chunks(4).zip(hi.table.chunks(4)) {
            prop_assert!(distance_from_uniform(r_hi) <= distance_from_uniform(r_lo) + 1e-12);
        }
    }
}

#[test]
fn missing_cells_are_skipped() {
    let cols = vec![(NodeRef::current("P"), 2), (NodeRef::current("C"), 2)];
    let cells = vec![
        vec![Some(0), Some(1)],
        vec![Some(0), None],
        vec![Some(0), Some(1)],
        vec![Some(1), Some(0)],
    ];
    let data = Dataset::from_rows(cols, &cells).unwrap();
    let stats = count_stats(&data, &NodeRef::current("C"), &[NodeRef::current("P")]).unwrap();
    assert_eq!(stats.sample_count, 3);
    let cpt = fit_cpt(&stats, SmoothingPolicy::MLE);
    assert_eq!(cpt.table, vec![0.0, 1.0, 1.0, 0.0]);
}

fn max_error(truth: &NetworkSpec, fitted: &NetworkSpec) -> f64 {
    let pairs = truth.cpts.iter().zip(&fitted.cpts).chain(
        truth
            .transition_cpts
            .iter()
            .flatten()
            .zip(fitted.transition_cpts.iter().flatten()),
    );
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        assert_eq!(a.child, b.child);
        assert_eq!(a.parents, b.parents);
        for (x, y) in a.table.iter().zip(&b.table) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn structure_of(spec: &NetworkSpec) -> NetworkSpec {
    NetworkSpec {
        cpts: vec![],
        transition_cpts: None,
        ..spec.clone()
    }
}

#[test]
fn static_estimates_converge() {
    let truth = common::planted_bn();
    let mut improved = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<_> = (0..50_000).map(|_| common::sample_slice(&mut rng, &truth, None)).collect();
        let small = common::slice_dataset(&truth, &rows[..1000]);
        let large = common::slice_dataset(&truth, &rows);
        let fit = |d| max_error(&truth, &fit_all(&structure_of(&truth), d, None, SmoothingPolicy::MLE).unwrap());
        let (e_small, e_large) = (fit(&small), fit(&large));
        assert!(e_large < 0.02, "seed {seed}: {e_large}");
        improved += (e_large <= e_small) as usize;
    }
    assert!(improved >= 18, "error shrank in {improved}/20 seeds");
}

#[test]
fn transition_estimates_converge() {
    let truth = common::planted_transition();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut firsts = Vec::new();
    let mut pairs = Vec::new();
    // two-frame sequences, so initial and transition records are independent
    for _ in 0..50_000 {
        let a = common::sample_slice(&mut rng, &truth, None);
        let b = common::sample_slice(&mut rng, &truth, Some(&a));
        firsts.push(a.clone());
        pairs.push((a, b));
    }
    let fit = |n: usize| {
        let init = common::slice_dataset(&truth, &firsts[..n]);
        let trans = common::pair_dataset(&truth, &pairs[..n]);
        fit_all(&structure_of(&truth), &init, Some(&trans), SmoothingPolicy::MLE).unwrap()
    };
    let e_small = max_error(&truth, &fit(1000));
    let e_large = max_error(&truth, &fit(50_000));
    assert!(e_large < e_small, "{e_large} !< {e_small}");
    assert!(e_large < 0.02, "{e_large}");
}

#[test]
fn fit_requires_transition_data_for_dynamic_structures() {
    let truth = common::planted_transition();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rows: Vec<_> = (0..10).map(|_| common::sample_slice(&mut rng, &truth, None)).collect();
    let init = common::slice_dataset(&truth, &rows);
    assert!(fit_all(&structure_of(&truth), &init, None, SmoothingPolicy::MLE).is_err());
}

#[test]
fn fit_rejects_data_missing_a_family_column() {
    let truth = common::planted_bn();
    let cols = vec![(NodeRef::current("A"), 2), (NodeRef::current("B"), 2)];
    let data = Dataset::from_rows(cols, &[vec![Some(0), Some(1)]]).unwrap();
    assert!(fit_all(&structure_of(&truth), &data, None, SmoothingPolicy::MLE).is_err());
}

#[test]
fn fitted_model_validates() {
    let truth = common::planted_transition();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a: Vec<_> = (0..200).map(|_| common::sample_slice(&mut rng, &truth, None)).collect();
    let pairs: Vec<_> = a
        .iter()
        .map(|x| (x.clone(), common::sample_slice(&mut rng, &truth, Some(x))))
        .collect();
    let fitted = fit_all(
        &structure_of(&truth),
        &common::slice_dataset(&truth, &a),
        Some(&common::pair_dataset(&truth, &pairs)),
        SmoothingPolicy::default(),
    )
    .unwrap();
    assert!(fitted.validate().is_empty(), "{:?}", fitted.validate());
}
