mod common;

use std::collections::BTreeMap;

use aufusion::model::{config_states, Edge, NetworkSpec};
use aufusion::Engine;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binaries = rng.random_range(1..=3);
    let phone = rng.random_bool(0.7).then(|| rng.random_range(2..=4));
    let dynamic = rng.random_bool(0.5);
    common::random_dbn(&mut rng, binaries, phone, dynamic)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn joint_sums_to_one(seed in any::<u64>()) {
        let spec = random_spec(seed);
        let cards: Vec<usize> = spec.variables.iter().map(|v| v.cardinality).collect();
        let space: usize = cards.iter().product();
        prop_assume!(space <= 4096);
        let mut total = 0.0;
        for i in 0..space {
            let states = config_states(i, &cards);
            let assignment: BTreeMap<String, usize> =
                spec.variables.iter().map(|v| v.name.clone()).zip(states).collect();
            total += spec.joint_log_prob(&assignment).unwrap().exp();
        }
        prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
    }

    #[test]
    fn topological_order_respects_edges(seed in any::<u64>()) {
        let mut spec = random_spec(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        spec.variables.shuffle(&mut rng);
        let order = spec.topological_order().unwrap();
        let mut sorted = order.clone();
        sorted.sort();
        let mut names: Vec<String> = spec.variables.iter().map(|v| v.name.clone()).collect();
        names.sort();
        prop_assert_eq!(sorted, names);
        let pos = |n: &str| order.iter().position(|o| o == n).unwrap();
        for e in &spec.intra_edges {
            prop_assert!(pos(&e.from) < pos(&e.to));
        }
    }

    #[test]
    fn valid_specs_are_accepted_downstream(seed in any::<u64>()) {
        let spec = random_spec(seed);
        prop_assert!(spec.validate().is_empty());
        let engine = Engine::new(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = common::random_evidence(&mut rng, &spec, 3);
        // evidence may be impossible under the sampled tables, but the spec itself is never rejected
        if let Err(e) = engine.filter(&ev) {
            prop_assert!(e.to_string().contains("evidence"), "{}", e);
        }
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>()) {
        let spec = random_spec(seed);
        let text = spec.to_json().unwrap();
        let back = NetworkSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn bad_row_is_reported_with_location() {
    let mut spec = common::planted_bn();
    spec.cpts[1].table[2] = 0.08;
    spec.cpts[1].table[3] = 0.90;
    let v = spec.validate();
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(v[0].location.contains('B') && v[0].location.contains("row 1"), "{}", v[0].location);
    assert!(Engine::new(&spec).is_err());
}

#[test]
fn cycles_are_rejected() {
    let mut spec = common::planted_bn();
    spec.intra_edges.push(Edge::new("D", "A"));
    assert!(spec.topological_order().is_err());
    assert!(!spec.validate().is_empty());
}

#[test]
fn generator_model_file_round_trips() {
    let spec = aufusion::presets::generator();
    assert!(spec.validate().is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, spec.to_json().unwrap()).unwrap();
    assert_eq!(NetworkSpec::load(&path).unwrap(), spec);
}

#[test]
fn unknown_format_version_is_rejected() {
    let text = common::planted_bn().to_json().unwrap().replace("\"format_version\": \"1\"", "\"format_version\": \"9\"");
    assert!(NetworkSpec::from_json(&text).is_err());
}
