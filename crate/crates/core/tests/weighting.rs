mod common;

use closedmtp::{nonempty_subsets, scheme_from_graph, xie_scheme, GraphSpec, WeightingScheme};
use common::{random_transitions, set, trial_graph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn trial_scheme_values() {
    let s = scheme_from_graph(&trial_graph());
    assert!(close(s.weights(set(&[1, 2, 3], 6)), &[0.4, 0.4, 0.2], 1e-12));
    assert!(close(s.weights(set(&[2, 3, 4], 6)), &[0.4, 0.2, 0.4], 1e-12));
    // hand-propagated: dropping H1 sends its 0.4 to H4
    assert!(close(s.weights(set(&[2, 3, 4, 5, 6], 6)), &[0.4, 0.2, 0.4, 0.0, 0.0], 1e-12));
    // with only safety hypotheses left all weight has reached them
    let safety = s.weights(set(&[4, 5, 6], 6));
    assert!((safety.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(close(safety, &[0.4, 0.4, 0.2], 1e-12));
    let props = s.validate();
    assert!(props.valid && props.exhaustive);
}

#[test]
fn trial_full_graph_sums() {
    // every row of the graph sums to one, so no weight is ever lost
    let s = scheme_from_graph(&trial_graph());
    for (j, w) in s.iter() {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{j}: {w:?}");
    }
}

#[test]
fn empty_graph_restricts() {
    let w = vec![0.5, 0.3, 0.2];
    let g = GraphSpec::without_edges(w.clone()).unwrap();
    let s = scheme_from_graph(&g);
    assert_eq!(s, WeightingScheme::restricted(&w).unwrap());
}

#[test]
fn external_form_round_trip_trial() {
    let s = scheme_from_graph(&trial_graph());
    let ext = s.to_external();
    assert_eq!(ext.len(), 63);
    assert_eq!(WeightingScheme::from_external(6, &ext).unwrap(), s);
}

fn graph_strategy() -> impl Strategy<Value = (GraphSpec, u64)> {
    (2usize..=6, any::<u64>()).prop_map(|(m, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
        let total: f64 = raw.iter().sum::<f64>().max(1e-3);
        let scale = rng.random_range(0.5..=1.0) / total;
        let w: Vec<f64> = raw.iter().map(|x| (x * scale).min(1.0)).collect();
        let g = GraphSpec::new(w, random_transitions(&mut rng, m)).unwrap();
        (g, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn removal_order_does_not_matter((graph, seed) in graph_strategy()) {
        let m = graph.m();
        let scheme = scheme_from_graph(&graph);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for j in nonempty_subsets(m) {
            let mut drop: Vec<usize> = (0..m).filter(|&i| !j.contains(i)).collect();
            drop.shuffle(&mut rng);
            let mut state = graph.state();
            for &k in &drop {
                state.remove(k);
            }
            let direct: Vec<f64> = j.iter().map(|i| state.weights()[i]).collect();
            prop_assert!(close(scheme.weights(j), &direct, 1e-12), "{}: {:?} vs {:?}", j, scheme.weights(j), direct);
        }
    }

    #[test]
    fn graph_weights_never_exceed_initial_total((graph, _) in graph_strategy()) {
        let total: f64 = graph.weights().iter().sum();
        let scheme = scheme_from_graph(&graph);
        for (j, w) in scheme.iter() {
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!(w.iter().sum::<f64>() <= total + 1e-12, "{}", j);
        }
    }

    #[test]
    fn graph_schemes_are_monotone((graph, _) in graph_strategy()) {
        // removing a hypothesis only passes weight on
        let scheme = scheme_from_graph(&graph);
        for j in nonempty_subsets(graph.m()) {
            for sub in j.proper_subsets() {
                for i in sub {
                    prop_assert!(scheme.weight(sub, i) >= scheme.weight(j, i) - 1e-12);
                }
            }
        }
        prop_assert!(scheme.validate().monotone);
    }

    #[test]
    fn xie_is_rescaled_restriction(raw in prop::collection::vec(0.01f64..1.0, 1..=7)) {
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let xie = xie_scheme(&w).unwrap();
        let rescaled = WeightingScheme::restricted(&w).unwrap().rescale_proportional().unwrap();
        for ((a, wa), (b, wb)) in xie.iter().zip(rescaled.iter()) {
            prop_assert_eq!(a, b);
            prop_assert!(close(wa, wb, 1e-15));
        }
        let props = xie.validate();
        prop_assert!(props.valid && props.exhaustive && props.monotone);
    }

    #[test]
    fn rescaling_is_idempotent((graph, _) in graph_strategy()) {
        let scheme = scheme_from_graph(&graph);
        if let Ok(once) = scheme.rescale_proportional() {
            let twice = once.rescale_proportional().unwrap();
            for ((_, a), (_, b)) in once.iter().zip(twice.iter()) {
                prop_assert!(close(a, b, 1e-14));
            }
            prop_assert!(once.validate().exhaustive);
        }
    }

    #[test]
    fn external_round_trip((graph, _) in graph_strategy()) {
        let scheme = scheme_from_graph(&graph);
        let back = WeightingScheme::from_external(graph.m(), &scheme.to_external()).unwrap();
        prop_assert_eq!(back, scheme);
    }
}

#[test]
fn equal_weights_give_step_down_dunnett_weights() {
    for m in 1..=6 {
        let s = xie_scheme(&vec![1.0 / m as f64; m]).unwrap();
        for (j, w) in s.iter() {
            let expect = 1.0 / j.len() as f64;
            assert!(w.iter().all(|x| (x - expect).abs() < 1e-15), "{j}: {w:?}");
        }
    }
}
