use proptest::prelude::*;
use rand::Rng;

use spsnet::diffusion::{run_protocol, run_tas, Protocol};
use spsnet::model::{generate_measurements, FieldConfig};
use spsnet::rng::substream;
use spsnet::sps::{draw_sign_matrix, local_aggregates, weighted_sum, AggregateSums};
use spsnet::topology::{random_geometric, Graph};

fn locals(n: usize, seed: u64) -> Vec<AggregateSums> {
    let cfg = FieldConfig::polynomial(vec![0.4, -0.2]).unwrap();
    let mut rng = substream(seed, "positions", 0);
    let pos: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
    let s = generate_measurements(&pos, &cfg, &mut substream(seed, "noise", 0)).unwrap();
    local_aggregates(&s, &draw_sign_matrix(4, n, seed).unwrap()).unwrap()
}

/// Path through all nodes plus random chords.
fn connected_graph(n: usize, chords: &[(usize, usize)]) -> Graph {
    let mut edges: Vec<[usize; 2]> = (1..n).map(|i| [i - 1, i]).collect();
    for &(a, b) in chords {
        let (a, b) = (a % n, b % n);
        if a != b && !edges.contains(&[a.min(b), a.max(b)]) && a.abs_diff(b) != 1 {
            edges.push([a.min(b), a.max(b)]);
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tas_rows_hold_tag_sums(
        n in 2usize..10,
        chords in proptest::collection::vec((0usize..10, 0usize..10), 0..8),
        rounds in 0usize..6,
        seed in any::<u64>(),
    ) {
        let g = connected_graph(n, &chords);
        let l = locals(n, seed);
        let state = run_tas(&g, &l, rounds).unwrap();
        for table in state.tables() {
            for row in table.rows() {
                let w: Vec<f64> = (0..n).map(|i| f64::from(u8::from(row.tag.contains(i)))).collect();
                let expected = weighted_sum(&l, &w, 2, 4).unwrap();
                prop_assert!(row.payload.relative_distance(&expected) < 1e-12);
            }
        }
    }

    #[test]
    fn every_estimate_is_a_weighted_sum_of_locals(
        n in 2usize..9,
        chords in proptest::collection::vec((0usize..9, 0usize..9), 0..6),
        rounds in 0usize..5,
        seed in any::<u64>(),
    ) {
        let g = connected_graph(n, &chords);
        let l = locals(n, seed);
        for protocol in Protocol::ALL {
            let engine = run_protocol(protocol, &g, &l, rounds).unwrap();
            for k in 0..n {
                let est = engine.estimate(k, &l).unwrap();
                prop_assert!(est.raw_weights[k] > 0.0);
                let expected = weighted_sum(&l, &est.raw_weights, 2, 4).unwrap();
                prop_assert!(est.aggregate.relative_distance(&expected) < 1e-9, "{protocol}");
                prop_assert!(est.weights.as_slice().iter().all(|&c| (0.0..=1.0).contains(&c)));
            }
        }
    }
}

#[test]
fn flooding_completes_within_diameter() {
    let g = random_geometric(25, &mut substream(3, "graph", 0)).unwrap();
    let l = locals(25, 3);
    let d = g.diameter().unwrap();
    for protocol in [Protocol::Mf, Protocol::Pf] {
        let engine = run_protocol(protocol, &g, &l, d).unwrap();
        for k in 0..25 {
            let est = engine.estimate(k, &l).unwrap();
            assert!(est.weights.as_slice().iter().all(|&c| c == 1.0), "{protocol} node {k}");
        }
    }
}

#[test]
fn consensus_weights_approach_ones() {
    let g = random_geometric(15, &mut substream(5, "graph", 0)).unwrap();
    let l = locals(15, 5);
    for protocol in [Protocol::Metropolis, Protocol::Perron] {
        let engine = run_protocol(protocol, &g, &l, 3000).unwrap();
        for k in 0..15 {
            let est = engine.estimate(k, &l).unwrap();
            let sum: f64 = est.raw_weights.iter().sum();
            assert!((sum - 15.0).abs() < 1e-9, "{protocol} row sum {sum}");
            assert!(est.raw_weights.iter().all(|c| (c - 1.0).abs() < 1e-6), "{protocol} node {k}");
        }
    }
}
