use spsnet::analysis::{
    traffic_mf_binary, traffic_mf_clustered, traffic_mf_random_tree, traffic_tas_binary, traffic_tas_clustered,
    traffic_tas_random_tree,
};
use spsnet::diffusion::{payload_sizes, run_mf_clustered, run_mf_tree, run_tas_clustered, run_tas_tree};
use spsnet::model::{generate_measurements, FieldConfig};
use spsnet::rng::substream;
use spsnet::sps::{draw_sign_matrix, local_aggregates, sum_aggregates, AggregateSums};
use spsnet::topology::{clustered, complete_binary_tree, random_tree, TreeTopology};

fn locals_for(n: usize, n_p: usize, m: usize, seed: u64) -> Vec<AggregateSums> {
    let cfg = FieldConfig::polynomial(vec![0.3; n_p]).unwrap();
    let mut rng = substream(seed, "positions", 0);
    let pos: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            use rand::Rng;
            vec![rng.random::<f64>(), rng.random::<f64>()]
        })
        .collect();
    let s = generate_measurements(&pos, &cfg, &mut substream(seed, "noise", 0)).unwrap();
    local_aggregates(&s, &draw_sign_matrix(m, n, seed).unwrap()).unwrap()
}

fn full(l: &[AggregateSums]) -> AggregateSums {
    l.iter().skip(1).fold(l[0].clone(), |a, b| sum_aggregates(&a, b).unwrap())
}

fn check_tree(tree: &TreeTopology, n_p: usize, m: usize, seed: u64) {
    let n = tree.n();
    let (d_mf, d_tas) = payload_sizes(n_p, m).unwrap();
    let l = locals_for(n, n_p, m, seed);
    let tas = run_tas_tree(tree, &l).unwrap();
    let mf = run_mf_tree(tree, &l).unwrap();
    assert_eq!(
        tas.log().total(),
        traffic_tas_random_tree(tree.lambda(), tree.lambda_bar(), d_tas).unwrap()
    );
    assert_eq!(
        mf.log().total(),
        traffic_mf_random_tree(tree.lambda(), tree.lambda_bar(), n, d_mf).unwrap(),
        "census {:?} / {:?}",
        tree.lambda(),
        tree.lambda_bar()
    );
    assert!(mf.is_complete());
    let f = full(&l);
    for k in 0..n {
        let w = tas.wrapup(k).unwrap();
        assert!(w.is_complete(), "node {k}");
        assert!(w.aggregate.relative_distance(&f) < 1e-9);
    }
    tas.log().check_units().unwrap();
    mf.log().check_units().unwrap();
}

#[test]
fn binary_trees_match_closed_forms() {
    for (n_p, m) in [(2, 10), (3, 20)] {
        let (d_mf, d_tas) = payload_sizes(n_p, m).unwrap();
        for depth in 1..=6 {
            let t = complete_binary_tree(depth).unwrap();
            let l = locals_for(t.n(), n_p, m, depth as u64);
            assert_eq!(run_tas_tree(&t, &l).unwrap().log().total(), traffic_tas_binary(t.n(), d_tas).unwrap());
            assert_eq!(run_mf_tree(&t, &l).unwrap().log().total(), traffic_mf_binary(t.n(), d_mf).unwrap());
        }
    }
}

#[test]
fn random_trees_match_census_formulas() {
    for s in 0..25 {
        let (_, t) = random_tree(100, &mut substream(s, "tree", 0)).unwrap();
        check_tree(&t, 2, 10, s);
    }
}

#[test]
fn four_node_tree_hand_counts() {
    let t = TreeTopology::from_parents(vec![None, Some(0), Some(0), Some(1)]).unwrap();
    let l = locals_for(4, 2, 10, 1);
    assert_eq!(run_tas_tree(&t, &l).unwrap().log().total(), 5 * 50);
    let mf = run_mf_tree(&t, &l).unwrap();
    assert_eq!(mf.log().total(), 10 * 3);
    let rounds = mf.log().round_totals();
    assert_eq!(rounds[1..4].iter().sum::<u64>(), 8 * 3);
    assert_eq!(rounds[4], 2 * 3);
}

#[test]
fn clustered_networks_match_closed_forms() {
    let (d_mf, d_tas) = payload_sizes(2, 10).unwrap();
    for s in 0..10 {
        let c = clustered(140, 20, &mut substream(s, "clusters", 0)).unwrap();
        let l = locals_for(140, 2, 10, s);
        let tas = run_tas_clustered(&c, &l).unwrap();
        let mf = run_mf_clustered(&c, &l).unwrap();
        assert_eq!(tas.log().total(), traffic_tas_clustered(140, 20, d_tas).unwrap());
        assert_eq!(mf.log().total(), traffic_mf_clustered(140, 20, d_mf).unwrap());
        let f = full(&l);
        for k in 0..140 {
            let w = tas.wrapup(k).unwrap();
            assert!(w.is_complete());
            assert!(w.aggregate.relative_distance(&f) < 1e-9);
        }
    }
}
