mod common;

use common::*;
use ideal_core::netgraph::*;
use ideal_core::oracle::{bellman_ford, count_simple_paths};
use ideal_core::rng::rng_for;
use ideal_core::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn random_dag_incidence_has_two_nonzeros_per_column() {
    let mut rng = rng_for(1, "dag");
    let nodes: Vec<NodeSpec> = (0..50).map(|i| node(&format!("v{i}"))).collect();
    let mut edges = Vec::new();
    for i in 0..50 {
        for j in (i + 1)..50 {
            if rng.random::<f64>() < 0.1 {
                edges.push(edge(edges.len() as u32, &format!("v{i}"), &format!("v{j}")));
            }
        }
    }
    let net = build_network(nodes, edges).unwrap();
    let a = net.incidence();
    assert_eq!(a.iter().filter(|&&v| v != 0.0).count(), 2 * net.num_edges());
    for k in 0..net.num_edges() {
        assert_eq!(a.column(k).sum(), 0.0);
    }
}

#[test]
fn od_vector_ten_nodes() {
    let nodes: Vec<NodeSpec> = (0..10).map(|i| node(&format!("v{i}"))).collect();
    let edges: Vec<EdgeSpec> = (0..9).map(|i| edge(i, &format!("v{i}"), &format!("v{}", i + 1))).collect();
    let net = build_network(nodes, edges).unwrap();
    let od = od(&net, &["v0", "v3"], "v9");
    let b = od_vector(&net, &od, 3).unwrap();
    assert_eq!(b.iter().filter(|&&v| v != 0.0).count(), 2);
    assert_eq!((b[3], b[9]), (1.0, -1.0));
    assert!(matches!(OdSpec::from_ids(&net, &["v2"], "v2"), Err(Error::InvalidOd(_))));
}

#[test]
fn multi_origin_picks_cheaper_depot() {
    let net = diamond();
    let od = od(&net, &["s", "x"], "t");
    let (z, v) = dijkstra(&net, &[5.0, 1.0, 1.0, 1.0, 1.0], &od).unwrap();
    assert_eq!(z.origin, 1);
    assert_eq!(v, 1.0);
    z.validate(&net, &od).unwrap();
}

fn grid_case() -> impl Strategy<Value = (u64, Vec<f64>)> {
    (0u64..1000, proptest::collection::vec(0.0f64..10.0, 24))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dijkstra_agrees_with_bellman_ford((seed, costs) in grid_case()) {
        let mut rng = rng_for(seed, "grid");
        let net = small_grid(3, 4, 24, &mut rng);
        let od = od(&net, &["n0_0"], "n2_3");
        let (z, v) = dijkstra(&net, &costs, &od).unwrap();
        let bf = bellman_ford(&net, &costs, &od).unwrap();
        prop_assert!((v - bf).abs() <= 1e-9 * (1.0 + bf));
        prop_assert!((z.cost(&costs) - v).abs() <= 1e-9 * (1.0 + v));
        z.validate(&net, &od).unwrap();
    }

    #[test]
    fn dijkstra_is_minimal_over_enumeration((seed, costs) in grid_case()) {
        let mut rng = rng_for(seed, "grid");
        let net = small_grid(3, 3, 16, &mut rng);
        let od = od(&net, &["n0_0", "n1_0"], "n2_2");
        let (_, v) = dijkstra(&net, &costs[..16], &od).unwrap();
        let paths = enumerate_simple_paths(&net, &od).unwrap();
        prop_assert_eq!(paths.len(), count_simple_paths(&net, &od));
        let best = paths.iter().map(|p| p.cost(&costs[..16])).fold(f64::INFINITY, f64::min);
        prop_assert!((best - v).abs() <= 1e-9 * (1.0 + v));
    }
}
