mod common;

use ideal_core::netgraph::{dijkstra, OdSpec};
use ideal_core::nets::*;
use ideal_core::rng::rng_for;
use ideal_core::simworld::{world_from_spec, GridConfig, WorldSpec};
use proptest::prelude::*;
use rand::Rng;

fn small_world() -> ideal_core::simworld::TrafficOracle {
    world_from_spec(&WorldSpec { seed: 3, grid: GridConfig { rows: 4, cols: 4, ..Default::default() }, ..Default::default() }).unwrap()
}

#[test]
fn model_json_round_trip_is_bit_exact() {
    let w = small_world();
    let mut m = RepresentationModel::new(&ModelConfig::default(), 9);
    let ctx = w.context_at(1000.0);
    m.fit_normalization(w.network(), std::iter::once(ctx.as_slice()));
    let text = serde_json::to_string(&m).unwrap();
    let back: RepresentationModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(), m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    let r = RadiusModel::new(&ModelConfig::default(), 4);
    assert_eq!(serde_json::from_str::<RadiusModel>(&serde_json::to_string(&r).unwrap()).unwrap(), r);
}

#[test]
fn path_gradient_matches_finite_differences() {
    let w = small_world();
    let net = w.network();
    let contexts: Vec<Vec<f64>> = (0..20).map(|i| w.context_at(i as f64 * 40_000.0)).collect();
    let mut m = RepresentationModel::new(&ModelConfig::default(), 2);
    m.fit_normalization(net, contexts.iter().map(|c| c.as_slice()));
    let ctx = &contexts[7];
    let od = OdSpec::new(net, &[0], net.num_nodes() - 1).unwrap();
    let phi = m.embed_edges(net, ctx).unwrap();
    let (z, _) = dijkstra(net, &edge_costs(&phi), &od).unwrap();
    let loss = Loss::default();
    let (_, _, g) = m.path_loss_grad(net, ctx, &z, 80.0, &loss).unwrap();
    let p0 = m.params();
    let mut rng = rng_for(1, "probe");
    for _ in 0..20 {
        let k = rng.random_range(0..p0.len());
        let h = 1e-4 * (1.0 + p0[k].abs());
        let eval = |v: f64| {
            let mut mm = m.clone();
            let mut p = p0.clone();
            p[k] = v;
            mm.set_params(&p);
            mm.path_loss_grad(net, ctx, &z, 80.0, &loss).unwrap().0
        };
        let fd = (-eval(p0[k] + 2.0 * h) + 8.0 * eval(p0[k] + h) - 8.0 * eval(p0[k] - h) + eval(p0[k] - 2.0 * h)) / (12.0 * h);
        let scale = g[k].abs().max(fd.abs()).max(1e-8);
        assert!((fd - g[k]).abs() <= 1e-4 * scale, "param {k}: fd {fd} vs {}", g[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn edge_costs_nonnegative(data in proptest::collection::vec(-5.0f64..5.0, 8 * 12)) {
        let phi = Embeddings::new(8, data);
        prop_assert!(edge_costs(&phi).iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn radius_net_is_nonnegative(seed in 0u64..500, theta in proptest::collection::vec(-50.0f64..50.0, 8)) {
        let r = RadiusModel::new(&ModelConfig::default(), seed);
        prop_assert!(r.predict(&theta).unwrap() >= 0.0);
    }

    #[test]
    fn regularizer_ignores_pair_order(seed in 0u64..200) {
        let w = small_world();
        let m = RepresentationModel::new(&ModelConfig::default(), seed);
        let pairs = w.network().adjacent_pairs();
        let mut shuffled: Vec<(usize, usize)> = pairs.iter().rev().map(|&(a, b)| (b, a)).collect();
        shuffled.rotate_left(3);
        let (a, _) = m.regularizer(w.network(), &pairs);
        let (b, _) = m.regularizer(w.network(), &shuffled);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}
