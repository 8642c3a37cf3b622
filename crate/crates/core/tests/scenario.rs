mod common;

use common::*;
use ideal_core::netgraph::{dijkstra, distances_to, od_vector};
use ideal_core::nets::edge_costs;
use ideal_core::rng::rng_for;
use ideal_core::scenario::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn radius_is_zero_when_nominal_already_slow() {
    let net = diamond();
    let mut rng = rng_for(3, "phi");
    let phi = random_phi(net.num_edges(), 2, &mut rng);
    let od = od(&net, &["s"], "t");
    let (_, h) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
    for t in [0.0, 0.5 * h, h] {
        let r = target_radius(&phi, &net, &od, t, &RadiusConfig::default()).unwrap();
        assert_eq!(r.rho, 0.0);
        assert_eq!(r.h_hat, h);
    }
}

#[test]
fn radius_reaches_target_with_certificate() {
    let mut rng = rng_for(8, "grid");
    for case in 0..10 {
        let net = small_grid(3, 3, 14, &mut rng);
        let phi = random_phi(net.num_edges(), 2, &mut rng);
        let od = od(&net, &["n0_0"], "n2_2");
        let (_, h) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
        let t = h * 1.3 + 0.1;
        let r = target_radius(&phi, &net, &od, t, &RadiusConfig::default()).unwrap();
        let costs = costs_under_metric(&phi, r.x.matrix()).unwrap();
        let (_, hx) = dijkstra(&net, &costs, &od).unwrap();
        assert!(hx >= t - 1e-6 * t, "case {case}: {hx} < {t}");
        assert!((burg_divergence(r.x.matrix()).unwrap() - r.rho).abs() < 1e-9);
        let b = od_vector(&net, &od, 0).unwrap();
        let (viol, value) = r.certificate.check(&net, &costs, &b);
        assert!(viol <= 1e-6, "case {case}: dual violation {viol}");
        assert!(value >= t - 1e-6 * t);
        assert!(r.certificate.omega.iter().all(|&w| w >= 0.0));
        let dist = distances_to(&net, &costs, od.dest());
        assert!((dist[0] - hx).abs() <= 1e-9 * hx);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_is_nonnegative(seed in 0u64..10_000, d in 1usize..6, rho in 0.01f64..2.0) {
        let mut rng = rng_for(seed, "x");
        let x = sample_feasible(rho, d, &mut rng).unwrap();
        let v = burg_divergence(x.matrix()).unwrap();
        prop_assert!(v >= 0.0 && v <= rho + 1e-12);
        prop_assert!(in_burg_ball(x.matrix(), rho + 1e-12));
    }

    #[test]
    fn interval_round_trip(rho in 1e-4f64..5.0) {
        let (m, big) = eig_interval(rho);
        prop_assert!((kappa(m) - rho).abs() <= 1e-10);
        prop_assert!((kappa(big) - rho).abs() <= 1e-10);
    }

    #[test]
    fn identity_has_zero_divergence(d in 1usize..8) {
        prop_assert_eq!(burg_divergence(&DMatrix::identity(d, d)).unwrap(), 0.0);
    }
}
