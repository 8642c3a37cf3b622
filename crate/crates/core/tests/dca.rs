mod common;

use common::*;
use ideal_core::dca::*;
use ideal_core::netgraph::dijkstra;
use ideal_core::nets::edge_costs;
use ideal_core::oracle::{exact_gap, BallSearch};
use ideal_core::rng::rng_for;
use ideal_core::scenario::{burg_divergence, sample_feasible};
use ideal_core::linalg::frob;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn certificates_hold_on_small_grids() {
    let mut rng = rng_for(21, "grids");
    for _ in 0..20 {
        let net = small_grid(3, 3, 12, &mut rng);
        let phi = random_phi(net.num_edges(), 2, &mut rng);
        let od = od(&net, &["n0_0", "n0_1"], "n2_2");
        let (z1, _) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
        let rho = rng.random_range(0.05..1.0);
        let r = optimistic_gap(&phi, &net, &od, &z1, rho, &DcaConfig::default()).unwrap();
        assert!(r.w_trace.iter().all(|&w| w >= -1e-9));
        assert!(r.objective_trace.windows(2).all(|p| p[1] <= p[0] + 1e-9));
        let (exact, _) = exact_gap(&phi, &net, &od, &z1, rho, &BallSearch::default()).unwrap();
        assert!(r.gap <= exact + 1e-6, "{} > {}", r.gap, exact);
        assert!(r.gap >= 0.0);
        assert!(burg_divergence(r.x_final.matrix()).unwrap() <= rho + 1e-8);
    }
}

#[test]
fn gap_is_deterministic_per_seed() {
    let net = diamond();
    let phi = random_phi(net.num_edges(), 3, &mut rng_for(4, "phi"));
    let od = od(&net, &["s"], "t");
    let (z1, _) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
    let a = optimistic_gap(&phi, &net, &od, &z1, 0.4, &DcaConfig::default()).unwrap();
    let b = optimistic_gap(&phi, &net, &od, &z1, 0.4, &DcaConfig::default()).unwrap();
    assert_eq!(a.gap.to_bits(), b.gap.to_bits());
    assert_eq!(a.secondary, b.secondary);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subproblem_beats_feasible_samples(seed in 0u64..10_000, d in 2usize..6, rho in 0.05f64..2.0) {
        let mut rng = rng_for(seed, "sub");
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let g = &a + a.transpose();
        let s = solve_subproblem(&g, rho).unwrap();
        prop_assert!((burg_divergence(&s.x).unwrap() - rho).abs() <= 1e-6);
        let best = frob(&g, &s.x);
        prop_assert!(best <= frob(&g, &DMatrix::identity(d, d)) + 1e-8);
        for _ in 0..200 {
            let x = sample_feasible(rho, d, &mut rng).unwrap();
            prop_assert!(frob(&g, x.matrix()) - best >= -1e-8);
        }
    }

    #[test]
    fn root_satisfies_equation(seed in 0u64..10_000, n in 1usize..7, rho in 1e-3f64..5.0) {
        let mut rng = rng_for(seed, "root");
        let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (g0, gmax) = gamma_bounds(&lambda, rho).unwrap();
        let g = root_search(&lambda, rho, 1e-14).unwrap();
        prop_assert!(g > g0 && g <= gmax);
        prop_assert!(root_residual(&lambda, rho, g).abs() <= 1e-8);
    }
}

#[test]
fn extra_starts_never_lower_the_gap() {
    let mut rng = rng_for(77, "starts");
    for _ in 0..10 {
        let net = small_grid(3, 3, 12, &mut rng);
        let phi = random_phi(net.num_edges(), 2, &mut rng);
        let od = od(&net, &["n0_0", "n0_1"], "n2_2");
        let (z1, _) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
        let rho = rng.random_range(0.1..1.0);
        let single = optimistic_gap(&phi, &net, &od, &z1, rho, &DcaConfig { extra_starts: 0, ..DcaConfig::default() }).unwrap();
        let multi = optimistic_gap(&phi, &net, &od, &z1, rho, &DcaConfig::default()).unwrap();
        assert_eq!(single.start, 0);
        assert!(multi.gap >= single.gap);
        let (exact, _) = exact_gap(&phi, &net, &od, &z1, rho, &BallSearch::default()).unwrap();
        assert!(multi.gap <= exact + 1e-6);
    }
}
