mod common;

use common::*;
use ideal_core::dca::DcaConfig;
use ideal_core::netgraph::dijkstra;
use ideal_core::nets::edge_costs;
use ideal_core::oracle::BallSearch;
use ideal_core::policy::*;
use ideal_core::rng::rng_for;
use rand::Rng;

#[test]
fn policy_matches_brute_force_on_diamond_family() {
    let net = diamond();
    let od = od(&net, &["s"], "t");
    let mut rng = rng_for(13, "pthr");
    for _ in 0..10 {
        let phi = random_phi(net.num_edges(), 2, &mut rng);
        let rho = rng.random_range(0.1..0.8);
        let cost = rng.random_range(0.0..0.5);
        let spec = ThresholdSpec { cost, curve: RiskCurve::Constant { lambda: 1.0 } };
        let d = decide_on_scenario(&phi, rho, &net, &[0], 3, &spec, &DcaConfig::default(), None).unwrap();
        let (z1, _) = dijkstra(&net, &edge_costs(&phi), &od).unwrap();
        let bf = brute_force_pthr(&phi, rho, &z1, d.thr_s, &net, &od, &BallSearch::default()).unwrap();
        assert!((d.surplus() - bf.surplus).abs() <= 1e-3, "{} vs {}", d.surplus(), bf.surplus);
        if bf.surplus > 1e-3 {
            assert!(d.dispatch_second);
        }
        if !bf.tau {
            assert!(!d.dispatch_second || d.surplus() <= 1e-3);
        }
    }
}

#[test]
fn decision_record_serializes() {
    let net = diamond();
    let phi = random_phi(net.num_edges(), 2, &mut rng_for(2, "phi"));
    let spec = ThresholdSpec { cost: 0.0, curve: RiskCurve::ExpDecay { lambda0: 1.0, tau_s: 600.0 } };
    let d = decide_on_scenario(&phi, 0.5, &net, &[0], 3, &spec, &DcaConfig::default(), None).unwrap();
    let rec = d.record(&net);
    let back: DecisionRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(back, rec);
    assert_eq!(rec.tau, !rec.z2_edges.is_empty());
}
