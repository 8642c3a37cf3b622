use ideal_core::evalkit::*;
use ideal_core::evalkit::Strategy;
use ideal_core::nets::{ModelConfig, RadiusModel, RepresentationModel};
use ideal_core::oracle::signed_rank_exact_dp;
use ideal_core::rng::rng_for;
use ideal_core::simworld::{world_from_spec, WorldSpec};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn replay_properties_on_small_run() {
    let w = world_from_spec(&WorldSpec { seed: 8, ..Default::default() }).unwrap();
    let m = RepresentationModel::new(&ModelConfig::default(), 1);
    let r = RadiusModel::new(&ModelConfig::default(), 1);
    let calls = draw_incidents(&w, 30, 2);
    let recs = run_replay(&w, &m, &r, &calls, &ReplayConfig::default()).unwrap();
    assert_eq!(recs, run_replay(&w, &m, &r, &calls, &ReplayConfig::default()).unwrap());
    for rec in &recs {
        let dual = rec.regret(&Strategy::IdealDual);
        assert!(dual <= rec.regret(&Strategy::GooglePrimary));
        for s in strategy_set(&default_thr_grid()) {
            assert!(rec.regret(&s) >= 0.0);
            let a = rec.outcome(&s).1;
            assert!(a == 1 || a == 2);
        }
    }
    let sw = sweep(&recs, &default_thr_grid()).unwrap();
    let ideal: Vec<&SweepRow> = sw.iter().filter(|r| r.strategy == "ideal").collect();
    assert_eq!(ideal.first().unwrap().a_bar, 2.0);
    assert_eq!(ideal.last().unwrap().a_bar, 1.0);
    assert!(ideal.windows(2).all(|p| p[1].a_bar <= p[0].a_bar));
    let dual = metrics(&recs, &Strategy::IdealDual).unwrap();
    let gp = metrics(&recs, &Strategy::GooglePrimary).unwrap();
    assert!(dual.cand_opt_rate >= gp.cand_opt_rate);
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &metrics_table(&recs, &default_thr_grid()).unwrap()).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("strategy,thr,a_bar,mean,p95,p99,cvar95,cvar99,cand_opt_rate\n"));
}

#[test]
fn normal_approximation_close_to_exact_at_twelve() {
    let mut rng = rng_for(5, "w");
    for _ in 0..50 {
        let diffs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.5)).collect();
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert!((r.p_normal - r.p_exact.unwrap()).abs() <= 0.02, "{} vs {:?}", r.p_normal, r.p_exact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cvar_dominates_quantile(v in proptest::collection::vec(0.0f64..100.0, 1..200), alpha in 0.5f64..0.995) {
        prop_assert!(cvar(&v, alpha).unwrap() >= quantile(&v, alpha).unwrap());
    }

    #[test]
    fn enumeration_matches_dp(v in proptest::collection::vec(-5i32..6, 1..13)) {
        let diffs: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        match wilcoxon_one_sided(&diffs) {
            Ok(r) => {
                let (w, p) = signed_rank_exact_dp(&diffs).unwrap();
                prop_assert_eq!(r.w_plus, w);
                prop_assert!((r.p - p).abs() <= 1e-12);
            }
            Err(e) => prop_assert_eq!(e, ideal_core::Error::AllZero),
        }
    }
}
