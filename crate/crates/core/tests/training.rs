use ideal_core::netgraph::dijkstra;
use ideal_core::nets::{edge_costs, ModelConfig, RadiusModel, RepresentationModel};
use ideal_core::rng::rng_for;
use ideal_core::simworld::{generate_dataset, world_from_spec, DataConfig, GridConfig, WorldSpec};
use ideal_core::training::*;
use rand::Rng;

fn setup(n: usize) -> (ideal_core::simworld::TrafficOracle, Vec<Resolved>, RepresentationModel) {
    let w = world_from_spec(&WorldSpec { seed: 4, grid: GridConfig { rows: 5, cols: 5, ..Default::default() }, ..Default::default() }).unwrap();
    let samples = generate_dataset(&w, n, 1, &DataConfig::default()).unwrap();
    let res = resolve(w.network(), &samples).unwrap();
    let mut m = RepresentationModel::new(&ModelConfig::default(), 7);
    m.fit_normalization(w.network(), samples.iter().map(|s| s.context.as_slice()));
    (w, res, m)
}

#[test]
fn exact_prediction_gives_zero_update() {
    let (w, mut res, m) = setup(1);
    let phi = m.embed_edges(w.network(), &res[0].context).unwrap();
    res[0].t = dijkstra(w.network(), &edge_costs(&phi), &res[0].od).unwrap().1;
    let cfg = TrainConfig { iterations: 1, batch_size: 1, beta: 0.0, weight_decay: 0.0, holdout_fraction: 0.0, ..Default::default() };
    let out = train(&m, w.network(), &res, &cfg).unwrap();
    assert_eq!(out.last.params(), m.params());
}

#[test]
fn identical_seeds_identical_trajectories() {
    let (w, res, m) = setup(40);
    let cfg = TrainConfig { iterations: 15, batch_size: 8, perturbation: PerturbSchedule::Constant { r0: 0.01 }, ..Default::default() };
    let a = train(&m, w.network(), &res, &cfg).unwrap();
    let b = train(&m, w.network(), &res, &cfg).unwrap();
    let bits = |m: &RepresentationModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.last), bits(&b.last));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.randomized.as_ref().map(|r| r.0), b.randomized.as_ref().map(|r| r.0));
    assert_eq!(a.delta, Some(0.02));
    let (k, ref phi_r) = a.randomized.unwrap();
    assert!(k < a.iterations_run);
    assert_eq!(phi_r.num_params(), m.num_params());
}

#[test]
fn randomized_index_follows_step_weights() {
    // Empirical frequency of R over many seeds against α_k / Σα.
    let (w, res, m) = setup(8);
    let k_max = 4;
    let cfg = TrainConfig { iterations: k_max, batch_size: 2, holdout_fraction: 0.0, perturbation: PerturbSchedule::Constant { r0: 1e-3 }, ..Default::default() };
    let mut counts = vec![0usize; k_max];
    let runs = 400;
    for seed in 0..runs {
        let out = train(&m, w.network(), &res, &TrainConfig { seed, ..cfg.clone() }).unwrap();
        counts[out.randomized.unwrap().0] += 1;
    }
    let total: f64 = (0..k_max).map(|k| cfg.step.alpha(k)).sum();
    for k in 0..k_max {
        let p = cfg.step.alpha(k) / total;
        let freq = counts[k] as f64 / runs as f64;
        assert!((freq - p).abs() < 0.07, "k {k}: {freq} vs {p}");
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let (w, _, m) = setup(1);
    assert!(matches!(train(&m, w.network(), &[], &TrainConfig::default()), Err(ideal_core::Error::EmptyDataset)));
}

#[test]
fn samples_jsonl_round_trip() {
    let w = world_from_spec(&WorldSpec { seed: 2, ..Default::default() }).unwrap();
    let s = generate_dataset(&w, 5, 3, &DataConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_samples(&mut buf, &s).unwrap();
    assert_eq!(read_samples(buf.as_slice()).unwrap(), s);
}

fn theta_pairs(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = rng_for(seed, "theta");
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = f(&x);
            (x, y)
        })
        .collect()
}

#[test]
fn radius_fit_constant_half() {
    let pairs = theta_pairs(60, 1, |_| 0.5);
    let fit = fit_radius(&RadiusModel::new(&ModelConfig::default(), 1), &pairs, &RadiusFitConfig::default()).unwrap();
    for (x, _) in &pairs {
        assert!((fit.model.predict(x).unwrap() - 0.5).abs() < 0.05, "{} mae {:?}", fit.model.predict(x).unwrap(), &fit.mae[fit.mae.len() - 3..]);
    }
}

#[test]
fn radius_fit_sigmoid_targets_generalize() {
    let w = [0.8, -0.5, 0.3, 0.0, 1.1, -0.7, 0.2, 0.4];
    let target = |x: &[f64]| 0.2 + 0.3 / (1.0 + (-x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).exp());
    let train_pairs = theta_pairs(300, 2, target);
    let test_pairs = theta_pairs(100, 3, target);
    let fit = fit_radius(&RadiusModel::new(&ModelConfig::default(), 5), &train_pairs, &RadiusFitConfig::default()).unwrap();
    let mae = test_pairs.iter().map(|(x, y)| (fit.model.predict(x).unwrap() - y).abs()).sum::<f64>() / test_pairs.len() as f64;
    assert!(mae <= 0.1, "test MAE {mae}");
    // epoch MAE trends down: the best of the last quarter beats the first epoch
    let q = fit.mae.len() / 4;
    let tail = fit.mae[3 * q..].iter().copied().fold(f64::INFINITY, f64::min);
    assert!(tail <= fit.mae[0]);
}
