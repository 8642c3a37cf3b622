//! Mini-batch conservative gradient descent through shortest-path selections,
//! and radius-network fitting.
//!
//! Each step solves one shortest-path problem per sample under the current
//! (optionally perturbed) parameters, freezes the selected path, and
//! backpropagates the travel-time loss through the edges of that path.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{dijkstra, OdSpec, RoadNetwork};
use crate::nets::{edge_costs, Loss, RadiusModel, RepresentationModel};
use crate::rng::{rng_for, unit_ball};

/// Step sizes `α_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `α₀ / (1 + k)`.
    Harmonic { alpha0: f64 },
    Constant { alpha0: f64 },
}

impl StepSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Harmonic { alpha0 } => alpha0 / (1.0 + k as f64),
            StepSchedule::Constant { alpha0 } => alpha0,
        }
    }
}

/// Parameter-space perturbation radii `r_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbSchedule {
    Zero,
    Constant { r0: f64 },
    /// `r₀ / √(1 + k)`.
    SqrtDecay { r0: f64 },
}

impl PerturbSchedule {
    pub fn radius(&self, k: usize) -> f64 {
        match *self {
            PerturbSchedule::Zero => 0.0,
            PerturbSchedule::Constant { r0 } => r0,
            PerturbSchedule::SqrtDecay { r0 } => r0 / (1.0 + k as f64).sqrt(),
        }
    }

    pub fn is_perturbed(&self) -> bool {
        !matches!(self, PerturbSchedule::Zero)
    }

    /// Stationarity scale `δ = 2 r₀` of the perturbed recursion.
    pub fn delta(&self) -> Option<f64> {
        match *self {
            PerturbSchedule::Zero => None,
            PerturbSchedule::Constant { r0 } | PerturbSchedule::SqrtDecay { r0 } => Some(2.0 * r0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub step: StepSchedule,
    pub perturbation: PerturbSchedule,
    pub loss: Loss,
    pub beta: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Held-out fraction for early stopping; 0 disables it.
    pub holdout_fraction: f64,
    /// Holdout evaluations without improvement before stopping.
    pub patience: usize,
    /// Full training-set loss is recorded every this many iterations.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            iterations: 200,
            step: StepSchedule::Harmonic { alpha0: 1.0 },
            perturbation: PerturbSchedule::Zero,
            loss: Loss::default(),
            beta: 1e-3,
            weight_decay: 1e-4,
            seed: 0,
            holdout_fraction: 0.1,
            patience: 20,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.iterations == 0 {
            return bad("batch size and iteration budget must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout fraction must lie in [0, 1)");
        }
        for k in [0, 1, self.iterations] {
            if !(self.step.alpha(k) > 0.0) {
                return bad("step sizes must be positive");
            }
        }
        if self.perturbation.is_perturbed() && !(self.perturbation.radius(0) > 0.0) {
            return bad("perturbation radii must be positive");
        }
        if !(self.beta >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("beta and weight decay must be nonnegative");
        }
        Ok(())
    }
}

/// One trip record (`samples.jsonl` line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub context: Vec<f64>,
    pub origin: String,
    pub dest: String,
    pub t_s: f64,
}

/// A sample with node ids resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub context: Vec<f64>,
    pub od: OdSpec,
    pub t: f64,
}

pub fn resolve(net: &RoadNetwork, samples: &[Sample]) -> Result<Vec<Resolved>> {
    samples
        .iter()
        .map(|s| {
            if !(s.t_s >= 0.0) {
                return Err(Error::InvalidConfig(format!("negative travel time {}", s.t_s)));
            }
            Ok(Resolved { context: s.context.clone(), od: OdSpec::from_ids(net, &[&s.origin], &s.dest)?, t: s.t_s })
        })
        .collect()
}

pub fn write_samples(w: &mut impl Write, samples: &[Sample]) -> Result<()> {
    for s in samples {
        writeln!(w, "{}", serde_json::to_string(s)?).map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}

pub fn read_samples(r: impl BufRead) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Mean data loss `ℓ(g(φ), t)` over `samples` (no regularizer).
pub fn mean_loss(model: &RepresentationModel, net: &RoadNetwork, samples: &[Resolved], loss: &Loss) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let statics = model.static_embeddings(net);
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let phi = model.embed_with_statics(&statics, &s.context)?;
            let (_, h) = dijkstra(net, &edge_costs(&phi), &s.od)?;
            Ok(loss.value(h, s.t))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Frozen-path gradient `d_k` at `params` for a batch, averaged in batch order,
/// plus the batch's mean data loss.
pub fn batch_direction(
    model: &RepresentationModel,
    net: &RoadNetwork,
    batch: &[&Resolved],
    loss: &Loss,
    beta: f64,
    pairs: &[(usize, usize)],
) -> Result<(Vec<f64>, f64)> {
    let statics = model.static_embeddings(net);
    let per: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| {
            let phi = model.embed_with_statics(&statics, &s.context)?;
            let (z, _) = dijkstra(net, &edge_costs(&phi), &s.od)?;
            let (v, _, g) = model.path_loss_grad(net, &s.context, &z, s.t, loss)?;
            Ok((v, g))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mut d = vec![0.0; model.num_params()];
    let mut total = 0.0;
    for (v, g) in &per {
        total += v;
        for (a, b) in d.iter_mut().zip(g) {
            *a += b;
        }
    }
    d.iter_mut().for_each(|a| *a /= n);
    if beta != 0.0 {
        let (_, rg) = model.regularizer(net, pairs);
        for (a, r) in d.iter_mut().zip(&rg) {
            *a += beta * r;
        }
    }
    Ok((d, total / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub alpha: f64,
    pub radius: f64,
    pub batch_loss: f64,
    /// Full training-set loss at `φ_k`, when evaluated this iteration.
    pub train_loss: Option<f64>,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Early-stopped model (best holdout loss), or the last iterate when no holdout.
    pub model: RepresentationModel,
    pub last: RepresentationModel,
    /// `(R, φ_R)` with `P(R = k) = α_k / Σα`, drawn when perturbation is on.
    pub randomized: Option<(usize, RepresentationModel)>,
    pub delta: Option<f64>,
    pub trace: Vec<TraceRow>,
    pub iterations_run: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
}

/// Runs the training loop. The model's input standardization must already be set.
pub fn train(model: &RepresentationModel, net: &RoadNetwork, samples: &[Resolved], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, "holdout"));
    let n_hold = ((samples.len() as f64) * cfg.holdout_fraction).floor() as usize;
    let n_hold = n_hold.min(samples.len() - 1);
    let holdout: Vec<Resolved> = order[..n_hold].iter().map(|&i| samples[i].clone()).collect();
    let train_set: Vec<Resolved> = order[n_hold..].iter().map(|&i| samples[i].clone()).collect();

    let pairs = net.adjacent_pairs();
    let mut batch_rng = rng_for(cfg.seed, "batches");
    let mut perturb_rng = rng_for(cfg.seed, "perturbations");
    let mut output_rng = rng_for(cfg.seed, "output-index");

    let mut current = model.clone();
    let mut params = current.params();
    let p = params.len();
    let mut epoch: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(cfg.iterations);

    let initial_train_loss = mean_loss(&current, net, &train_set, &cfg.loss)?;
    let mut best_hold = f64::INFINITY;
    let mut best_model = current.clone();
    let mut stale = 0;
    let mut alpha_sum = 0.0;
    let mut randomized: Option<(usize, RepresentationModel)> = None;
    let mut iterations_run = 0;
    let mut perturbed = current.clone();

    for k in 0..cfg.iterations {
        let alpha = cfg.step.alpha(k);
        let r = cfg.perturbation.radius(k);
        if cfg.perturbation.is_perturbed() {
            alpha_sum += alpha;
            if randomized.is_none() || output_rng.random::<f64>() < alpha / alpha_sum {
                randomized = Some((k, current.clone()));
            }
        }
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(train_set.len()) {
            if cursor == epoch.len() {
                epoch = (0..train_set.len()).collect();
                epoch.shuffle(&mut batch_rng);
                cursor = 0;
            }
            batch.push(&train_set[epoch[cursor]]);
            cursor += 1;
        }
        let at = if r > 0.0 {
            let u = unit_ball(&mut perturb_rng, p);
            let shifted: Vec<f64> = params.iter().zip(&u).map(|(a, b)| a + r * b).collect();
            perturbed.set_params(&shifted);
            &perturbed
        } else {
            &current
        };
        let (mut d, batch_loss) = batch_direction(at, net, &batch, &cfg.loss, cfg.beta, &pairs)?;
        if !batch_loss.is_finite() {
            return Err(Error::NonfiniteLoss(k));
        }
        if cfg.weight_decay != 0.0 {
            for (a, w) in d.iter_mut().zip(&params) {
                *a += cfg.weight_decay * w;
            }
        }
        let train_loss = if k % cfg.eval_every.max(1) == 0 { Some(mean_loss(&current, net, &train_set, &cfg.loss)?) } else { None };
        for (w, g) in params.iter_mut().zip(&d) {
            *w -= alpha * g;
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonfiniteLoss(k));
        }
        current.set_params(&params);
        iterations_run = k + 1;

        let holdout_loss = if holdout.is_empty() { None } else { Some(mean_loss(&current, net, &holdout, &cfg.loss)?) };
        trace.push(TraceRow { iter: k, alpha, radius: r, batch_loss, train_loss, holdout_loss });
        if let Some(h) = holdout_loss {
            if h < best_hold {
                best_hold = h;
                best_model = current.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    let chosen = if holdout.is_empty() { current.clone() } else { best_model };
    let final_train_loss = mean_loss(&chosen, net, &train_set, &cfg.loss)?;
    Ok(TrainOutcome {
        model: chosen,
        last: current,
        randomized,
        delta: cfg.perturbation.delta(),
        trace,
        iterations_run,
        initial_train_loss,
        final_train_loss,
    })
}

pub fn write_trace_csv(w: &mut impl Write, trace: &[TraceRow]) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(w, "iter,alpha,radius,batch_loss,train_loss,holdout_loss").map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in trace {
        writeln!(w, "{},{},{},{},{},{}", r.iter, r.alpha, r.radius, r.batch_loss, opt(r.train_loss), opt(r.holdout_loss)).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusFitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RadiusFitConfig {
    fn default() -> Self {
        Self { epochs: 1000, lr: 0.05, batch_size: 16, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct RadiusFit {
    pub model: RadiusModel,
    /// Mean absolute error per epoch, measured after the epoch.
    pub mae: Vec<f64>,
}

fn mae(model: &RadiusModel, pairs: &[(Vec<f64>, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in pairs {
        total += (model.predict(x)? - y).abs();
    }
    Ok(total / pairs.len() as f64)
}

/// Fits the radius net to `(θ(T), ρ)` pairs under mean absolute error with
/// mini-batch subgradient steps `lr / (1 + 10·e/epochs)`; returns the
/// lowest-MAE epoch.
pub fn fit_radius(init: &RadiusModel, pairs: &[(Vec<f64>, f64)], cfg: &RadiusFitConfig) -> Result<RadiusFit> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some((_, y)) = pairs.iter().find(|(_, y)| !(*y >= 0.0)) {
        return Err(Error::InvalidConfig(format!("radius target {y} must be nonnegative")));
    }
    init.validate()?;
    let mut model = init.clone();
    let mut params = Vec::new();
    model.net.write_params(&mut params);
    let mut rng = rng_for(cfg.seed, "radius-batches");
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut best = (mae(&model, pairs)?, model.clone());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        let lr = cfg.lr / (1.0 + 10.0 * e as f64 / cfg.epochs.max(1) as f64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut grad = vec![0.0; params.len()];
            for &i in chunk {
                let (x, y) = &pairs[i];
                let tr = model.net.forward_trace(x);
                let r = tr.output[0] - y;
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                model.net.backward(&tr, &[s], &mut grad);
            }
            let n = chunk.len() as f64;
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= lr * g / n;
            }
            model.net.read_params(&params);
        }
        let m = mae(&model, pairs)?;
        if !m.is_finite() {
            return Err(Error::NonfiniteLoss(e));
        }
        trace.push(m);
        if m < best.0 {
            best = (m, model.clone());
        }
    }
    Ok(RadiusFit { model: best.1, mae: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ModelConfig;

    #[test]
    fn harmonic_schedule_regime() {
        let s = StepSchedule::Harmonic { alpha0: 0.05 };
        let mut prev = f64::INFINITY;
        let mut sum = 0.0;
        for k in 0..1_000_000usize {
            let a = s.alpha(k);
            sum += a;
            let v = a * ((k + 2) as f64).ln();
            if k > 2 {
                assert!(v <= prev + 1e-18);
            }
            prev = v;
        }
        // partial sums grow like log K
        assert!(sum > 0.05 * 13.0);
        assert!(prev < 1e-5);
    }

    #[test]
    fn delta_is_twice_r0() {
        assert_eq!(PerturbSchedule::Constant { r0: 0.01 }.delta(), Some(0.02));
        assert_eq!(PerturbSchedule::Zero.delta(), None);
    }

    #[test]
    fn radius_fit_memorizes_one_pair() {
        let init = RadiusModel::new(&ModelConfig::default(), 3);
        let pairs = vec![(vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.4, 0.2, 0.1], 0.37)];
        let fit = fit_radius(&init, &pairs, &RadiusFitConfig { epochs: 400, lr: 0.05, batch_size: 1, seed: 1 }).unwrap();
        assert!((fit.model.predict(&pairs[0].0).unwrap() - 0.37).abs() < 0.01);
    }

    #[test]
    fn radius_fit_zero_targets() {
        let init = RadiusModel::new(&ModelConfig::default(), 4);
        let mut rng = rng_for(2, "x");
        let pairs: Vec<(Vec<f64>, f64)> = (0..40).map(|_| ((0..8).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.0)).collect();
        let fit = fit_radius(&init, &pairs, &RadiusFitConfig { epochs: 600, lr: 0.1, batch_size: 8, seed: 1 }).unwrap();
        for (x, _) in &pairs {
            assert!(fit.model.predict(x).unwrap() < 0.05);
        }
        assert_eq!(fit_radius(&init, &[], &RadiusFitConfig::default()).unwrap_err(), Error::EmptyDataset);
    }
}
