//! The pipeline steps behind the subcommands, free of file handling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ideal_core::dca::DcaConfig;
use ideal_core::evalkit::{draw_incidents, run_replay, ReplayConfig, ReplayRecord};
use ideal_core::netgraph::RoadNetwork;
use ideal_core::nets::{ModelConfig, RadiusModel, RepresentationModel};
use ideal_core::scenario::{target_radius, RadiusConfig};
use ideal_core::simworld::TrafficOracle;
use ideal_core::training::{fit_radius, resolve, train, RadiusFit, RadiusFitConfig, Sample, TrainConfig, TrainOutcome};
use ideal_core::{Error, Result};

/// Contents of `train --config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Fresh model from `seed` with input standardization fitted to the samples.
pub fn init_model(net: &RoadNetwork, samples: &[Sample], cfg: &ModelConfig, seed: u64) -> RepresentationModel {
    let mut model = RepresentationModel::new(cfg, seed);
    model.fit_normalization(net, samples.iter().map(|s| s.context.as_slice()));
    model
}

/// Initializes a model with [`init_model`] and trains it. `cfg.seed` is
/// replaced by `seed`.
pub fn train_model(net: &RoadNetwork, samples: &[Sample], file: &TrainFile, seed: u64) -> Result<TrainOutcome> {
    let model = init_model(net, samples, &file.model, seed);
    let resolved = resolve(net, samples)?;
    let cfg = TrainConfig { seed, ..file.train.clone() };
    train(&model, net, &resolved, &cfg)
}

/// One line of `targets.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub i: usize,
    pub rho: f64,
    pub h_hat: f64,
    pub t: f64,
}

/// Target radii for every sample under the model's nominal embeddings.
/// Samples whose program fails (for example an unbounded radius) are
/// returned separately with the error.
pub fn radius_targets(
    net: &RoadNetwork,
    model: &RepresentationModel,
    samples: &[Sample],
    cfg: &RadiusConfig,
) -> Result<(Vec<TargetRow>, Vec<(usize, Error)>)> {
    let resolved = resolve(net, samples)?;
    let statics = model.static_embeddings(net);
    let results: Vec<_> = resolved
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<std::result::Result<TargetRow, (usize, Error)>> {
            let phi = model.embed_with_statics(&statics, &r.context)?;
            Ok(match target_radius(&phi, net, &r.od, r.t, cfg) {
                Ok(out) => Ok(TargetRow { i, rho: out.rho, h_hat: out.h_hat, t: r.t }),
                Err(e) => Err((i, e)),
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(e),
        }
    }
    Ok((rows, skipped))
}

/// Fits a fresh radius net (seeded by `seed`) to `(θ(Tᵢ), ρᵢ)`.
pub fn fit_radius_model(
    model: &RepresentationModel,
    samples: &[Sample],
    targets: &[TargetRow],
    radius_hidden: usize,
    cfg: &RadiusFitConfig,
    seed: u64,
) -> Result<RadiusFit> {
    let mut pairs = Vec::with_capacity(targets.len());
    for t in targets {
        let s = samples
            .get(t.i)
            .ok_or_else(|| Error::InvalidConfig(format!("target index {} outside {} samples", t.i, samples.len())))?;
        pairs.push((model.context_embedding(&s.context)?, t.rho));
    }
    let mcfg = ModelConfig { d: model.d, radius_hidden, ..ModelConfig::default() };
    let init = RadiusModel::new(&mcfg, seed);
    fit_radius(&init, &pairs, &RadiusFitConfig { seed, ..cfg.clone() })
}

/// Replays `n` incidents drawn from `seed`. The DCA restart stream is also
/// keyed by `seed`.
pub fn replay(
    world: &TrafficOracle,
    model: &RepresentationModel,
    radius: &RadiusModel,
    n: usize,
    seed: u64,
    prefix_q: usize,
) -> Result<Vec<ReplayRecord>> {
    let calls = draw_incidents(world, n, seed);
    let cfg = ReplayConfig { prefix_q, dca: DcaConfig { seed, ..DcaConfig::default() } };
    run_replay(world, model, radius, &calls, &cfg)
}

