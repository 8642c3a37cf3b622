//! Shared fixtures for the benchmarks.

use ideal_core::netgraph::{dijkstra, OdSpec, PathVec};
use ideal_core::nets::{edge_costs, Embeddings, ModelConfig, RepresentationModel};
use ideal_core::simworld::{world_from_spec, TrafficOracle, WorldSpec};

/// A default-sized world with an untrained model evaluated at one call.
pub struct Fixture {
    pub world: TrafficOracle,
    pub model: RepresentationModel,
    pub context: Vec<f64>,
    pub phi: Embeddings,
    pub od: OdSpec,
    pub z1: PathVec,
}

pub fn fixture(seed: u64) -> Fixture {
    let world = world_from_spec(&WorldSpec { seed, ..Default::default() }).expect("default world");
    let net = world.network();
    let contexts: Vec<Vec<f64>> = (0..32).map(|i| world.context_at(i as f64 * 50_000.0)).collect();
    let mut model = RepresentationModel::new(&ModelConfig::default(), seed);
    model.fit_normalization(net, contexts.iter().map(|c| c.as_slice()));
    let context = contexts[5].clone();
    let phi = model.embed_edges(net, &context).expect("context has the right width");
    let od = OdSpec::new(net, world.depots(), net.num_nodes() / 2 + 1).expect("valid pair");
    let z1 = dijkstra(net, &edge_costs(&phi), &od).expect("grid is connected").0;
    Fixture { world, model, context, phi, od, z1 }
}
