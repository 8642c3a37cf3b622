#![allow(dead_code)]

use ideal_core::netgraph::{build_network, EdgeSpec, NodeSpec, OdSpec, RoadNetwork, EDGE_FEATURES};
use ideal_core::nets::Embeddings;
use rand::Rng;

pub fn node(id: &str) -> NodeSpec {
    NodeSpec { id: id.into(), lat: 0.0, lon: 0.0 }
}

pub fn edge(id: u32, from: &str, to: &str) -> EdgeSpec {
    EdgeSpec { id, from: from.into(), to: to.into(), length_m: 100.0, features: vec![0.0; EDGE_FEATURES] }
}

pub fn diamond() -> RoadNetwork {
    build_network(
        vec![node("s"), node("x"), node("y"), node("t")],
        vec![edge(0, "s", "x"), edge(1, "x", "t"), edge(2, "s", "y"), edge(3, "y", "t"), edge(4, "x", "y")],
    )
    .unwrap()
}

/// `rows × cols` lattice with right and down edges plus a few random extra
/// arcs, capped at `max_edges`.
pub fn small_grid<R: Rng>(rows: usize, cols: usize, max_edges: usize, rng: &mut R) -> RoadNetwork {
    let name = |r: usize, c: usize| format!("n{r}_{c}");
    let mut nodes = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(node(&name(r, c)));
        }
    }
    let mut edges = Vec::new();
    let mut id = 0;
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(edge(id, &name(r, c), &name(r, c + 1)));
                id += 1;
            }
            if r + 1 < rows {
                edges.push(edge(id, &name(r, c), &name(r + 1, c)));
                id += 1;
            }
        }
    }
    while edges.len() < max_edges {
        let (r1, c1) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let (r2, c2) = (rng.random_range(0..rows), rng.random_range(0..cols));
        if (r1, c1) == (r2, c2) {
            continue;
        }
        edges.push(edge(id, &name(r1, c1), &name(r2, c2)));
        id += 1;
    }
    edges.truncate(max_edges);
    build_network(nodes, edges).unwrap()
}

pub fn random_phi<R: Rng>(num_edges: usize, d: usize, rng: &mut R) -> Embeddings {
    let data = (0..num_edges * d).map(|_| rng.random_range(-1.0..1.0) + 0.3).collect();
    Embeddings::new(d, data)
}

pub fn od(net: &RoadNetwork, origins: &[&str], dest: &str) -> OdSpec {
    OdSpec::from_ids(net, origins, dest).unwrap()
}
