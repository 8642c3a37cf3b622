//! Small graphs and random embeddings for the oracle checks.

use rand::Rng;

use ideal_core::netgraph::{build_network, EdgeSpec, NodeSpec, OdSpec, RoadNetwork, EDGE_FEATURES};
use ideal_core::nets::Embeddings;

fn node(id: &str) -> NodeSpec {
    NodeSpec { id: id.into(), lat: 0.0, lon: 0.0 }
}

fn edge(id: u32, from: &str, to: &str, features: Vec<f64>) -> EdgeSpec {
    EdgeSpec { id, from: from.into(), to: to.into(), length_m: 100.0, features }
}

fn plain(id: u32, from: &str, to: &str) -> EdgeSpec {
    edge(id, from, to, vec![0.0; EDGE_FEATURES])
}

/// `s → {x, y} → t` with the cross arc `x → y`: three paths.
pub fn diamond() -> RoadNetwork {
    build_network(
        vec![node("s"), node("x"), node("y"), node("t")],
        vec![plain(0, "s", "x"), plain(1, "x", "t"), plain(2, "s", "y"), plain(3, "y", "t"), plain(4, "x", "y")],
    )
    .expect("diamond is well formed")
}

/// Lattice with right and down arcs plus random extra arcs up to `max_edges`.
pub fn small_grid<R: Rng>(rows: usize, cols: usize, max_edges: usize, rng: &mut R) -> RoadNetwork {
    let name = |r: usize, c: usize| format!("n{r}_{c}");
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(node(&name(r, c)));
            if c + 1 < cols {
                edges.push(plain(edges.len() as u32, &name(r, c), &name(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push(plain(edges.len() as u32, &name(r, c), &name(r + 1, c)));
            }
        }
    }
    while edges.len() < max_edges {
        let (a, b) = ((rng.random_range(0..rows), rng.random_range(0..cols)), (rng.random_range(0..rows), rng.random_range(0..cols)));
        if a != b {
            edges.push(plain(edges.len() as u32, &name(a.0, a.1), &name(b.0, b.1)));
        }
    }
    edges.truncate(max_edges);
    build_network(nodes, edges).expect("grid is well formed")
}

/// Lattice whose arcs carry distinct random features, for model-driven costs.
pub fn featured_lattice<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> RoadNetwork {
    let name = |r: usize, c: usize| format!("n{r}_{c}");
    let mut feat = || (0..EDGE_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(node(&name(r, c)));
            if c + 1 < cols {
                edges.push(edge(edges.len() as u32, &name(r, c), &name(r, c + 1), feat()));
            }
            if r + 1 < rows {
                edges.push(edge(edges.len() as u32, &name(r, c), &name(r + 1, c), feat()));
            }
        }
    }
    build_network(nodes, edges).expect("lattice is well formed")
}

pub fn random_phi<R: Rng>(num_edges: usize, d: usize, rng: &mut R) -> Embeddings {
    Embeddings::new(d, (0..num_edges * d).map(|_| rng.random_range(-1.0..1.0) + 0.3).collect())
}

/// One of two small families, alternating by `k`: the diamond from `s` to
/// `t`, or a 3×3 grid with 12 arcs and two origins.
pub fn small_instance<R: Rng>(k: usize, d: usize, rng: &mut R) -> (RoadNetwork, OdSpec, Embeddings) {
    let (net, origins, dest): (RoadNetwork, Vec<&str>, &str) = if k % 2 == 0 {
        (diamond(), vec!["s"], "t")
    } else {
        (small_grid(3, 3, 12, rng), vec!["n0_0", "n0_1"], "n2_2")
    };
    let od = OdSpec::from_ids(&net, &origins, dest).expect("instance nodes exist");
    let phi = random_phi(net.num_edges(), d, rng);
    (net, od, phi)
}
