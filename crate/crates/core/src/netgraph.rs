//! Directed road network, depot-to-demand path feasibility, and the
//! shortest-path oracle.
//!
//! Paths are ordered by `(cost, lexicographic edge-id sequence)`. Edges are
//! stored sorted by id, so comparing edge indices is the same as comparing ids.
//! Several origins are handled as if a virtual super-source joined them with
//! zero-cost arcs; the virtual arcs never appear in a returned path.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static edge feature width (length, speed limit, two degree counts,
/// one-way flag, lanes, 14 road-class flags).
pub const EDGE_FEATURES: usize = 20;
/// Guard for exhaustive path enumeration.
pub const MAX_ENUM_EDGES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: u32,
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub features: Vec<f64>,
}

/// On-disk form of a network (`network.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u32,
    pub origin: usize,
    pub dest: usize,
    pub length: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<NodeSpec>,
    node_index: HashMap<String, usize>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

/// Builds a network; edges are re-ordered by ascending id.
pub fn build_network(nodes: Vec<NodeSpec>, edges: Vec<EdgeSpec>) -> Result<RoadNetwork> {
    let mut node_index = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if node_index.insert(n.id.clone(), i).is_some() {
            return Err(Error::DuplicateId(n.id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    let mut built = Vec::with_capacity(edges.len());
    for e in edges {
        if !seen.insert(e.id) {
            return Err(Error::DuplicateId(e.id.to_string()));
        }
        let lookup = |name: &str| {
            node_index
                .get(name)
                .copied()
                .ok_or_else(|| Error::DanglingEndpoint { edge: e.id, node: name.to_string() })
        };
        let origin = lookup(&e.from)?;
        let dest = lookup(&e.to)?;
        if !(e.length_m > 0.0) || !e.length_m.is_finite() {
            return Err(Error::NonpositiveLength(e.id));
        }
        if origin == dest {
            return Err(Error::SelfLoop(e.id));
        }
        if e.features.len() != EDGE_FEATURES {
            return Err(Error::DimMismatch { expected: EDGE_FEATURES, got: e.features.len() });
        }
        built.push(Edge { id: e.id, origin, dest, length: e.length_m, features: e.features });
    }
    built.sort_by_key(|e| e.id);

    let mut out_adj = vec![Vec::new(); nodes.len()];
    let mut in_adj = vec![Vec::new(); nodes.len()];
    for (k, e) in built.iter().enumerate() {
        out_adj[e.origin].push(k);
        in_adj[e.dest].push(k);
    }
    Ok(RoadNetwork { nodes, node_index, edges: built, out_adj, in_adj })
}

impl RoadNetwork {
    pub fn from_file(file: NetworkFile) -> Result<Self> {
        build_network(file.nodes, file.edges)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    id: e.id,
                    from: self.nodes[e.origin].id.clone(),
                    to: self.nodes[e.dest].id.clone(),
                    length_m: e.length,
                    features: e.features.clone(),
                })
                .collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn node_idx(&self, id: &str) -> Result<usize> {
        self.node_index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn node_id(&self, v: usize) -> &str {
        &self.nodes[v].id
    }

    /// Edge index of an edge id.
    pub fn edge_idx(&self, id: u32) -> Option<usize> {
        self.edges.binary_search_by_key(&id, |e| e.id).ok()
    }

    /// Node-arc incidence matrix: +1 where the edge leaves, -1 where it enters.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.num_nodes(), self.num_edges());
        for (k, e) in self.edges.iter().enumerate() {
            a[(e.origin, k)] = 1.0;
            a[(e.dest, k)] = -1.0;
        }
        a
    }

    /// Unordered pairs of distinct edges sharing an endpoint, each listed once.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for v in 0..self.num_nodes() {
            let touching: Vec<usize> = self.out_adj[v].iter().chain(&self.in_adj[v]).copied().collect();
            for (i, &a) in touching.iter().enumerate() {
                for &b in &touching[i + 1..] {
                    if a != b {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        pairs.into_iter().collect()
    }

    /// Node sequence of a path.
    pub fn path_nodes(&self, path: &PathVec) -> Vec<usize> {
        let mut nodes = vec![path.origin];
        nodes.extend(path.edges.iter().map(|&k| self.edges[k].dest));
        nodes
    }
}

/// Depot set and demand node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdSpec {
    origins: Vec<usize>,
    dest: usize,
}

impl OdSpec {
    pub fn new(net: &RoadNetwork, origins: &[usize], dest: usize) -> Result<Self> {
        if origins.is_empty() {
            return Err(Error::InvalidOd("no origin".into()));
        }
        let n = net.num_nodes();
        if dest >= n {
            return Err(Error::UnknownNode(dest.to_string()));
        }
        if let Some(&bad) = origins.iter().find(|&&o| o >= n) {
            return Err(Error::UnknownNode(bad.to_string()));
        }
        if origins.contains(&dest) {
            return Err(Error::InvalidOd(format!("destination `{}` is also an origin", net.node_id(dest))));
        }
        let mut origins = origins.to_vec();
        origins.sort_unstable();
        origins.dedup();
        Ok(Self { origins, dest })
    }

    pub fn from_ids(net: &RoadNetwork, origins: &[&str], dest: &str) -> Result<Self> {
        let o = origins.iter().map(|id| net.node_idx(id)).collect::<Result<Vec<_>>>()?;
        Self::new(net, &o, net.node_idx(dest)?)
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn dest(&self) -> usize {
        self.dest
    }
}

/// A simple origin-to-destination path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathVec {
    pub origin: usize,
    pub edges: Vec<usize>,
}

impl PathVec {
    /// Binary edge-incidence vector `z`.
    pub fn indicator(&self, num_edges: usize) -> Vec<f64> {
        let mut z = vec![0.0; num_edges];
        for &k in &self.edges {
            z[k] = 1.0;
        }
        z
    }

    /// Path cost accumulated in traversal order.
    pub fn cost(&self, costs: &[f64]) -> f64 {
        self.edges.iter().fold(0.0, |acc, &k| acc + costs[k])
    }

    pub fn edge_ids(&self, net: &RoadNetwork) -> Vec<u32> {
        self.edges.iter().map(|&k| net.edge(k).id).collect()
    }

    /// Builds a path from edge ids and checks it is a connected, simple
    /// route from one of `od`'s origins to its destination.
    pub fn from_edge_ids(net: &RoadNetwork, od: &OdSpec, ids: &[u32]) -> Result<Self> {
        let edges = ids
            .iter()
            .map(|&id| net.edge_idx(id).ok_or_else(|| Error::InvalidOd(format!("unknown edge {id}"))))
            .collect::<Result<Vec<_>>>()?;
        let first = *edges.first().ok_or_else(|| Error::InvalidOd("empty path".into()))?;
        let path = PathVec { origin: net.edge(first).origin, edges };
        path.validate(net, od)?;
        Ok(path)
    }

    pub fn validate(&self, net: &RoadNetwork, od: &OdSpec) -> Result<()> {
        if !od.origins().contains(&self.origin) {
            return Err(Error::InvalidOd("path does not start at an origin".into()));
        }
        let mut at = self.origin;
        let mut visited = BTreeSet::from([at]);
        for (i, &k) in self.edges.iter().enumerate() {
            let e = net.edge(k);
            if e.origin != at {
                return Err(Error::InvalidOd(format!("path broken at position {i}")));
            }
            at = e.dest;
            if !visited.insert(at) {
                return Err(Error::InvalidOd("path is not simple".into()));
            }
        }
        if at != od.dest() {
            return Err(Error::InvalidOd("path does not end at the destination".into()));
        }
        Ok(())
    }
}

/// Origin/destination vector `b`: +1 at the chosen origin, -1 at the destination.
pub fn od_vector(net: &RoadNetwork, od: &OdSpec, chosen_origin: usize) -> Result<Vec<f64>> {
    if !od.origins().contains(&chosen_origin) {
        return Err(Error::UnknownNode(chosen_origin.to_string()));
    }
    let mut b = vec![0.0; net.num_nodes()];
    b[chosen_origin] = 1.0;
    b[od.dest()] = -1.0;
    Ok(b)
}

#[derive(Debug, Clone)]
struct Label {
    dist: f64,
    seq: Vec<usize>,
    node: usize,
    origin: usize,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.seq.cmp(&other.seq))
            .then_with(|| self.origin.cmp(&other.origin))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self).then_with(|| other.node.cmp(&self.node))
    }
}

/// Minimum-cost path from the best origin to the destination.
///
/// Costs must be nonnegative. Equal-cost paths are resolved by the
/// lexicographically smallest edge-id sequence, so the result is unique.
pub fn dijkstra(net: &RoadNetwork, costs: &[f64], od: &OdSpec) -> Result<(PathVec, f64)> {
    if costs.len() != net.num_edges() {
        return Err(Error::DimMismatch { expected: net.num_edges(), got: costs.len() });
    }
    debug_assert!(costs.iter().all(|&c| c >= 0.0), "negative edge cost");
    let n = net.num_nodes();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &o in od.origins() {
        let l = Label { dist: 0.0, seq: Vec::new(), node: o, origin: o };
        best[o] = Some(l.clone());
        heap.push(l);
    }
    while let Some(label) = heap.pop() {
        let u = label.node;
        if done[u] {
            continue;
        }
        match &best[u] {
            Some(b) if b.key_cmp(&label) != Ordering::Equal => continue,
            _ => {}
        }
        done[u] = true;
        if u == od.dest() {
            return Ok((PathVec { origin: label.origin, edges: label.seq }, label.dist));
        }
        for &k in net.out_edges(u) {
            let w = net.edge(k).dest;
            if done[w] {
                continue;
            }
            let mut seq = label.seq.clone();
            seq.push(k);
            let cand = Label { dist: label.dist + costs[k], seq, node: w, origin: label.origin };
            let better = match &best[w] {
                None => true,
                Some(b) => cand.key_cmp(b) == Ordering::Less,
            };
            if better {
                best[w] = Some(cand.clone());
                heap.push(cand);
            }
        }
    }
    Err(Error::Unreachable)
}

/// Shortest distance from every node to `dest` (infinite when unreachable).
pub fn distances_to(net: &RoadNetwork, costs: &[f64], dest: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
        }
    }
    let mut dist = vec![f64::INFINITY; net.num_nodes()];
    dist[dest] = 0.0;
    let mut heap = BinaryHeap::from([Item(0.0, dest)]);
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &k in net.in_edges(v) {
            let u = net.edge(k).origin;
            let nd = d + costs[k];
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Item(nd, u));
            }
        }
    }
    dist
}

/// Hop distances from `source` following edge directions.
pub fn hop_distances(net: &RoadNetwork, source: usize) -> Vec<Option<usize>> {
    let mut hops = vec![None; net.num_nodes()];
    hops[source] = Some(0);
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let h = hops[v].expect("queued nodes have a distance");
        for &k in net.out_edges(v) {
            let w = net.edge(k).dest;
            if hops[w].is_none() {
                hops[w] = Some(h + 1);
                queue.push_back(w);
            }
        }
    }
    hops
}

/// All simple origin-to-destination paths, sorted by origin then edge sequence.
pub fn enumerate_simple_paths(net: &RoadNetwork, od: &OdSpec) -> Result<Vec<PathVec>> {
    if net.num_edges() > MAX_ENUM_EDGES {
        return Err(Error::TooLarge(format!("{} edges > {MAX_ENUM_EDGES}", net.num_edges())));
    }
    fn dfs(
        net: &RoadNetwork,
        at: usize,
        dest: usize,
        on_path: &mut Vec<bool>,
        seq: &mut Vec<usize>,
        origin: usize,
        out: &mut Vec<PathVec>,
    ) {
        if at == dest {
            out.push(PathVec { origin, edges: seq.clone() });
            return;
        }
        for &k in net.out_edges(at) {
            let w = net.edge(k).dest;
            if on_path[w] {
                continue;
            }
            on_path[w] = true;
            seq.push(k);
            dfs(net, w, dest, on_path, seq, origin, out);
            seq.pop();
            on_path[w] = false;
        }
    }
    let mut out = Vec::new();
    for &o in od.origins() {
        let mut on_path = vec![false; net.num_nodes()];
        on_path[o] = true;
        dfs(net, o, od.dest(), &mut on_path, &mut Vec::new(), o, &mut out);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn feat() -> Vec<f64> {
        vec![0.0; EDGE_FEATURES]
    }

    pub fn node(id: &str) -> NodeSpec {
        NodeSpec { id: id.into(), lat: 0.0, lon: 0.0 }
    }

    pub fn edge(id: u32, from: &str, to: &str) -> EdgeSpec {
        EdgeSpec { id, from: from.into(), to: to.into(), length_m: 100.0, features: feat() }
    }

    pub fn line() -> RoadNetwork {
        build_network(vec![node("a"), node("b"), node("c")], vec![edge(1, "a", "b"), edge(2, "b", "c")]).unwrap()
    }

    /// s -> {x, y} -> t, plus an optional direct edge.
    pub fn diamond() -> RoadNetwork {
        build_network(
            vec![node("s"), node("x"), node("y"), node("t")],
            vec![edge(0, "s", "x"), edge(1, "x", "t"), edge(2, "s", "y"), edge(3, "y", "t")],
        )
        .unwrap()
    }

    #[test]
    fn incidence_of_line() {
        let a = line().incidence();
        assert_eq!(a.column(0).as_slice(), &[1.0, -1.0, 0.0]);
        assert_eq!(a.column(1).as_slice(), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn rejects_bad_edges() {
        let mut e = edge(1, "a", "b");
        e.length_m = 0.0;
        assert_eq!(build_network(vec![node("a"), node("b")], vec![e]).unwrap_err(), Error::NonpositiveLength(1));
        let err = build_network(vec![node("a")], vec![edge(1, "a", "z")]).unwrap_err();
        assert!(matches!(err, Error::DanglingEndpoint { .. }));
        let err = build_network(vec![node("a"), node("a")], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
        let err = build_network(vec![node("a")], vec![edge(1, "a", "a")]).unwrap_err();
        assert_eq!(err, Error::SelfLoop(1));
    }

    #[test]
    fn od_vector_line() {
        let net = line();
        let od = OdSpec::from_ids(&net, &["a"], "c").unwrap();
        assert_eq!(od_vector(&net, &od, 0).unwrap(), vec![1.0, 0.0, -1.0]);
        assert!(OdSpec::from_ids(&net, &["a"], "a").is_err());
        assert!(od_vector(&net, &od, 1).is_err());
    }

    #[test]
    fn dijkstra_line() {
        let net = line();
        let od = OdSpec::from_ids(&net, &["a"], "c").unwrap();
        let (p, v) = dijkstra(&net, &[1.0, 2.0], &od).unwrap();
        assert_eq!(p.edges, vec![0, 1]);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn parallel_tie_picks_smaller_id() {
        let net = build_network(vec![node("a"), node("b")], vec![edge(9, "a", "b"), edge(4, "a", "b")]).unwrap();
        let od = OdSpec::from_ids(&net, &["a"], "b").unwrap();
        let (p, _) = dijkstra(&net, &[1.0, 1.0], &od).unwrap();
        assert_eq!(p.edge_ids(&net), vec![4]);
    }

    #[test]
    fn diamond_tie_is_lexicographic() {
        let net = diamond();
        let od = OdSpec::from_ids(&net, &["s"], "t").unwrap();
        let (p, v) = dijkstra(&net, &[1.0, 1.0, 0.5, 1.5], &od).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(p.edges, vec![0, 1]);
        // zero-cost edges still resolve to the smaller sequence
        let (p, _) = dijkstra(&net, &[0.0; 4], &od).unwrap();
        assert_eq!(p.edges, vec![0, 1]);
    }

    #[test]
    fn unreachable_destination() {
        let net = line();
        let od = OdSpec::from_ids(&net, &["c"], "a").unwrap();
        assert_eq!(dijkstra(&net, &[1.0, 1.0], &od).unwrap_err(), Error::Unreachable);
    }

    #[test]
    fn enumerate_small() {
        let net = line();
        let od = OdSpec::from_ids(&net, &["a"], "c").unwrap();
        assert_eq!(enumerate_simple_paths(&net, &od).unwrap().len(), 1);
        let net = diamond();
        let od = OdSpec::from_ids(&net, &["s"], "t").unwrap();
        assert_eq!(enumerate_simple_paths(&net, &od).unwrap().len(), 2);
    }

    #[test]
    fn adjacent_pairs_counted_once() {
        let net = build_network(vec![node("a"), node("b")], vec![edge(0, "a", "b"), edge(1, "b", "a")]).unwrap();
        assert_eq!(net.adjacent_pairs(), vec![(0, 1)]);
    }

    #[test]
    fn path_from_ids_validates() {
        let net = diamond();
        let od = OdSpec::from_ids(&net, &["s"], "t").unwrap();
        assert!(PathVec::from_edge_ids(&net, &od, &[0, 1]).is_ok());
        assert!(PathVec::from_edge_ids(&net, &od, &[0, 3]).is_err());
        assert!(PathVec::from_edge_ids(&net, &od, &[0]).is_err());
    }
}
