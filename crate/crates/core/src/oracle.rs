//! Reference computations used as independent checks.
//!
//! Everything here is deliberately slow and shares no numerical code with
//! the production paths: Bellman-Ford for shortest paths, an explicit-stack
//! path counter, a direct parametrization of the Burg ball boundary through
//! the matrix exponential (using nalgebra's eigensolver), and a dynamic
//! program for the exact signed-rank distribution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::netgraph::{OdSpec, PathVec, RoadNetwork, MAX_ENUM_EDGES};
use crate::nets::Embeddings;
use crate::rng::{normal_vec, rng_for};

/// Shortest origin-to-destination value by Bellman-Ford relaxation.
pub fn bellman_ford(net: &RoadNetwork, costs: &[f64], od: &OdSpec) -> Option<f64> {
    let mut dist = vec![f64::INFINITY; net.num_nodes()];
    for &o in od.origins() {
        dist[o] = 0.0;
    }
    for _ in 0..net.num_nodes() {
        let mut changed = false;
        for (k, e) in net.edges().iter().enumerate() {
            let cand = dist[e.origin] + costs[k];
            if cand < dist[e.dest] {
                dist[e.dest] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let v = dist[od.dest()];
    v.is_finite().then_some(v)
}

/// Number of simple origin-to-destination paths, counted with an explicit stack.
pub fn count_simple_paths(net: &RoadNetwork, od: &OdSpec) -> usize {
    let mut count = 0;
    for &o in od.origins() {
        // (node, next out-edge cursor)
        let mut stack: Vec<(usize, usize)> = vec![(o, 0)];
        let mut on = vec![false; net.num_nodes()];
        on[o] = true;
        while let Some(&mut (v, ref mut cursor)) = stack.last_mut() {
            if v == od.dest() {
                count += 1;
                on[v] = false;
                stack.pop();
                continue;
            }
            let outs = net.out_edges(v);
            if *cursor >= outs.len() {
                on[v] = false;
                stack.pop();
                continue;
            }
            let w = net.edge(outs[*cursor]).dest;
            *cursor += 1;
            if !on[w] {
                on[w] = true;
                stack.push((w, 0));
            }
        }
    }
    count
}

/// Number of free coordinates of a symmetric `d × d` matrix.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Symmetric matrix from coordinates; off-diagonals scaled by `1/√2` so the
/// Euclidean norm of the coordinates equals the Frobenius norm.
fn sym_from_coords(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut s = DMatrix::<f64>::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        s[(i, i)] = v[k];
        k += 1;
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in (i + 1)..d {
            s[(i, j)] = v[k] * r;
            s[(j, i)] = v[k] * r;
            k += 1;
        }
    }
    s
}

/// Step `t ≥ 0` with `Σ (e^{t sᵢ} − t sᵢ − 1) = target`.
fn exp_step(s: &[f64], target: f64) -> f64 {
    let div = |t: f64| s.iter().map(|&si| (t * si).exp_m1() - t * si).sum::<f64>();
    let mut hi = 1.0;
    while div(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if div(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Point `exp(tS)` of the ball of radius `rho` in direction `v` (coordinates
/// of `S`, normalized here). `scale ∈ [0, 1]` moves along the ray; 1 is the
/// boundary.
pub fn ball_point(v: &[f64], d: usize, rho: f64, scale: f64) -> DMatrix<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || rho == 0.0 {
        return DMatrix::identity(d, d);
    }
    let s = sym_from_coords(&v.iter().map(|x| x / n).collect::<Vec<_>>(), d);
    let eig = s.symmetric_eigen();
    let t = exp_step(eig.eigenvalues.as_slice(), rho) * scale;
    let lam = eig.eigenvalues.map(|l| (t * l).exp());
    &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose()
}

/// Random member of the ball: uniform direction; on the boundary when
/// `boundary`, otherwise at a uniform fraction of the boundary step.
pub fn sample_ball<R: Rng>(d: usize, rho: f64, boundary: bool, rng: &mut R) -> DMatrix<f64> {
    let v = normal_vec(rng, sym_dim(d));
    let scale = if boundary { 1.0 } else { rng.random::<f64>() };
    ball_point(&v, d, rho, scale)
}

/// Search budget for [`max_over_ball`].
#[derive(Debug, Clone)]
pub struct BallSearch {
    pub random_starts: usize,
    pub refine: usize,
    pub seed: u64,
}

impl Default for BallSearch {
    fn default() -> Self {
        Self { random_starts: 300, refine: 6, seed: 17 }
    }
}

fn compass(f: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut fx: f64) -> (f64, Vec<f64>) {
    let mut step = 0.2;
    while step > 1e-11 {
        let mut improved = false;
        for i in 0..x.len() {
            for sgn in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sgn * step;
                let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    continue;
                }
                y.iter_mut().for_each(|v| *v /= n);
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}

/// Maximizes `f` over the boundary of the Burg ball by a grid (`d = 2`) or
/// random directions, followed by compass search from the best starts.
/// Suitable for objectives whose maximum lies on the boundary: linear
/// functionals and positively homogeneous functions with positive maximum.
pub fn max_over_ball(f: impl Fn(&DMatrix<f64>) -> f64, d: usize, rho: f64, search: &BallSearch) -> (f64, DMatrix<f64>) {
    if rho == 0.0 {
        let eye = DMatrix::identity(d, d);
        return (f(&eye), eye);
    }
    let g = |v: &[f64]| f(&ball_point(v, d, rho, 1.0));
    let m = sym_dim(d);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if d == 2 {
        let (nt, np) = (24, 48);
        for a in 0..=nt {
            let th = std::f64::consts::PI * a as f64 / nt as f64;
            for b in 0..np {
                let ph = 2.0 * std::f64::consts::PI * b as f64 / np as f64;
                starts.push(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            }
        }
    } else if d == 1 {
        starts.push(vec![1.0]);
        starts.push(vec![-1.0]);
    } else {
        let mut rng = rng_for(search.seed, "ball-oracle");
        for _ in 0..search.random_starts {
            starts.push(normal_vec(&mut rng, m));
        }
        for i in 0..m {
            for sgn in [1.0, -1.0] {
                let mut e = vec![0.0; m];
                e[i] = sgn;
                starts.push(e);
            }
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> = starts
        .into_iter()
        .map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f64> = v.iter().map(|x| x / n).collect();
            (g(&v), v)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
    for (fx, v) in scored.into_iter().take(search.refine.max(1)) {
        let (fr, vr) = if d == 1 { (fx, v) } else { compass(&g, v, fx) };
        if fr > best.0 {
            best = (fr, vr);
        }
    }
    let x = ball_point(&best.1, d, rho, 1.0);
    (best.0, x)
}

fn outer_sum(phi: &Embeddings, edges: &[usize]) -> DMatrix<f64> {
    let d = phi.d;
    let mut g = DMatrix::zeros(d, d);
    for &e in edges {
        let v = DVector::from_row_slice(phi.row(e));
        g += &v * v.transpose();
    }
    g
}

/// `Δ(z) = max_X c(X)·z₁ − c(X)·z` over the ball.
pub fn path_gap(phi: &Embeddings, z1: &PathVec, z: &PathVec, rho: f64, search: &BallSearch) -> f64 {
    let h = outer_sum(phi, &z1.edges) - outer_sum(phi, &z.edges);
    if h.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    max_over_ball(|x| h.dot(x), phi.d, rho, search).0
}

/// Paths with their `Δ(z)`, by enumeration.
pub fn all_path_gaps(
    phi: &Embeddings,
    net: &RoadNetwork,
    od: &OdSpec,
    z1: &PathVec,
    rho: f64,
    search: &BallSearch,
) -> Result<Vec<(PathVec, f64)>> {
    if net.num_edges() > MAX_ENUM_EDGES {
        return Err(Error::TooLarge(format!("{} edges", net.num_edges())));
    }
    let paths = crate::netgraph::enumerate_simple_paths(net, od)?;
    Ok(paths.into_iter().map(|z| {
        let g = path_gap(phi, z1, &z, rho, search);
        (z, g)
    }).collect())
}

/// Exact optimistic gap `δ = max_z Δ(z)` and a maximizing path.
pub fn exact_gap(phi: &Embeddings, net: &RoadNetwork, od: &OdSpec, z1: &PathVec, rho: f64, search: &BallSearch) -> Result<(f64, PathVec)> {
    let gaps = all_path_gaps(phi, net, od, z1, rho, search)?;
    let (z, g) = gaps
        .into_iter()
        .fold(None, |acc: Option<(PathVec, f64)>, (z, g)| match acc {
            Some((bz, bg)) if bg >= g => Some((bz, bg)),
            _ => Some((z, g)),
        })
        .ok_or(Error::Unreachable)?;
    Ok((g, z))
}

/// Largest worst-case shortest time `max_X min_z c(X)·z` over the ball.
pub fn max_min_cost(paths: &[DMatrix<f64>], d: usize, rho: f64, search: &BallSearch) -> f64 {
    max_over_ball(
        |x| paths.iter().map(|g| g.dot(x)).fold(f64::INFINITY, f64::min),
        d,
        rho,
        search,
    )
    .0
}

/// Smallest radius whose worst-case shortest time reaches `t`, by bisection
/// on the radius with [`max_min_cost`] as the feasibility test.
pub fn radius_by_bisection(phi: &Embeddings, net: &RoadNetwork, od: &OdSpec, t: f64, search: &BallSearch) -> Result<f64> {
    let paths: Vec<DMatrix<f64>> = crate::netgraph::enumerate_simple_paths(net, od)?
        .iter()
        .map(|z| outer_sum(phi, &z.edges))
        .collect();
    if paths.is_empty() {
        return Err(Error::Unreachable);
    }
    let d = phi.d;
    if max_min_cost(&paths, d, 0.0, search) >= t {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while max_min_cost(&paths, d, hi, search) < t {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::UnboundedRadius);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if max_min_cost(&paths, d, mid, search) >= t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-sided exact signed-rank p-value `P(W⁺ ≥ w)` by dynamic programming
/// over doubled (integer) average ranks. Returns `(W⁺, p)`.
pub fn signed_rank_exact_dp(diffs: &[f64]) -> Option<(f64, f64)> {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|&x| x != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = nz.len();
    let mut ranks2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        // average of ranks i+1..=j+1, doubled
        let avg2 = i + 1 + j + 1;
        for r in &mut ranks2[i..=j] {
            *r = avg2;
        }
        i = j + 1;
    }
    let total: usize = ranks2.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    for &r in &ranks2 {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let w2: usize = nz.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let tail: f64 = ways[w2..].iter().sum();
    Some((w2 as f64 / 2.0, tail / 2f64.powi(n as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{dijkstra, tests as g};

    #[test]
    fn bellman_ford_matches_on_diamond() {
        let net = g::diamond();
        let od = OdSpec::from_ids(&net, &["s"], "t").unwrap();
        let c = [1.0, 2.0, 0.5, 3.0];
        assert_eq!(bellman_ford(&net, &c, &od), Some(dijkstra(&net, &c, &od).unwrap().1));
        assert_eq!(count_simple_paths(&net, &od), 2);
    }

    #[test]
    fn ball_points_on_boundary() {
        let mut rng = rng_for(1, "bp");
        for d in 1..5 {
            let x = sample_ball(d, 0.4, true, &mut rng);
            let e = x.clone().symmetric_eigen();
            let div: f64 = e.eigenvalues.iter().map(|l| l - l.ln() - 1.0).sum();
            assert!((div - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn signed_rank_all_positive() {
        let (w, p) = signed_rank_exact_dp(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(w, 21.0);
        assert!((p - 1.0 / 64.0).abs() < 1e-15);
    }
}
