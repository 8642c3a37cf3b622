//! Optimistic time gap by a difference-of-convex algorithm.
//!
//! With `G(z) = Σ_{e∈z} φ[e]φ[e]ᵀ` every path cost is linear in the metric:
//! `c(X)·z = ⟨G(z), X⟩`. The gap objective splits as `f = f₁ − f₂` with
//! `f₁(X) = −⟨G(z₁), X⟩` and `f₂(X) = −min_z ⟨G(z), X⟩`. Each iteration
//! linearizes `f₂` at a shortest path and minimizes the linear surrogate over
//! the Burg ball in closed form, `X = γ(G + γI)⁻¹`, where `γ` is the root of
//! a monotone scalar equation.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob, jacobi_eigh, random_symmetric_unit, spectral_apply};
use crate::netgraph::{dijkstra, OdSpec, PathVec, RoadNetwork};
use crate::nets::Embeddings;
use crate::rng::rng_for;
use crate::scenario::{burg_divergence, costs_under_metric, kappa, MetricMatrix};

const ROOT_MAX_ITER: usize = 200;
const ROOT_RESIDUAL: f64 = 1e-8;

/// `G(z)` for a binary edge-incidence vector.
pub fn path_matrix(phi: &Embeddings, z: &[f64]) -> Result<DMatrix<f64>> {
    if z.len() != phi.num_edges() {
        return Err(Error::DimMismatch { expected: phi.num_edges(), got: z.len() });
    }
    let edges: Vec<usize> = z.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(e, _)| e).collect();
    Ok(path_matrix_edges(phi, &edges))
}

/// `G(z)` for a list of edge indices.
pub fn path_matrix_edges(phi: &Embeddings, edges: &[usize]) -> DMatrix<f64> {
    signed_path_matrix(phi, edges, &[])
}

/// `Σ_{plus} φφᵀ − Σ_{minus} φφᵀ`.
fn signed_path_matrix(phi: &Embeddings, plus: &[usize], minus: &[usize]) -> DMatrix<f64> {
    let d = phi.d;
    let mut g = DMatrix::<f64>::zeros(d, d);
    for (list, sign) in [(plus, 1.0), (minus, -1.0)] {
        for &e in list {
            let r = phi.row(e);
            for i in 0..d {
                let ri = sign * r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in 0..d {
                    g[(i, j)] += ri * r[j];
                }
            }
        }
    }
    g
}

/// `G(z) − G(z₁)` accumulated over the symmetric difference only, so equal
/// paths give an exactly zero matrix.
pub fn path_difference(phi: &Embeddings, z: &PathVec, z1: &PathVec) -> DMatrix<f64> {
    let a: BTreeSet<usize> = z.edges.iter().copied().collect();
    let b: BTreeSet<usize> = z1.edges.iter().copied().collect();
    let plus: Vec<usize> = a.difference(&b).copied().collect();
    let minus: Vec<usize> = b.difference(&a).copied().collect();
    signed_path_matrix(phi, &plus, &minus)
}

/// Shortest path `z*` under `c(X)` and the subgradient `ζ = −G(z*)` of `f₂`.
pub fn subgradient_f2(phi: &Embeddings, net: &RoadNetwork, od: &OdSpec, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, PathVec)> {
    let costs = costs_under_metric(phi, x)?;
    let (z, _) = dijkstra(net, &costs, od)?;
    Ok((-path_matrix_edges(phi, &z.edges), z))
}

/// `f₂(X) = −min_z c(X)·z`.
pub fn f2(phi: &Embeddings, net: &RoadNetwork, od: &OdSpec, x: &DMatrix<f64>) -> Result<f64> {
    let costs = costs_under_metric(phi, x)?;
    Ok(-dijkstra(net, &costs, od)?.1)
}

fn check_root_inputs(lambda: &[f64], rho: f64) -> Result<()> {
    if !(rho > 0.0) {
        return Err(Error::ZeroRadius);
    }
    if lambda.iter().all(|&l| l == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    Ok(())
}

/// Bracket `(γ₀, γ_max]` of the multiplier.
pub fn gamma_bounds(lambda: &[f64], rho: f64) -> Result<(f64, f64)> {
    check_root_inputs(lambda, rho)?;
    let lmin = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let sq: f64 = lambda.iter().map(|l| l * l).sum();
    let g0 = (-lmin).max(0.0);
    let gmax = (-lmin + (lmin * lmin + 4.0 * sq / rho).sqrt()) / 2.0;
    Ok((g0, gmax))
}

/// `φ(γ) = Σ κ(γ/(λᵢ+γ)) − ρ`, strictly decreasing on `(γ₀, ∞)`.
pub fn root_residual(lambda: &[f64], rho: f64, gamma: f64) -> f64 {
    lambda
        .iter()
        .map(|&l| {
            let s = l + gamma;
            if s <= 0.0 {
                return f64::INFINITY;
            }
            // γ/(λ+γ) − 1 = −λ/(λ+γ)
            let y = -l / s;
            y - y.ln_1p()
        })
        .sum::<f64>()
        - rho
}

fn root_slope(lambda: &[f64], gamma: f64) -> f64 {
    -lambda.iter().map(|&l| l * l / (gamma * (l + gamma).powi(2))).sum::<f64>()
}

/// Solves `φ(γ) = 0` by Newton steps safeguarded with bisection.
pub fn root_search(lambda: &[f64], rho: f64, eps_gamma: f64) -> Result<f64> {
    let (g0, gmax) = gamma_bounds(lambda, rho)?;
    let mut lo = g0;
    let mut hi = gmax;
    let mut g = gmax;
    let mut r = root_residual(lambda, rho, g);
    if r > 0.0 {
        // only rounding can put the root past γ_max
        return if r <= ROOT_RESIDUAL { Ok(g) } else { Err(Error::NoConvergence(0)) };
    }
    let res_floor = 4.0 * f64::EPSILON * (rho + lambda.len() as f64);
    for _ in 0..ROOT_MAX_ITER {
        if r.abs() <= res_floor {
            return Ok(g);
        }
        if r > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        let width = hi - lo;
        if width <= eps_gamma.min(4.0 * f64::EPSILON * hi) && r.abs() <= ROOT_RESIDUAL {
            return Ok(g);
        }
        let slope = root_slope(lambda, g);
        let newton = g - r / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == g || next <= lo || next > hi {
            break;
        }
        g = next;
        r = root_residual(lambda, rho, g);
    }
    if r.abs() <= ROOT_RESIDUAL && g > g0 {
        Ok(g)
    } else {
        Err(Error::NoConvergence(ROOT_MAX_ITER))
    }
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub x: DMatrix<f64>,
    pub gamma: f64,
    pub q: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

/// Unique minimizer of `⟨G, X⟩` over the Burg ball of radius `ρ`.
pub fn solve_subproblem(g: &DMatrix<f64>, rho: f64) -> Result<Subproblem> {
    if !(rho > 0.0) {
        return Err(Error::ZeroRadius);
    }
    if g.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let (q, lambda) = jacobi_eigh(g)?;
    let lam: Vec<f64> = lambda.iter().copied().collect();
    let (g0, gmax) = gamma_bounds(&lam, rho)?;
    let gamma = root_search(&lam, rho, (gmax - g0) * 1e-15)?;
    let x = spectral_apply(&q, &lambda, |l| gamma / (l + gamma));
    let x = (&x + x.transpose()) * 0.5;
    Ok(Subproblem { x, gamma, q, lambda })
}

/// Restart point `I + tU` with `U` a random unit-Frobenius symmetric
/// direction and `t` set so the divergence equals `target`.
pub fn restart_matrix<R: Rng>(d: usize, target: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(target > 0.0) {
        return Err(Error::ZeroRadius);
    }
    let u = random_symmetric_unit(rng, d);
    let (q, mu) = jacobi_eigh(&u)?;
    let div = |t: f64| mu.iter().map(|&m| kappa(1.0 + t * m)).sum::<f64>();
    let umin = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = if umin < 0.0 { -1.0 / umin } else { 1.0 };
    if umin >= 0.0 {
        while div(hi) < target {
            hi *= 2.0;
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if div(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = spectral_apply(&q, &mu, |m| 1.0 + lo * m);
    Ok((&x + x.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIter,
    ZeroRadius,
    /// The shortest path kept coinciding with the primary path after restarts.
    RestartStall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcaConfig {
    pub eps: f64,
    pub max_iter: usize,
    /// Consecutive restarts allowed while `G⁽ᵏ⁾ = 0`.
    pub max_restarts: usize,
    /// Divergence of a restart point as a fraction of `ρ`.
    pub restart_fraction: f64,
    /// Random candidates drawn per restart; the one with the lowest objective is kept.
    pub restart_draws: usize,
    /// Additional runs started from random points on the ball boundary; the
    /// run reaching the largest gap is reported.
    pub extra_starts: usize,
    pub seed: u64,
}

impl Default for DcaConfig {
    fn default() -> Self {
        Self { eps: 1e-6, max_iter: 50, max_restarts: 10, restart_fraction: 1.0, restart_draws: 32, extra_starts: 8, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GapResult {
    pub gap: f64,
    pub secondary: PathVec,
    pub x_final: MetricMatrix,
    /// `W_k` per completed iteration.
    pub w_trace: Vec<f64>,
    /// `f(X⁽ᵏ⁾)` for every iterate of the reported run, starting at its `X⁽⁰⁾`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub terminated_by: Termination,
    /// Which run is reported: 0 starts at `I`, `k ≥ 1` at the k-th extra start.
    pub start: usize,
}

/// Estimates the optimistic gap of `z1` over the scenario set `(Φ, ρ)`.
pub fn optimistic_gap(
    phi: &Embeddings,
    net: &RoadNetwork,
    od: &OdSpec,
    z1: &PathVec,
    rho: f64,
    cfg: &DcaConfig,
) -> Result<GapResult> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidConfig(format!("radius {rho} must be finite and nonnegative")));
    }
    if cfg.max_iter == 0 || !(cfg.eps > 0.0) {
        return Err(Error::InvalidConfig("DCA needs eps > 0 and at least one iteration".into()));
    }
    z1.validate(net, od)?;
    let d = phi.d;
    let mut rng = rng_for(cfg.seed, "restarts");
    let mut best = dca_run(phi, net, od, z1, rho, cfg, DMatrix::identity(d, d), &mut rng)?;
    if rho > 0.0 {
        let mut starts = rng_for(cfg.seed, "starts");
        for k in 1..=cfg.extra_starts {
            let x0 = restart_matrix(d, rho * cfg.restart_fraction, &mut starts)?;
            let r = dca_run(phi, net, od, z1, rho, cfg, x0, &mut rng)?;
            if r.gap > best.gap {
                best = GapResult { start: k, ..r };
            }
        }
    }
    Ok(best)
}

/// One run of the iteration from `x0`.
#[allow(clippy::too_many_arguments)]
fn dca_run<R: Rng>(
    phi: &Embeddings,
    net: &RoadNetwork,
    od: &OdSpec,
    z1: &PathVec,
    rho: f64,
    cfg: &DcaConfig,
    x0: DMatrix<f64>,
    rng: &mut R,
) -> Result<GapResult> {
    let d = phi.d;
    let mut x = x0;
    let mut w_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut iterations = 0;
    let mut restarts = 0;
    let mut consecutive = 0;
    let mut terminated_by = Termination::MaxIter;

    let eval = |x: &DMatrix<f64>| -> Result<(PathVec, f64)> {
        let costs = costs_under_metric(phi, x)?;
        let (z, h) = dijkstra(net, &costs, od)?;
        Ok((z, h - z1.cost(&costs)))
    };

    let (mut z, mut fx) = eval(&x)?;
    objective_trace.push(fx);
    let mut best = (fx, x.clone(), z.clone());
    for _ in 0..cfg.max_iter {
        let gk = path_difference(phi, &z, z1);
        let next = if rho == 0.0 {
            terminated_by = Termination::ZeroRadius;
            DMatrix::identity(d, d)
        } else if gk.iter().all(|&v| v == 0.0) {
            if consecutive == cfg.max_restarts {
                terminated_by = Termination::RestartStall;
                break;
            }
            consecutive += 1;
            restarts += 1;
            let mut pick: Option<(f64, DMatrix<f64>)> = None;
            for _ in 0..cfg.restart_draws.max(1) {
                let cand = restart_matrix(d, rho * cfg.restart_fraction, rng)?;
                let (_, fc) = eval(&cand)?;
                if pick.as_ref().is_none_or(|(fb, _)| fc < *fb) {
                    pick = Some((fc, cand));
                }
            }
            pick.expect("at least one draw").1
        } else {
            consecutive = 0;
            solve_subproblem(&gk, rho)?.x
        };
        let w = frob(&gk, &(&x - &next));
        w_trace.push(w);
        iterations += 1;
        x = next;
        let (zn, fn_) = eval(&x)?;
        z = zn;
        fx = fn_;
        objective_trace.push(fx);
        if fx < best.0 {
            best = (fx, x.clone(), z.clone());
        }
        if rho == 0.0 {
            break;
        }
        if gk.iter().any(|&v| v != 0.0) && w <= cfg.eps {
            terminated_by = Termination::Tolerance;
            break;
        }
    }
    let (f_best, x_best, z_best) = best;
    Ok(GapResult {
        gap: 0.0 - f_best,
        secondary: z_best,
        x_final: MetricMatrix::new(x_best)?,
        w_trace,
        objective_trace,
        iterations,
        restarts,
        terminated_by,
        start: 0,
    })
}

/// Divergence of a DCA iterate, for diagnostics.
pub fn iterate_divergence(r: &GapResult) -> Result<f64> {
    burg_divergence(r.x_final.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::tests as g;
    use crate::nets::edge_costs;
    use crate::rng::rng_for;
    use crate::scenario::sample_feasible;

    fn phi4() -> Embeddings {
        // diamond: s->x, x->t, s->y, y->t
        Embeddings::new(2, vec![1.0, 0.0, 1.0, 0.2, 0.3, 1.0, 0.4, 0.9])
    }

    #[test]
    fn path_matrix_basics() {
        let phi = Embeddings::new(2, vec![1.0, 0.0, 0.0, 2.0]);
        assert_eq!(path_matrix(&phi, &[0.0, 0.0]).unwrap(), DMatrix::zeros(2, 2));
        let g = path_matrix(&phi, &[1.0, 0.0]).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(path_matrix(&phi, &[1.0]).is_err());
    }

    #[test]
    fn trace_identity() {
        let phi = phi4();
        let mut rng = rng_for(4, "trace");
        for _ in 0..20 {
            let x = sample_feasible(0.8, 2, &mut rng).unwrap();
            let c = costs_under_metric(&phi, x.matrix()).unwrap();
            let z = [1.0, 0.0, 1.0, 1.0];
            let lhs = frob(&path_matrix(&phi, &z).unwrap(), x.matrix());
            let rhs: f64 = c.iter().zip(&z).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10);
        }
    }

    #[test]
    fn gamma_bounds_scalar_case() {
        let (g0, gmax) = gamma_bounds(&[1.0], 1.0).unwrap();
        assert_eq!(g0, 0.0);
        assert!((gmax - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!(root_residual(&[1.0], 1.0, gmax) <= 0.0);
        assert_eq!(gamma_bounds(&[0.0, 0.0], 1.0).unwrap_err(), Error::ZeroMatrix);
        assert_eq!(gamma_bounds(&[1.0], 0.0).unwrap_err(), Error::ZeroRadius);
    }

    #[test]
    fn root_search_scalar() {
        let gamma = root_search(&[3.0], 0.1, 1e-14).unwrap();
        assert!(root_residual(&[3.0], 0.1, gamma).abs() <= 1e-8);
        assert!((gamma - 4.83).abs() < 0.01, "{gamma}");
    }

    #[test]
    fn subproblem_identity_direction_shrinks() {
        let g = DMatrix::<f64>::identity(3, 3) * 2.0;
        let s = solve_subproblem(&g, 0.3).unwrap();
        let x0 = s.x[(0, 0)];
        assert!(x0 < 1.0);
        assert!((s.x.clone() - DMatrix::identity(3, 3) * x0).norm() < 1e-12);
        assert!((burg_divergence(&s.x).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn zero_radius_collapses() {
        let net = g::diamond();
        let od = OdSpec::from_ids(&net, &["s"], "t").unwrap();
        let phi = phi4();
        let nominal = edge_costs(&phi);
        let (zs, h) = dijkstra(&net, &nominal, &od).unwrap();
        let r = optimistic_gap(&phi, &net, &od, &zs, 0.0, &DcaConfig::default()).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.iterations, 1);
        let other = PathVec { origin: 0, edges: if zs.edges == vec![0, 1] { vec![2, 3] } else { vec![0, 1] } };
        let r = optimistic_gap(&phi, &net, &od, &other, 0.0, &DcaConfig::default()).unwrap();
        assert!((r.gap - (other.cost(&nominal) - h)).abs() < 1e-12);
        assert_eq!(r.terminated_by, Termination::ZeroRadius);
    }

    #[test]
    fn restart_hits_half_radius() {
        let mut rng = rng_for(8, "restart");
        for d in 1..6 {
            let x = restart_matrix(d, 0.25, &mut rng).unwrap();
            assert!((burg_divergence(&x).unwrap() - 0.25).abs() < 1e-9);
        }
    }
}
