//! Burg-divergence scenario geometry.
//!
//! A scenario set is the image of the Burg ball
//! `{X ≻ 0 : Tr X − log det X − d ≤ ρ}` under `X ↦ (φ[e]ᵀ X φ[e])_e`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dca::path_matrix_edges;
use crate::error::{Error, Result};
use crate::linalg::{frob, is_positive_definite, jacobi_eigh, random_orthogonal};
use crate::netgraph::{dijkstra, distances_to, OdSpec, PathVec, RoadNetwork};
use crate::nets::{edge_costs, Embeddings};

const SYM_TOL: f64 = 1e-12;

/// `κ(λ) = λ − ln λ − 1`, evaluated as `y − ln(1 + y)` with `y = λ − 1`.
pub fn kappa(lambda: f64) -> f64 {
    let y = lambda - 1.0;
    y - y.ln_1p()
}

/// A symmetric metric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix(DMatrix<f64>);

impl MetricMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if x.ncols() != n {
            return Err(Error::DimMismatch { expected: n, got: x.ncols() });
        }
        let scale = x.norm().max(1.0);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((x[(i, j)] - x[(j, i)]).abs());
            }
        }
        if worst > SYM_TOL * scale {
            return Err(Error::NotSymmetric(worst));
        }
        Ok(Self(x))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `D_Burg(X, I) = Tr X − log det X − d`, summed per eigenvalue.
pub fn burg_divergence(x: &DMatrix<f64>) -> Result<f64> {
    let (_, lambda) = jacobi_eigh(x)?;
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(lambda.iter().map(|&l| kappa(l)).sum())
}

pub fn in_burg_ball(x: &DMatrix<f64>, rho: f64) -> bool {
    matches!(burg_divergence(x), Ok(v) if v <= rho)
}

fn bisect(mut lo: f64, mut hi: f64, mut above: impl FnMut(f64) -> bool) -> (f64, f64) {
    // invariant: !above(lo), above(hi)
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Eigenvalue bounds `[m_ρ, M_ρ]` of every matrix in the Burg ball: the two
/// roots of `κ(λ) = ρ`.
pub fn eig_interval(rho: f64) -> (f64, f64) {
    if !(rho > 0.0) {
        return (1.0, 1.0);
    }
    // κ decreases on (0, 1]; κ(e^{-ρ-1}) = ρ + e^{-ρ-1} > ρ.
    let (m_lo, m_hi) = bisect((-rho - 1.0).exp(), 1.0, |l| kappa(l) <= rho);
    let m = if (kappa(m_lo) - rho).abs() <= (kappa(m_hi) - rho).abs() { m_lo } else { m_hi };
    let mut top = 2.0;
    while kappa(top) <= rho {
        top *= 2.0;
    }
    let (big_lo, big_hi) = bisect(1.0, top, |l| kappa(l) > rho);
    let big = if (kappa(big_lo) - rho).abs() <= (kappa(big_hi) - rho).abs() { big_lo } else { big_hi };
    (m, big)
}

/// `c[e] = φ[e]ᵀ X φ[e]`, clamped at zero against rounding.
pub fn costs_under_metric(phi: &Embeddings, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = phi.d;
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimMismatch { expected: d, got: x.nrows() });
    }
    Ok((0..phi.num_edges())
        .map(|e| {
            let r = phi.row(e);
            let mut acc = 0.0;
            for i in 0..d {
                let mut row = 0.0;
                for j in 0..d {
                    row += x[(i, j)] * r[j];
                }
                acc += r[i] * row;
            }
            acc.max(0.0)
        })
        .collect())
}

/// Random point of the Burg ball: `X = Q diag(e^{t s}) Qᵀ` with a random
/// rotation `Q`, a random unit log-spectrum direction `s`, and `t` drawn
/// so that the divergence is at most `ρ`.
pub fn sample_feasible<R: Rng>(rho: f64, d: usize, rng: &mut R) -> Result<MetricMatrix> {
    if !(rho > 0.0) {
        return Err(Error::ZeroRadius);
    }
    let q = random_orthogonal(rng, d);
    let s = loop {
        let v = crate::rng::normal_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            break v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let div = |t: f64| s.iter().map(|&si| kappa((t * si).exp())).sum::<f64>();
    let mut hi = 1.0;
    while div(hi) <= rho {
        hi *= 2.0;
    }
    let (t_max, _) = bisect(0.0, hi, |t| div(t) > rho);
    let u: f64 = rng.random::<f64>();
    let t = t_max * u.max(1e-6).powf(1.0 / d as f64);
    let lam = nalgebra::DVector::from_iterator(d, s.iter().map(|&si| (t * si).exp()));
    let x = crate::linalg::spectral_apply(&q, &lam, |l| l);
    let x = (&x + x.transpose()) * 0.5;
    MetricMatrix::new(x)
}

/// Embeddings with a radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub phi: Embeddings,
    pub rho: f64,
}

impl ScenarioSet {
    pub fn new(phi: Embeddings, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidConfig(format!("radius {rho} must be finite and nonnegative")));
        }
        Ok(Self { phi, rho })
    }

    pub fn nominal_costs(&self) -> Vec<f64> {
        edge_costs(&self.phi)
    }

    /// Membership of `c_T(X)`: `X` lies in the Burg ball.
    pub fn contains(&self, x: &DMatrix<f64>) -> bool {
        if self.rho == 0.0 {
            return (x - DMatrix::identity(self.phi.d, self.phi.d)).norm() == 0.0;
        }
        in_burg_ball(x, self.rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusConfig {
    /// Relative slack on the worst-case shortest time reaching `t`.
    pub tol: f64,
    pub max_cuts: usize,
    /// Relative tolerance on the projected dual gradient.
    pub dual_tol: f64,
    pub max_dual_steps: usize,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_cuts: 200, dual_tol: 1e-10, max_dual_steps: 500 }
    }
}

/// LP-dual certificate: node potentials `π` and edge multipliers `ω ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub pi: Vec<f64>,
    pub omega: Vec<f64>,
}

impl DualCertificate {
    /// `(max_e (Aᵀπ − ω − c)_e, bᵀπ − 1ᵀω)`.
    pub fn check(&self, net: &RoadNetwork, costs: &[f64], b: &[f64]) -> (f64, f64) {
        let mut worst = f64::NEG_INFINITY;
        for (k, e) in net.edges().iter().enumerate() {
            worst = worst.max(self.pi[e.origin] - self.pi[e.dest] - self.omega[k] - costs[k]);
        }
        let value = b.iter().zip(&self.pi).map(|(x, y)| x * y).sum::<f64>() - self.omega.iter().sum::<f64>();
        (worst, value)
    }
}

#[derive(Debug, Clone)]
pub struct RadiusResult {
    pub rho: f64,
    /// Nominal shortest time `ĥ`.
    pub h_hat: f64,
    pub x: MetricMatrix,
    pub cuts: Vec<PathVec>,
    pub certificate: DualCertificate,
}

fn chol_logdet_inv(m: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    if !is_positive_definite(m) {
        return None;
    }
    let ch = m.clone().cholesky()?;
    let logdet = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some((logdet, ch.inverse()))
}

/// `max_{μ ≥ 0} log det(I − Σ μ_j G_j) + t Σ μ_j` by projected Newton steps
/// with a projected-gradient fallback; every trial point keeps the matrix
/// positive definite. Returns `(μ, X(μ))`.
fn solve_cut_dual(gs: &[DMatrix<f64>], t: f64, mut mu: Vec<f64>, cfg: &RadiusConfig) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = gs[0].nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let m_of = |mu: &[f64]| {
        let mut m = eye.clone();
        for (g, &u) in gs.iter().zip(mu) {
            if u != 0.0 {
                m -= g * u;
            }
        }
        m
    };
    let q_of = |mu: &[f64]| -> Option<(f64, DMatrix<f64>)> {
        let (ld, x) = chol_logdet_inv(&m_of(mu))?;
        Some((ld + t * mu.iter().sum::<f64>(), x))
    };
    let (mut q, mut x) = q_of(&mu).ok_or(Error::NotPositiveDefinite)?;
    let gtol = cfg.dual_tol * t.abs().max(1.0);
    for _ in 0..cfg.max_dual_steps {
        let grad: Vec<f64> = gs.iter().map(|g| t - frob(g, &x)).collect();
        let free: Vec<usize> = (0..gs.len()).filter(|&j| mu[j] > 0.0 || grad[j] > 0.0).collect();
        let pg = free.iter().map(|&j| grad[j].abs()).fold(0.0, f64::max);
        if pg <= gtol {
            break;
        }
        let bs: Vec<DMatrix<f64>> = free.iter().map(|&j| &x * &gs[j]).collect();
        let nf = free.len();
        let mut h = DMatrix::<f64>::zeros(nf, nf);
        for a in 0..nf {
            for b in a..nf {
                let v = (&bs[a] * &bs[b]).trace();
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let reg = 1e-12 * (0..nf).map(|a| h[(a, a)]).fold(1e-300, f64::max);
        for a in 0..nf {
            h[(a, a)] += reg;
        }
        let gf = nalgebra::DVector::from_iterator(nf, free.iter().map(|&j| grad[j]));
        let newton = h.clone().cholesky().map(|c| c.solve(&gf));
        let mut accepted = false;
        let directions: Vec<nalgebra::DVector<f64>> = match newton {
            Some(dir) => vec![dir, gf.clone()],
            None => vec![gf.clone()],
        };
        for dir in directions {
            let mut step = 1.0;
            for _ in 0..80 {
                let mut trial = mu.clone();
                for (a, &j) in free.iter().enumerate() {
                    trial[j] = (mu[j] + step * dir[a]).max(0.0);
                }
                if let Some((qt, xt)) = q_of(&trial) {
                    let ascent: f64 = (0..gs.len()).map(|j| grad[j] * (trial[j] - mu[j])).sum();
                    if qt >= q + 1e-4 * ascent && ascent > 0.0 {
                        mu = trial;
                        q = qt;
                        x = xt;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            // no representable ascent left
            break;
        }
    }
    Ok((mu, x))
}

/// Smallest Burg radius whose worst-case shortest travel time reaches `t`.
///
/// Uses cutting planes over paths: each round solves the Burg projection
/// onto the current path constraints in dual form, then asks Dijkstra for
/// the shortest path under the resulting metric.
pub fn target_radius(phi: &Embeddings, net: &RoadNetwork, od: &OdSpec, t: f64, cfg: &RadiusConfig) -> Result<RadiusResult> {
    if od.origins().len() != 1 {
        return Err(Error::InvalidOd("target radius needs a single origin".into()));
    }
    let d = phi.d;
    let nominal = edge_costs(phi);
    let (p0, h_hat) = dijkstra(net, &nominal, od)?;
    let certify = |costs: &[f64]| {
        let dist = distances_to(net, costs, od.dest());
        let top = dist.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        DualCertificate {
            pi: dist.iter().map(|&v| if v.is_finite() { v } else { top }).collect(),
            omega: vec![0.0; net.num_edges()],
        }
    };
    if h_hat >= t {
        return Ok(RadiusResult {
            rho: 0.0,
            h_hat,
            x: MetricMatrix::identity(d),
            cuts: Vec::new(),
            certificate: certify(&nominal),
        });
    }
    let slack = cfg.tol * t.abs().max(1.0);
    let mut cuts = vec![p0];
    let mut gs = vec![path_matrix_edges(phi, &cuts[0].edges)];
    if gs[0].norm() == 0.0 {
        return Err(Error::UnboundedRadius);
    }
    let mut mu = vec![0.0];
    for _ in 0..cfg.max_cuts {
        let (mu_new, x) = solve_cut_dual(&gs, t, mu, cfg)?;
        mu = mu_new;
        let costs = costs_under_metric(phi, &x)?;
        let (p, h) = dijkstra(net, &costs, od)?;
        if h >= t - slack || cuts.contains(&p) {
            // scale up so the worst-case shortest time reaches t
            let s = if h > 0.0 { (t / h).max(1.0) } else { 1.0 };
            let x = &x * s;
            let x = (&x + x.transpose()) * 0.5;
            let costs = costs_under_metric(phi, &x)?;
            let rho = burg_divergence(&x)?;
            return Ok(RadiusResult { rho, h_hat, x: MetricMatrix::new(x)?, cuts, certificate: certify(&costs) });
        }
        let g = path_matrix_edges(phi, &p.edges);
        if g.norm() == 0.0 {
            return Err(Error::UnboundedRadius);
        }
        gs.push(g);
        cuts.push(p);
        mu.push(0.0);
    }
    Err(Error::NoConvergence(cfg.max_cuts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use nalgebra::DVector;

    #[test]
    fn divergence_examples() {
        assert_eq!(burg_divergence(&DMatrix::identity(3, 3)).unwrap(), 0.0);
        let v = burg_divergence(&(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert!((v - 2.0 * (2.0 - 2f64.ln() - 1.0)).abs() < 1e-14);
        assert!((v - 0.6137).abs() < 1e-4);
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert_eq!(burg_divergence(&x).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn interval_roots() {
        assert_eq!(eig_interval(0.0), (1.0, 1.0));
        let (m, big) = eig_interval(0.5);
        assert!((kappa(m) - 0.5).abs() <= 1e-10);
        assert!((kappa(big) - 0.5).abs() <= 1e-10);
        assert!(m < 1.0 && big > 1.0);
        let (m2, big2) = eig_interval(0.9);
        assert!(m2 < m && big2 > big);
    }

    #[test]
    fn samples_are_feasible() {
        let mut rng = rng_for(2, "sample");
        let rho = 0.7;
        let (m, big) = eig_interval(rho);
        for _ in 0..200 {
            let x = sample_feasible(rho, 4, &mut rng).unwrap();
            assert!(burg_divergence(x.matrix()).unwrap() <= rho + 1e-12);
            let (_, l) = jacobi_eigh(x.matrix()).unwrap();
            assert!(l.iter().all(|&v| v >= m - 1e-9 && v <= big + 1e-9));
            assert_ne!(x, MetricMatrix::identity(4));
        }
        assert_eq!(sample_feasible(0.0, 2, &mut rng).unwrap_err(), Error::ZeroRadius);
    }

    #[test]
    fn costs_are_linear_in_metric() {
        let phi = Embeddings::new(2, vec![1.0, 2.0, 0.5, -1.0]);
        let c1 = costs_under_metric(&phi, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(c1, edge_costs(&phi));
        let c2 = costs_under_metric(&phi, &(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert_eq!(c2, c1.iter().map(|c| 2.0 * c).collect::<Vec<_>>());
        assert!(costs_under_metric(&phi, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn kappa_is_accurate_near_one() {
        let l = 1.0 + 1e-9;
        assert!((kappa(l) - 0.5e-18).abs() < 1e-24);
    }
}
