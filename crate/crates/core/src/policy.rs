//! The selective dual-dispatch rule and its time threshold.
//!
//! A second unit is sent along `z₂` exactly when the optimistic gap of the
//! primary route exceeds `thr = C / λ(t_nominal)`, the operational cost of
//! committing another unit divided by the marginal risk of one second of
//! delay at the nominal arrival time.

use serde::{Deserialize, Serialize};

use crate::dca::{optimistic_gap, DcaConfig, GapResult};
use crate::error::{Error, Result};
use crate::netgraph::{dijkstra, OdSpec, PathVec, RoadNetwork};
use crate::nets::{edge_costs, Embeddings, RadiusModel, RepresentationModel};
use crate::oracle::{path_gap, BallSearch};

/// Marginal risk per second of delay, `λ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskCurve {
    Constant { lambda: f64 },
    /// `λ(t) = λ₀ e^{−t/τ}`.
    ExpDecay { lambda0: f64, tau_s: f64 },
}

impl RiskCurve {
    pub fn slope(&self, t: f64) -> f64 {
        match *self {
            RiskCurve::Constant { lambda } => lambda,
            RiskCurve::ExpDecay { lambda0, tau_s } => lambda0 * (-t / tau_s).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    /// Operational cost of a second dispatch, in risk units.
    pub cost: f64,
    pub curve: RiskCurve,
}

/// `thr = C / λ(t_nominal)`.
pub fn threshold(spec: &ThresholdSpec, t_nominal: f64) -> Result<f64> {
    if !(spec.cost >= 0.0) {
        return Err(Error::InvalidConfig(format!("operational cost {} must be nonnegative", spec.cost)));
    }
    let slope = spec.curve.slope(t_nominal);
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::NonpositiveSlope(t_nominal));
    }
    Ok(spec.cost / slope)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDecision {
    pub dispatch_second: bool,
    pub primary: PathVec,
    pub secondary: Option<PathVec>,
    /// Best alternative found, whether or not it is dispatched.
    pub candidate: PathVec,
    pub gap_s: f64,
    pub thr_s: f64,
    pub rho: f64,
    pub t_nominal_s: f64,
}

impl DispatchDecision {
    pub fn surplus(&self) -> f64 {
        if self.dispatch_second {
            self.gap_s - self.thr_s
        } else {
            0.0
        }
    }

    pub fn record(&self, net: &RoadNetwork) -> DecisionRecord {
        DecisionRecord {
            tau: self.dispatch_second,
            z1_edges: self.primary.edge_ids(net),
            z2_edges: self.secondary.as_ref().map(|z| z.edge_ids(net)).unwrap_or_default(),
            gap_s: self.gap_s,
            thr_s: self.thr_s,
            rho: self.rho,
            t_nominal_s: self.t_nominal_s,
        }
    }
}

/// On-disk decision (`decision.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tau: bool,
    pub z1_edges: Vec<u32>,
    pub z2_edges: Vec<u32>,
    pub gap_s: f64,
    pub thr_s: f64,
    pub rho: f64,
    pub t_nominal_s: f64,
}

/// The rule itself: dual iff `gap > thr` (ties stay single).
pub fn rule(gap: f64, thr: f64) -> bool {
    gap > thr
}

/// Decision for given embeddings and radius.
///
/// `depots` are node indices. The primary route is the nominal shortest
/// path from the better depot unless `primary` overrides it. With more than
/// two depots each (primary depot, other depot) pair is searched separately
/// and the alternative with the largest surplus over the threshold wins.
pub fn decide_on_scenario(
    phi: &Embeddings,
    rho: f64,
    net: &RoadNetwork,
    depots: &[usize],
    dest: usize,
    spec: &ThresholdSpec,
    dca: &DcaConfig,
    primary: Option<PathVec>,
) -> Result<DispatchDecision> {
    let od = OdSpec::new(net, depots, dest)?;
    let nominal = edge_costs(phi);
    let z1 = match primary {
        Some(z) => {
            z.validate(net, &od)?;
            z
        }
        None => dijkstra(net, &nominal, &od)?.0,
    };
    let t_nominal = z1.cost(&nominal);
    let thr = threshold(spec, t_nominal)?;
    let pairs: Vec<OdSpec> = if od.origins().len() <= 2 {
        vec![od.clone()]
    } else {
        od.origins()
            .iter()
            .filter(|&&o| o != z1.origin)
            .map(|&o| OdSpec::new(net, &[z1.origin, o], dest))
            .collect::<Result<_>>()?
    };
    let mut best: Option<GapResult> = None;
    for pair in &pairs {
        let r = optimistic_gap(phi, net, pair, &z1, rho, dca)?;
        if best.as_ref().is_none_or(|b| r.gap > b.gap) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one depot pair");
    let tau = rule(best.gap, thr);
    Ok(DispatchDecision {
        dispatch_second: tau,
        secondary: tau.then(|| best.secondary.clone()),
        candidate: best.secondary,
        primary: z1,
        gap_s: best.gap,
        thr_s: thr,
        rho,
        t_nominal_s: t_nominal,
    })
}

/// Full decision from trained models and a call-time context.
#[allow(clippy::too_many_arguments)]
pub fn decide(
    model: &RepresentationModel,
    radius: &RadiusModel,
    net: &RoadNetwork,
    context: &[f64],
    depots: &[usize],
    dest: usize,
    spec: &ThresholdSpec,
    dca: &DcaConfig,
    primary: Option<PathVec>,
) -> Result<DispatchDecision> {
    let phi = model.embed_edges(net, context)?;
    let rho = radius.predict(&model.context_embedding(context)?)?;
    decide_on_scenario(&phi, rho, net, depots, dest, spec, dca, primary)
}

/// Exact solution of `max_{τ, z} τ (Δ(z) − thr)` by path enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct PthrSolution {
    pub tau: bool,
    pub path: Option<PathVec>,
    pub surplus: f64,
}

pub const PTHR_MAX_EDGES: usize = 16;
pub const PTHR_MAX_DIM: usize = 3;

/// Brute-force maximizer over enumerated paths, with `Δ(z)` from the
/// ball-boundary search in [`crate::oracle`].
pub fn brute_force_pthr(
    phi: &Embeddings,
    rho: f64,
    z1: &PathVec,
    thr: f64,
    net: &RoadNetwork,
    od: &OdSpec,
    search: &BallSearch,
) -> Result<PthrSolution> {
    if net.num_edges() > PTHR_MAX_EDGES || phi.d > PTHR_MAX_DIM {
        return Err(Error::TooLarge(format!("|E| = {}, d = {}", net.num_edges(), phi.d)));
    }
    let mut best = PthrSolution { tau: false, path: None, surplus: 0.0 };
    for z in crate::netgraph::enumerate_simple_paths(net, od)? {
        let s = path_gap(phi, z1, &z, rho, search) - thr;
        if s > best.surplus {
            best = PthrSolution { tau: true, path: Some(z), surplus: s };
        }
    }
    Ok(best)
}
