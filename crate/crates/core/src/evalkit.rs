//! Candidate-set replay evaluation.
//!
//! Every incident is simulated along a fixed candidate set: the oracle route
//! from each depot under adaptive re-querying, and the secondary path under
//! the hybrid rule. Strategies are then scored against the best realized
//! candidate time.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dca::{optimistic_gap, DcaConfig};
use crate::error::{Error, Result};
use crate::netgraph::OdSpec;
use crate::nets::{RadiusModel, RepresentationModel};
use crate::simworld::{draw_calls, Call, TrafficOracle};

/// Exact enumeration is used up to this many nonzero differences.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Region,
    GooglePrimary,
    GoogleDual,
    GoogleInterval { thr: f64 },
    Ideal { thr: f64 },
    IdealDual,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Region => "region",
            Strategy::GooglePrimary => "google_primary",
            Strategy::GoogleDual => "google_dual",
            Strategy::GoogleInterval { .. } => "google_interval",
            Strategy::Ideal { .. } => "ideal",
            Strategy::IdealDual => "ideal_dual",
        }
    }

    pub fn thr(&self) -> Option<f64> {
        match *self {
            Strategy::GoogleInterval { thr } | Strategy::Ideal { thr } => Some(thr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    /// Hybrid prefix length in segments.
    pub prefix_q: usize,
    pub dca: DcaConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { prefix_q: 5, dca: DcaConfig::default() }
    }
}

/// Threshold grid whose first point is a "0 analog" below every gap and
/// whose last point is `+∞`.
pub fn default_thr_grid() -> Vec<f64> {
    vec![-1e-6, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0, f64::INFINITY]
}

/// One incident's candidate times and dispatch inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub incident: usize,
    pub t_call: f64,
    pub dest: String,
    /// Adaptive realized time from each depot (P1, P2).
    pub depot_times: Vec<f64>,
    /// Oracle-predicted duration from each depot at dispatch.
    pub predicted: Vec<f64>,
    pub optimistic: Vec<f64>,
    pub pessimistic: Vec<f64>,
    pub region: usize,
    pub google_primary: usize,
    pub gap_s: f64,
    pub rho: f64,
    /// Hybrid realized time of the secondary path (P3).
    pub secondary_time: f64,
    pub secondary_edges: Vec<u32>,
}

impl ReplayRecord {
    /// `t_min` over the candidate set.
    pub fn t_min(&self) -> f64 {
        self.depot_times.iter().copied().fold(self.secondary_time, f64::min)
    }

    fn other(&self) -> usize {
        1 - self.google_primary
    }

    /// Realized time and dispatch count of a strategy.
    pub fn outcome(&self, s: &Strategy) -> (f64, u8) {
        let primary = self.depot_times[self.google_primary];
        let both_depots = primary.min(self.depot_times[self.other()]);
        let ideal_pair = primary.min(self.secondary_time);
        match *s {
            Strategy::Region => (self.depot_times[self.region], 1),
            Strategy::GooglePrimary => (primary, 1),
            Strategy::GoogleDual => (both_depots, 2),
            Strategy::GoogleInterval { thr } => {
                if self.pessimistic[self.google_primary] - self.optimistic[self.other()] > thr {
                    (both_depots, 2)
                } else {
                    (primary, 1)
                }
            }
            Strategy::Ideal { thr } => {
                if crate::policy::rule(self.gap_s, thr) {
                    (ideal_pair, 2)
                } else {
                    (primary, 1)
                }
            }
            Strategy::IdealDual => (ideal_pair, 2),
        }
    }

    pub fn regret(&self, s: &Strategy) -> f64 {
        self.outcome(s).0 - self.t_min()
    }
}

/// Incidents for a replay run.
pub fn draw_incidents(world: &TrafficOracle, n: usize, seed: u64) -> Vec<Call> {
    draw_calls(world, n, seed, "incidents")
}

pub fn replay_incident(
    world: &TrafficOracle,
    model: &RepresentationModel,
    radius: &RadiusModel,
    incident: usize,
    call: &Call,
    cfg: &ReplayConfig,
) -> Result<ReplayRecord> {
    let net = world.network();
    let depots = world.depots();
    if depots.len() != 2 {
        return Err(Error::InvalidConfig(format!("replay needs exactly two depots, got {}", depots.len())));
    }
    let session = world.session(call.t_call);
    let mut queries = Vec::with_capacity(2);
    let mut depot_times = Vec::with_capacity(2);
    for &o in depots {
        queries.push(session.query(o, call.dest, 0.0)?);
        depot_times.push(session.adaptive_simulate(o, call.dest)?.t_final);
    }
    let google_primary = if queries[1].duration_s < queries[0].duration_s { 1 } else { 0 };
    let z1 = queries[google_primary].route.clone();
    let phi = model.embed_edges(net, &session.context)?;
    let rho = radius.predict(&model.context_embedding(&session.context)?)?;
    let od = OdSpec::new(net, depots, call.dest)?;
    let gap = optimistic_gap(&phi, net, &od, &z1, rho, &cfg.dca)?;
    let secondary_time = session.hybrid_simulate(&gap.secondary, cfg.prefix_q, call.dest)?.t_final;
    Ok(ReplayRecord {
        incident,
        t_call: call.t_call,
        dest: net.node_id(call.dest).to_string(),
        depot_times,
        predicted: queries.iter().map(|q| q.duration_s).collect(),
        optimistic: queries.iter().map(|q| q.optimistic_s).collect(),
        pessimistic: queries.iter().map(|q| q.pessimistic_s).collect(),
        region: world.region_depot(call.dest),
        google_primary,
        gap_s: gap.gap,
        rho,
        secondary_time,
        secondary_edges: gap.secondary.edge_ids(net),
    })
}

/// Replays all incidents in parallel; output is ordered by incident id.
pub fn run_replay(
    world: &TrafficOracle,
    model: &RepresentationModel,
    radius: &RadiusModel,
    calls: &[Call],
    cfg: &ReplayConfig,
) -> Result<Vec<ReplayRecord>> {
    calls.par_iter().enumerate().map(|(i, c)| replay_incident(world, model, radius, i, c, cfg)).collect()
}

fn tail_count(n: usize, alpha: f64) -> usize {
    // guard against (1 − 0.95)·100 = 5.000000000000004
    let k = ((1.0 - alpha) * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

/// Mean of the worst `⌈(1−α)n⌉` values.
pub fn cvar(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("CVaR level {alpha} must lie in (0, 1)")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = tail_count(v.len(), alpha);
    Ok(v[..k].iter().sum::<f64>() / k as f64)
}

/// Nearest-rank empirical quantile: the `⌈αn⌉`-th smallest value.
pub fn quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let rank = ((alpha * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(v[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub thr: Option<f64>,
    pub a_bar: f64,
    pub mean: f64,
    pub p95: f64,
    pub p99: f64,
    pub cvar95: f64,
    pub cvar99: f64,
    pub cand_opt_rate: f64,
}

pub fn metrics(records: &[ReplayRecord], s: &Strategy) -> Result<MetricsRow> {
    if records.is_empty() {
        return Err(Error::Empty);
    }
    let n = records.len() as f64;
    let mut regrets = Vec::with_capacity(records.len());
    let mut dispatched = 0.0;
    let mut optimal = 0usize;
    for r in records {
        let (t, a) = r.outcome(s);
        let reg = t - r.t_min();
        regrets.push(reg);
        dispatched += a as f64;
        if reg == 0.0 {
            optimal += 1;
        }
    }
    Ok(MetricsRow {
        strategy: s.name().to_string(),
        thr: s.thr(),
        a_bar: dispatched / n,
        mean: regrets.iter().sum::<f64>() / n,
        p95: quantile(&regrets, 0.95)?,
        p99: quantile(&regrets, 0.99)?,
        cvar95: cvar(&regrets, 0.95)?,
        cvar99: cvar(&regrets, 0.99)?,
        cand_opt_rate: optimal as f64 / n,
    })
}

/// Fixed strategies plus both threshold families over `grid`.
pub fn strategy_set(grid: &[f64]) -> Vec<Strategy> {
    let mut out = vec![Strategy::Region, Strategy::GooglePrimary, Strategy::GoogleDual, Strategy::IdealDual];
    out.extend(grid.iter().map(|&thr| Strategy::GoogleInterval { thr }));
    out.extend(grid.iter().map(|&thr| Strategy::Ideal { thr }));
    out
}

pub fn metrics_table(records: &[ReplayRecord], grid: &[f64]) -> Result<Vec<MetricsRow>> {
    strategy_set(grid).iter().map(|s| metrics(records, s)).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_metrics_csv(w: &mut impl Write, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "strategy,thr,a_bar,mean,p95,p99,cvar95,cvar99,cand_opt_rate").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy,
            fmt_opt(r.thr),
            r.a_bar,
            r.mean,
            r.p95,
            r.p99,
            r.cvar95,
            r.cvar99,
            r.cand_opt_rate
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Pareto operating point of a threshold family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub thr: f64,
    pub a_bar: f64,
    pub mean: f64,
    pub cvar95: f64,
}

pub fn sweep(records: &[ReplayRecord], grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    let mut out = Vec::new();
    for family in [|thr| Strategy::Ideal { thr }, |thr| Strategy::GoogleInterval { thr }] {
        for &thr in grid {
            let m = metrics(records, &family(thr))?;
            out.push(SweepRow { strategy: m.strategy, thr, a_bar: m.a_bar, mean: m.mean, cvar95: m.cvar95 });
        }
    }
    Ok(out)
}

pub fn write_sweep_csv(w: &mut impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "strategy,thr,a_bar,mean,cvar95").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.strategy, r.thr, r.a_bar, r.mean, r.cvar95).map_err(io)?;
    }
    Ok(())
}

/// Signed ranks of the nonzero differences: `(doubled average rank, positive?)`.
/// Doubling keeps tied average ranks integral.
pub fn signed_ranks(diffs: &[f64]) -> Vec<(u64, bool)> {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled
        let doubled = (i + 1 + j + 1) as u64;
        for d in &nz[i..=j] {
            out.push((doubled, *d > 0.0));
        }
        i = j + 1;
    }
    out
}

/// `P(W⁺ ≥ w)` under the sign-flip null by enumerating all `2ⁿ` sign patterns.
pub fn exact_p_enumeration(doubled_ranks: &[u64], doubled_w: u64) -> f64 {
    let n = doubled_ranks.len();
    assert!(n <= 20, "enumeration is limited to 20 ranks");
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| doubled_ranks[k]).sum();
        if w >= doubled_w {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Tie-corrected normal approximation with continuity correction.
pub fn normal_p(ranks: &[(u64, bool)]) -> f64 {
    let n = ranks.len() as f64;
    let w: f64 = ranks.iter().filter(|r| r.1).map(|r| r.0 as f64 / 2.0).sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted: Vec<u64> = ranks.iter().map(|r| r.0).collect();
    sorted.sort_unstable();
    for g in sorted.chunk_by(|a, b| a == b) {
        let t = g.len() as f64;
        ties += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return if w > mean { 0.0 } else { 1.0 };
    }
    let z = (w - mean - 0.5) / var.sqrt();
    Normal::standard().sf(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n: usize,
    pub n_nonzero: usize,
    /// Sum of positive-signed ranks.
    pub w_plus: f64,
    pub p_exact: Option<f64>,
    pub p_normal: f64,
    /// Exact when `n_nonzero ≤ 12`, otherwise the normal approximation.
    pub p: f64,
}

/// One-sided test of `H₁: differences tend to be positive`.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.is_empty() {
        return Err(Error::Empty);
    }
    let ranks = signed_ranks(diffs);
    if ranks.is_empty() {
        return Err(Error::AllZero);
    }
    let doubled_w: u64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    let p_normal = normal_p(&ranks);
    let p_exact = (ranks.len() <= EXACT_MAX_N).then(|| exact_p_enumeration(&ranks.iter().map(|r| r.0).collect::<Vec<_>>(), doubled_w));
    Ok(WilcoxonResult {
        n: diffs.len(),
        n_nonzero: ranks.len(),
        w_plus: doubled_w as f64 / 2.0,
        p: p_exact.unwrap_or(p_normal),
        p_exact,
        p_normal,
    })
}

/// Sample mean with a `± 1.96·SE` normal-approximation interval.
pub fn mean_ci(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, mean, mean));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    Ok((mean, mean - half, mean + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub baseline: String,
    pub n: usize,
    pub n_nonzero: usize,
    pub mean_diff: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub w: Option<f64>,
    pub p: Option<f64>,
}

/// Paired tests of `Reg(b) − Reg(ideal_dual)` for the non-selective baselines.
pub fn wilcoxon_table(records: &[ReplayRecord]) -> Result<Vec<WilcoxonRow>> {
    let reference = Strategy::IdealDual;
    [Strategy::Region, Strategy::GooglePrimary, Strategy::GoogleDual]
        .iter()
        .map(|b| {
            let diffs: Vec<f64> = records.iter().map(|r| r.regret(b) - r.regret(&reference)).collect();
            let (mean_diff, ci_lo, ci_hi) = mean_ci(&diffs)?;
            let test = match wilcoxon_one_sided(&diffs) {
                Ok(t) => Some(t),
                Err(Error::AllZero) => None,
                Err(e) => return Err(e),
            };
            Ok(WilcoxonRow {
                baseline: b.name().to_string(),
                n: diffs.len(),
                n_nonzero: test.as_ref().map_or(0, |t| t.n_nonzero),
                mean_diff,
                ci_lo,
                ci_hi,
                w: test.as_ref().map(|t| t.w_plus),
                p: test.map(|t| t.p),
            })
        })
        .collect()
}

pub fn write_wilcoxon_csv(w: &mut impl Write, rows: &[WilcoxonRow]) -> Result<()> {
    writeln!(w, "baseline,n,n_nonzero,mean_diff,ci_lo,ci_hi,W,p").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{},{},{}", r.baseline, r.n, r.n_nonzero, r.mean_diff, r.ci_lo, r.ci_hi, fmt_opt(r.w), fmt_opt(r.p))
            .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvar_examples() {
        assert_eq!(cvar(&[3.0; 7], 0.9).unwrap(), 3.0);
        assert_eq!(cvar(&[0.0, 0.0, 0.0, 100.0], 0.75).unwrap(), 100.0);
        assert_eq!(cvar(&[], 0.5).unwrap_err(), Error::Empty);
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        // worst 5 of 0..99
        assert_eq!(cvar(&v, 0.95).unwrap(), 97.0);
        assert_eq!(quantile(&v, 0.95).unwrap(), 94.0);
    }

    #[test]
    fn all_positive_six() {
        let r = wilcoxon_one_sided(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.p, 1.0 / 64.0);
        assert_eq!(r.w_plus, 21.0);
        assert_eq!(wilcoxon_one_sided(&[0.0, 0.0]).unwrap_err(), Error::AllZero);
    }

    #[test]
    fn tied_ranks_average() {
        let r = signed_ranks(&[1.0, -1.0, 2.0, 0.0]);
        assert_eq!(r, vec![(3, true), (3, false), (6, true)]);
    }

    #[test]
    fn symmetric_pairs_near_half() {
        let diffs: Vec<f64> = (1..=10).flat_map(|k| [k as f64, -(k as f64)]).collect();
        let r = wilcoxon_one_sided(&diffs).unwrap();
        assert!((r.p - 0.5).abs() < 0.05, "{}", r.p);
    }
}
