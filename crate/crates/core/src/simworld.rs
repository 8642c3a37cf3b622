//! Seeded synthetic traffic world: a one-way-street grid, a hidden
//! context- and time-dependent metric over hidden edge directions, a route
//! oracle with the call shape of a commercial routing service, and the
//! adaptive and hybrid trip simulators.

use nalgebra::DMatrix;
use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, random_symmetric_unit, spectral_apply};
use crate::netgraph::{build_network, dijkstra, hop_distances, EdgeSpec, NodeSpec, OdSpec, PathVec, RoadNetwork, EDGE_FEATURES};
use crate::nets::CONTEXT_DIM;
use crate::rng::{hash_normal, hash_unit, normal_vec, rng_for, sub_seed, SimRng};
use crate::scenario::{kappa, sample_feasible};
use crate::training::Sample;

/// Functional road classes, in one-hot order.
pub const ROAD_CLASSES: [&str; 14] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "service",
    "living_street",
    "motorway_link",
    "trunk_link",
    "primary_link",
    "secondary_link",
    "tertiary_link",
];

fn class_speed_kmh(class: usize) -> f64 {
    [100.0, 80.0, 70.0, 60.0, 50.0, 40.0, 40.0, 20.0, 15.0, 60.0, 50.0, 40.0, 40.0, 30.0][class]
}

fn class_lanes(class: usize) -> f64 {
    [3.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0][class]
}

// Context layout.
pub const CTX_WEATHER: usize = 0;
pub const CTX_HOUR: usize = 5;
pub const CTX_DOW: usize = 6;
pub const CTX_MONTH: usize = 13;
pub const CTX_HOLIDAY: usize = 25;
pub const CTX_HOLIDAY_EVE: usize = 26;

const DAY_S: f64 = 86_400.0;
const YEAR_DAYS: u64 = 365;
const MONTH_DAYS: [u64; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub block_m: f64,
    /// Relative length jitter per edge.
    pub jitter: f64,
    /// Chance that an interior street is one-way.
    pub one_way_fraction: f64,
    /// Every this many streets is an arterial.
    pub arterial_every: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { rows: 8, cols: 8, block_m: 250.0, jitter: 0.2, one_way_fraction: 0.4, arterial_every: 3 }
    }
}

/// Grid of `rows × cols` intersections named `n{r}_{c}`. Perimeter streets
/// are two-way, so the network is strongly connected.
pub fn grid_network(cfg: &GridConfig, seed: u64) -> Result<RoadNetwork> {
    if cfg.rows < 2 || cfg.cols < 2 || !(cfg.block_m > 0.0) || !(0.0..1.0).contains(&cfg.jitter) {
        return Err(Error::InvalidConfig("grid needs at least 2x2 nodes, positive block length, jitter in [0,1)".into()));
    }
    let mut rng = rng_for(seed, "grid");
    let name = |r: usize, c: usize| format!("n{r}_{c}");
    let nodes: Vec<NodeSpec> = (0..cfg.rows)
        .flat_map(|r| (0..cfg.cols).map(move |c| (r, c)))
        .map(|(r, c)| NodeSpec { id: name(r, c), lat: r as f64 * cfg.block_m, lon: c as f64 * cfg.block_m })
        .collect();

    // (from, to, class, one_way)
    let mut raw: Vec<((usize, usize), (usize, usize), usize, bool)> = Vec::new();
    let minor = [4usize, 5, 6, 6, 7, 8];
    let mut street = |horizontal: bool, k: usize, len: usize, perimeter: bool, rng: &mut SimRng| {
        let class = if cfg.arterial_every > 0 && k % cfg.arterial_every == 0 && !perimeter {
            if k % (2 * cfg.arterial_every) == 0 { 2 } else { 3 }
        } else {
            minor[rng.random_range(0..minor.len())]
        };
        let one_way = !perimeter && rng.random::<f64>() < cfg.one_way_fraction;
        let forward = rng.random::<bool>();
        for i in 0..len - 1 {
            let (a, b) = if horizontal { ((k, i), (k, i + 1)) } else { ((i, k), (i + 1, k)) };
            if !one_way || forward {
                raw.push((a, b, class, one_way));
            }
            if !one_way || !forward {
                raw.push((b, a, class, one_way));
            }
        }
    };
    for r in 0..cfg.rows {
        street(true, r, cfg.cols, r == 0 || r + 1 == cfg.rows, &mut rng);
    }
    for c in 0..cfg.cols {
        street(false, c, cfg.rows, c == 0 || c + 1 == cfg.cols, &mut rng);
    }
    let mut degree = vec![0usize; cfg.rows * cfg.cols];
    let idx = |(r, c): (usize, usize)| r * cfg.cols + c;
    for (a, b, _, _) in &raw {
        degree[idx(*a)] += 1;
        degree[idx(*b)] += 1;
    }
    let edges: Vec<EdgeSpec> = raw
        .iter()
        .enumerate()
        .map(|(k, &(a, b, class, one_way))| {
            let length = cfg.block_m * (1.0 + cfg.jitter * rng.random_range(-1.0..1.0));
            let mut f = Vec::with_capacity(EDGE_FEATURES);
            f.push(length);
            f.push(class_speed_kmh(class));
            f.push(degree[idx(a)] as f64);
            f.push(degree[idx(b)] as f64);
            f.push(if one_way { 1.0 } else { 0.0 });
            f.push(class_lanes(class));
            f.extend((0..ROAD_CLASSES.len()).map(|j| if j == class { 1.0 } else { 0.0 }));
            EdgeSpec { id: k as u32, from: name(a.0, a.1), to: name(b.0, b.1), length_m: length, features: f }
        })
        .collect();
    build_network(nodes, edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// Dimension of the hidden metric.
    pub d_true: usize,
    /// Burg radius of the context-driven metric around the identity.
    pub rho_true: f64,
    /// Burg radius of the drift draws; 0 disables drift.
    pub drift_rho: f64,
    pub drift_epoch_s: f64,
    /// Lognormal per-query segment noise; 0 disables it.
    pub noise_sigma: f64,
    pub kappa_opt: f64,
    pub kappa_pess: f64,
    /// Depot node ids; empty picks two interior corners.
    pub depots: Vec<String>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            d_true: 4,
            rho_true: 0.3,
            drift_rho: 0.05,
            drift_epoch_s: 120.0,
            noise_sigma: 0.0,
            kappa_opt: 0.85,
            kappa_pess: 1.3,
            depots: Vec::new(),
        }
    }
}

impl TrafficConfig {
    /// No drift and no noise: costs depend only on the call context.
    pub fn time_invariant() -> Self {
        Self { drift_rho: 0.0, noise_sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.d_true >= 1
            && self.rho_true >= 0.0
            && self.drift_rho >= 0.0
            && self.drift_epoch_s > 0.0
            && self.noise_sigma >= 0.0
            && self.kappa_opt > 0.0
            && self.kappa_opt < 1.0
            && self.kappa_pess > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("traffic config out of range (need d ≥ 1, radii ≥ 0, 0 < κ_opt < 1 < κ_pess)".into()))
        }
    }
}

/// `world.json`: everything needed to regenerate a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub grid: GridConfig,
    pub traffic: TrafficConfig,
}

const MIX_FEATURES: usize = 9;
const MIX_BASES: usize = 3;

/// Hidden ground truth. Immutable after generation.
#[derive(Debug, Clone)]
pub struct TrafficOracle {
    seed: u64,
    cfg: TrafficConfig,
    net: RoadNetwork,
    free_flow_s: Vec<f64>,
    dirs: Vec<Vec<f64>>,
    bases: Vec<DMatrix<f64>>,
    mix: Vec<[f64; MIX_FEATURES]>,
    holidays: Vec<u64>,
    depots: Vec<usize>,
    region: Vec<usize>,
}

/// One routing response.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteQuery {
    pub route: PathVec,
    pub duration_s: f64,
    pub first_edge: usize,
    pub first_dt_s: f64,
    pub optimistic_s: f64,
    pub pessimistic_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub t_final: f64,
    /// `(edge index, Δt)` in traversal order.
    pub segments: Vec<(usize, f64)>,
    pub queries: usize,
}

pub fn generate_world(seed: u64, net: RoadNetwork, cfg: &TrafficConfig) -> Result<TrafficOracle> {
    cfg.validate()?;
    let d = cfg.d_true;
    let mut rng = rng_for(seed, "world");
    let free_flow_s = net.edges().iter().map(|e| e.length / (e.features[1] / 3.6)).collect();
    let class_dirs: Vec<Vec<f64>> = (0..ROAD_CLASSES.len()).map(|_| normal_vec(&mut rng, d)).collect();
    let dirs = net
        .edges()
        .iter()
        .map(|e| {
            let class = (0..ROAD_CLASSES.len()).find(|&j| e.features[6 + j] == 1.0).unwrap_or(6);
            let noise = normal_vec(&mut rng, d);
            let v: Vec<f64> = class_dirs[class].iter().zip(&noise).map(|(a, b)| a + 0.35 * b).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let bases = (0..MIX_BASES).map(|_| random_symmetric_unit(&mut rng, d)).collect();
    let mix = (0..MIX_BASES)
        .map(|_| {
            let mut w = [0.0; MIX_FEATURES];
            for (x, g) in w.iter_mut().zip(normal_vec(&mut rng, MIX_FEATURES)) {
                *x = g * 0.6;
            }
            w
        })
        .collect();
    let mut hrng = rng_for(seed, "holidays");
    let mut holidays: Vec<u64> = index_sample(&mut hrng, YEAR_DAYS as usize, 12).into_iter().map(|x| x as u64).collect();
    holidays.sort_unstable();

    let depots = if cfg.depots.is_empty() {
        let rows = net.nodes().iter().filter(|n| n.lon == 0.0).count();
        let cols = net.num_nodes() / rows.max(1);
        vec![format!("n{}_{}", 1.min(rows - 1), 1.min(cols - 1)), format!("n{}_{}", rows.saturating_sub(2), cols.saturating_sub(2))]
    } else {
        cfg.depots.clone()
    };
    let depots: Vec<usize> = depots.iter().map(|id| net.node_idx(id)).collect::<Result<_>>()?;
    if depots.is_empty() || depots.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("depots must be distinct".into()));
    }
    let hops: Vec<Vec<Option<usize>>> = depots.iter().map(|&o| hop_distances(&net, o)).collect();
    let region = (0..net.num_nodes())
        .map(|v| (0..depots.len()).min_by_key(|&k| (hops[k][v].unwrap_or(usize::MAX), k)).expect("nonempty depots"))
        .collect();
    Ok(TrafficOracle {
        seed,
        cfg: cfg.clone(),
        net,
        free_flow_s,
        dirs,
        bases,
        mix,
        holidays,
        depots,
        region,
    })
}

/// A world regenerated from its spec.
pub fn world_from_spec(spec: &WorldSpec) -> Result<TrafficOracle> {
    let net = grid_network(&spec.grid, sub_seed(spec.seed, "network"))?;
    generate_world(spec.seed, net, &spec.traffic)
}

fn month_of(day: u64) -> usize {
    let mut left = day % YEAR_DAYS;
    for (m, &n) in MONTH_DAYS.iter().enumerate() {
        if left < n {
            return m;
        }
        left -= n;
    }
    11
}

impl TrafficOracle {
    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depots(&self) -> &[usize] {
        &self.depots
    }

    /// Region depot (index into [`Self::depots`]) of a node: fewest hops, lower index on ties.
    pub fn region_depot(&self, node: usize) -> usize {
        self.region[node]
    }

    fn is_holiday(&self, day: u64) -> bool {
        self.holidays.binary_search(&(day % YEAR_DAYS)).is_ok()
    }

    /// Context vector of a call at absolute time `s` (seconds since the
    /// start of a 365-day year beginning on a Monday).
    pub fn context_at(&self, s: f64) -> Vec<f64> {
        let s = s.max(0.0);
        let day = (s / DAY_S).floor() as u64;
        let hour = ((s - day as f64 * DAY_S) / 3600.0).floor().min(23.0);
        let h = hour as u64;
        let seed = self.seed;
        let season = (2.0 * std::f64::consts::PI * (day % YEAR_DAYS) as f64 / YEAR_DAYS as f64).sin();
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
        let temp = 23.0 + 5.0 * season + 3.0 * diurnal + 1.5 * hash_normal(&[seed, day, h, 0]);
        let wet_day = hash_unit(&[seed, day, 1]) < 0.25;
        let rain = if wet_day && hash_unit(&[seed, day, h, 2]) < 0.5 { -hash_unit(&[seed, day, h, 3]).max(1e-12).ln() * 4.0 } else { 0.0 };
        let humidity = (72.0 + if rain > 0.0 { 12.0 } else { 0.0 } + 8.0 * hash_normal(&[seed, day, h, 4])).clamp(30.0, 100.0);
        let wind = (8.0 + 4.0 * hash_normal(&[seed, day, h, 5])).abs();
        let pressure = 1012.0 - 5.0 * season + 3.0 * hash_normal(&[seed, day, h, 6]);
        let mut c = vec![0.0; CONTEXT_DIM];
        c[CTX_WEATHER..CTX_WEATHER + 5].copy_from_slice(&[temp, rain, humidity, wind, pressure]);
        c[CTX_HOUR] = hour;
        c[CTX_DOW + (day % 7) as usize] = 1.0;
        c[CTX_MONTH + month_of(day)] = 1.0;
        c[CTX_HOLIDAY] = if self.is_holiday(day) { 1.0 } else { 0.0 };
        c[CTX_HOLIDAY_EVE] = if self.is_holiday(day + 1) { 1.0 } else { 0.0 };
        c
    }

    fn mix_features(ctx: &[f64]) -> [f64; MIX_FEATURES] {
        let h = ctx[CTX_HOUR];
        let angle = 2.0 * std::f64::consts::PI * h / 24.0;
        let weekend = ctx[CTX_DOW + 5] + ctx[CTX_DOW + 6];
        [
            (ctx[0] - 23.0) / 5.0,
            ctx[1].ln_1p() / 2.0,
            (ctx[2] - 75.0) / 12.0,
            (ctx[3] - 8.0) / 4.0,
            (ctx[4] - 1012.0) / 5.0,
            angle.sin(),
            angle.cos(),
            weekend,
            ctx[CTX_HOLIDAY],
        ]
    }

    /// Context-driven part of the hidden metric, inside the Burg ball of radius `rho_true`.
    pub fn context_metric(&self, ctx: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.cfg.d_true;
        let f = Self::mix_features(ctx);
        let mut s = DMatrix::<f64>::zeros(d, d);
        for (b, w) in self.bases.iter().zip(&self.mix) {
            let a = w.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>().tanh();
            s += b * a;
        }
        let (q, lam) = jacobi_eigh(&s)?;
        let div = |t: f64| lam.iter().map(|&l| kappa((t * l).exp())).sum::<f64>();
        let mut t = 1.0;
        if div(1.0) > self.cfg.rho_true {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if div(mid) > self.cfg.rho_true {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            t = lo;
        }
        let x = spectral_apply(&q, &lam, |l| (t * l).exp());
        Ok((&x + x.transpose()) * 0.5)
    }

    fn drift_draw(&self, epoch: u64) -> Result<DMatrix<f64>> {
        let d = self.cfg.d_true;
        if self.cfg.drift_rho == 0.0 {
            return Ok(DMatrix::identity(d, d));
        }
        let mut rng = SimRng::seed_from_u64(sub_seed(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15), "drift"));
        Ok(sample_feasible(self.cfg.drift_rho, d, &mut rng)?.into_matrix())
    }

    /// Hidden metric at absolute time `s` for a call context.
    pub fn metric_at(&self, ctx: &[f64], s: f64) -> Result<DMatrix<f64>> {
        let base = self.context_metric(ctx)?;
        if self.cfg.drift_rho == 0.0 {
            return Ok(base);
        }
        let pos = s.max(0.0) / self.cfg.drift_epoch_s;
        let j = pos.floor();
        let w = pos - j;
        let drift = self.drift_draw(j as u64)? * (1.0 - w) + self.drift_draw(j as u64 + 1)? * w;
        let (q, lam) = jacobi_eigh(&base)?;
        let root = spectral_apply(&q, &lam, f64::sqrt);
        let x = &root * drift * &root;
        Ok((&x + x.transpose()) * 0.5)
    }

    fn rush(ctx: &[f64]) -> f64 {
        let h = ctx[CTX_HOUR] + 0.5;
        let peak = (-(h - 8.5).powi(2) / 2.0).exp() + (-(h - 18.0).powi(2) / 2.0).exp();
        let damp = if ctx[CTX_HOLIDAY] == 1.0 || ctx[CTX_DOW + 6] == 1.0 { 0.5 } else { 1.0 };
        1.0 + 0.4 * peak * damp
    }

    /// True edge travel times (seconds) at absolute time `s` for a call context.
    pub fn costs_at(&self, ctx: &[f64], s: f64) -> Result<Vec<f64>> {
        let x = self.metric_at(ctx, s)?;
        let scale = (1.0 + 0.03 * ctx[1].min(30.0)) * Self::rush(ctx);
        let sigma = self.cfg.noise_sigma;
        let d = self.cfg.d_true;
        Ok(self
            .dirs
            .iter()
            .enumerate()
            .map(|(e, u)| {
                let mut q = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        q += u[i] * x[(i, j)] * u[j];
                    }
                }
                let noise = if sigma > 0.0 { (sigma * hash_normal(&[self.seed, s.to_bits(), e as u64]) - 0.5 * sigma * sigma).exp() } else { 1.0 };
                (self.free_flow_s[e] * scale * q * noise).max(0.0)
            })
            .collect())
    }

    /// A call session: the context is fixed at the call time `t_call`.
    pub fn session(&self, t_call: f64) -> Session<'_> {
        Session { oracle: self, context: self.context_at(t_call), t_call }
    }
}

/// Oracle access for one call; `sim_time` is seconds elapsed since the call.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    pub oracle: &'a TrafficOracle,
    pub context: Vec<f64>,
    pub t_call: f64,
}

impl Session<'_> {
    fn costs(&self, sim_time: f64) -> Result<Vec<f64>> {
        self.oracle.costs_at(&self.context, self.t_call + sim_time)
    }

    /// Route, duration, first segment and interval estimates from `origin` to `dest`.
    pub fn query(&self, origin: usize, dest: usize, sim_time: f64) -> Result<RouteQuery> {
        let net = &self.oracle.net;
        let od = OdSpec::new(net, &[origin], dest)?;
        let costs = self.costs(sim_time)?;
        let (route, duration) = dijkstra(net, &costs, &od)?;
        let first_edge = route.edges[0];
        let k = &self.oracle.cfg;
        Ok(RouteQuery {
            first_dt_s: costs[first_edge],
            first_edge,
            optimistic_s: k.kappa_opt * duration,
            pessimistic_s: k.kappa_pess * duration,
            duration_s: duration,
            route,
        })
    }

    fn guard(&self) -> usize {
        10 * self.oracle.net.num_nodes()
    }

    fn continue_adaptive(&self, mut cur: usize, dest: usize, out: &mut SimOutcome) -> Result<()> {
        while cur != dest {
            if out.segments.len() >= self.guard() {
                return Err(Error::CycleGuard(self.guard()));
            }
            let q = self.query(cur, dest, out.t_final)?;
            out.queries += 1;
            out.t_final += q.first_dt_s;
            out.segments.push((q.first_edge, q.first_dt_s));
            cur = self.oracle.net.edge(q.first_edge).dest;
        }
        Ok(())
    }

    /// Re-queries after every segment and treats each returned segment time as realized.
    pub fn adaptive_simulate(&self, origin: usize, dest: usize) -> Result<SimOutcome> {
        let mut out = SimOutcome { t_final: 0.0, segments: Vec::new(), queries: 0 };
        if origin == dest {
            return Err(Error::InvalidOd("origin equals destination".into()));
        }
        self.continue_adaptive(origin, dest, &mut out)?;
        Ok(out)
    }

    /// Follows the first `min(q, len)` edges of `prefix`, then switches to adaptive re-querying.
    pub fn hybrid_simulate(&self, prefix: &PathVec, q: usize, dest: usize) -> Result<SimOutcome> {
        let net = &self.oracle.net;
        let mut out = SimOutcome { t_final: 0.0, segments: Vec::new(), queries: 0 };
        let mut cur = prefix.origin;
        if cur == dest {
            return Err(Error::InvalidOd("origin equals destination".into()));
        }
        for (h, &e) in prefix.edges.iter().take(q).enumerate() {
            if cur == dest {
                break;
            }
            if e >= net.num_edges() || net.edge(e).origin != cur {
                return Err(Error::PrefixBroken(h));
            }
            let dt = self.costs(out.t_final)?[e];
            out.queries += 1;
            out.t_final += dt;
            out.segments.push((e, dt));
            cur = net.edge(e).dest;
        }
        self.continue_adaptive(cur, dest, &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Chance the serving depot is the region depot.
    pub region_share: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { region_share: 0.8 }
    }
}

/// A call: time, destination node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub t_call: f64,
    pub dest: usize,
}

/// Draws `n` calls with non-depot destinations from the named stream.
pub fn draw_calls(world: &TrafficOracle, n: usize, seed: u64, stream: &str) -> Vec<Call> {
    let mut rng = rng_for(seed, stream);
    let targets: Vec<usize> = (0..world.net.num_nodes()).filter(|v| !world.depots.contains(v)).collect();
    (0..n)
        .map(|_| Call {
            t_call: rng.random_range(0.0..YEAR_DAYS as f64 * DAY_S),
            dest: targets[rng.random_range(0..targets.len())],
        })
        .collect()
}

/// `n` trip samples whose travel times come from the adaptive simulator.
pub fn generate_dataset(world: &TrafficOracle, n: usize, seed: u64, cfg: &DataConfig) -> Result<Vec<Sample>> {
    let calls = draw_calls(world, n, seed, "data-calls");
    let mut pick = rng_for(seed, "data-depots");
    let origins: Vec<usize> = calls
        .iter()
        .map(|c| {
            let region = world.region_depot(c.dest);
            if world.depots.len() == 1 || pick.random::<f64>() < cfg.region_share {
                region
            } else {
                let others: Vec<usize> = (0..world.depots.len()).filter(|&k| k != region).collect();
                others[pick.random_range(0..others.len())]
            }
        })
        .collect();
    calls
        .par_iter()
        .zip(origins.par_iter())
        .map(|(c, &k)| {
            let session = world.session(c.t_call);
            let origin = world.depots[k];
            let out = session.adaptive_simulate(origin, c.dest)?;
            Ok(Sample {
                context: session.context.clone(),
                origin: world.net.node_id(origin).to_string(),
                dest: world.net.node_id(c.dest).to_string(),
                t_s: out.t_final,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(traffic: TrafficConfig) -> TrafficOracle {
        world_from_spec(&WorldSpec { seed: 5, grid: GridConfig::default(), traffic }).unwrap()
    }

    #[test]
    fn feature_widths() {
        let w = world(TrafficConfig::default());
        assert!(w.network().edges().iter().all(|e| e.features.len() == 20));
        let c = w.context_at(123_456.0);
        assert_eq!(c.len(), 27);
        assert_eq!(c[CTX_DOW..CTX_DOW + 7].iter().sum::<f64>(), 1.0);
        assert_eq!(c[CTX_MONTH..CTX_MONTH + 12].iter().sum::<f64>(), 1.0);
        assert!((0.0..24.0).contains(&c[CTX_HOUR]));
    }

    #[test]
    fn interval_brackets_duration() {
        let w = world(TrafficConfig { noise_sigma: 0.2, ..TrafficConfig::default() });
        let s = w.session(40_000.0);
        let (o, d) = (w.depots()[0], w.network().node_idx("n6_1").unwrap());
        for t in [0.0, 50.0, 333.3] {
            let q = s.query(o, d, t).unwrap();
            assert!(q.optimistic_s <= q.duration_s && q.duration_s <= q.pessimistic_s);
            assert_eq!(q, s.query(o, d, t).unwrap());
        }
    }

    #[test]
    fn static_world_matches_dijkstra() {
        let w = world(TrafficConfig::time_invariant());
        let s = w.session(90_000.0);
        let (o, d) = (w.depots()[1], w.network().node_idx("n0_3").unwrap());
        let q = s.query(o, d, 0.0).unwrap();
        let costs = w.costs_at(&s.context, 90_000.0).unwrap();
        let od = OdSpec::new(w.network(), &[o], d).unwrap();
        assert_eq!(q.duration_s, dijkstra(w.network(), &costs, &od).unwrap().1);
        let out = s.adaptive_simulate(o, d).unwrap();
        assert!((out.t_final - q.duration_s).abs() <= 1e-9 * q.duration_s);
        assert_eq!(out.queries, out.segments.len());
    }

    #[test]
    fn accounting_is_exact() {
        let w = world(TrafficConfig { drift_rho: 0.2, noise_sigma: 0.1, ..TrafficConfig::default() });
        let s = w.session(7_777.0);
        let out = s.adaptive_simulate(w.depots()[0], w.network().node_idx("n7_7").unwrap()).unwrap();
        let mut sum = 0.0;
        for (_, dt) in &out.segments {
            sum += dt;
        }
        assert_eq!(sum, out.t_final);
    }
}
