//! Argument types and subcommand drivers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use ideal_core::dca::DcaConfig;
use ideal_core::evalkit::{
    default_thr_grid, metrics_table, sweep, wilcoxon_table, write_metrics_csv, write_sweep_csv, write_wilcoxon_csv,
    ReplayRecord,
};
use ideal_core::netgraph::{NetworkFile, OdSpec, PathVec, RoadNetwork};
use ideal_core::nets::{RadiusModel, RepresentationModel};
use ideal_core::policy::{decide, RiskCurve, ThresholdSpec};
use ideal_core::scenario::RadiusConfig;
use ideal_core::simworld::{generate_dataset, world_from_spec, DataConfig, TrafficConfig, WorldSpec};
use ideal_core::training::{read_samples, write_samples, write_trace_csv, RadiusFitConfig, Sample};

use crate::acceptance;
use crate::manifest::Manifest;
use crate::pipeline::{self, TargetRow, TrainFile};

#[derive(Debug, Parser)]
#[command(name = "ideal", version, about = "Selective dual dispatch: training, gaps, replay")]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Use 1 for bit-exact reruns.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for outputs and manifests.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write world.json and network.json for a synthetic city.
    GenWorld(GenWorldArgs),
    /// Simulate trips in a world and write samples.jsonl.
    GenData(GenDataArgs),
    /// Train the representation model.
    Train(TrainArgs),
    /// Compute per-sample target radii (targets.jsonl).
    RadiusTargets(RadiusTargetsArgs),
    /// Fit the radius network to target radii.
    FitRadius(FitRadiusArgs),
    /// Decide single or dual dispatch for one call.
    Dispatch(DispatchArgs),
    /// Replay incidents and write records, metrics and Wilcoxon tables.
    Replay(ReplayArgs),
    /// Threshold sweep over replay records (pareto.csv).
    Sweep(SweepArgs),
    /// Summarize the CSV outputs of a directory.
    Report(ReportArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenWorldArgs {
    /// JSON with optional `grid` and `traffic` sections; the seed comes from --seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Disable drift and noise so costs depend only on the call context.
    #[arg(long)]
    pub time_invariant: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long)]
    pub region_share: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    /// JSON with optional `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
    /// Overrides the iteration budget of the config.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct RadiusTargetsArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitRadiusArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DispatchArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub radius: PathBuf,
    /// Context vector: a JSON array inline or a path to a file holding one.
    #[arg(long)]
    pub context_json: String,
    /// Depot node id; repeat for each depot.
    #[arg(long = "depot", required = true)]
    pub depots: Vec<String>,
    #[arg(long)]
    pub dest: String,
    /// Operational cost of a second dispatch.
    #[arg(long = "C", default_value_t = 30.0)]
    pub cost: f64,
    /// `constant:LAMBDA` or `exp:LAMBDA0:TAU_S`.
    #[arg(long, default_value = "constant:1")]
    pub risk_curve: String,
    /// Comma-separated edge ids of an externally supplied primary route.
    #[arg(long)]
    pub primary: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub radius: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Segments followed along the secondary path before re-querying.
    #[arg(long, default_value_t = 5)]
    pub prefix_q: usize,
    /// Comma-separated thresholds in seconds (`inf` allowed).
    #[arg(long)]
    pub thr_grid: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub thr_grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding metrics.csv and friends (default: --out-dir).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelftestArgs {
    /// Comma-separated criterion numbers to run (default: all).
    #[arg(long)]
    pub only: Option<String>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), k + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_network(path: &Path) -> Result<RoadNetwork> {
    let file: NetworkFile = read_json(path)?;
    RoadNetwork::from_file(file).with_context(|| format!("invalid network {}", path.display()))
}

fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_samples(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn load_model(path: &Path) -> Result<RepresentationModel> {
    let m: RepresentationModel = read_json(path)?;
    m.validate().with_context(|| format!("invalid model {}", path.display()))?;
    Ok(m)
}

fn load_radius(path: &Path) -> Result<RadiusModel> {
    let m: RadiusModel = read_json(path)?;
    m.validate().with_context(|| format!("invalid radius model {}", path.display()))?;
    Ok(m)
}

pub fn parse_thr_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad threshold {t:?}")))
        .collect()
}

pub fn parse_risk_curve(s: &str) -> Result<RiskCurve> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| anyhow!("bad number {t:?} in risk curve {s:?}"));
    match parts.as_slice() {
        ["constant", l] => Ok(RiskCurve::Constant { lambda: num(l)? }),
        ["exp", l, tau] => Ok(RiskCurve::ExpDecay { lambda0: num(l)?, tau_s: num(tau)? }),
        _ => bail!("risk curve {s:?} must be constant:LAMBDA or exp:LAMBDA0:TAU_S"),
    }
}

fn parse_context(s: &str) -> Result<Vec<f64>> {
    if s.trim_start().starts_with('[') {
        serde_json::from_str(s).context("parsing inline --context-json")
    } else {
        read_json(Path::new(s))
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn out(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.cli.out_dir.join(default))
    }

    fn manifest(&self, name: &str, config: serde_json::Value) -> Manifest {
        Manifest::new(name, self.cli.seed, self.cli.threads, config)
    }

    fn finish(&self, m: &Manifest) -> Result<()> {
        m.write(&self.cli.out_dir)?;
        Ok(())
    }
}

/// Runs a parsed command line. Returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if !matches!(cli.command, Command::Selftest(_) | Command::Report(_)) {
        fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    }
    let ctx = Ctx { cli };
    match &cli.command {
        Command::GenWorld(a) => gen_world(&ctx, a),
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::RadiusTargets(a) => radius_targets_cmd(&ctx, a),
        Command::FitRadius(a) => fit_radius_cmd(&ctx, a),
        Command::Dispatch(a) => dispatch(&ctx, a),
        Command::Replay(a) => replay_cmd(&ctx, a),
        Command::Sweep(a) => sweep_cmd(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Selftest(a) => selftest(a),
    }
}

fn gen_world(ctx: &Ctx, a: &GenWorldArgs) -> Result<i32> {
    let mut spec: WorldSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => WorldSpec::default(),
    };
    spec.seed = ctx.cli.seed;
    if let Some(r) = a.rows {
        spec.grid.rows = r;
    }
    if let Some(c) = a.cols {
        spec.grid.cols = c;
    }
    if a.time_invariant {
        spec.traffic = TrafficConfig { depots: spec.traffic.depots.clone(), ..TrafficConfig::time_invariant() };
    }
    let world = world_from_spec(&spec).context("generating world")?;
    let world_path = ctx.cli.out_dir.join("world.json");
    let net_path = ctx.cli.out_dir.join("network.json");
    write_json(&world_path, &spec)?;
    write_json(&net_path, &world.network().to_file())?;
    let mut m = ctx.manifest("gen-world", json!({ "args": a, "world": spec }));
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    m.output(&world_path)?;
    m.output(&net_path)?;
    m.notes.push(format!(
        "{} nodes, {} edges, depots {:?}",
        world.network().num_nodes(),
        world.network().num_edges(),
        world.depots().iter().map(|&v| world.network().node_id(v)).collect::<Vec<_>>()
    ));
    ctx.finish(&m)?;
    Ok(0)
}

fn gen_data(ctx: &Ctx, a: &GenDataArgs) -> Result<i32> {
    let spec: WorldSpec = read_json(&a.world)?;
    let world = world_from_spec(&spec).with_context(|| format!("regenerating world from {}", a.world.display()))?;
    let cfg = DataConfig { region_share: a.region_share.unwrap_or(DataConfig::default().region_share) };
    let samples = generate_dataset(&world, a.n, ctx.cli.seed, &cfg).context("simulating trips")?;
    let out = ctx.out(&a.out, "samples.jsonl");
    let mut w = create(&out)?;
    write_samples(&mut w, &samples)?;
    w.flush()?;
    let mut m = ctx.manifest("gen-data", json!({ "args": a, "data": cfg }));
    m.input(&a.world)?;
    m.output(&out)?;
    ctx.finish(&m)?;
    Ok(0)
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    let samples = load_samples(&a.samples)?;
    let mut file: TrainFile = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    if let Some(k) = a.iterations {
        file.train.iterations = k;
    }
    file.train.seed = ctx.cli.seed;
    let out = pipeline::train_model(&net, &samples, &file, ctx.cli.seed).context("training")?;
    let model_path = ctx.out(&a.out_model, "model.json");
    let trace_path = ctx.out(&a.trace_csv, "trace.csv");
    write_json(&model_path, &out.model)?;
    let mut w = create(&trace_path)?;
    write_trace_csv(&mut w, &out.trace)?;
    w.flush()?;
    let mut m = ctx.manifest("train", json!({ "args": a, "config": file }));
    m.input(&a.network)?;
    m.input(&a.samples)?;
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    m.output(&model_path)?;
    m.output(&trace_path)?;
    if let Some((r, model)) = &out.randomized {
        let path = ctx.cli.out_dir.join("model-randomized.json");
        write_json(&path, model)?;
        m.output(&path)?;
        m.notes.push(format!("randomized output drawn at iteration {r}"));
    }
    m.notes.push(format!(
        "{} iterations, training loss {:.6} -> {:.6}",
        out.iterations_run, out.initial_train_loss, out.final_train_loss
    ));
    ctx.finish(&m)?;
    eprintln!("train: loss {:.6} -> {:.6} in {} iterations", out.initial_train_loss, out.final_train_loss, out.iterations_run);
    Ok(0)
}

fn radius_targets_cmd(ctx: &Ctx, a: &RadiusTargetsArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    let samples = load_samples(&a.samples)?;
    let model = load_model(&a.model)?;
    let cfg = RadiusConfig::default();
    let (rows, skipped) = pipeline::radius_targets(&net, &model, &samples, &cfg).context("computing target radii")?;
    let out = ctx.out(&a.out, "targets.jsonl");
    write_jsonl(&out, &rows)?;
    let mut m = ctx.manifest("radius-targets", json!({ "args": a, "radius": cfg }));
    m.input(&a.network)?;
    m.input(&a.samples)?;
    m.input(&a.model)?;
    m.output(&out)?;
    for (i, e) in &skipped {
        m.notes.push(format!("sample {i} skipped: {e}"));
    }
    ctx.finish(&m)?;
    if !skipped.is_empty() {
        eprintln!("radius-targets: skipped {} of {} samples (see manifest)", skipped.len(), samples.len());
    }
    Ok(0)
}

fn fit_radius_cmd(ctx: &Ctx, a: &FitRadiusArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let samples = load_samples(&a.samples)?;
    let targets: Vec<TargetRow> = read_jsonl(&a.targets)?;
    let mut cfg = RadiusFitConfig::default();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.seed = ctx.cli.seed;
    let fit = pipeline::fit_radius_model(&model, &samples, &targets, a.hidden, &cfg, ctx.cli.seed)
        .context("fitting radius model")?;
    let out = ctx.out(&a.out_model, "radius.json");
    write_json(&out, &fit.model)?;
    let best = fit.mae.iter().copied().fold(f64::INFINITY, f64::min);
    let mut m = ctx.manifest("fit-radius", json!({ "args": a, "fit": cfg }));
    m.input(&a.model)?;
    m.input(&a.samples)?;
    m.input(&a.targets)?;
    m.output(&out)?;
    m.notes.push(format!("best mean absolute error {best:.6}"));
    ctx.finish(&m)?;
    Ok(0)
}

fn dispatch(ctx: &Ctx, a: &DispatchArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    let model = load_model(&a.model)?;
    let radius = load_radius(&a.radius)?;
    let context = parse_context(&a.context_json)?;
    let curve = parse_risk_curve(&a.risk_curve)?;
    let depots = a.depots.iter().map(|d| net.node_idx(d)).collect::<ideal_core::Result<Vec<_>>>()?;
    let dest = net.node_idx(&a.dest)?;
    let primary = match &a.primary {
        Some(list) => {
            let ids = list
                .split(',')
                .map(|t| t.trim().parse::<u32>().map_err(|_| anyhow!("bad edge id {t:?} in --primary")))
                .collect::<Result<Vec<_>>>()?;
            let od = OdSpec::new(&net, &depots, dest)?;
            Some(PathVec::from_edge_ids(&net, &od, &ids).context("--primary is not a depot-to-destination path")?)
        }
        None => None,
    };
    let spec = ThresholdSpec { cost: a.cost, curve };
    let dca = DcaConfig { seed: ctx.cli.seed, ..DcaConfig::default() };
    let d = decide(&model, &radius, &net, &context, &depots, dest, &spec, &dca, primary).context("deciding dispatch")?;
    let out = ctx.out(&a.out, "decision.json");
    write_json(&out, &d.record(&net))?;
    let mut m = ctx.manifest("dispatch", json!({ "args": a, "threshold": spec, "dca": dca }));
    m.input(&a.network)?;
    m.input(&a.model)?;
    m.input(&a.radius)?;
    m.output(&out)?;
    ctx.finish(&m)?;
    Ok(0)
}

fn replay_cmd(ctx: &Ctx, a: &ReplayArgs) -> Result<i32> {
    let spec: WorldSpec = read_json(&a.world)?;
    let world = world_from_spec(&spec).with_context(|| format!("regenerating world from {}", a.world.display()))?;
    let model = load_model(&a.model)?;
    let radius = load_radius(&a.radius)?;
    let grid = match &a.thr_grid {
        Some(s) => parse_thr_grid(s)?,
        None => default_thr_grid(),
    };
    let records = pipeline::replay(&world, &model, &radius, a.n, ctx.cli.seed, a.prefix_q).context("replaying incidents")?;
    let records_path = ctx.cli.out_dir.join("records.jsonl");
    let metrics_path = ctx.cli.out_dir.join("metrics.csv");
    let wilcoxon_path = ctx.cli.out_dir.join("wilcoxon.csv");
    write_jsonl(&records_path, &records)?;
    let mut w = create(&metrics_path)?;
    write_metrics_csv(&mut w, &metrics_table(&records, &grid)?)?;
    w.flush()?;
    let mut w = create(&wilcoxon_path)?;
    write_wilcoxon_csv(&mut w, &wilcoxon_table(&records)?)?;
    w.flush()?;
    let mut m = ctx.manifest("replay", json!({ "args": a, "thr_grid": grid.iter().map(|t| t.to_string()).collect::<Vec<_>>() }));
    m.input(&a.world)?;
    m.input(&a.model)?;
    m.input(&a.radius)?;
    m.output(&records_path)?;
    m.output(&metrics_path)?;
    m.output(&wilcoxon_path)?;
    m.notes.push("wilcoxon.csv CI: sample mean ± 1.96 standard errors".into());
    ctx.finish(&m)?;
    Ok(0)
}

fn sweep_cmd(ctx: &Ctx, a: &SweepArgs) -> Result<i32> {
    let records: Vec<ReplayRecord> = read_jsonl(&a.records)?;
    let grid = match &a.thr_grid {
        Some(s) => parse_thr_grid(s)?,
        None => default_thr_grid(),
    };
    let rows = sweep(&records, &grid)?;
    let out = ctx.out(&a.out, "pareto.csv");
    let mut w = create(&out)?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    let mut m = ctx.manifest("sweep", json!({ "args": a, "thr_grid": grid.iter().map(|t| t.to_string()).collect::<Vec<_>>() }));
    m.input(&a.records)?;
    m.output(&out)?;
    ctx.finish(&m)?;
    Ok(0)
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<i32> {
    let dir = a.dir.clone().unwrap_or_else(|| ctx.cli.out_dir.clone());
    let mut found = false;
    for name in ["metrics.csv", "wilcoxon.csv", "pareto.csv"] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        found = true;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        println!("== {name}");
        print!("{}", align_csv(&text));
        println!();
    }
    if !found {
        bail!("no metrics.csv, wilcoxon.csv or pareto.csv in {}", dir.display());
    }
    Ok(0)
}

/// Pads CSV columns to a common width.
fn align_csv(text: &str) -> String {
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut width = vec![0; ncol];
    for r in &rows {
        for (k, c) in r.iter().enumerate() {
            width[k] = width[k].max(c.len());
        }
    }
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(k, c)| format!("{c:>w$}", w = width[k])).collect();
        out.push_str(&cells.join("  "));
        out.push('\n');
    }
    out
}

fn selftest(a: &SelftestArgs) -> Result<i32> {
    let ids = match &a.only {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<u8>().map_err(|_| anyhow!("bad criterion number {t:?}")))
            .collect::<Result<Vec<_>>>()?,
        None => acceptance::ALL.to_vec(),
    };
    let bin = std::env::current_exe().context("locating the ideal binary")?;
    let outcomes = acceptance::run(&ids, Some(&bin), |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {} failed", outcomes.len() - failed, failed);
    Ok(if failed == 0 { 0 } else { 1 })
}
