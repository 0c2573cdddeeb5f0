//! Command-line workflows. Every flag can also be set through an environment
//! variable named `PRIVYTRAC_<FLAG>` (e.g. `PRIVYTRAC_SEED`).
//!
//! Each command that writes files puts a `manifest.json` next to them with
//! the configuration, seed, crate version and SHA-256 digests of inputs and
//! outputs. Manifests carry no timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distribution::{
    client_evaluate, clip, spawn_server, CaptureTransport, Evaluation, MapRequest, MapStore, Region, ServerHandle,
    TcpTransport, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::grid::{build_risk_map, discretize, GridSpec, PathSample, DEFAULT_TRUNCATION_EPS};
use crate::refine::{
    refined_risk_map, sample_posterior, McmcConfig, PosteriorRun, PosteriorSummary, PriorHyperparams, TestObservation,
};
use crate::risk::{RiskParams, Trajectory, DEFAULT_P0};
use crate::simulation::{
    read_trials_csv, roc, run_experiment, write_roc_csv, write_scatter_csv, write_trials_csv, Metric, ScenarioConfig,
};
use crate::tile;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "privytrac", version, about = "Spatio-temporal infection risk maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the crossing-walker experiment and write one trials CSV per sigma_t.
    Simulate(SimulateArgs),
    /// ROC staircase (and scatter data) from a trials CSV.
    Roc(RocArgs),
    /// Build a risk-map tile from patient trajectory CSVs.
    BuildMap(BuildMapArgs),
    /// Serve the `<version>.tile` files of a directory.
    Serve(ServeArgs),
    /// Evaluate a trajectory against a served or local tile.
    Evaluate(EvaluateArgs),
    /// Refine the decay precisions from test outcomes and write a refined tile.
    Refine(RefineArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Spatial cell size (m).
    #[arg(long, env = "PRIVYTRAC_CELL_XY", default_value_t = 1.0)]
    pub cell_xy: f64,
    /// Temporal cell size (s).
    #[arg(long, env = "PRIVYTRAC_CELL_T", default_value_t = 1.0)]
    pub cell_t: f64,
}

impl GridArgs {
    pub fn spec(&self) -> Result<GridSpec> {
        let spec = GridSpec { cell_size_xy: self.cell_xy, cell_size_t: self.cell_t, ..GridSpec::default() };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, env = "PRIVYTRAC_TRIALS", default_value_t = 20_000)]
    pub trials: usize,
    #[arg(long, env = "PRIVYTRAC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated temporal decay scales (s).
    #[arg(long, env = "PRIVYTRAC_SIGMA_T", value_delimiter = ',', default_values_t = [10.0, 50.0, 100.0, 150.0])]
    pub sigma_t: Vec<f64>,
    #[arg(long, env = "PRIVYTRAC_SIGMA_XY", default_value_t = 1.0)]
    pub sigma_xy: f64,
    #[arg(long, env = "PRIVYTRAC_P0", default_value_t = DEFAULT_P0)]
    pub p0: f64,
    /// Truncation threshold of the scoring map.
    #[arg(long, env = "PRIVYTRAC_EPS", default_value_t = 1e-12)]
    pub eps: f64,
    #[arg(long, env = "PRIVYTRAC_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    Risk,
    Proximity,
    Both,
}

impl MetricChoice {
    fn metrics(self) -> &'static [Metric] {
        match self {
            MetricChoice::Risk => &[Metric::Risk],
            MetricChoice::Proximity => &[Metric::Proximity],
            MetricChoice::Both => &[Metric::Risk, Metric::Proximity],
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RocArgs {
    /// Trials CSV written by `simulate`.
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricChoice::Both)]
    pub metric: MetricChoice,
    /// Also write `scatter.csv` (risk vs. exp(-min distance)).
    #[arg(long)]
    pub scatter: bool,
    #[arg(long, env = "PRIVYTRAC_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildMapArgs {
    /// Patient trajectory CSVs (`t_seconds,x_meters,y_meters`).
    #[serde(skip)]
    pub patients: Vec<PathBuf>,
    #[arg(long, env = "PRIVYTRAC_SIGMA_XY", default_value_t = 1.0)]
    pub sigma_xy: f64,
    #[arg(long, env = "PRIVYTRAC_SIGMA_T", default_value_t = 100.0)]
    pub sigma_t: f64,
    #[arg(long, env = "PRIVYTRAC_P0", default_value_t = DEFAULT_P0)]
    pub p0: f64,
    #[arg(long, env = "PRIVYTRAC_EPS", default_value_t = DEFAULT_TRUNCATION_EPS)]
    pub eps: f64,
    /// Map version; the tile is written as `<version>.tile`.
    #[arg(long = "map-version", env = "PRIVYTRAC_MAP_VERSION", default_value_t = 1)]
    pub map_version: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, env = "PRIVYTRAC_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PRIVYTRAC_MAP_DIR")]
    pub map_dir: PathBuf,
    #[arg(long, env = "PRIVYTRAC_BIND", default_value = "127.0.0.1:7878")]
    pub bind: String,
    /// Rescan the map directory for new versions this often; 0 disables.
    #[arg(long, env = "PRIVYTRAC_POLL_SECS", default_value_t = 5)]
    pub poll_secs: u64,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["endpoint", "tile"]))]
pub struct EvaluateArgs {
    /// Server address, e.g. `127.0.0.1:7878`.
    #[arg(long, env = "PRIVYTRAC_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Local tile file instead of a server.
    #[arg(long)]
    pub tile: Option<PathBuf>,
    /// Trajectory CSV (`t_seconds,x_meters,y_meters`); never sent anywhere.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// `x_min,x_max,y_min,y_max,t_min,t_max` to download; default is the whole map.
    #[arg(long)]
    pub region: Option<Region>,
    #[arg(long, env = "PRIVYTRAC_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write every byte sent to the server to this file.
    #[arg(long, conflicts_with = "tile")]
    pub capture: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RefineArgs {
    /// Observations CSV (`person_id,t_seconds,x_meters,y_meters,positive`).
    #[arg(long)]
    #[serde(skip)]
    pub observations: PathBuf,
    /// Patient trajectory CSVs.
    #[serde(skip)]
    pub patients: Vec<PathBuf>,
    /// Nominal spatial scale; centers the default prior.
    #[arg(long, env = "PRIVYTRAC_SIGMA_XY", default_value_t = 1.0)]
    pub sigma_xy: f64,
    /// Nominal temporal scale; centers the default prior.
    #[arg(long, env = "PRIVYTRAC_SIGMA_T", default_value_t = 100.0)]
    pub sigma_t: f64,
    #[arg(long, env = "PRIVYTRAC_P0", default_value_t = DEFAULT_P0)]
    pub p0: f64,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha_t: Option<f64>,
    #[arg(long)]
    pub beta_t: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 5)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.3)]
    pub proposal_scale: f64,
    #[arg(long, env = "PRIVYTRAC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "PRIVYTRAC_EPS", default_value_t = DEFAULT_TRUNCATION_EPS)]
    pub eps: f64,
    #[arg(long = "map-version", env = "PRIVYTRAC_MAP_VERSION", default_value_t = 1)]
    pub map_version: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, env = "PRIVYTRAC_OUT")]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Provenance record written next to command outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub rng_seed: Option<u64>,
    pub code_version: String,
    /// Input path as given -> SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    /// Output file name -> SHA-256 hex digest.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    fn create(dir: &Path, command: &str, config: &impl Serialize, rng_seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                config: serde_json::to_value(config)?,
                rng_seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        })
    }

    fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    fn finish(self) -> Result<PathBuf> {
        let mut json = serde_json::to_vec_pretty(&self.manifest)?;
        json.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, json)?;
        Ok(path)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?)
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    t_seconds: f64,
    x_meters: f64,
    y_meters: f64,
}

/// Reads a `t_seconds,x_meters,y_meters` CSV.
pub fn read_path_csv<R: Read>(input: R) -> Result<Vec<PathSample>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<PathRow>()
        .map(|r| r.map(|r| PathSample::new(r.t_seconds, r.x_meters, r.y_meters)).map_err(Error::from))
        .collect()
}

pub fn write_path_csv<W: Write>(path: &[PathSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in path {
        w.serialize(PathRow { t_seconds: s.t, x_meters: s.x, y_meters: s.y })?;
    }
    if path.is_empty() {
        w.write_record(["t_seconds", "x_meters", "y_meters"])?;
    }
    w.flush()?;
    Ok(())
}

/// A continuous path that [`discretize`] maps back onto `traj`, provided the
/// trajectory occupies consecutive ticks.
pub fn trajectory_to_path(traj: &Trajectory, spec: &GridSpec) -> Vec<PathSample> {
    let half = spec.cell_size_t / 2.0;
    let mut path: Vec<PathSample> = traj.cells().iter().map(|c| PathSample::new(c.t - half, c.x, c.y)).collect();
    if let Some(last) = traj.cells().last() {
        path.push(PathSample::new(last.t + half, last.x, last.y));
    }
    path
}

pub fn load_trajectory(path: &Path, spec: &GridSpec) -> Result<Trajectory> {
    let samples = read_path_csv(BufReader::new(File::open(path)?))?;
    discretize(&samples, spec)
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    person_id: String,
    t_seconds: f64,
    x_meters: f64,
    y_meters: f64,
    positive: u8,
}

/// One tested person: id, outcome and continuous path.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    pub person_id: String,
    pub positive: bool,
    pub path: Vec<PathSample>,
}

/// Reads a `person_id,t_seconds,x_meters,y_meters,positive` CSV. Rows of a
/// person need not be contiguous; people keep their first-appearance order.
pub fn read_observations_csv<R: Read>(input: R) -> Result<Vec<ObservedPath>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut people: Vec<ObservedPath> = Vec::new();
    let mut slot: BTreeMap<String, usize> = BTreeMap::new();
    for row in rd.deserialize::<ObservationRow>() {
        let row = row?;
        let positive = match row.positive {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("positive must be 0 or 1, got {v}"))),
        };
        let n = *slot.entry(row.person_id.clone()).or_insert_with(|| {
            people.push(ObservedPath { person_id: row.person_id.clone(), positive, path: Vec::new() });
            people.len() - 1
        });
        if people[n].positive != positive {
            return Err(Error::Format(format!("person {} has conflicting outcomes", row.person_id)));
        }
        people[n].path.push(PathSample::new(row.t_seconds, row.x_meters, row.y_meters));
    }
    Ok(people)
}

pub fn write_observations_csv<W: Write>(people: &[ObservedPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["person_id", "t_seconds", "x_meters", "y_meters", "positive"])?;
    for p in people {
        for s in &p.path {
            w.write_record([
                p.person_id.clone(),
                s.t.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                u8::from(p.positive).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// File name of the trials CSV for one temporal scale.
pub fn trials_file_name(sigma_t: f64) -> String {
    format!("trials_sigma_t_{sigma_t}.csv")
}

pub fn cmd_simulate(args: &SimulateArgs, log: &mut impl Write) -> Result<PathBuf> {
    if args.sigma_t.is_empty() {
        return Err(Error::Usage("--sigma-t needs at least one value".into()));
    }
    let mut seen = Vec::new();
    for &st in &args.sigma_t {
        if seen.contains(&st.to_bits()) {
            return Err(Error::Usage(format!("--sigma-t lists {st} twice")));
        }
        seen.push(st.to_bits());
    }
    let config =
        ScenarioConfig { n_trials: args.trials, rng_seed: args.seed, map_eps: args.eps, ..ScenarioConfig::default() };
    config.validate()?;
    let base = RiskParams::isotropic(args.sigma_xy, args.sigma_t[0])?.with_p0(args.p0)?;
    let mut out = OutputDir::create(&args.out, "simulate", args, Some(args.seed))?;
    for &st in &args.sigma_t {
        let params = base.with_sigma_t(st)?;
        let records = run_experiment(&config, &params)?;
        let mut buf = Vec::new();
        write_trials_csv(&records, &mut buf)?;
        let path = out.write(&trials_file_name(st), &buf)?;
        let infected = records.iter().filter(|r| r.infected).count();
        writeln!(log, "sigma_t={st}: {} trials, {infected} infected -> {}", records.len(), path.display())?;
    }
    out.finish()
}

pub fn cmd_roc(args: &RocArgs, log: &mut impl Write) -> Result<PathBuf> {
    let mut out = OutputDir::create(&args.out, "roc", args, None)?;
    let records = read_trials_csv(&out.input(&args.input)?[..])?;
    for &metric in args.metric.metrics() {
        let curve = roc(&records, metric)?;
        let mut buf = Vec::new();
        write_roc_csv(&curve, &mut buf)?;
        out.write(&format!("roc_{}.csv", metric.as_str()), &buf)?;
        writeln!(log, "auc_{} {}", metric.as_str(), curve.auc())?;
    }
    if args.scatter {
        let mut buf = Vec::new();
        write_scatter_csv(&records, &mut buf)?;
        out.write("scatter.csv", &buf)?;
    }
    out.finish()
}

pub fn tile_file_name(version: u64) -> String {
    format!("{version}.tile")
}

pub fn cmd_build_map(args: &BuildMapArgs, log: &mut impl Write) -> Result<PathBuf> {
    let spec = args.grid.spec()?;
    let params = RiskParams::isotropic(args.sigma_xy, args.sigma_t)?.with_p0(args.p0)?;
    let mut out = OutputDir::create(&args.out, "build-map", args, None)?;
    let mut patients = Vec::with_capacity(args.patients.len());
    for p in &args.patients {
        let bytes = out.input(p)?;
        patients.push(discretize(&read_path_csv(&bytes[..])?, &spec)?);
    }
    let map = build_risk_map(&patients, &params, &spec, args.eps)?;
    let path = out.write(&tile_file_name(args.map_version), &tile::encode(&map))?;
    writeln!(log, "{} cells from {} patients -> {}", map.len(), patients.len(), path.display())?;
    out.finish()?;
    Ok(path)
}

/// Publishes every `<version>.tile` in `dir` not yet in `store`; returns the
/// new versions.
pub fn refresh_store(store: &MapStore, dir: &Path) -> Result<Vec<u64>> {
    let known = store.versions();
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("tile") {
            continue;
        }
        let Some(version) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        if version > 0 && !known.contains(&version) {
            found.push((version, path));
        }
    }
    found.sort();
    let mut added = Vec::new();
    for (version, path) in found {
        let map = tile::decode(&fs::read(&path)?)?;
        store.publish(version, map)?;
        added.push(version);
    }
    Ok(added)
}

/// Loads a map directory and starts serving it.
pub fn serve_directory(dir: &Path, bind: &str) -> Result<(ServerHandle, Arc<MapStore>)> {
    let store = Arc::new(MapStore::new());
    if refresh_store(&store, dir)?.is_empty() {
        return Err(Error::Usage(format!("no <version>.tile files in {}", dir.display())));
    }
    let handle = spawn_server(bind, Arc::clone(&store))?;
    Ok((handle, store))
}

/// Serves until the process is killed.
pub fn cmd_serve(args: &ServeArgs, log: &mut impl Write) -> Result<()> {
    let (handle, store) = serve_directory(&args.map_dir, &args.bind)?;
    writeln!(log, "serving versions {:?} on {}", store.versions(), handle.local_addr())?;
    log.flush()?;
    if args.poll_secs == 0 {
        handle.join();
        return Ok(());
    }
    loop {
        std::thread::sleep(Duration::from_secs(args.poll_secs));
        match refresh_store(&store, &args.map_dir) {
            Ok(v) if !v.is_empty() => writeln!(log, "published versions {v:?}")?,
            Ok(_) => {}
            Err(e) => writeln!(log, "rescan failed: {e}")?,
        }
        log.flush()?;
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, log: &mut impl Write) -> Result<Evaluation> {
    let requested_spec = args.grid.spec()?;
    let request = match &args.region {
        Some(r) => MapRequest::for_region(&requested_spec, r)?,
        None => MapRequest::everything(),
    };
    let samples = read_path_csv(BufReader::new(File::open(&args.trajectory)?))?;
    let eval = match (&args.endpoint, &args.tile) {
        (Some(addr), None) => {
            // off-grid cells are rejected during evaluation, so a grid
            // mismatch with the served map surfaces as an error
            let traj = discretize(&samples, &requested_spec)?;
            let mut capture = CaptureTransport::new(TcpTransport::connect(addr.as_str())?);
            let eval = client_evaluate(&mut capture, &request, &traj, args.threshold)?;
            if let Some(path) = &args.capture {
                fs::write(path, &capture.outbound)?;
            }
            eval
        }
        (None, Some(path)) => {
            let map = tile::decode(&fs::read(path)?)?;
            if args.region.is_some() && *map.spec() != requested_spec {
                return Err(Error::Usage("tile grid differs from the --cell-xy/--cell-t grid".into()));
            }
            let traj = discretize(&samples, map.spec())?;
            let store = MapStore::new();
            store.publish(1, clip(&map, &request))?;
            let mut local = crate::distribution::LoopbackTransport::new(Arc::new(store));
            client_evaluate(&mut local, &request, &traj, args.threshold)?
        }
        _ => return Err(Error::Usage("exactly one of --endpoint and --tile is required".into())),
    };
    writeln!(log, "{}", serde_json::to_string(&eval)?)?;
    Ok(eval)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineSummary {
    pub posterior: PosteriorSummary,
    pub prior: PriorHyperparams,
    pub proposal_scales: (f64, f64),
    pub observations: usize,
    pub positives: usize,
}

pub fn write_posterior_csv<W: Write>(run: &PosteriorRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "tau", "tau_t", "log_posterior"])?;
    for s in &run.samples {
        w.write_record([s.iteration.to_string(), s.tau.to_string(), s.tau_t.to_string(), s.log_posterior.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_refine(args: &RefineArgs, log: &mut impl Write) -> Result<PathBuf> {
    let spec = args.grid.spec()?;
    let nominal = RiskParams::isotropic(args.sigma_xy, args.sigma_t)?.with_p0(args.p0)?;
    let centered = PriorHyperparams::centered_on(&nominal);
    let prior = PriorHyperparams::new(
        args.alpha.unwrap_or(centered.alpha),
        args.beta.unwrap_or(centered.beta),
        args.alpha_t.unwrap_or(centered.alpha_t),
        args.beta_t.unwrap_or(centered.beta_t),
    )?;
    let mcmc = McmcConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        thin: args.thin,
        proposal_scale: args.proposal_scale,
        ..McmcConfig::default()
    };
    mcmc.validate().map_err(|e| Error::Usage(e.to_string()))?;

    let mut out = OutputDir::create(&args.out, "refine", args, Some(args.seed))?;
    let mut patients = Vec::with_capacity(args.patients.len());
    for p in &args.patients {
        let bytes = out.input(p)?;
        patients.push(discretize(&read_path_csv(&bytes[..])?, &spec)?);
    }
    let people = read_observations_csv(&out.input(&args.observations)?[..])?;
    let mut observations = Vec::with_capacity(people.len());
    for p in &people {
        let traj = discretize(&p.path, &spec)?.with_person_id(p.person_id.clone());
        if traj.is_empty() {
            return Err(Error::Format(format!("person {} covers no grid tick", p.person_id)));
        }
        observations.push(TestObservation::new(traj, p.positive)?);
    }
    let patient_cells: Vec<_> = patients.iter().flat_map(|t| t.cells().iter().copied()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let run = sample_posterior(&observations, &patient_cells, &prior, args.p0, &mcmc, &mut rng)?;
    let summary = RefineSummary {
        posterior: PosteriorSummary::new(&run),
        prior,
        proposal_scales: run.proposal_scales,
        observations: observations.len(),
        positives: observations.iter().filter(|o| o.outcome).count(),
    };

    let mut buf = Vec::new();
    write_posterior_csv(&run, BufWriter::new(&mut buf))?;
    out.write("posterior.csv", &buf)?;
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    out.write("summary.json", &json)?;
    let map = refined_risk_map(&run.samples, &patients, &spec, args.p0, args.eps)?;
    let tile_path = out.write(&tile_file_name(args.map_version), &tile::encode(&map))?;
    writeln!(
        log,
        "tau {:.4} [{:.4}, {:.4}], tau_t {:.4e} [{:.4e}, {:.4e}], acceptance {:.2} -> {}",
        summary.posterior.tau.mean,
        summary.posterior.tau.ci90_low,
        summary.posterior.tau.ci90_high,
        summary.posterior.tau_t.mean,
        summary.posterior.tau_t.ci90_low,
        summary.posterior.tau_t.ci90_high,
        run.acceptance_rate,
        tile_path.display()
    )?;
    out.finish()?;
    Ok(tile_path)
}

pub fn run(cli: Cli, log: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, log).map(drop),
        Command::Roc(a) => cmd_roc(&a, log).map(drop),
        Command::BuildMap(a) => cmd_build_map(&a, log).map(drop),
        Command::Serve(a) => cmd_serve(&a, log),
        Command::Evaluate(a) => cmd_evaluate(&a, log).map(drop),
        Command::Refine(a) => cmd_refine(&a, log).map(drop),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I, log: &mut impl Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    run(cli, log)
}
