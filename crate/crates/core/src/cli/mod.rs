//! The `kinetics` command-line tool.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 simulation failure,
//! 64 malformed command line. Nothing is written unless the run succeeds.

pub mod csv;
pub mod plot;
pub mod sweep_file;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cme::{
    build_generator, enumerate_states, oracle_integrator, solve_with_generator, stationary_distribution, CmeError,
    ProbabilityVector, DEFAULT_STATE_LIMIT,
};
use crate::ensemble::{derive_run_seed, parameter_sweep, run_ensemble, SweepConfig, SweepError};
use crate::hybrid::HybridConfig;
use crate::model::{parse_model, ReactionNetwork};
use crate::ode::IntegratorConfig;
use crate::simulation::Method;
use crate::stochastic::{ApproxMethod, DEFAULT_EPSILON};
use crate::trajectory::Grid;

pub const WORKERS_ENV: &str = "KINETICS_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "kinetics", version, about = "Simulate mass-action reaction networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate one trajectory or an ensemble.
    Simulate(SimulateArgs),
    /// Run ensembles over a grid of parameter values.
    Sweep(SweepArgs),
    /// Solve the master equation on a truncated state space.
    Cme(CmeArgs),
    /// Re-run the command recorded in a manifest and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Ssa,
    Tau,
    Cle,
    Ode,
    Hybrid,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodName,
    #[arg(long = "t-end")]
    pub t_end: f64,
    /// Number of evenly spaced sample times, including 0 and the end time.
    #[arg(long)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Error control for adaptive tau-leaping.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fixed step for tau-leaping (switches off adaptation) or the CLE.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Hybrid: reactions with a reactant below this amount are slow.
    #[arg(long = "theta-x")]
    pub theta_x: Option<f64>,
    /// Hybrid: reactions with propensity below this rate are slow.
    #[arg(long = "theta-a")]
    pub theta_a: Option<f64>,
    /// Hybrid: repartition interval (default t_end / 100).
    #[arg(long)]
    pub repartition: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Worker threads for ensembles (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sweep: PathBuf,
    /// Overrides `t_end` in the sweep file.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Overrides `samples` in the sweep file.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["at", "stationary"])))]
pub struct CmeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Per-species upper bounds; a single value applies to every species.
    #[arg(long, value_delimiter = ',', required = true)]
    pub cap: Vec<u64>,
    /// Transient distribution at this time.
    #[arg(long)]
    pub at: Option<f64>,
    /// Stationary distribution of the truncated chain.
    #[arg(long)]
    pub stationary: bool,
    #[arg(long = "state-limit", default_value_t = DEFAULT_STATE_LIMIT)]
    pub state_limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write the outputs here instead of their recorded locations.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

/// Method choice plus options, as given on the command line or in a sweep file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    pub name: MethodName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repartition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
}

impl MethodOptions {
    pub fn new(name: MethodName) -> Self {
        Self {
            name,
            epsilon: None,
            tau: None,
            theta_x: None,
            theta_a: None,
            repartition: None,
            rtol: None,
            atol: None,
        }
    }

    pub fn named(name: &str) -> Result<Self, String> {
        MethodName::from_str(name, false)
            .map(Self::new)
            .map_err(|_| format!("unknown method `{name}` (expected ssa, tau, cle, ode or hybrid)"))
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        let slot = match key {
            "epsilon" => &mut self.epsilon,
            "tau" => &mut self.tau,
            "theta-x" | "theta_x" => &mut self.theta_x,
            "theta-a" | "theta_a" => &mut self.theta_a,
            "repartition" => &mut self.repartition,
            "rtol" => &mut self.rtol,
            "atol" => &mut self.atol,
            _ => return Err(format!("unknown method option `{key}`")),
        };
        *slot = Some(value);
        Ok(())
    }

    fn given(&self) -> Vec<&'static str> {
        [
            ("epsilon", self.epsilon),
            ("tau", self.tau),
            ("theta-x", self.theta_x),
            ("theta-a", self.theta_a),
            ("repartition", self.repartition),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|_| k))
        .collect()
    }

    fn integrator(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            rel_tol: self.rtol.unwrap_or(d.rel_tol),
            abs_tol: self.atol.unwrap_or(d.abs_tol),
            ..d
        }
    }

    pub fn build(&self) -> Result<Method, String> {
        let allowed: &[&str] = match self.name {
            MethodName::Ssa => &[],
            MethodName::Tau => &["epsilon", "tau"],
            MethodName::Cle => &["tau"],
            MethodName::Ode => &["rtol", "atol"],
            MethodName::Hybrid => &["theta-x", "theta-a", "repartition", "rtol", "atol"],
        };
        if let Some(bad) = self.given().into_iter().find(|k| !allowed.contains(k)) {
            let name = self
                .name
                .to_possible_value()
                .map(|v| v.get_name().to_string())
                .unwrap_or_default();
            return Err(format!("option `{bad}` does not apply to method {name}"));
        }
        let method = match self.name {
            MethodName::Ssa => Method::Ssa,
            MethodName::Tau => match (self.tau, self.epsilon) {
                (Some(_), Some(_)) => return Err("give either --tau or --epsilon, not both".into()),
                (Some(tau), None) => Method::Approx(ApproxMethod::TauFixed { tau }),
                (None, eps) => Method::Approx(ApproxMethod::TauAdaptive {
                    epsilon: eps.unwrap_or(DEFAULT_EPSILON),
                }),
            },
            MethodName::Cle => match self.tau {
                Some(tau) => Method::Approx(ApproxMethod::Cle { tau }),
                None => return Err("method cle needs --tau".into()),
            },
            MethodName::Ode => Method::Ode(self.integrator()),
            MethodName::Hybrid => {
                let d = HybridConfig::default();
                Method::Hybrid(HybridConfig {
                    amount_threshold: self.theta_x.unwrap_or(d.amount_threshold),
                    propensity_threshold: self.theta_a.unwrap_or(d.propensity_threshold),
                    repartition_interval: self.repartition,
                    integrator: self.integrator(),
                })
            }
        };
        method.validate().map_err(|e| e.to_string())?;
        Ok(method)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Input(_) => 1,
            CliError::Simulation(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Simulation(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line as given, program name excluded.
    pub argv: Vec<String>,
    pub cwd: String,
    pub model: FileRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<FileRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_seconds: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_file(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<(ReactionNetwork, FileRecord), CliError> {
    let text = read_file(path, "model")?;
    let network = parse_model(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((network, record(path, text.as_bytes())))
}

fn record(path: &Path, bytes: &[u8]) -> FileRecord {
    FileRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(bytes),
    }
}

fn write_outputs(files: &[(PathBuf, String)]) -> Result<Vec<FileRecord>, CliError> {
    files
        .iter()
        .map(|(path, body)| {
            fs::write(path, body).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
            Ok(record(path, body.as_bytes()))
        })
        .collect()
}

struct Context {
    argv: Vec<String>,
    env_workers: Option<String>,
    started: Instant,
}

impl Context {
    fn workers(&self, flag: Option<usize>) -> Result<usize, CliError> {
        let n = match &self.env_workers {
            Some(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
            None => match flag {
                Some(n) => n,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
        };
        if n == 0 {
            return Err(CliError::Usage("worker count must be at least 1".into()));
        }
        Ok(n)
    }

    fn manifest(&self, command: &str, model: FileRecord) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: self.argv.clone(),
            cwd: std::env::current_dir()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            model,
            sweep: None,
            method: None,
            seed: None,
            runs: None,
            workers: None,
            outputs: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    fn finish(
        &self,
        mut manifest: RunManifest,
        out: &Path,
        files: Vec<(PathBuf, String)>,
    ) -> Result<RunManifest, CliError> {
        manifest.outputs = write_outputs(&files)?;
        manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_outputs(&[(manifest_path(out), json + "\n")])?;
        for (path, _) in &files {
            println!("wrote {}", path.display());
        }
        Ok(manifest)
    }
}

/// Plot titles use the bare file name so replays from elsewhere match.
fn file_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn make_grid(t_end: f64, samples: usize) -> Result<Grid, CliError> {
    if samples == 0 {
        return Err(CliError::Input("--samples must be at least 1".into()));
    }
    Grid::uniform(t_end, samples).map_err(|e| CliError::Input(format!("invalid time grid: {e}")))
}

fn cmd_simulate(args: &SimulateArgs, ctx: &Context) -> Result<RunManifest, CliError> {
    let (network, model) = load_model(&args.model)?;
    let grid = make_grid(args.t_end, args.samples)?;
    if args.runs == 0 {
        return Err(CliError::Input("--runs must be at least 1".into()));
    }
    let options = MethodOptions {
        name: args.method,
        epsilon: args.epsilon,
        tau: args.tau,
        theta_x: args.theta_x,
        theta_a: args.theta_a,
        repartition: args.repartition,
        rtol: args.rtol,
        atol: args.atol,
    };
    let method = options.build().map_err(CliError::Input)?;
    let species = network.species_names();
    let title = format!("{} ({})", file_label(&args.model), method.tag());

    let mut manifest = ctx.manifest("simulate", model);
    let (table, svg) = if args.runs == 1 {
        let traj = method
            .simulate(&network, &grid, derive_run_seed(args.seed, 0))
            .map_err(|e| CliError::Simulation(e.to_string()))?;
        (
            csv::trajectory_csv(&traj, &species),
            plot::trajectory_svg(&title, &traj, &species),
        )
    } else {
        let workers = ctx.workers(args.workers)?;
        manifest.workers = Some(workers);
        let stats = run_ensemble(&network, &method, args.runs, &grid, args.seed, workers)
            .map_err(|e| CliError::Simulation(e.to_string()))?;
        (
            csv::statistics_csv(&stats, &species),
            plot::statistics_svg(&title, &stats, &species),
        )
    };
    manifest.method = Some(options);
    manifest.seed = Some(args.seed);
    manifest.runs = Some(args.runs);

    let mut files = vec![(args.out.clone(), table)];
    if let Some(p) = &args.plot {
        files.push((p.clone(), svg));
    }
    ctx.finish(manifest, &args.out, files)
}

fn cmd_sweep(args: &SweepArgs, ctx: &Context) -> Result<RunManifest, CliError> {
    let (network, model) = load_model(&args.model)?;
    let text = read_file(&args.sweep, "sweep file")?;
    let file =
        sweep_file::parse_sweep_file(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.sweep.display())))?;
    let t_end = args
        .t_end
        .or(file.t_end)
        .ok_or_else(|| CliError::Input("end time missing: give --t-end or `t_end` in the sweep file".into()))?;
    let samples = args
        .samples
        .or(file.samples)
        .ok_or_else(|| CliError::Input("sample count missing: give --samples or `samples` in the sweep file".into()))?;
    let grid = make_grid(t_end, samples)?;
    let runs = file.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Input("`runs` must be at least 1".into()));
    }
    let options = file
        .method
        .clone()
        .unwrap_or_else(|| MethodOptions::new(MethodName::Ssa));
    let method = options.build().map_err(CliError::Input)?;
    let seed = file.seed.unwrap_or(0);
    let workers = ctx.workers(args.workers)?;
    let config = SweepConfig {
        axes: file.axes,
        runs_per_point: runs,
        method,
        master_seed: seed,
        grid,
    };
    let table = parameter_sweep(&network, &config, workers).map_err(|e| match e {
        SweepError::Point { .. } => CliError::Simulation(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;

    let mut manifest = ctx.manifest("sweep", model);
    manifest.sweep = Some(record(&args.sweep, text.as_bytes()));
    manifest.method = Some(options);
    manifest.seed = Some(seed);
    manifest.runs = Some(runs);
    manifest.workers = Some(workers);
    let mut files = vec![(args.out.clone(), csv::sweep_csv(&table))];
    if let Some(p) = &args.plot {
        files.push((p.clone(), plot::sweep_svg(&file_label(&args.sweep), &table)));
    }
    ctx.finish(manifest, &args.out, files)
}

fn cmd_cme(args: &CmeArgs, ctx: &Context) -> Result<RunManifest, CliError> {
    let (network, model) = load_model(&args.model)?;
    let caps = match args.cap.len() {
        1 => vec![args.cap[0]; network.n_species()],
        _ => args.cap.clone(),
    };
    let input = |e: CmeError| CliError::Input(e.to_string());
    let space = enumerate_states(&network, &caps, args.state_limit).map_err(input)?;
    let generator = build_generator(&network, &space);
    let dist = match args.at {
        Some(t) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::Input(format!("--at must be a non-negative time, got {t}")));
            }
            let p0 = ProbabilityVector::point_mass(&space, &network.initial_amounts())
                .ok_or_else(|| CliError::Input("initial state lies outside the caps".into()))?;
            solve_with_generator(&generator, &p0, t, oracle_integrator())
                .map_err(|e| CliError::Simulation(e.to_string()))?
        }
        None => stationary_distribution(&space, &generator).map_err(|e| match e {
            CmeError::TooLarge { .. } => CliError::Input(e.to_string()),
            _ => CliError::Simulation(e.to_string()),
        })?,
    };
    let manifest = ctx.manifest("cme", model);
    let body = csv::distribution_csv(&space, &dist, &network.species_names());
    ctx.finish(manifest, &args.out, vec![(args.out.clone(), body)])
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn relocate(p: &Path, base: &Path, out_dir: Option<&Path>) -> PathBuf {
    match (out_dir, p.file_name()) {
        (Some(dir), Some(name)) => dir.join(name),
        _ => absolute(base, p),
    }
}

fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let text = read_file(&args.manifest, "manifest")?;
    let recorded: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.manifest.display())))?;
    let base = PathBuf::from(&recorded.cwd);
    let argv = std::iter::once("kinetics".to_string()).chain(recorded.argv.iter().cloned());
    let cli =
        Cli::try_parse_from(argv).map_err(|e| CliError::Input(format!("recorded command line is invalid: {e}")))?;
    let out_dir = args.out_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }

    let check_input = |path: &Path, rec: &FileRecord| -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        if sha256_hex(&bytes) != rec.sha256 {
            return Err(CliError::Input(format!(
                "{} changed since the manifest was written",
                path.display()
            )));
        }
        Ok(())
    };

    let ctx = Context {
        argv: recorded.argv.clone(),
        env_workers: None,
        started: Instant::now(),
    };
    let produced = match cli.command {
        Command::Simulate(mut a) => {
            a.model = absolute(&base, &a.model);
            check_input(&a.model, &recorded.model)?;
            a.out = relocate(&a.out, &base, out_dir);
            a.plot = a.plot.map(|p| relocate(&p, &base, out_dir));
            a.workers = recorded.workers.or(a.workers);
            cmd_simulate(&a, &ctx)?
        }
        Command::Sweep(mut a) => {
            a.model = absolute(&base, &a.model);
            a.sweep = absolute(&base, &a.sweep);
            check_input(&a.model, &recorded.model)?;
            if let Some(rec) = &recorded.sweep {
                check_input(&a.sweep, rec)?;
            }
            a.out = relocate(&a.out, &base, out_dir);
            a.plot = a.plot.map(|p| relocate(&p, &base, out_dir));
            a.workers = recorded.workers.or(a.workers);
            cmd_sweep(&a, &ctx)?
        }
        Command::Cme(mut a) => {
            a.model = absolute(&base, &a.model);
            check_input(&a.model, &recorded.model)?;
            a.out = relocate(&a.out, &base, out_dir);
            cmd_cme(&a, &ctx)?
        }
        Command::Replay(_) => return Err(CliError::Input("a manifest cannot record a replay".into())),
    };

    if produced.outputs.len() != recorded.outputs.len() {
        return Err(CliError::Simulation(
            "replay produced a different set of outputs".into(),
        ));
    }
    for (new, old) in produced.outputs.iter().zip(&recorded.outputs) {
        if new.sha256 != old.sha256 {
            return Err(CliError::Simulation(format!(
                "{} differs from the recorded output {}",
                new.path, old.path
            )));
        }
        println!("reproduced {}", new.path);
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 64 } else { 0 };
        }
    };
    let ctx = Context {
        argv: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        env_workers: std::env::var(WORKERS_ENV).ok(),
        started: Instant::now(),
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &ctx).map(drop),
        Command::Sweep(a) => cmd_sweep(a, &ctx).map(drop),
        Command::Cme(a) => cmd_cme(a, &ctx).map(drop),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
