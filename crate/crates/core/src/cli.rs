//! Command-line front end. Every subcommand reads and writes plain files
//! (Matrix JSON, model JSON, CSV) and records a manifest that `rerun` can
//! replay.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::benchgen::{appendix_b_matrix, make_dataset, random_stable_system, DatasetSplit, Sequence, SystemSpec};
use crate::error::Error;
use crate::matrix::Matrix;
use crate::metrics::{msvr, nsfe, nssr, MetricReport};
use crate::ortho::{nearest_orthogonal, OrthoMethod};
use crate::schur::{eigenvalues, schur_decompose, spectrum_of, SchurForm};
use crate::stable::project_state_matrix;
use crate::sysid::{dataset_nmse, initial_from_model, initial_model, train, Method, StateSpaceModel, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e {
                Error::NoConvergence { .. } | Error::SchurNoConvergence { .. } | Error::Singular { .. } => EXIT_NUMERIC,
                Error::NonFiniteLoss { .. } => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(Error::NonFiniteLoss { epoch, method, msvr }) => write!(
                f,
                "training diverged: non-finite loss at epoch {epoch} (method {method}, msvr {msvr:e}); last good epoch {}",
                epoch.saturating_sub(1)
            ),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "schurss", version, about = "Schur-stable projection and state-space identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Real Schur decomposition of a matrix
    Decompose(DecomposeArgs),
    /// Nearest Schur-stable matrix by block-wise projection
    Project(ProjectArgs),
    /// Projection benchmark on the four generated matrix families
    BenchProj(BenchArgs),
    /// Generate a random stable system and a dataset from it
    Generate(GenerateArgs),
    /// Fit a state-space model to a generated dataset
    Train(TrainArgs),
    /// Nearest orthogonal matrix
    NearestOrthogonal(OrthoArgs),
    /// Error metrics between matrix files
    Metrics(MetricsArgs),
    /// Replay a run from its manifest
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Manifest path; defaults to `<output>.manifest.json`
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub case: u8,
    #[arg(long)]
    pub n: usize,
    #[arg(long, env = "SCHURSS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Add a wall-clock column; timing is never reproducible
    #[arg(long)]
    #[serde(default)]
    pub timing: bool,
    #[arg(long)]
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    pub nx: usize,
    #[arg(long, default_value_t = 3)]
    pub nu: usize,
    #[arg(long, default_value_t = 3)]
    pub ny: usize,
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seqs: usize,
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gbn_p: f64,
    #[arg(long, default_value_t = 0.99)]
    pub eig_bound: f64,
    #[arg(long, env = "SCHURSS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with TrainConfig fields; explicit flags take precedence
    #[arg(long)]
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub method: Option<Method>,
    #[arg(long)]
    #[serde(default)]
    pub epochs: Option<usize>,
    /// Epochs without improvement before stopping; unlimited when absent
    #[arg(long)]
    #[serde(default)]
    pub patience: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub rho_r: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub eps_reg: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub min_delta: Option<f64>,
    /// Model order; read from system.json when absent
    #[arg(long)]
    #[serde(default)]
    pub nx: Option<usize>,
    /// Start from this model file instead of a seeded random model
    #[arg(long)]
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[arg(long, env = "SCHURSS_SEED")]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OrthoArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "svd", value_parser = parse_ortho)]
    pub method: OrthoMethod,
    /// Iteration count for the iterative method
    #[arg(long)]
    #[serde(default)]
    pub iters: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

fn parse_ortho(s: &str) -> std::result::Result<OrthoMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// Reference and candidate matrices
    #[arg(long, num_args = 2, value_names = ["A", "X"])]
    #[serde(default)]
    pub nsfe: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 2, value_names = ["A", "X"])]
    #[serde(default)]
    pub nssr: Option<Vec<PathBuf>>,
    #[arg(long, value_name = "A")]
    #[serde(default)]
    pub msvr: Option<PathBuf>,
    /// Emit `nsfe,nssr,msvr` as CSV instead of JSON
    #[arg(long)]
    #[serde(default)]
    pub csv: bool,
    #[arg(long)]
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Project(a) => cmd_project(&a),
        Command::BenchProj(a) => cmd_bench_proj(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::NearestOrthogonal(a) => cmd_nearest_orthogonal(&a),
        Command::Metrics(a) => cmd_metrics(&a),
        Command::Rerun(a) => cmd_rerun(&a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("cannot parse {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn sibling_manifest(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_manifest<C: Serialize>(
    path: Option<PathBuf>,
    subcommand: &str,
    config: &C,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
) -> CliResult<()> {
    let Some(path) = path else { return Ok(()) };
    let m = RunManifest {
        subcommand: subcommand.to_string(),
        config: serde_json::to_value(config).expect("serializable"),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
    };
    write_json(&path, &m)
}

fn print_line(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn spectrum_json(form: &SchurForm) -> CliResult<serde_json::Value> {
    let s = spectrum_of(form)?;
    Ok(s.eigenvalues.iter().map(|z| json!([z.re, z.im])).collect())
}

/// `None` where a metric is undefined, e.g. against a zero reference.
fn optional(r: crate::Result<f64>) -> CliResult<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_decompose(args: &DecomposeArgs) -> CliResult<()> {
    let a: Matrix = read_json(&args.input)?;
    a.ensure_square("decompose input")?;
    let form = schur_decompose(&a)?;
    write_json(&args.output, &form)?;
    let rec = form.reconstruct();
    let err = if a.frobenius_sq() == 0.0 { rec.frobenius_sq() } else { nsfe(&a, &rec)? };
    print_line(&json!({
        "nsfe": err,
        "orthogonality": form.z.orthogonality_defect(),
        "eigenvalues": spectrum_json(&form)?,
    }));
    let manifest = args.manifest.clone().or_else(|| Some(sibling_manifest(&args.output)));
    write_manifest(manifest, "decompose", args, None, vec![args.output.clone()])
}

pub fn cmd_project(args: &ProjectArgs) -> CliResult<()> {
    let a: Matrix = read_json(&args.input)?;
    a.ensure_square("project input")?;
    let (a_hat, _) = project_state_matrix(&a)?;
    let report = json!({
        "a_hat": a_hat,
        "nsfe": optional(nsfe(&a, &a_hat))?,
        "nssr": optional(nssr(&a, &a_hat))?,
        "msvr": msvr(&a_hat)?,
    });
    let mut outputs = Vec::new();
    if let Some(out) = &args.output {
        write_json(out, &a_hat)?;
        outputs.push(out.clone());
    }
    print_line(&report);
    let manifest = args.manifest.clone().or_else(|| args.output.as_deref().map(sibling_manifest));
    write_manifest(manifest, "project", args, None, outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub trial: usize,
    pub case: u8,
    pub n: usize,
    pub seed: u64,
    pub nsfe: Option<f64>,
    pub nssr: Option<f64>,
    pub msvr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Seed of trial `k` in a benchmark started from `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

pub fn bench_rows(case: u8, n: usize, seed: u64, trials: usize, timing: bool) -> CliResult<Vec<BenchRow>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let s = trial_seed(seed, trial);
            let a = appendix_b_matrix(case, n, s)?;
            let start = Instant::now();
            let (a_hat, _) = project_state_matrix(&a)?;
            let wall = start.elapsed().as_secs_f64() * 1e3;
            Ok(BenchRow {
                trial,
                case,
                n,
                seed: s,
                nsfe: optional(nsfe(&a, &a_hat))?,
                nssr: optional(nssr(&a, &a_hat))?,
                msvr: msvr(&a_hat)?,
                wall_ms: timing.then_some(wall),
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(format!("csv: {e}"))
}

pub fn cmd_bench_proj(args: &BenchArgs) -> CliResult<()> {
    if args.n < 2 {
        return Err(CliError::Usage(format!("--n must be at least 2, got {}", args.n)));
    }
    let rows = bench_rows(args.case, args.n, args.seed, args.trials, args.timing)?;
    let bytes = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string(&rows).expect("serializable");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["trial", "case", "n", "seed", "nsfe", "nssr", "msvr"];
            if args.timing {
                header.push("wall_ms");
            }
            w.write_record(&header).map_err(csv_err)?;
            for r in &rows {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let mut rec = vec![
                    r.trial.to_string(),
                    r.case.to_string(),
                    r.n.to_string(),
                    r.seed.to_string(),
                    opt(r.nsfe),
                    opt(r.nssr),
                    r.msvr.to_string(),
                ];
                if let Some(t) = r.wall_ms {
                    rec.push(t.to_string());
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    let mut outputs = Vec::new();
    match &args.output {
        Some(p) => {
            write_bytes(p, &bytes)?;
            outputs.push(p.clone());
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    let manifest = args.manifest.clone().or_else(|| args.output.as_deref().map(sibling_manifest));
    write_manifest(manifest, "bench-proj", args, Some(args.seed), outputs)
}

fn write_partition(path: &Path, seqs: &[Sequence]) -> CliResult<()> {
    let (nu, ny) = (seqs[0].u.cols(), seqs[0].y.cols());
    let multi = seqs.len() > 1;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::new();
    if multi {
        header.push("seq".into());
    }
    header.extend((1..=nu).map(|i| format!("u_{i}")));
    header.extend((1..=ny).map(|i| format!("y_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (s_idx, s) in seqs.iter().enumerate() {
        for k in 0..s.u.rows() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if multi {
                rec.push(s_idx.to_string());
            }
            rec.extend(s.u.row(k).iter().chain(s.y.row(k)).map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Reads `u_*`/`y_*` columns; an optional `seq` column splits the rows into
/// separate sequences.
pub fn read_partition(path: &Path) -> CliResult<Vec<Sequence>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let seq_col = header.iter().position(|h| h == "seq");
    let u_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("u_")).collect();
    let y_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("y_")).collect();
    if u_cols.is_empty() || y_cols.is_empty() {
        return Err(CliError::Usage(format!("{}: expected u_* and y_* columns", path.display())));
    }
    let parse = |s: &str| -> CliResult<f64> {
        s.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{}: bad number {s:?}", path.display())))
    };
    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let key = seq_col.map(|i| rec[i].to_string()).unwrap_or_default();
        if groups.last().map(|g| g.0 != key).unwrap_or(true) {
            groups.push((key, Vec::new(), Vec::new()));
        }
        let g = groups.last_mut().expect("pushed");
        for &i in &u_cols {
            g.1.push(parse(&rec[i])?);
        }
        for &i in &y_cols {
            g.2.push(parse(&rec[i])?);
        }
    }
    if groups.is_empty() {
        return Err(CliError::Usage(format!("{}: no data rows", path.display())));
    }
    groups
        .into_iter()
        .map(|(_, u, y)| {
            let rows = u.len() / u_cols.len();
            Ok(Sequence {
                u: Matrix::new(rows, u_cols.len(), u)?,
                y: Matrix::new(rows, y_cols.len(), y)?,
            })
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> CliResult<(DatasetSplit, Option<StateSpaceModel>)> {
    let train = read_partition(&dir.join("train.csv"))?;
    let validation = read_partition(&dir.join("val.csv"))?;
    let test = read_partition(&dir.join("test.csv"))?;
    let sys_path = dir.join("system.json");
    let system = if sys_path.exists() {
        let m: StateSpaceModel = read_json(&sys_path)?;
        m.validate()?;
        Some(m)
    } else {
        None
    };
    let (noise_sigma, gbn_p) = match read_json::<RunManifest>(&dir.join("manifest.json")) {
        Ok(m) => (
            m.config["sigma"].as_f64().unwrap_or(f64::NAN),
            m.config["gbn_p"].as_f64().unwrap_or(f64::NAN),
        ),
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok((
        DatasetSplit {
            train,
            validation,
            test,
            noise_sigma,
            gbn_p,
        },
        system,
    ))
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let spec = SystemSpec {
        n_x: args.nx,
        n_u: args.nu,
        n_y: args.ny,
        eig_bound: args.eig_bound,
        seed: args.seed,
    };
    let system = random_stable_system(&spec)?;
    // the dataset stream is kept apart from the system stream
    let data = make_dataset(&system, args.samples, args.seqs, args.sigma, args.gbn_p, args.seed ^ 0x5eed_da7a)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut outputs = Vec::new();
    for (name, part) in [("train.csv", &data.train), ("val.csv", &data.validation), ("test.csv", &data.test)] {
        let p = args.out.join(name);
        write_partition(&p, part)?;
        outputs.push(p);
    }
    let sys = args.out.join("system.json");
    write_json(&sys, &system)?;
    outputs.push(sys);
    print_line(&json!({
        "out": args.out,
        "n_x": args.nx,
        "n_u": args.nu,
        "n_y": args.ny,
        "max_modulus": eigenvalues(&system.a)?.max_modulus(),
    }));
    write_manifest(Some(args.out.join("manifest.json")), "generate", args, Some(args.seed), outputs)
}

/// Flags override the config file, which overrides the defaults.
pub fn resolve_train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if args.patience.is_some() {
        cfg.patience = args.patience;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.rho_r {
        cfg.rho_r = v;
    }
    if let Some(v) = args.eps_reg {
        cfg.eps_reg = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = args.min_delta {
        cfg.min_delta = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !(cfg.lr > 0.0 && cfg.rho_r >= 0.0 && cfg.eps_reg >= 0.0 && cfg.min_delta >= 0.0) {
        return Err(CliError::Usage("lr must be positive; rho-r, eps-reg and min-delta nonnegative".into()));
    }
    Ok(cfg)
}

impl clap::ValueEnum for Method {
    fn value_variants<'a>() -> &'a [Self] {
        &Method::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Method::SchurProj => "schur-proj",
            Method::SchurBuilt => "schur-built",
            Method::Regularized => "regularized",
        }))
    }
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = resolve_train_config(args)?;
    run_train(args, cfg)
}

fn run_train(args: &TrainArgs, cfg: TrainConfig) -> CliResult<()> {
    let (data, system) = load_dataset(&args.data)?;
    let n_u = data.train[0].u.cols();
    let n_y = data.train[0].y.cols();
    let init = match (&args.init, args.nx, &system) {
        (Some(p), _, _) => initial_from_model(&read_json::<StateSpaceModel>(p)?, cfg.method)?,
        (None, Some(n), _) => initial_model(n, n_u, n_y, cfg.seed)?,
        (None, None, Some(s)) => initial_model(s.n_x(), n_u, n_y, cfg.seed)?,
        (None, None, None) => {
            return Err(CliError::Usage("--nx or --init is required when the dataset has no system.json".into()))
        }
    };
    if (init.0.n_u(), init.0.n_y()) != (n_u, n_y) || args.nx.is_some_and(|n| n != init.0.n_x()) {
        return Err(CliError::Usage("initial model shape does not match the dataset or --nx".into()));
    }
    let n_x = init.0.n_x();
    let run = train(&data, &cfg, &init)?;

    write_json(&args.out, &run.best_model)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_loss", "msvr"]).map_err(csv_err)?;
    for h in &run.history {
        w.write_record([
            h.epoch.to_string(),
            h.train_loss.to_string(),
            h.val_loss.to_string(),
            h.msvr.to_string(),
        ])
        .map_err(csv_err)?;
    }
    write_bytes(&args.history, &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;

    let test_nssr = match &system {
        Some(s) if s.n_x() == n_x => optional(nssr(&s.a, &run.best_model.a))?,
        _ => None,
    };
    print_line(&json!({
        "method": cfg.method,
        "epochs_run": run.epochs_run,
        "stop_reason": run.stop_reason,
        "best_epoch": run.best_epoch,
        "best_val_loss": run.best_val_loss,
        "val_nmse": optional(dataset_nmse(&run.best_model, &data.validation))?,
        "test_nmse": optional(dataset_nmse(&run.best_model, &data.test))?,
        "test_nssr": test_nssr,
        "msvr": msvr(&run.best_model.a)?,
    }));
    let resolved = json!({ "args": args, "train_config": cfg });
    let manifest = args.manifest.clone().or_else(|| Some(sibling_manifest(&args.out)));
    write_manifest(manifest, "train", &resolved, Some(cfg.seed), vec![args.out.clone(), args.history.clone()])
}

pub fn cmd_nearest_orthogonal(args: &OrthoArgs) -> CliResult<()> {
    let z: Matrix = read_json(&args.input)?;
    let p = nearest_orthogonal(&z, args.method, args.iters)?;
    let mut outputs = Vec::new();
    if let Some(out) = &args.output {
        write_json(out, &p.z_hat)?;
        outputs.push(out.clone());
    }
    print_line(&serde_json::to_value(&p).expect("serializable"));
    let manifest = args.manifest.clone().or_else(|| args.output.as_deref().map(sibling_manifest));
    write_manifest(manifest, "nearest-orthogonal", args, None, outputs)
}

pub fn cmd_metrics(args: &MetricsArgs) -> CliResult<()> {
    if args.nsfe.is_none() && args.nssr.is_none() && args.msvr.is_none() {
        return Err(CliError::Usage("metrics needs at least one of --nsfe, --nssr, --msvr".into()));
    }
    let pair = |v: &Vec<PathBuf>| -> CliResult<(Matrix, Matrix)> { Ok((read_json(&v[0])?, read_json(&v[1])?)) };
    let mut report = MetricReport::default();
    if let Some(v) = &args.nsfe {
        let (a, x) = pair(v)?;
        report.nsfe = Some(nsfe(&a, &x)?);
    }
    if let Some(v) = &args.nssr {
        let (a, x) = pair(v)?;
        report.nssr = Some(nssr(&a, &x)?);
    }
    if let Some(p) = &args.msvr {
        report.msvr = Some(msvr(&read_json::<Matrix>(p)?)?);
    }
    if args.csv {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        println!("nsfe,nssr,msvr");
        println!("{},{},{}", f(report.nsfe), f(report.nssr), f(report.msvr));
    } else {
        print_line(&serde_json::to_value(report).expect("serializable"));
    }
    write_manifest(args.manifest.clone(), "metrics", args, None, Vec::new())
}

fn config_of<T: DeserializeOwned>(m: &RunManifest) -> CliResult<T> {
    serde_json::from_value(m.config.clone()).map_err(|e| CliError::Usage(format!("manifest config: {e}")))
}

pub fn cmd_rerun(args: &RerunArgs) -> CliResult<()> {
    let m: RunManifest = read_json(&args.manifest)?;
    match m.subcommand.as_str() {
        "decompose" => cmd_decompose(&config_of(&m)?),
        "project" => cmd_project(&config_of(&m)?),
        "bench-proj" => cmd_bench_proj(&config_of(&m)?),
        "generate" => cmd_generate(&config_of(&m)?),
        "train" => {
            #[derive(Deserialize)]
            struct Saved {
                args: TrainArgs,
                train_config: TrainConfig,
            }
            // the resolved configuration is replayed, so a changed config file
            // or environment cannot alter the run
            let saved: Saved = config_of(&m)?;
            run_train(&saved.args, saved.train_config)
        }
        "nearest-orthogonal" => cmd_nearest_orthogonal(&config_of(&m)?),
        "metrics" => cmd_metrics(&config_of(&m)?),
        other => Err(CliError::Usage(format!("unknown subcommand {other:?} in manifest"))),
    }
}
