//! Subcommands of the `courtlift` binary, usable as a library from tests.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use courtlift::dataio::{read_dataset, round_robin_folds, split, write_dataset, Dataset};
use courtlift::experiment::{noise_sweep, run_experiment, ExperimentConfig, Method, SweepRow};
use courtlift::metrics::{height_histogram, AggregateReport, EvalReport};
use courtlift::predictors::{PredictorKind, PredictorSpec};
use courtlift::reconstruct::{reconstruct_from_height, BASKETBALL_DIAMETER_M};
use courtlift::synth::{generate_dataset, ArenaSpec, BallSample, HeightDistKind, HeightDistSpec};
use courtlift::CameraCalibration;

pub const THREADS_ENV: &str = "COURTLIFT_THREADS";

/// Edges of the height histogram printed by `synth`.
const HIST_EDGES: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0];

#[derive(Debug, Parser)]
#[command(name = "courtlift", version, about = "Ball 3D localization from pixel height")]
pub struct Cli {
    /// Worker threads (0 or unset: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Synth(SynthArgs),
    /// Predict, reconstruct and score a dataset over k seeded repeats.
    Evaluate(EvaluateArgs),
    /// Reconstruct a single ball from a calibration file, a pixel and a height.
    Reconstruct(ReconstructArgs),
    /// Evaluate over a grid of predictor noise levels.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistArg {
    DeepsportLike,
    BallisticLike,
    Uniform,
}

impl From<DistArg> for HeightDistKind {
    fn from(d: DistArg) -> Self {
        match d {
            DistArg::DeepsportLike => HeightDistKind::DeepsportLike,
            DistArg::BallisticLike => HeightDistKind::BallisticLike,
            DistArg::Uniform => HeightDistKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Oracle,
    Gaussian,
    HeavyTailed,
}

impl From<KindArg> for PredictorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Oracle => PredictorKind::Oracle,
            KindArg::Gaussian => PredictorKind::Gaussian,
            KindArg::HeavyTailed => PredictorKind::HeavyTailed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Height,
    Diameter,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Height => Method::Height,
            MethodArg::Diameter => Method::Diameter,
        }
    }
}

/// Synthetic scene options shared by `synth` and the `--synth` data source.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_arenas: u32,
    #[arg(long, value_enum, default_value_t = DistArg::DeepsportLike)]
    pub dist: DistArg,
    /// Override the probability of a ball at or above 3 m.
    #[arg(long)]
    pub p_above_3m: Option<f64>,
    /// Arena spec JSON; missing fields take defaults.
    #[arg(long)]
    pub arena: Option<PathBuf>,
}

impl SceneArgs {
    fn specs(&self) -> anyhow::Result<(ArenaSpec, HeightDistSpec)> {
        let arena = match &self.arena {
            Some(p) => read_json(p)?,
            None => ArenaSpec::default(),
        };
        let mut dist = HeightDistSpec::of_kind(self.dist.into());
        if let Some(p) = self.p_above_3m {
            dist.p_above_3m = p;
        }
        Ok((arena, dist))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of arena-disjoint folds.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=26))]
    pub folds: u32,
    #[command(flatten)]
    pub scene: SceneArgs,
}

/// Where samples come from: a dataset file or a fresh synthetic set.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Generate this many synthetic samples instead of reading a file.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub synth: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictorArgs {
    /// Predictor spec JSON; overrides the flags below.
    #[arg(long)]
    pub predictor: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Oracle)]
    pub kind: KindArg,
    /// Noise scale (pixels for height, relative for diameter).
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = 3.0)]
    pub nu: f64,
    /// Calibrate the noise scale to this mean absolute error.
    #[arg(long)]
    pub target_mae: Option<f64>,
}

impl PredictorArgs {
    fn spec(&self, seed: u64) -> anyhow::Result<PredictorSpec> {
        let spec = match &self.predictor {
            Some(p) => read_json(p)?,
            None => PredictorSpec {
                kind: self.kind.into(),
                sigma: self.sigma,
                nu: self.nu,
                target_mae: self.target_mae,
                seed,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Evaluate only this fold's arenas.
    #[arg(long)]
    pub test_fold: Option<String>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Height)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = BASKETBALL_DIAMETER_M)]
    pub ball_diameter: f64,
    /// Output prefix; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep per-sample errors in the JSON report.
    #[arg(long)]
    pub per_sample: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub cal: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y: f64,
    /// Pixel height of the ball above its ground projection.
    #[arg(long, allow_negative_numbers = true)]
    pub h: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub test_fold: Option<String>,
    /// Comma-separated noise levels (mean absolute error); 0 is the oracle.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = KindArg::Gaussian)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 3.0)]
    pub nu: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Height)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Anything that went wrong while running (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

/// Name of an error's variant, e.g. `GroundIntersectionFailed`.
pub fn error_name<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let end = dbg.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(dbg.len());
    dbg[..end].to_string()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs `f` on a pool with `threads` workers, or on the global pool for
/// `None` / `Some(0)`.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> anyhow::Result<T> {
    match threads {
        Some(n) if n > 0 => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        _ => Ok(f()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    with_threads(cli.threads, move || {
        let mut stdout = std::io::stdout().lock();
        match cli.command {
            Command::Synth(a) => cmd_synth(&a, &mut stdout),
            Command::Evaluate(a) => cmd_evaluate(&a, &mut stdout),
            Command::Reconstruct(a) => cmd_reconstruct(&a, &mut stdout),
            Command::Sweep(a) => cmd_sweep(&a, &mut stdout),
        }
    })?
}

fn synth_dataset(n: u64, seed: u64, folds: u32, scene: &SceneArgs) -> anyhow::Result<Dataset> {
    let (arena, dist) = scene.specs()?;
    let samples = generate_dataset(seed, n as usize, &arena, &dist, scene.n_arenas)?;
    Ok(Dataset::new(samples, round_robin_folds(scene.n_arenas, folds))?)
}

pub fn cmd_synth(args: &SynthArgs, out: &mut impl Write) -> Result<(), CliError> {
    let ds = synth_dataset(args.n, args.seed, args.folds, &args.scene)?;
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_dataset(&ds, BufWriter::new(file)).context("writing dataset")?;

    let heights: Vec<f64> = ds.samples.iter().map(|s| s.ball_3d.z).collect();
    let hist = height_histogram(&heights, &HIST_EDGES).map_err(anyhow::Error::from)?;
    let above = heights.iter().filter(|&&z| z >= 3.0).count();
    let report = (|| -> std::io::Result<()> {
        writeln!(
            out,
            "wrote {} samples from {} arenas in {} folds to {}",
            ds.samples.len(),
            args.scene.n_arenas,
            ds.folds.len(),
            args.out.display()
        )?;
        writeln!(out, "ball height histogram (m):")?;
        for (w, c) in hist.edges.windows(2).zip(&hist.counts) {
            writeln!(out, "  [{:.1}, {:.1})  {c}", w[0], w[1])?;
        }
        writeln!(out, "  >= {:.1}  {}", HIST_EDGES[HIST_EDGES.len() - 1], hist.overflow)?;
        writeln!(
            out,
            "at or above 3 m: {above} ({:.1}%)",
            100.0 * above as f64 / heights.len() as f64
        )
    })();
    report.context("writing summary")?;
    Ok(())
}

/// Samples to evaluate on, restricted to `test_fold` when given.
fn load_samples(
    source: &SourceArgs,
    scene: &SceneArgs,
    seed: u64,
    test_fold: Option<&str>,
) -> Result<Vec<BallSample>, CliError> {
    let ds = match (&source.dataset, source.synth) {
        (Some(path), None) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_dataset(BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(n)) => synth_dataset(n, seed, 3, scene)?,
        _ => return Err(CliError::Usage("give exactly one of --dataset or --synth".into())),
    };
    let Some(fold) = test_fold else {
        return Ok(ds.samples);
    };
    let (train, test) = split(&ds, fold).map_err(anyhow::Error::from)?;
    let leaked = test.samples.iter().any(|s| train.fold_of(s.arena_id).is_some());
    if leaked {
        return Err(anyhow!("fold {fold:?} shares arenas with the training folds").into());
    }
    if test.samples.is_empty() {
        return Err(anyhow!("fold {fold:?} has no samples").into());
    }
    Ok(test.samples)
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    config: &'a ExperimentConfig,
    aggregate: &'a AggregateReport,
    repeats: &'a [EvalReport],
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let predictor = args.predictor.spec(args.seed)?;
    if !(args.ball_diameter > 0.0) {
        return Err(CliError::Usage(format!(
            "--ball-diameter must be positive, got {}",
            args.ball_diameter
        )));
    }
    let samples = load_samples(&args.source, &args.scene, args.seed, args.test_fold.as_deref())?;
    let cfg = ExperimentConfig {
        ball_diameter_m: args.ball_diameter,
        ..ExperimentConfig::new(args.method.into(), predictor, args.repeats)
    };
    let (mut reports, aggregate) = run_experiment(&samples, &cfg).map_err(anyhow::Error::from)?;
    if !args.per_sample {
        for r in &mut reports {
            r.per_sample_errors = None;
        }
    }

    let json = serde_json::to_string_pretty(&EvaluateReport {
        config: &cfg,
        aggregate: &aggregate,
        repeats: &reports,
    })
    .map_err(anyhow::Error::from)?;
    let csv = aggregate.to_csv();
    write_file(&with_ext(&args.out, "json"), &(json + "\n"))?;
    write_file(&with_ext(&args.out, "csv"), &csv)?;
    write!(out, "{csv}").context("writing summary")?;
    Ok(())
}

pub fn cmd_reconstruct(args: &ReconstructArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cal: CameraCalibration = read_json(&args.cal)?;
    let violations = cal.validate();
    if !violations.is_empty() {
        return Err(anyhow!("invalid calibration: {violations:?}").into());
    }
    let px = courtlift::ImagePoint::new(args.x, args.y);
    let rec = reconstruct_from_height(&cal, &px, args.h)
        .map_err(|e| anyhow!("{}: {e}", error_name(&e)))?;
    let json = serde_json::to_string_pretty(&rec).map_err(anyhow::Error::from)?;
    writeln!(out, "{json}").context("writing result")?;
    Ok(())
}

/// Header and one row per noise level.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("level,n_failed");
    let metrics: Vec<&str> = rows
        .first()
        .map(|r| r.report.rows().into_iter().map(|(name, _)| name).collect())
        .unwrap_or_default();
    for m in &metrics {
        out.push_str(&format!(",{m}_mean,{m}_std"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{}", row.level, row.report.n_failed.mean));
        for (name, m) in row.report.rows() {
            // mae_px is absent at the oracle level of a diameter sweep.
            if metrics.contains(&name) {
                out.push_str(&format!(",{},{}", m.mean, m.std));
            }
        }
        out.push('\n');
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut impl Write) -> Result<(), CliError> {
    if args.grid.is_empty() {
        return Err(CliError::Usage("--grid needs at least one level".into()));
    }
    if let Some(bad) = args.grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(CliError::Usage(format!("noise levels must be finite and >= 0, got {bad}")));
    }
    let samples = load_samples(&args.source, &args.scene, args.seed, args.test_fold.as_deref())?;
    let rows = noise_sweep(
        &samples,
        args.method.into(),
        args.kind.into(),
        args.nu,
        &args.grid,
        args.repeats,
        args.seed,
    )
    .map_err(anyhow::Error::from)?;
    let csv = sweep_csv(&rows);
    let json = serde_json::to_string_pretty(&rows).map_err(anyhow::Error::from)?;
    write_file(&with_ext(&args.out, "csv"), &csv)?;
    write_file(&with_ext(&args.out, "json"), &(json + "\n"))?;
    write!(out, "{csv}").context("writing summary")?;
    Ok(())
}

/// Rejects configurations clap cannot express.
pub fn check_usage(cli: &Cli) -> Result<(), CliError> {
    let scene = match &cli.command {
        Command::Synth(a) => Some(&a.scene),
        Command::Evaluate(a) => Some(&a.scene),
        Command::Sweep(a) => Some(&a.scene),
        Command::Reconstruct(_) => None,
    };
    match scene.and_then(|s| s.p_above_3m) {
        Some(p) if !(0.0..=1.0).contains(&p) => {
            Err(CliError::Usage(format!("--p-above-3m must lie in [0, 1], got {p}")))
        }
        _ => Ok(()),
    }
}
