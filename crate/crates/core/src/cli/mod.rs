//! The `cvrlab` command line.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::capacity::{max_users, tail_table, CapacityQuery, CapacityStatus};
use crate::error::{Error, Result};
use crate::lstm::LossKind;
use crate::metrics::write_reports;
use crate::predictors::{
    Arch, ModelBundle, NormMode, PredictorConfig, StreamStats, TargetMode, DEFAULT_HIDDEN, DEFAULT_HORIZON_MS,
};
use crate::seed::derive_seed;
use crate::sim::{self, ErrorSource, SimConfig};
use crate::textdoc::{fmt_f64, TextDoc};
use crate::trace::{
    export_csv, generate_synthetic, ingest_dir, split_streams, IngestOptions, SplitSpec, SynthMotion, SynthSpec, Trace,
    TraceStyle,
};
use crate::training::{evaluate, fit, make_windows_strided, write_training_log, TrainSpec};
use config::{sha256_file, splice_config, RunManifest};

// Stdout may be a closed pipe (`cvrlab capacity | head`); that is not an error.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cvrlab", version, about = "Head-motion prediction and edge re-rendering experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write synthetic head-motion trace CSVs.
    Gen(GenArgs),
    /// Fit a predictor on a directory of traces.
    Train(TrainArgs),
    /// Evaluate predictors on held-out traces.
    Eval(EvalArgs),
    /// Run the edge/cloud rendering simulation.
    Simulate(SimArgs),
    /// Print the overload-probability table and the maximum user count.
    Capacity(CapacityArgs),
    /// Merge earlier run outputs into one summary.
    Report(ReportArgs),
}

#[derive(clap::Args, Debug)]
pub struct GenArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "quest", value_parser = ["video360", "quest"])]
    pub style: String,
    #[arg(long, default_value_t = 4)]
    pub streams: usize,
    #[arg(long, default_value_t = 90_000.0)]
    pub duration_ms: f64,
    #[arg(long, default_value = "head", value_parser = ["head", "constant-velocity"])]
    pub motion: String,
    /// Angular velocity of every channel for constant-velocity motion.
    #[arg(long, default_value_t = 50.0)]
    pub deg_per_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "video360", value_parser = ["video360", "quest"])]
    pub style: String,
    #[arg(long, default_value = "angle-lstm")]
    pub arch: String,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden_dim: usize,
    /// Input window in samples; 0 picks the style default (30 or 60).
    #[arg(long, default_value_t = 0)]
    pub window_len: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON_MS)]
    pub horizon_ms: f64,
    /// Step the rollout plans with; 0 uses the mean step of the data.
    #[arg(long, default_value_t = 0.0)]
    pub nominal_dt_ms: f64,
    #[arg(long, default_value = "acceleration", value_parser = ["velocity", "acceleration"])]
    pub target_mode: String,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub with_dt: bool,
    #[arg(long, default_value = "mae", value_parser = ["mae", "mse"])]
    pub loss: String,
    #[arg(long, default_value = "global", value_parser = ["global", "per-stream"])]
    pub norm_mode: String,
    #[arg(long, default_value = "causal", value_parser = ["causal", "offline"])]
    pub stream_stats: String,
}

impl ModelArgs {
    fn style(&self) -> Result<TraceStyle> {
        TraceStyle::parse(&self.style)
    }

    fn config(&self, traces: &[Trace]) -> Result<PredictorConfig> {
        let style = self.style()?;
        let nominal = if self.nominal_dt_ms > 0.0 {
            self.nominal_dt_ms
        } else if traces.is_empty() {
            return Err(Error::domain("no traces to take the nominal step from"));
        } else {
            traces.iter().map(|t| t.nominal_dt_ms).sum::<f64>() / traces.len() as f64
        };
        let mut c = PredictorConfig::for_style(Arch::parse(&self.arch)?, style, nominal);
        c.hidden_dim = self.hidden_dim;
        if self.window_len > 0 {
            c.window_len = self.window_len;
        }
        c.horizon_ms = self.horizon_ms;
        c.target_mode = TargetMode::parse(&self.target_mode)?;
        c.with_dt = self.with_dt;
        c.loss_kind = LossKind::parse(&self.loss)?;
        c.norm_mode = NormMode::parse(&self.norm_mode)?;
        c.stream_stats = StreamStats::parse(&self.stream_stats)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory of trace CSVs.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    pub test_frac: f64,
    /// Step between training windows, in samples.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Step between validation windows, in samples.
    #[arg(long, default_value_t = 1)]
    pub val_stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Trained model file; repeat for several columns.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Analytic predictor to include: const-pose, const-velocity or
    /// const-acceleration; repeatable.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Split file from `train`; only its test streams are evaluated.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "video360", value_parser = ["video360", "quest"])]
    pub style: String,
    #[arg(long, default_value_t = DEFAULT_HORIZON_MS)]
    pub horizon_ms: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct SimArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "bernoulli", value_parser = ["bernoulli", "replay"])]
    pub mode: String,
    #[arg(long, default_value_t = 23)]
    pub users: usize,
    #[arg(long, default_value_t = 0.0579)]
    pub p_error: f64,
    #[arg(long, default_value_t = 72.0)]
    pub fps: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON_MS)]
    pub horizon_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    pub angle_threshold_deg: f64,
    #[arg(long, default_value_t = 10.0)]
    pub pos_threshold_mm: f64,
    #[arg(long, default_value_t = 25.0)]
    pub cloud_latency_ms: f64,
    #[arg(long, default_value_t = 2.5)]
    pub edge_latency_ms: f64,
    #[arg(long, default_value_t = 8.0)]
    pub edge_render_ms: f64,
    #[arg(long, default_value_t = 5)]
    pub gpu_slots: usize,
    #[arg(long, default_value_t = 1.0)]
    pub late_penalty_frames: f64,
    #[arg(long, default_value_t = 60_000.0)]
    pub duration_ms: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model to replay (replay mode).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trace directory, one trace per user (replay mode).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "video360", value_parser = ["video360", "quest"])]
    pub style: String,
    /// Also sweep the user count from 1 to this value (0 = no sweep).
    #[arg(long, default_value_t = 0)]
    pub sweep_to: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct CapacityArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0579)]
    pub p_error: f64,
    #[arg(long, default_value_t = 5)]
    pub slots: usize,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = crate::capacity::DEFAULT_M_CAP)]
    pub m_cap: usize,
    /// Rows printed on each side of the maximum.
    #[arg(long, default_value_t = 5)]
    pub around: usize,
    /// Also write report.csv and manifest.txt here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory of an earlier run; repeatable.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Training { .. } | Error::Shape(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Runs the tool on `argv` (including the program name) and returns the
/// exit code. Messages go to stdout/stderr.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    if let Some(n) = std::env::var("CVRLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let argv = match splice_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e).max(EXIT_USAGE);
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv.iter().map(OsString::from)) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let values = resolved_values(name, sub);
    match run(&cli.command, name, values) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Every flag of the subcommand with its effective value, in declaration
/// order, except `config` and `out-dir`.
fn resolved_values(name: &str, m: &ArgMatches) -> Vec<(String, String)> {
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let mut out = Vec::new();
    for arg in sub.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if matches!(long, "config" | "out-dir" | "help" | "version") {
            continue;
        }
        if let Some(vals) = m.get_raw(id) {
            for v in vals {
                out.push((long.to_string(), v.to_string_lossy().into_owned()));
            }
        }
    }
    out
}

fn run(cmd: &Command, name: &str, values: Vec<(String, String)>) -> Result<()> {
    let manifest = RunManifest {
        subcommand: name.to_string(),
        values,
        ..Default::default()
    };
    match cmd {
        Command::Gen(a) => cmd_gen(a, manifest),
        Command::Train(a) => cmd_train(a, manifest),
        Command::Eval(a) => cmd_eval(a, manifest),
        Command::Simulate(a) => cmd_simulate(a, manifest),
        Command::Capacity(a) => cmd_capacity(a, manifest),
        Command::Report(a) => cmd_report(a, manifest),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// `(path, sha256)` of every CSV in `dir`, sorted.
fn digest_dir(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| digest(p)).collect()
}

fn digest(p: &Path) -> Result<(String, String)> {
    Ok((p.display().to_string(), sha256_file(p)?))
}

fn load_traces(dir: &Path, style: &str) -> Result<Vec<Trace>> {
    let traces = ingest_dir(dir, IngestOptions::new(TraceStyle::parse(style)?))?;
    if traces.is_empty() {
        return Err(Error::MalformedTrace(format!("no trace CSVs in {}", dir.display())));
    }
    Ok(traces)
}

fn cmd_gen(a: &GenArgs, mut manifest: RunManifest) -> Result<()> {
    let style = TraceStyle::parse(&a.style)?;
    if a.streams == 0 {
        return Err(Error::Config("--streams must be at least 1".into()));
    }
    create_dir(&a.out_dir)?;
    for k in 0..a.streams {
        let user = format!("u{k:03}");
        let id = format!("{user}_synth_s0");
        let mut spec = match style {
            TraceStyle::Video360 => SynthSpec::video360(&id, a.duration_ms),
            TraceStyle::Quest => SynthSpec::quest(&id, a.duration_ms),
        };
        spec.user_id = user;
        spec.env_id = "synth".into();
        if a.motion == "constant-velocity" {
            spec.motion = SynthMotion::ConstantVelocity {
                deg_per_s: [a.deg_per_s, -0.5 * a.deg_per_s, 0.25 * a.deg_per_s],
                mm_per_s: [0.0; 3],
            };
        }
        let trace = generate_synthetic(&spec, derive_seed(a.seed, &id))?;
        let name = format!("{id}.csv");
        export_csv(&trace, &a.out_dir.join(&name))?;
        manifest.outputs.push(name);
    }
    manifest.outputs.push("manifest.txt".into());
    manifest.write(&a.out_dir)?;
    outln!("wrote {} streams to {}", a.streams, a.out_dir.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs, mut manifest: RunManifest) -> Result<()> {
    let traces = load_traces(&a.data, &a.model.style)?;
    manifest.inputs = digest_dir(&a.data)?;
    let split = split_streams(
        &traces,
        &SplitSpec {
            train: a.train_frac,
            val: a.val_frac,
            test: a.test_frac,
            seed: derive_seed(a.seed, "split"),
        },
    )?;
    let cfg = a.model.config(&split.train)?;
    if !cfg.arch.is_learned() {
        return Err(Error::Config(format!("{} has no weights to train", cfg.arch.name())));
    }
    let train = make_windows_strided(&split.train, &cfg, a.stride)?;
    let val = make_windows_strided(&split.val, &cfg, a.val_stride)?;
    for w in train.warnings.iter().chain(&val.warnings) {
        eprintln!("warning: {w}");
    }
    let spec = TrainSpec {
        epochs_max: a.epochs,
        batch: a.batch,
        lr: a.lr,
        clip_norm: a.clip_norm,
        patience: a.patience,
        seed: derive_seed(a.seed, "train"),
    };
    let result = fit(&train, &val, &spec)?;
    if let Some(s) = &result.bundle.stats {
        for c in &s.degenerate {
            eprintln!("warning: channel {c} has near-zero spread; its scale was set to 1");
        }
    }
    create_dir(&a.out_dir)?;
    result.bundle.save(&a.out_dir.join("model.txt"))?;
    write_training_log(&a.out_dir.join("training_log.csv"), &result.log)?;
    let mut sd = TextDoc::new();
    let ids = |v: &[Trace]| v.iter().map(|t| t.stream_id.as_str()).collect::<Vec<_>>().join(" ");
    sd.set("train", ids(&split.train))
        .set("val", ids(&split.val))
        .set("test", ids(&split.test));
    sd.write(&a.out_dir.join("split.txt"))?;
    manifest.outputs = ["model.txt", "training_log.csv", "split.txt", "manifest.txt"].map(String::from).to_vec();
    manifest.write(&a.out_dir)?;
    outln!(
        "trained {} on {} windows; best epoch {} of {}",
        cfg.arch.name(),
        train.len(),
        result.best_epoch,
        result.log.len()
    );
    Ok(())
}

fn test_streams(traces: Vec<Trace>, split: Option<&Path>) -> Result<Vec<Trace>> {
    let Some(p) = split else { return Ok(traces) };
    let doc = TextDoc::read(p)?;
    let keep: Vec<&str> = doc.str("test")?.split_whitespace().collect();
    let out: Vec<Trace> = traces.into_iter().filter(|t| keep.contains(&t.stream_id.as_str())).collect();
    if out.len() != keep.len() {
        return Err(Error::MalformedTrace(format!(
            "{} lists {} test streams, {} found in the data",
            p.display(),
            keep.len(),
            out.len()
        )));
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs, mut manifest: RunManifest) -> Result<()> {
    if a.model.is_empty() && a.baseline.is_empty() {
        return Err(Error::Config("give at least one --model or --baseline".into()));
    }
    let traces = load_traces(&a.data, &a.style)?;
    manifest.inputs = digest_dir(&a.data)?;
    let traces = test_streams(traces, a.split.as_deref())?;
    let mut entries: Vec<(String, ModelBundle)> = Vec::new();
    for p in &a.model {
        manifest.inputs.push(digest(p)?);
        let b = ModelBundle::load(p)?;
        let label = p
            .parent()
            .and_then(|d| d.file_name())
            .map(|d| d.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        entries.push((label, b));
    }
    if let Some(p) = &a.split {
        manifest.inputs.push(digest(p)?);
    }
    let style = TraceStyle::parse(&a.style)?;
    let nominal = traces.iter().map(|t| t.nominal_dt_ms).sum::<f64>() / traces.len() as f64;
    for b in &a.baseline {
        let arch = Arch::parse(b)?;
        let mut cfg = PredictorConfig::for_style(arch, style, nominal);
        cfg.horizon_ms = a.horizon_ms;
        entries.push((arch.name().to_string(), ModelBundle::baseline(cfg)?));
    }
    let mut reports = Vec::new();
    for (label, b) in &entries {
        let data = make_windows_strided(&traces, &b.config, a.stride)?;
        for w in &data.warnings {
            eprintln!("warning: {w}");
        }
        reports.push(evaluate(b, &data, label)?);
    }
    let kinds = reports.iter().filter(|r| r.pooled.is_some()).count();
    if kinds != 0 && kinds != reports.len() {
        return Err(Error::Config(
            "orientation and position models cannot share one report table".into(),
        ));
    }
    create_dir(&a.out_dir)?;
    write_reports(&a.out_dir, &reports)?;
    manifest.outputs = ["report.csv", "report.txt", "manifest.txt"].map(String::from).to_vec();
    manifest.write(&a.out_dir)?;
    out!("{}", std::fs::read_to_string(a.out_dir.join("report.csv")).map_err(|e| Error::io(&a.out_dir, e))?);
    Ok(())
}

fn cmd_simulate(a: &SimArgs, mut manifest: RunManifest) -> Result<()> {
    let source = match a.mode.as_str() {
        "bernoulli" => ErrorSource::Bernoulli {
            p: a.p_error,
            seed: derive_seed(a.seed, "simulate"),
        },
        _ => {
            let (Some(model), Some(data)) = (&a.model, &a.data) else {
                return Err(Error::Config("replay mode needs --model and --data".into()));
            };
            manifest.inputs = digest_dir(data)?;
            manifest.inputs.push(digest(model)?);
            ErrorSource::Replay {
                traces: load_traces(data, &a.style)?,
                bundle: ModelBundle::load(model)?,
            }
        }
    };
    let config = SimConfig {
        n_users: a.users,
        fps: a.fps,
        horizon_ms: a.horizon_ms,
        angle_threshold_deg: a.angle_threshold_deg,
        pos_threshold_mm: a.pos_threshold_mm,
        cloud_latency_ms: a.cloud_latency_ms,
        edge_latency_ms: a.edge_latency_ms,
        edge_render_ms: a.edge_render_ms,
        gpu_slots: a.gpu_slots,
        late_penalty_frames: a.late_penalty_frames,
        error_source: source,
        duration_ms: a.duration_ms,
    };
    let (report, log) = sim::run(&config)?;
    create_dir(&a.out_dir)?;
    sim::write_outputs(&a.out_dir, &report, &log)?;
    manifest.outputs = ["report.csv", "frames.csv", "report.txt"].map(String::from).to_vec();
    if a.sweep_to > 0 {
        let users: Vec<usize> = (1..=a.sweep_to).collect();
        let rows = sim::sweep_users(&config, &users)?;
        let tails = match &config.error_source {
            ErrorSource::Bernoulli { p, .. } => {
                let mut q = CapacityQuery::new(*p, a.gpu_slots, 0.01)?;
                q.m_cap = q.m_cap.max(a.sweep_to);
                users
                    .iter()
                    .map(|&m| crate::capacity::overload_tail(m, &q))
                    .collect::<Result<Vec<_>>>()?
            }
            ErrorSource::Replay { .. } => vec![f64::NAN; users.len()],
        };
        write_text(&a.out_dir, "sweep.csv", &sim::sweep_csv(&rows, &tails))?;
        manifest.outputs.push("sweep.csv".into());
    }
    manifest.outputs.push("manifest.txt".into());
    manifest.write(&a.out_dir)?;
    outln!(
        "{} users x {} frames: re-render fraction {}, overload probability {}, late intervals {}, mtp p99 {} ms",
        report.n_users,
        report.n_frames,
        fmt_f64(report.rerender_fraction),
        fmt_f64(report.overload_probability),
        fmt_f64(report.late_interval_fraction),
        fmt_f64(report.mtp_p99_ms)
    );
    Ok(())
}

fn cmd_capacity(a: &CapacityArgs, mut manifest: RunManifest) -> Result<()> {
    let mut q = CapacityQuery::new(a.p_error, a.slots, a.epsilon).map_err(|e| Error::Config(e.to_string()))?;
    q.m_cap = a.m_cap;
    let r = max_users(&q)?;
    let lo = r.m_max.saturating_sub(a.around).max(1);
    let hi = r.m_max + a.around;
    let rows = tail_table(&q, lo, hi)?;
    let mut csv = String::from("m,overload_probability,under_epsilon\n");
    for (m, t) in &rows {
        csv.push_str(&format!("{m},{},{}\n", fmt_f64(*t), *t < q.epsilon));
    }
    let status = match r.status {
        CapacityStatus::Found => "found",
        CapacityStatus::SaturatedAtC => "saturated-at-capacity",
        CapacityStatus::Capped => "capped",
    };
    outln!("m_max = {}", r.m_max);
    outln!("status = {status}");
    out!("{csv}");
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write_text(dir, "report.csv", &csv)?;
        let mut d = TextDoc::new();
        d.set("m_max", r.m_max)
            .set("status", status)
            .set_f64("tail_at_m_max", r.tail_at_m_max);
        if let Some(t) = r.tail_at_m_max_plus_1 {
            d.set_f64("tail_at_m_max_plus_1", t);
        }
        d.write(&dir.join("report.txt"))?;
        manifest.outputs = ["report.csv", "report.txt", "manifest.txt"].map(String::from).to_vec();
        manifest.write(dir)?;
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, mut manifest: RunManifest) -> Result<()> {
    let mut csv = String::from("source,subcommand,key,value\n");
    let mut summary = TextDoc::new();
    for (i, dir) in a.input.iter().enumerate() {
        let mpath = dir.join("manifest.txt");
        let rpath = dir.join("report.txt");
        manifest.inputs.push(digest(&mpath)?);
        let sub = std::fs::read_to_string(&mpath)
            .map_err(|e| Error::io(&mpath, e))?
            .lines()
            .find_map(|l| l.strip_prefix("# subcommand = ").map(str::to_string))
            .ok_or_else(|| Error::Format(format!("{} has no subcommand line", mpath.display())))?;
        let source = dir.display().to_string();
        summary.set(format!("source{i}.dir"), &source).set(format!("source{i}.subcommand"), &sub);
        if rpath.exists() {
            manifest.inputs.push(digest(&rpath)?);
            let doc = TextDoc::read(&rpath)?;
            for (k, v) in doc.entries() {
                if let crate::textdoc::Value::Scalar(s) = v {
                    csv.push_str(&format!("{},{sub},{k},{s}\n", csv_field(&source)));
                    summary.set(format!("source{i}.{k}"), s);
                }
            }
        }
    }
    create_dir(&a.out_dir)?;
    write_text(&a.out_dir, "report.csv", &csv)?;
    summary.write(&a.out_dir.join("report.txt"))?;
    manifest.outputs = ["report.csv", "report.txt", "manifest.txt"].map(String::from).to_vec();
    manifest.write(&a.out_dir)?;
    out!("{csv}");
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
