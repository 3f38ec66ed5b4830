//! Sliding-window datasets, the training loop with early stopping on the
//! deployment metric, and evaluation over held-out streams.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::wrap_diff_unchecked;
use crate::lstm::{backprop_through_time, OptimState, SeqExample, SeqModel};
use crate::metrics::{build_report, clipped_mae, pct_over, EvalReport, PositionErrors};
use crate::predictors::features::{derived_series, encode_target, raw_targets, truth_at};
use crate::predictors::{
    decision_error, n_channels, normalize_inputs, predict_with_stats, window_inputs, AngleNet, Arch, DecisionError,
    ModelBundle, Net, NormMode, NormStats, PositionNet, PredictorConfig, StreamStats, DEFAULT_ANGLE_THRESHOLD_DEG,
};
use crate::seed::derive_seed;
use crate::textdoc::fmt_f64;
use crate::trace::Trace;

/// Windows over a set of streams. Each window is identified by its stream
/// and the index of its last observed sample; its `window_len + 2` inputs
/// and its horizon lie inside that stream.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub config: PredictorConfig,
    pub traces: Vec<Trace>,
    /// `(trace index, last sample index)` per example.
    pub windows: Vec<(usize, usize)>,
    pub stride: usize,
    /// Streams skipped for being too short.
    pub warnings: Vec<String>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn stream_ids(&self) -> BTreeSet<&str> {
        self.traces.iter().map(|t| t.stream_id.as_str()).collect()
    }

    /// Statistics of the pooled derived series of every stream.
    pub fn global_stats(&self) -> Result<NormStats> {
        let mut pooled: Vec<Vec<f64>> = Vec::new();
        for t in &self.traces {
            let series = derived_series(&self.config, t.samples())?;
            if pooled.is_empty() {
                pooled = vec![Vec::new(); series.len()];
            }
            for (p, s) in pooled.iter_mut().zip(series) {
                p.extend(s);
            }
        }
        NormStats::from_channels(&pooled)
    }

    /// Whole-stream statistics of each stream, for offline per-stream
    /// normalization.
    pub fn stream_stats(&self) -> Result<Vec<NormStats>> {
        self.traces
            .iter()
            .map(|t| NormStats::from_channels(&derived_series(&self.config, t.samples())?))
            .collect()
    }

    /// Normalized training examples. `global` is required in global mode.
    pub fn examples(&self, global: Option<&NormStats>) -> Result<Vec<SeqExample>> {
        let offline = match (self.config.norm_mode, self.config.stream_stats) {
            (NormMode::PerStream, StreamStats::Offline) => Some(self.stream_stats()?),
            _ => None,
        };
        let cfg = &self.config;
        self.windows
            .par_iter()
            .map(|&(ti, end)| {
                let trace = &self.traces[ti];
                let window = &trace.samples()[end + 1 - cfg.raw_window_len()..=end];
                let raw = window_inputs(cfg, window)?;
                let causal;
                let stats = match (cfg.norm_mode, &offline) {
                    (NormMode::Global, _) => {
                        global.ok_or_else(|| Error::domain("global normalization needs training statistics"))?
                    }
                    (NormMode::PerStream, Some(s)) => &s[ti],
                    (NormMode::PerStream, None) => {
                        causal = NormStats::from_channels(&raw)?;
                        &causal
                    }
                };
                let targets = raw_targets(cfg, trace, end)?
                    .iter()
                    .enumerate()
                    .flat_map(|(c, vals)| vals.iter().map(move |v| encode_target(cfg, stats, c, *v)))
                    .collect();
                Ok(SeqExample {
                    inputs: normalize_inputs(&raw, stats),
                    targets,
                })
            })
            .collect()
    }
}

/// Last-sample indices of every full window in `trace` whose horizon stays
/// inside the trace.
fn window_ends(trace: &Trace, config: &PredictorConfig, stride: usize) -> Vec<usize> {
    let s = trace.samples();
    let first = config.raw_window_len() - 1;
    let limit = trace.end_ms() + 1e-6;
    (first..s.len())
        .step_by(stride)
        .take_while(|&e| s[e].t_ms + config.horizon_ms <= limit && e + 1 < s.len())
        .collect()
}

pub fn make_windows(traces: &[Trace], config: &PredictorConfig) -> Result<WindowedDataset> {
    make_windows_strided(traces, config, 1)
}

pub fn make_windows_strided(traces: &[Trace], config: &PredictorConfig, stride: usize) -> Result<WindowedDataset> {
    config.validate()?;
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let mut kept = Vec::new();
    let mut windows = Vec::new();
    let mut warnings = Vec::new();
    for t in traces {
        let ends = window_ends(t, config, stride);
        if ends.is_empty() {
            warnings.push(format!(
                "stream `{}` ({} samples) is too short for one window plus the horizon; skipped",
                t.stream_id,
                t.len()
            ));
            continue;
        }
        let ti = kept.len();
        windows.extend(ends.into_iter().map(|e| (ti, e)));
        kept.push(t.clone());
    }
    Ok(WindowedDataset {
        config: config.clone(),
        traces: kept,
        windows,
        stride,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub epochs_max: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            epochs_max: 100,
            batch: 64,
            lr: 1e-3,
            clip_norm: 1.0,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 || self.batch == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, batch and patience must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Clipped MAE in degrees (orientation models) or mean next-frame
    /// displacement error in mm (position models).
    pub val_metric: f64,
    pub val_pct_over: f64,
    pub lr: f64,
}

pub const TRAINING_LOG_HEADER: &str = "epoch,train_loss,val_clipped_mae,val_pct_over,lr";

pub fn training_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(TRAINING_LOG_HEADER);
    s.push('\n');
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.epoch,
            fmt_f64(e.train_loss),
            fmt_f64(e.val_metric),
            fmt_f64(e.val_pct_over),
            fmt_f64(e.lr)
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub bundle: ModelBundle,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Fails unless no stream id appears in two of `sets`.
pub fn assert_disjoint(sets: &[&WindowedDataset]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for set in sets {
        for id in set.stream_ids() {
            if !seen.insert(id) {
                return Err(Error::Config(format!("stream `{id}` appears in more than one split")));
            }
        }
    }
    Ok(())
}

/// Validation score used for early stopping, and the over-threshold share.
fn validate_bundle(bundle: &ModelBundle, val: &WindowedDataset) -> Result<(f64, f64)> {
    let stats = val.stream_stats()?;
    match bundle.config.arch {
        Arch::PositionLstm => {
            let errs = position_errors(bundle, val, &stats)?;
            let report = build_report("val", None, Some(&errs), DEFAULT_ANGLE_THRESHOLD_DEG)?;
            let p = report.position.expect("position report");
            let norms: Vec<f64> = errs
                .disp_mm
                .iter()
                .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
                .collect();
            Ok((p.mean_disp_mm(), pct_over(&norms, 1.0)?))
        }
        _ => {
            let errs = horizon_angle_errors(bundle, val, &stats)?;
            let all: Vec<f64> = errs.iter().flatten().copied().collect();
            Ok((
                clipped_mae(&all, DEFAULT_ANGLE_THRESHOLD_DEG)?,
                pct_over(&all, DEFAULT_ANGLE_THRESHOLD_DEG)?,
            ))
        }
    }
}

fn stream_arg<'a>(cfg: &PredictorConfig, stats: &'a [NormStats], ti: usize) -> Option<&'a NormStats> {
    match (cfg.norm_mode, cfg.stream_stats) {
        (NormMode::PerStream, StreamStats::Offline) => Some(&stats[ti]),
        _ => None,
    }
}

/// Per-channel horizon errors over every window of `data`.
fn horizon_angle_errors(bundle: &ModelBundle, data: &WindowedDataset, stats: &[NormStats]) -> Result<[Vec<f64>; 3]> {
    let cfg = &bundle.config;
    let per: Vec<Result<[f64; 3]>> = data
        .windows
        .par_iter()
        .map(|&(ti, end)| {
            let trace = &data.traces[ti];
            let window = &trace.samples()[end + 1 - cfg.raw_window_len()..=end];
            let pred = predict_with_stats(bundle, window, stream_arg(cfg, stats, ti))?;
            let truth = truth_at(trace, pred.t_ms)
                .ok_or_else(|| Error::domain(format!("no ground truth at {} ms", pred.t_ms)))?;
            Ok(std::array::from_fn(|c| wrap_diff_unchecked(truth.angles()[c], pred.angles()[c]).abs()))
        })
        .collect();
    let mut out: [Vec<f64>; 3] = Default::default();
    for r in per {
        let e = r?;
        for c in 0..3 {
            out[c].push(e[c]);
        }
    }
    Ok(out)
}

/// Next-frame displacement (and step) errors of a position model.
fn position_errors(bundle: &ModelBundle, data: &WindowedDataset, stats: &[NormStats]) -> Result<PositionErrors> {
    let cfg = &bundle.config;
    let per: Vec<Result<([f64; 3], Option<f64>)>> = data
        .windows
        .par_iter()
        .map(|&(ti, end)| {
            let s = data.traces[ti].samples();
            let window = &s[end + 1 - cfg.raw_window_len()..=end];
            let (v, dt) = bundle.predict_next_frame(window, stream_arg(cfg, stats, ti))?;
            let dt_true = s[end + 1].t_ms - s[end].t_ms;
            let disp = std::array::from_fn(|c| {
                (v[c] * dt_true / 1000.0 - (s[end + 1].position()[c] - s[end].position()[c])).abs()
            });
            Ok((disp, dt.map(|d| (d - dt_true).abs())))
        })
        .collect();
    let mut out = PositionErrors {
        disp_mm: Vec::with_capacity(per.len()),
        dt_ms: cfg.with_dt.then(Vec::new),
    };
    for r in per {
        let (d, dt) = r?;
        out.disp_mm.push(d);
        if let (Some(v), Some(x)) = (&mut out.dt_ms, dt) {
            v.push(x);
        }
    }
    Ok(out)
}

/// Minibatch Adam on `train`, early-stopped on the validation metric;
/// returns the best-validation weights.
pub fn fit(train: &WindowedDataset, val: &WindowedDataset, spec: &TrainSpec) -> Result<FitResult> {
    spec.validate()?;
    let cfg = &train.config;
    if *cfg != val.config {
        return Err(Error::Config("train and validation sets use different configurations".into()));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::domain("training needs nonempty train and validation sets"));
    }
    assert_disjoint(&[train, val])?;

    let stats = match cfg.norm_mode {
        NormMode::Global => Some(train.global_stats()?),
        NormMode::PerStream => None,
    };
    let examples = train.examples(stats.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "init"));
    let ctx = FitContext {
        cfg,
        stats,
        examples: &examples,
        val,
        spec,
    };
    match cfg.arch {
        Arch::AngleLstm => ctx.run(AngleNet::init(3, cfg.hidden_dim, cfg.rollout_steps()?, &mut rng), Net::Angle),
        Arch::PositionLstm => ctx.run(
            PositionNet::init(n_channels(cfg), cfg.hidden_dim, &mut rng),
            Net::Position,
        ),
        a => Err(Error::Config(format!("{} has nothing to train", a.name()))),
    }
}

struct FitContext<'a> {
    cfg: &'a PredictorConfig,
    stats: Option<NormStats>,
    examples: &'a [SeqExample],
    val: &'a WindowedDataset,
    spec: &'a TrainSpec,
}

impl FitContext<'_> {
    fn bundle(&self, net: Net) -> ModelBundle {
        ModelBundle {
            config: self.cfg.clone(),
            net,
            stats: self.stats.clone(),
        }
    }

    fn run<M: SeqModel>(&self, mut net: M, wrap: fn(M) -> Net) -> Result<FitResult> {
        let spec = self.spec;
        let mut opt = OptimState::new(&net, spec.lr, spec.clip_norm);
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "shuffle"));
        let mut best = (f64::INFINITY, net.clone(), 0);
        let mut log = Vec::new();
        let mut since_best = 0;
        for epoch in 1..=spec.epochs_max {
            order.shuffle(&mut shuffle);
            let mut total = 0.0;
            let mut batch = Vec::with_capacity(spec.batch);
            for idx in order.chunks(spec.batch) {
                batch.clear();
                batch.extend(idx.iter().map(|&i| self.examples[i].clone()));
                let (loss, mut grads) = backprop_through_time(&net, &batch, self.cfg.loss_kind)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        msg: "non-finite training loss".into(),
                    });
                }
                total += loss;
                grads.scale(1.0 / batch.len() as f64);
                opt.update(&mut net, &grads).map_err(|e| match e {
                    Error::Training { msg, .. } => Error::Training { epoch, msg },
                    other => other,
                })?;
            }
            let (metric, pct) = validate_bundle(&self.bundle(wrap(net.clone())), self.val)?;
            if !metric.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: "non-finite validation metric".into(),
                });
            }
            log.push(EpochLog {
                epoch,
                train_loss: total / self.examples.len() as f64,
                val_metric: metric,
                val_pct_over: pct,
                lr: opt.lr,
            });
            if metric < best.0 {
                best = (metric, net.clone(), epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= spec.patience {
                    break;
                }
            }
        }
        Ok(FitResult {
            bundle: self.bundle(wrap(best.1)),
            log,
            best_epoch: best.2,
        })
    }
}

/// Metrics of `bundle` over every window of `test`: orientation metrics at
/// the horizon, or next-frame position metrics for position models.
pub fn evaluate(bundle: &ModelBundle, test: &WindowedDataset, label: &str) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::domain("evaluation needs a nonempty test set"));
    }
    let stats = test.stream_stats()?;
    match bundle.config.arch {
        Arch::PositionLstm => build_report(
            label,
            None,
            Some(&position_errors(bundle, test, &stats)?),
            DEFAULT_ANGLE_THRESHOLD_DEG,
        ),
        _ => build_report(
            label,
            Some(&horizon_angle_errors(bundle, test, &stats)?),
            None,
            DEFAULT_ANGLE_THRESHOLD_DEG,
        ),
    }
}

/// Decision errors at the horizon over every window of `data`.
pub fn horizon_decision_errors(bundle: &ModelBundle, data: &WindowedDataset) -> Result<Vec<DecisionError>> {
    let stats = data.stream_stats()?;
    let cfg = &bundle.config;
    data.windows
        .par_iter()
        .map(|&(ti, end)| {
            let trace = &data.traces[ti];
            let window = &trace.samples()[end + 1 - cfg.raw_window_len()..=end];
            let pred = predict_with_stats(bundle, window, stream_arg(cfg, &stats, ti))?;
            let truth = truth_at(trace, pred.t_ms)
                .ok_or_else(|| Error::domain(format!("no ground truth at {} ms", pred.t_ms)))?;
            decision_error(&pred, &truth)
        })
        .collect()
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    std::fs::write(path, training_log_csv(log)).map_err(|e| Error::io(path, e))
}
