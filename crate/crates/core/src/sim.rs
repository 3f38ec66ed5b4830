//! Discrete-event model of split rendering: the cloud renders each frame
//! for a pose predicted `horizon_ms` ahead, the edge compares it with the
//! actual pose at display time and re-renders misses on a GPU with a fixed
//! number of concurrent render slots.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::predictors::features::{derived_series, truth_at};
use crate::predictors::{
    decision_error, predict_with_stats, DecisionError, ModelBundle, NormMode, NormStats, StreamStats,
};
use crate::seed::derive_seed;
use crate::textdoc::{fmt_f64, TextDoc};
use crate::trace::Trace;

/// The motion-to-photon budget frames are checked against.
pub const MTP_BUDGET_MS: f64 = 20.0;

#[derive(Debug, Clone)]
pub enum ErrorSource {
    /// Each user's predictor misses independently with probability `p`.
    Bernoulli { p: f64, seed: u64 },
    /// A real predictor replayed over one recorded trace per user.
    Replay { traces: Vec<Trace>, bundle: ModelBundle },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_users: usize,
    pub fps: f64,
    pub horizon_ms: f64,
    pub angle_threshold_deg: f64,
    pub pos_threshold_mm: f64,
    pub cloud_latency_ms: f64,
    pub edge_latency_ms: f64,
    pub edge_render_ms: f64,
    pub gpu_slots: usize,
    /// Frame intervals a frame that found no free slot is displayed late.
    pub late_penalty_frames: f64,
    pub error_source: ErrorSource,
    pub duration_ms: f64,
}

impl SimConfig {
    pub fn bernoulli(n_users: usize, p: f64, seed: u64, duration_ms: f64) -> Self {
        SimConfig {
            n_users,
            fps: 72.0,
            horizon_ms: 60.0,
            angle_threshold_deg: 1.0,
            pos_threshold_mm: 10.0,
            cloud_latency_ms: 25.0,
            edge_latency_ms: 2.5,
            edge_render_ms: 8.0,
            gpu_slots: 5,
            late_penalty_frames: 1.0,
            error_source: ErrorSource::Bernoulli { p, seed },
            duration_ms,
        }
    }

    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    pub fn n_frames(&self) -> usize {
        (self.duration_ms / self.frame_interval_ms() + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("fps", self.fps)?;
        pos("horizon_ms", self.horizon_ms)?;
        pos("angle_threshold_deg", self.angle_threshold_deg)?;
        pos("pos_threshold_mm", self.pos_threshold_mm)?;
        pos("cloud_latency_ms", self.cloud_latency_ms)?;
        pos("edge_latency_ms", self.edge_latency_ms)?;
        pos("edge_render_ms", self.edge_render_ms)?;
        pos("duration_ms", self.duration_ms)?;
        if !(self.late_penalty_frames >= 0.0 && self.late_penalty_frames.is_finite()) {
            return Err(Error::Config("late_penalty_frames must be non-negative".into()));
        }
        if self.n_users == 0 || self.gpu_slots == 0 {
            return Err(Error::Config("n_users and gpu_slots must be at least 1".into()));
        }
        if self.n_frames() == 0 {
            return Err(Error::Config("duration shorter than one frame".into()));
        }
        match &self.error_source {
            ErrorSource::Bernoulli { p, .. } if !(0.0..=1.0).contains(p) => {
                Err(Error::Config(format!("p = {p} outside [0, 1]")))
            }
            ErrorSource::Replay { traces, .. } if traces.len() < self.n_users => Err(Error::Config(format!(
                "replay needs one trace per user: {} users, {} traces",
                self.n_users,
                traces.len()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameClass {
    CloudAccepted,
    EdgeReRendered,
    LateOverload,
}

impl FrameClass {
    pub fn name(self) -> &'static str {
        match self {
            FrameClass::CloudAccepted => "cloud_accepted",
            FrameClass::EdgeReRendered => "edge_rerendered",
            FrameClass::LateOverload => "late_overload",
        }
    }
}

/// Motion-to-photon latency of a frame by how it reached the display.
pub fn motion_to_photon(class: FrameClass, config: &SimConfig) -> f64 {
    match class {
        FrameClass::CloudAccepted => config.edge_latency_ms,
        FrameClass::EdgeReRendered => config.edge_latency_ms + config.edge_render_ms,
        FrameClass::LateOverload => {
            config.edge_latency_ms + config.edge_render_ms + config.late_penalty_frames * config.frame_interval_ms()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub user: usize,
    pub frame: usize,
    pub t_ms: f64,
    pub class: FrameClass,
    pub angle_err_deg: f64,
    pub pos_err_mm: f64,
    pub mtp_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub cloud_accepted: usize,
    pub edge_rerendered: usize,
    pub late_overload: usize,
}

impl ClassCounts {
    fn add(&mut self, c: FrameClass) {
        match c {
            FrameClass::CloudAccepted => self.cloud_accepted += 1,
            FrameClass::EdgeReRendered => self.edge_rerendered += 1,
            FrameClass::LateOverload => self.late_overload += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.cloud_accepted + self.edge_rerendered + self.late_overload
    }

    /// Frames whose cloud render missed, whether or not a slot was free.
    pub fn rerender_demand(&self) -> usize {
        self.edge_rerendered + self.late_overload
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_users: usize,
    pub n_frames: usize,
    pub per_user: Vec<ClassCounts>,
    pub total: ClassCounts,
    /// Share of frames that needed an edge re-render.
    pub rerender_fraction: f64,
    /// Share of frame intervals in which re-render demand reached the GPU's
    /// free slots.
    pub overload_probability: f64,
    /// Share of frame intervals in which some frame found no free slot.
    pub late_interval_fraction: f64,
    pub mtp_p50_ms: f64,
    pub mtp_p95_ms: f64,
    pub mtp_p99_ms: f64,
    /// Frames over the motion-to-photon budget.
    pub over_budget: usize,
}

/// Per-user source of decision errors, frame by frame.
enum UserErrors<'a> {
    Bernoulli {
        rng: ChaCha8Rng,
        p: f64,
        threshold: f64,
    },
    Replay {
        trace: &'a Trace,
        bundle: &'a ModelBundle,
        stats: Option<NormStats>,
        t0: f64,
    },
}

impl UserErrors<'_> {
    fn next(&mut self, frame: usize, interval: f64, horizon: f64) -> Result<(f64, DecisionError)> {
        match self {
            UserErrors::Bernoulli { rng, p, threshold } => {
                let u: f64 = rng.gen();
                let angle = if u < *p {
                    *threshold * (1.0 + (*p - u) / *p)
                } else {
                    *threshold * (u - *p) / (1.0 - *p)
                };
                Ok((frame as f64 * interval, DecisionError { angle_deg: angle, pos_mm: 0.0 }))
            }
            UserErrors::Replay {
                trace,
                bundle,
                stats,
                t0,
            } => {
                let t_f = *t0 + frame as f64 * interval;
                let need = bundle.config.raw_window_len();
                let last = trace
                    .last_index_at(t_f - horizon)
                    .filter(|&i| i + 1 >= need)
                    .ok_or_else(|| Error::domain(format!("no full window before {} ms", t_f - horizon)))?;
                let window = &trace.samples()[last + 1 - need..=last];
                let pred = predict_with_stats(bundle, window, stats.as_ref())?;
                let truth = truth_at(trace, pred.t_ms).ok_or_else(|| {
                    Error::domain(format!("trace `{}` ends before {} ms", trace.stream_id, pred.t_ms))
                })?;
                Ok((t_f, decision_error(&pred, &truth)?))
            }
        }
    }
}

/// Display time of frame 0 for a replayed trace: the first frame with a
/// full input window one horizon earlier.
pub fn replay_start_ms(trace: &Trace, bundle: &ModelBundle) -> Result<f64> {
    let need = bundle.config.raw_window_len();
    trace
        .samples()
        .get(need - 1)
        .map(|s| s.t_ms + bundle.config.horizon_ms)
        .ok_or_else(|| Error::domain(format!("trace `{}` shorter than one input window", trace.stream_id)))
}

fn user_sources<'a>(config: &'a SimConfig) -> Result<Vec<UserErrors<'a>>> {
    let interval = config.frame_interval_ms();
    let n_frames = config.n_frames();
    match &config.error_source {
        ErrorSource::Bernoulli { p, seed } => Ok((0..config.n_users)
            .map(|u| UserErrors::Bernoulli {
                rng: ChaCha8Rng::seed_from_u64(derive_seed(*seed, &format!("user{u}"))),
                p: *p,
                threshold: config.angle_threshold_deg,
            })
            .collect()),
        ErrorSource::Replay { traces, bundle } => {
            if (bundle.config.horizon_ms - config.horizon_ms).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "model horizon {} ms differs from simulated horizon {} ms",
                    bundle.config.horizon_ms, config.horizon_ms
                )));
            }
            traces[..config.n_users]
                .iter()
                .map(|trace| {
                    let t0 = replay_start_ms(trace, bundle)?;
                    let t_last = t0 + (n_frames - 1) as f64 * interval;
                    if t_last > trace.end_ms() + 1e-6 {
                        return Err(Error::domain(format!(
                            "trace `{}` ends at {} ms, the run needs {t_last} ms",
                            trace.stream_id,
                            trace.end_ms()
                        )));
                    }
                    let stats = match (bundle.config.norm_mode, bundle.config.stream_stats) {
                        (NormMode::PerStream, StreamStats::Offline) => Some(NormStats::from_channels(
                            &derived_series(&bundle.config, trace.samples())?,
                        )?),
                        _ => None,
                    };
                    Ok(UserErrors::Replay {
                        trace,
                        bundle,
                        stats,
                        t0,
                    })
                })
                .collect()
        }
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn run(config: &SimConfig) -> Result<(SimReport, Vec<FrameOutcome>)> {
    let mut log = Vec::new();
    let report = simulate(config, Some(&mut log))?;
    Ok((report, log))
}

/// Like [`run`] without keeping the per-frame log.
pub fn run_report(config: &SimConfig) -> Result<SimReport> {
    simulate(config, None)
}

fn simulate(config: &SimConfig, mut log: Option<&mut Vec<FrameOutcome>>) -> Result<SimReport> {
    config.validate()?;
    let interval = config.frame_interval_ms();
    let n_frames = config.n_frames();
    let n_users = config.n_users;
    let mut sources = user_sources(config)?;
    // A cloud render that arrives after the display time is always redone.
    let cloud_too_late = config.cloud_latency_ms >= config.horizon_ms;

    let mut slots_free_at = vec![f64::NEG_INFINITY; config.gpu_slots];
    let mut per_user = vec![ClassCounts::default(); n_users];
    let mut mtp = Vec::with_capacity(n_users * n_frames);
    let mut saturated = 0usize;
    let mut late_intervals = 0usize;
    let mut decisions = Vec::with_capacity(n_users);
    let mut demand: Vec<(f64, usize)> = Vec::with_capacity(n_users);
    let mut classes = vec![FrameClass::CloudAccepted; n_users];

    for f in 0..n_frames {
        decisions.clear();
        demand.clear();
        for (u, src) in sources.iter_mut().enumerate() {
            let (t, e) = src.next(f, interval, config.horizon_ms)?;
            if cloud_too_late || e.exceeds(config.angle_threshold_deg, config.pos_threshold_mm) {
                demand.push((e.normalized(config.angle_threshold_deg, config.pos_threshold_mm), u));
            }
            classes[u] = FrameClass::CloudAccepted;
            decisions.push((t, e));
        }
        // Highest error first; ties by user index.
        demand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let t_slot = f as f64 * interval;
        let free = slots_free_at.iter().filter(|&&t| t <= t_slot).count();
        if demand.len() >= free && !demand.is_empty() {
            saturated += 1;
        }
        if demand.len() > free {
            late_intervals += 1;
        }
        for (rank, &(_, u)) in demand.iter().enumerate() {
            if rank < free {
                let slot = slots_free_at
                    .iter()
                    .position(|&t| t <= t_slot)
                    .expect("counted free slot");
                slots_free_at[slot] = t_slot + config.edge_render_ms;
                classes[u] = FrameClass::EdgeReRendered;
            } else {
                classes[u] = FrameClass::LateOverload;
            }
        }
        for u in 0..n_users {
            let c = classes[u];
            per_user[u].add(c);
            let m = motion_to_photon(c, config);
            mtp.push(m);
            if let Some(log) = log.as_deref_mut() {
                let (t, e) = decisions[u];
                log.push(FrameOutcome {
                    user: u,
                    frame: f,
                    t_ms: t,
                    class: c,
                    angle_err_deg: e.angle_deg,
                    pos_err_mm: e.pos_mm,
                    mtp_ms: m,
                });
            }
        }
    }

    let mut total = ClassCounts::default();
    for c in &per_user {
        total.cloud_accepted += c.cloud_accepted;
        total.edge_rerendered += c.edge_rerendered;
        total.late_overload += c.late_overload;
    }
    let over_budget = mtp.iter().filter(|&&m| m > MTP_BUDGET_MS).count();
    mtp.sort_by(f64::total_cmp);
    let frames = (n_users * n_frames) as f64;
    Ok(SimReport {
        n_users,
        n_frames,
        per_user,
        total,
        rerender_fraction: total.rerender_demand() as f64 / frames,
        overload_probability: saturated as f64 / n_frames as f64,
        late_interval_fraction: late_intervals as f64 / n_frames as f64,
        mtp_p50_ms: percentile(&mtp, 50.0),
        mtp_p95_ms: percentile(&mtp, 95.0),
        mtp_p99_ms: percentile(&mtp, 99.0),
        over_budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n_users: usize,
    pub overload_probability: f64,
    pub late_interval_fraction: f64,
    pub rerender_fraction: f64,
}

/// One run per user count. All points use the same seed, so user `u`'s
/// error sequence is identical across points and the curve is monotone.
pub fn sweep_users(config: &SimConfig, users: &[usize]) -> Result<Vec<SweepRow>> {
    users
        .par_iter()
        .map(|&m| {
            let r = run_report(&SimConfig {
                n_users: m,
                ..config.clone()
            })?;
            Ok(SweepRow {
                n_users: m,
                overload_probability: r.overload_probability,
                late_interval_fraction: r.late_interval_fraction,
                rerender_fraction: r.rerender_fraction,
            })
        })
        .collect()
}

pub const FRAMES_HEADER: &str = "user,frame,t_ms,class,angle_err_deg,pos_err_mm,mtp_ms";

pub fn frames_csv(log: &[FrameOutcome]) -> String {
    let mut s = String::with_capacity(64 * log.len() + 64);
    s.push_str(FRAMES_HEADER);
    s.push('\n');
    for o in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            o.user,
            o.frame,
            fmt_f64(o.t_ms),
            o.class.name(),
            fmt_f64(o.angle_err_deg),
            fmt_f64(o.pos_err_mm),
            fmt_f64(o.mtp_ms)
        );
    }
    s
}

pub fn report_csv(r: &SimReport) -> String {
    let mut s = String::from("user,cloud_accepted,edge_rerendered,late_overload,rerender_fraction\n");
    let row = |s: &mut String, name: &str, c: &ClassCounts| {
        let _ = writeln!(
            s,
            "{name},{},{},{},{}",
            c.cloud_accepted,
            c.edge_rerendered,
            c.late_overload,
            fmt_f64(c.rerender_demand() as f64 / c.total().max(1) as f64)
        );
    };
    for (u, c) in r.per_user.iter().enumerate() {
        row(&mut s, &u.to_string(), c);
    }
    row(&mut s, "all", &r.total);
    s
}

pub fn sweep_csv(rows: &[SweepRow], eq_tail: &[f64]) -> String {
    let mut s = String::from("users,overload_probability,late_interval_fraction,rerender_fraction,binomial_tail\n");
    for (r, t) in rows.iter().zip(eq_tail) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.n_users,
            fmt_f64(r.overload_probability),
            fmt_f64(r.late_interval_fraction),
            fmt_f64(r.rerender_fraction),
            fmt_f64(*t)
        );
    }
    s
}

pub fn report_doc(r: &SimReport) -> TextDoc {
    let mut d = TextDoc::new();
    d.set("n_users", r.n_users)
        .set("n_frames", r.n_frames)
        .set("cloud_accepted", r.total.cloud_accepted)
        .set("edge_rerendered", r.total.edge_rerendered)
        .set("late_overload", r.total.late_overload)
        .set_f64("rerender_fraction", r.rerender_fraction)
        .set_f64("overload_probability", r.overload_probability)
        .set_f64("late_interval_fraction", r.late_interval_fraction)
        .set_f64("mtp_p50_ms", r.mtp_p50_ms)
        .set_f64("mtp_p95_ms", r.mtp_p95_ms)
        .set_f64("mtp_p99_ms", r.mtp_p99_ms)
        .set("over_budget_frames", r.over_budget);
    d
}

pub fn write_outputs(dir: &Path, r: &SimReport, log: &[FrameOutcome]) -> Result<()> {
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    put("report.csv", report_csv(r))?;
    put("frames.csv", frames_csv(log))?;
    report_doc(r).write(&dir.join("report.txt"))
}
