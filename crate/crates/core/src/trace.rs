//! Pose traces: the data model, the CSV contract, synthetic generation and
//! stream-level splitting.
//!
//! One CSV file holds one stream with the header
//! `t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm`. 360-degree video files may
//! stop after `psi_deg`; positions are then zero. Numbers are written with the
//! shortest representation that parses back to the same `f64`, so
//! export followed by ingest is bit-exact.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::wrap_deg;
use crate::seed::derive_seed;

pub const CSV_HEADER: [&str; 7] = [
    "t_ms", "phi_deg", "theta_deg", "psi_deg", "x_mm", "y_mm", "z_mm",
];

/// Quest-style sampling intervals must fall in this range (ms).
pub const QUEST_DT_RANGE_MS: (f64, f64) = (5.0, 50.0);
/// Fixed-rate traces may deviate this much (relative) from their median step.
pub const FIXED_RATE_TOLERANCE: f64 = 0.01;
pub const DEFAULT_VIDEO360_DT_MS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t_ms: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PoseSample {
    pub fn angles(&self) -> [f64; 3] {
        [self.phi, self.theta, self.psi]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_parts(t_ms: f64, angles: [f64; 3], position: [f64; 3]) -> Self {
        PoseSample {
            t_ms,
            phi: wrap_deg(angles[0]),
            theta: wrap_deg(angles[1]),
            psi: wrap_deg(angles[2]),
            x: position[0],
            y: position[1],
            z: position[2],
        }
    }

    fn is_finite(&self) -> bool {
        [self.t_ms, self.phi, self.theta, self.psi, self.x, self.y, self.z]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceStyle {
    /// Fixed-rate orientation-only recordings.
    Video360,
    /// Headset logs with jittered sampling and head position.
    Quest,
}

impl TraceStyle {
    pub fn name(self) -> &'static str {
        match self {
            TraceStyle::Video360 => "video360",
            TraceStyle::Quest => "quest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "video360" | "video" => Ok(TraceStyle::Video360),
            "quest" => Ok(TraceStyle::Quest),
            other => Err(Error::Config(format!("unknown trace style `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub stream_id: String,
    pub user_id: String,
    pub env_id: String,
    pub style: TraceStyle,
    pub nominal_dt_ms: f64,
    samples: Vec<PoseSample>,
}

impl Trace {
    /// Validates every trace invariant; angles are canonicalized.
    pub fn new(
        stream_id: impl Into<String>,
        user_id: impl Into<String>,
        env_id: impl Into<String>,
        style: TraceStyle,
        nominal_dt_ms: f64,
        samples: Vec<PoseSample>,
    ) -> Result<Self> {
        let samples: Vec<PoseSample> = samples
            .into_iter()
            .map(|s| PoseSample::from_parts(s.t_ms, s.angles(), s.position()))
            .collect();
        if samples.len() < 2 {
            return Err(Error::MalformedTrace(format!(
                "a trace needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(nominal_dt_ms > 0.0 && nominal_dt_ms.is_finite()) {
            return Err(Error::MalformedTrace(format!(
                "nominal step {nominal_dt_ms} ms must be positive"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::MalformedTrace(format!("sample {i} is not finite")));
        }
        check_steps(style, &samples).map_err(|(i, msg)| {
            Error::MalformedTrace(format!("sample {i}: {msg}"))
        })?;
        Ok(Trace {
            stream_id: stream_id.into(),
            user_id: user_id.into(),
            env_id: env_id.into(),
            style,
            nominal_dt_ms,
            samples,
        })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_ms(&self) -> f64 {
        self.samples[0].t_ms
    }

    pub fn end_ms(&self) -> f64 {
        self.samples[self.samples.len() - 1].t_ms
    }

    /// Pose at an arbitrary time inside the trace by linear interpolation,
    /// taking the short way round for angles. Exact sample times return the
    /// sample itself.
    pub fn pose_at(&self, t_ms: f64) -> Option<PoseSample> {
        let s = &self.samples;
        if t_ms < s[0].t_ms || t_ms > s[s.len() - 1].t_ms {
            return None;
        }
        let hi = s.partition_point(|p| p.t_ms < t_ms);
        if s[hi].t_ms == t_ms {
            return Some(s[hi]);
        }
        let (a, b) = (&s[hi - 1], &s[hi]);
        let w = (t_ms - a.t_ms) / (b.t_ms - a.t_ms);
        let lerp_angle = |x: f64, y: f64| x + w * crate::kinematics::wrap_diff_unchecked(x, y);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        Some(PoseSample::from_parts(
            t_ms,
            [
                lerp_angle(a.phi, b.phi),
                lerp_angle(a.theta, b.theta),
                lerp_angle(a.psi, b.psi),
            ],
            [lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.z, b.z)],
        ))
    }

    /// Index of the last sample at or before `t_ms`.
    pub fn last_index_at(&self, t_ms: f64) -> Option<usize> {
        let n = self.samples.partition_point(|p| p.t_ms <= t_ms);
        n.checked_sub(1)
    }
}

fn check_steps(style: TraceStyle, samples: &[PoseSample]) -> std::result::Result<(), (usize, String)> {
    let steps: Vec<f64> = samples.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
    if let Some(k) = steps.iter().position(|&d| d <= 0.0) {
        return Err((k + 1, "timestamps are not strictly increasing".into()));
    }
    match style {
        TraceStyle::Quest => {
            let (lo, hi) = QUEST_DT_RANGE_MS;
            if let Some(k) = steps.iter().position(|&d| d < lo || d > hi) {
                return Err((k + 1, format!("step {} ms outside [{lo}, {hi}] ms", steps[k])));
            }
        }
        TraceStyle::Video360 => {
            let mut sorted = steps.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            if let Some(k) = steps
                .iter()
                .position(|&d| ((d - median) / median).abs() > FIXED_RATE_TOLERANCE)
            {
                return Err((
                    k + 1,
                    format!("step {} ms deviates from fixed rate {median} ms", steps[k]),
                ));
            }
        }
    }
    Ok(())
}

fn mean_step(samples: &[PoseSample]) -> f64 {
    (samples[samples.len() - 1].t_ms - samples[0].t_ms) / (samples.len() - 1) as f64
}

/// Options that the CSV itself does not carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub style: TraceStyle,
    /// Nominal step for fixed-rate traces. Quest traces use their mean step.
    pub video360_dt_ms: f64,
}

impl IngestOptions {
    pub fn new(style: TraceStyle) -> Self {
        IngestOptions {
            style,
            video360_dt_ms: DEFAULT_VIDEO360_DT_MS,
        }
    }
}

/// Splits a file stem of the form `<user>_<env>_<rest>` into ids.
fn ids_from_stem(stem: &str) -> (String, String) {
    let parts: Vec<&str> = stem.splitn(3, '_').collect();
    if parts.len() == 3 {
        (parts[0].to_string(), parts[1].to_string())
    } else {
        (stem.to_string(), String::new())
    }
}

/// Loads one stream from a trace CSV file.
pub fn ingest_csv(path: &Path, opts: IngestOptions) -> Result<Vec<Trace>> {
    let ingest_err = |line: usize, msg: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => ingest_err(1, format!("{other:?}")),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| ingest_err(1, e.to_string()))?
        .clone();
    let n_cols = match (opts.style, headers.len()) {
        (_, 7) => 7,
        (TraceStyle::Video360, 4) => 4,
        (_, n) => {
            return Err(ingest_err(
                1,
                format!("expected {} columns, found {n}", if opts.style == TraceStyle::Quest { "7" } else { "4 or 7" }),
            ))
        }
    };
    for (i, (got, want)) in headers.iter().zip(CSV_HEADER).enumerate() {
        if got.trim() != want {
            return Err(ingest_err(1, format!("column {} must be `{want}`, found `{got}`", i + 1)));
        }
    }

    let mut samples = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            ingest_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != n_cols {
            return Err(ingest_err(line, format!("expected {n_cols} fields, found {}", rec.len())));
        }
        let mut vals = [0.0f64; 7];
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| ingest_err(line, format!("`{field}` in column `{}` is not a number", CSV_HEADER[j])))?;
            if !v.is_finite() {
                return Err(ingest_err(line, format!("non-finite value in column `{}`", CSV_HEADER[j])));
            }
            vals[j] = v;
        }
        if vals[0] <= prev_t {
            return Err(ingest_err(
                line,
                format!("timestamp {} does not increase (previous {prev_t})", vals[0]),
            ));
        }
        prev_t = vals[0];
        samples.push(PoseSample::from_parts(
            vals[0],
            [vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6]],
        ));
    }

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (user, env) = ids_from_stem(&stem);
    if samples.len() < 2 {
        return Err(ingest_err(samples.len() + 1, "a trace needs at least 2 samples".into()));
    }
    // header is line 1, sample i sits on line i + 2
    check_steps(opts.style, &samples).map_err(|(i, msg)| ingest_err(i + 2, msg))?;
    let nominal = match opts.style {
        TraceStyle::Video360 => opts.video360_dt_ms,
        TraceStyle::Quest => mean_step(&samples),
    };
    let trace = Trace::new(stem, user, env, opts.style, nominal, samples)
        .map_err(|e| ingest_err(0, e.to_string()))?;
    Ok(vec![trace])
}

/// Loads every `*.csv` in a directory, ordered by path.
pub fn ingest_dir(dir: &Path, opts: IngestOptions) -> Result<Vec<Trace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let per_file: Vec<Result<Vec<Trace>>> = paths.par_iter().map(|p| ingest_csv(p, opts)).collect();
    let mut out = Vec::new();
    for r in per_file {
        out.extend(r?);
    }
    Ok(out)
}

/// Writes a trace in the 7-column CSV layout.
pub fn export_csv(trace: &Trace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", CSV_HEADER.join(",")).map_err(io)?;
    for s in trace.samples() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t_ms, s.phi, s.theta, s.psi, s.x, s.y, s.z
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Parameters of a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub style: TraceStyle,
    pub duration_ms: f64,
    /// Step for `Video360` traces.
    pub fixed_dt_ms: f64,
    /// Uniform step range for `Quest` traces.
    pub jitter_ms: (f64, f64),
    pub motion: SynthMotion,
    pub stream_id: String,
    pub user_id: String,
    pub env_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthMotion {
    /// Band-limited head motion: a sum of sinusoids per channel, smoothed
    /// noise, and optional sudden turns (smooth steps at Poisson times).
    Sinusoids {
        components: usize,
        amp_deg: (f64, f64),
        freq_hz: (f64, f64),
        pos_amp_mm: (f64, f64),
        pos_freq_hz: (f64, f64),
        noise_deg: f64,
        noise_mm: f64,
        /// AR(1) coefficient of the noise filter, in `[0, 1)`.
        noise_smoothing: f64,
        turns_per_min: f64,
        turn_amp_deg: (f64, f64),
        turn_ms: (f64, f64),
    },
    ConstantVelocity {
        deg_per_s: [f64; 3],
        mm_per_s: [f64; 3],
    },
}

impl SynthMotion {
    pub fn head_motion() -> Self {
        SynthMotion::Sinusoids {
            components: 3,
            amp_deg: (5.0, 40.0),
            freq_hz: (0.1, 1.2),
            pos_amp_mm: (20.0, 200.0),
            pos_freq_hz: (0.05, 0.5),
            noise_deg: 0.05,
            noise_mm: 0.2,
            noise_smoothing: 0.8,
            turns_per_min: 6.0,
            turn_amp_deg: (10.0, 40.0),
            turn_ms: (150.0, 400.0),
        }
    }
}

impl SynthSpec {
    pub fn video360(id: &str, duration_ms: f64) -> Self {
        SynthSpec {
            style: TraceStyle::Video360,
            duration_ms,
            fixed_dt_ms: DEFAULT_VIDEO360_DT_MS,
            jitter_ms: (10.0, 18.0),
            motion: SynthMotion::head_motion(),
            stream_id: id.to_string(),
            user_id: id.to_string(),
            env_id: String::new(),
        }
    }

    pub fn quest(id: &str, duration_ms: f64) -> Self {
        SynthSpec {
            style: TraceStyle::Quest,
            ..SynthSpec::video360(id, duration_ms)
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.duration_ms) || !pos(self.fixed_dt_ms) {
            return Err(Error::Config("duration and step must be positive".into()));
        }
        let (lo, hi) = self.jitter_ms;
        if self.style == TraceStyle::Quest && !(pos(lo) && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("invalid jitter range [{lo}, {hi}]")));
        }
        if let SynthMotion::Sinusoids {
            noise_smoothing,
            noise_deg,
            noise_mm,
            turns_per_min,
            ..
        } = self.motion
        {
            if !(0.0..1.0).contains(&noise_smoothing) || noise_deg < 0.0 || noise_mm < 0.0 || turns_per_min < 0.0 {
                return Err(Error::Config("invalid noise or turn parameters".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amp: f64,
    pub freq_hz: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn eval(&self, t_ms: f64) -> f64 {
        self.amp * (TAU * self.freq_hz * t_ms / 1000.0 + self.phase).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turn {
    pub start_ms: f64,
    pub dur_ms: f64,
    pub amp_deg: f64,
}

impl Turn {
    fn eval(&self, t_ms: f64) -> f64 {
        let u = ((t_ms - self.start_ms) / self.dur_ms).clamp(0.0, 1.0);
        self.amp_deg * u * u * (3.0 - 2.0 * u)
    }
}

/// The noise-free part of a generated stream, drawn from the seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionParams {
    pub angle_offset: [f64; 3],
    pub angle_components: [Vec<Sinusoid>; 3],
    pub turns: [Vec<Turn>; 3],
    pub pos_offset: [f64; 3],
    pub pos_components: [Vec<Sinusoid>; 3],
}

impl MotionParams {
    /// Noise-free angle before wrapping.
    pub fn angle_at(&self, ch: usize, t_ms: f64) -> f64 {
        self.angle_offset[ch]
            + self.angle_components[ch].iter().map(|s| s.eval(t_ms)).sum::<f64>()
            + self.turns[ch].iter().map(|s| s.eval(t_ms)).sum::<f64>()
    }

    pub fn position_at(&self, ch: usize, t_ms: f64) -> f64 {
        self.pos_offset[ch] + self.pos_components[ch].iter().map(|s| s.eval(t_ms)).sum::<f64>()
    }
}

pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Trace> {
    generate_synthetic_with_params(spec, seed).map(|(t, _)| t)
}

/// Like [`generate_synthetic`], also returning the drawn motion parameters.
pub fn generate_synthetic_with_params(spec: &SynthSpec, seed: u64) -> Result<(Trace, MotionParams)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut times = vec![0.0];
    let mut t = 0.0;
    loop {
        let dt = match spec.style {
            TraceStyle::Video360 => spec.fixed_dt_ms,
            TraceStyle::Quest => rng.gen_range(spec.jitter_ms.0..=spec.jitter_ms.1),
        };
        t = match spec.style {
            // multiply rather than accumulate so fixed steps stay exact
            TraceStyle::Video360 => times.len() as f64 * dt,
            TraceStyle::Quest => t + dt,
        };
        if t > spec.duration_ms {
            break;
        }
        times.push(t);
    }
    if times.len() < 2 {
        return Err(Error::Config("duration shorter than one step".into()));
    }

    let mut params = MotionParams::default();
    let mut samples: Vec<PoseSample> = Vec::with_capacity(times.len());
    match &spec.motion {
        SynthMotion::ConstantVelocity { deg_per_s, mm_per_s } => {
            for ch in 0..3 {
                params.angle_offset[ch] = rng.gen_range(-180.0..180.0);
                params.pos_offset[ch] = rng.gen_range(-1000.0..1000.0);
            }
            for &t in &times {
                let s = t / 1000.0;
                let ang: [f64; 3] = std::array::from_fn(|c| params.angle_offset[c] + deg_per_s[c] * s);
                let pos: [f64; 3] = std::array::from_fn(|c| params.pos_offset[c] + mm_per_s[c] * s);
                samples.push(PoseSample::from_parts(t, ang, pos));
            }
        }
        SynthMotion::Sinusoids {
            components,
            amp_deg,
            freq_hz,
            pos_amp_mm,
            pos_freq_hz,
            noise_deg,
            noise_mm,
            noise_smoothing,
            turns_per_min,
            turn_amp_deg,
            turn_ms,
        } => {
            let draw = |rng: &mut ChaCha8Rng, amp: (f64, f64), freq: (f64, f64)| Sinusoid {
                amp: rng.gen_range(amp.0..=amp.1),
                freq_hz: rng.gen_range(freq.0..=freq.1),
                phase: rng.gen_range(0.0..TAU),
            };
            for ch in 0..3 {
                params.angle_offset[ch] = rng.gen_range(-180.0..180.0);
                params.angle_components[ch] = (0..*components).map(|_| draw(&mut rng, *amp_deg, *freq_hz)).collect();
                params.pos_offset[ch] = rng.gen_range(-1000.0..1000.0);
                params.pos_components[ch] = (0..*components)
                    .map(|_| draw(&mut rng, *pos_amp_mm, *pos_freq_hz))
                    .collect();
                if *turns_per_min > 0.0 {
                    let mean_gap = 60_000.0 / turns_per_min;
                    let mut at = 0.0;
                    loop {
                        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                        at += -mean_gap * u.ln();
                        if at > spec.duration_ms {
                            break;
                        }
                        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        params.turns[ch].push(Turn {
                            start_ms: at,
                            dur_ms: rng.gen_range(turn_ms.0..=turn_ms.1),
                            amp_deg: sign * rng.gen_range(turn_amp_deg.0..=turn_amp_deg.1),
                        });
                    }
                }
            }
            let a = *noise_smoothing;
            let mut n_ang = [0.0f64; 3];
            let mut n_pos = [0.0f64; 3];
            for &t in &times {
                for c in 0..3 {
                    n_ang[c] = a * n_ang[c] + (1.0 - a) * noise_deg * rng.gen_range(-1.0..=1.0);
                    n_pos[c] = a * n_pos[c] + (1.0 - a) * noise_mm * rng.gen_range(-1.0..=1.0);
                }
                let ang: [f64; 3] = std::array::from_fn(|c| params.angle_at(c, t) + n_ang[c]);
                let pos: [f64; 3] = std::array::from_fn(|c| params.position_at(c, t) + n_pos[c]);
                samples.push(PoseSample::from_parts(t, ang, pos));
            }
        }
    }

    let nominal = match spec.style {
        TraceStyle::Video360 => spec.fixed_dt_ms,
        TraceStyle::Quest => mean_step(&samples),
    };
    let trace = Trace::new(
        spec.stream_id.clone(),
        spec.user_id.clone(),
        spec.env_id.clone(),
        spec.style,
        nominal,
        samples,
    )?;
    Ok((trace, params))
}

/// A deterministic multi-user benchmark: `n_streams` head-motion streams
/// named `u<k>_synth_s0`, each from its own derived seed.
pub fn synthetic_benchmark(style: TraceStyle, n_streams: usize, duration_ms: f64, seed: u64) -> Result<Vec<Trace>> {
    (0..n_streams)
        .map(|k| {
            let user = format!("u{k:03}");
            let id = format!("{user}_synth_s0");
            let mut spec = match style {
                TraceStyle::Video360 => SynthSpec::video360(&id, duration_ms),
                TraceStyle::Quest => SynthSpec::quest(&id, duration_ms),
            };
            spec.user_id = user;
            spec.env_id = "synth".into();
            generate_synthetic(&spec, derive_seed(seed, &id))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            val: 0.15,
            test: 0.15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSplit {
    pub train: Vec<Trace>,
    pub val: Vec<Trace>,
    pub test: Vec<Trace>,
}

/// Assigns whole streams to train/val/test.
///
/// Sizes are `floor(n * fraction)` for train and validation with the
/// remainder going to test; a partition that would be empty takes one stream
/// from the largest partition.
pub fn split_streams(traces: &[Trace], spec: &SplitSpec) -> Result<StreamSplit> {
    let fr = [spec.train, spec.val, spec.test];
    if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fr:?} must lie in (0,1) and sum to 1"
        )));
    }
    let n = traces.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "need at least 3 streams to split three ways, got {n}"
        )));
    }
    let mut ids: Vec<&str> = traces.iter().map(|t| t.stream_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate stream ids".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| traces[a].stream_id.cmp(&traces[b].stream_id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut sizes = [
        (n as f64 * spec.train + 1e-9).floor() as usize,
        (n as f64 * spec.val + 1e-9).floor() as usize,
        0,
    ];
    sizes[2] = n - sizes[0] - sizes[1];
    for i in 0..3 {
        if sizes[i] == 0 {
            let largest = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[largest] -= 1;
            sizes[i] = 1;
        }
    }

    let take = |range: std::ops::Range<usize>| {
        let mut part: Vec<Trace> = order[range].iter().map(|&i| traces[i].clone()).collect();
        part.sort_by(|a, b| a.stream_id.cmp(&b.stream_id));
        part
    };
    Ok(StreamSplit {
        train: take(0..sizes[0]),
        val: take(sizes[0]..sizes[0] + sizes[1]),
        test: take(sizes[0] + sizes[1]..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "u1_e2_s3.csv",
            "t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm\n0,1,2,3,4,5,6\n30,1,2,3,4,5,6\n",
        );
        let tr = ingest_csv(&p, IngestOptions::new(TraceStyle::Video360)).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr[0].len(), 2);
        assert_eq!(tr[0].user_id, "u1");
        assert_eq!(tr[0].env_id, "e2");
        assert_eq!(tr[0].stream_id, "u1_e2_s3");
    }

    #[test]
    fn video360_short_layout_zero_fills() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "t_ms,phi_deg,theta_deg,psi_deg\n0,1,2,190\n30,1,2,3\n");
        let tr = &ingest_csv(&p, IngestOptions::new(TraceStyle::Video360)).unwrap()[0];
        assert_eq!(tr.samples()[0].position(), [0.0; 3]);
        assert_eq!(tr.samples()[0].psi, -170.0);
        assert!(ingest_csv(&p, IngestOptions::new(TraceStyle::Quest)).is_err());
    }

    #[test]
    fn decreasing_time_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.csv",
            "t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm\n0,0,0,0,0,0,0\n10,0,0,0,0,0,0\n5,0,0,0,0,0,0\n",
        );
        match ingest_csv(&p, IngestOptions::new(TraceStyle::Quest)) {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = write(dir.path(), "m.csv", "t_ms,phi_deg,theta_deg,x_mm,y_mm,z_mm,psi_deg\n0,0,0,0,0,0,0\n");
        assert!(matches!(
            ingest_csv(&missing, IngestOptions::new(TraceStyle::Quest)),
            Err(Error::Ingest { line: 1, .. })
        ));
        let nan = write(
            dir.path(),
            "n.csv",
            "t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm\n0,0,0,0,0,0,0\n10,NaN,0,0,0,0,0\n",
        );
        assert!(matches!(
            ingest_csv(&nan, IngestOptions::new(TraceStyle::Quest)),
            Err(Error::Ingest { line: 3, .. })
        ));
        let gap = write(
            dir.path(),
            "g.csv",
            "t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm\n0,0,0,0,0,0,0\n10,0,0,0,0,0,0\n110,0,0,0,0,0,0\n",
        );
        assert!(matches!(
            ingest_csv(&gap, IngestOptions::new(TraceStyle::Quest)),
            Err(Error::Ingest { line: 4, .. })
        ));
        assert!(matches!(
            ingest_csv(&dir.path().join("nope.csv"), IngestOptions::new(TraceStyle::Quest)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn single_sinusoid_without_noise_is_analytic() {
        let mut spec = SynthSpec::video360("s", 3000.0);
        spec.motion = SynthMotion::Sinusoids {
            components: 1,
            amp_deg: (5.0, 40.0),
            freq_hz: (0.1, 1.2),
            pos_amp_mm: (20.0, 200.0),
            pos_freq_hz: (0.05, 0.5),
            noise_deg: 0.0,
            noise_mm: 0.0,
            noise_smoothing: 0.5,
            turns_per_min: 0.0,
            turn_amp_deg: (10.0, 40.0),
            turn_ms: (100.0, 200.0),
        };
        let (tr, p) = generate_synthetic_with_params(&spec, 11).unwrap();
        assert_eq!(tr.len(), 101);
        for ch in 0..3 {
            let s = p.angle_components[ch][0];
            assert!((5.0..=40.0).contains(&s.amp));
            assert!((0.1..=1.2).contains(&s.freq_hz));
            for smp in tr.samples() {
                let want = wrap_deg(p.angle_offset[ch] + s.amp * (TAU * s.freq_hz * smp.t_ms / 1000.0 + s.phase).sin());
                assert_eq!(smp.angles()[ch], want);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_quest_steps_in_range() {
        let spec = SynthSpec::quest("q", 20_000.0);
        let a = generate_synthetic(&spec, 5).unwrap();
        let b = generate_synthetic(&spec, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&spec, 6).unwrap());
        for w in a.samples().windows(2) {
            let dt = w[1].t_ms - w[0].t_ms;
            assert!((10.0..=18.0).contains(&dt), "{dt}");
        }
    }

    #[test]
    fn pose_at_interpolates_across_seam() {
        let s = vec![
            PoseSample::from_parts(0.0, [179.0, 0.0, 0.0], [0.0; 3]),
            PoseSample::from_parts(10.0, [-179.0, 0.0, 0.0], [10.0, 0.0, 0.0]),
        ];
        let tr = Trace::new("a", "a", "", TraceStyle::Quest, 10.0, s).unwrap();
        let mid = tr.pose_at(5.0).unwrap();
        assert_eq!(mid.phi, -180.0);
        assert_eq!(mid.x, 5.0);
        assert!(tr.pose_at(10.5).is_none());
        assert_eq!(tr.last_index_at(9.9), Some(0));
        assert_eq!(tr.last_index_at(-1.0), None);
    }

    fn dummy(id: &str) -> Trace {
        let s = vec![
            PoseSample::from_parts(0.0, [0.0; 3], [0.0; 3]),
            PoseSample::from_parts(30.0, [0.0; 3], [0.0; 3]),
        ];
        Trace::new(id, id, "", TraceStyle::Video360, 30.0, s).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let traces: Vec<Trace> = (0..10).map(|i| dummy(&format!("s{i:02}"))).collect();
        let spec = SplitSpec { seed: 3, ..SplitSpec::default() };
        let a = split_streams(&traces, &spec).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (7, 1, 2));
        assert_eq!(a, split_streams(&traces, &spec).unwrap());
        let mut reversed = traces.clone();
        reversed.reverse();
        assert_eq!(a, split_streams(&reversed, &spec).unwrap());
        assert!(split_streams(&traces[..2], &spec).is_err());
        let three = split_streams(&traces[..3], &spec).unwrap();
        assert_eq!((three.train.len(), three.val.len(), three.test.len()), (1, 1, 1));
    }
}
