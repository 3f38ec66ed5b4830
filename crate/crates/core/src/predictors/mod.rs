//! Head-pose predictors behind one interface: given the most recent
//! `window_len + 2` samples, produce the pose `horizon_ms` after the last one.
//!
//! Analytic baselines (constant pose, velocity, acceleration) need no
//! weights. `AngleLstm` forecasts per-channel angular accelerations (or
//! velocities) over the horizon and integrates them; positions are held.
//! `PositionLstm` forecasts next-frame velocity and Δt and is rolled out
//! autoregressively; angles are held.

pub mod features;
mod nets;

use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{integrate, rollout_steps, wrap_diff_unchecked, ChannelKind, ChannelSeries, Quantity};
use crate::lstm::{LossKind, Params, SeqModel};
use crate::textdoc::TextDoc;
use crate::trace::{PoseSample, TraceStyle, QUEST_DT_RANGE_MS};

pub use features::{decode_output, n_channels, normalize_inputs, target_of, window_inputs, NormStats};
pub use nets::{AngleNet, ChannelNet, PositionNet};

pub const MODEL_FORMAT: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 30;
pub const DEFAULT_HORIZON_MS: f64 = 60.0;
pub const VIDEO360_WINDOW: usize = 30;
pub const QUEST_WINDOW: usize = 60;
pub const DEFAULT_ANGLE_THRESHOLD_DEG: f64 = 1.0;
pub const DEFAULT_POS_THRESHOLD_MM: f64 = 10.0;

macro_rules! named_enum {
    ($ty:ident { $($var:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }

            pub fn parse(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$var),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}` (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    ConstPose,
    ConstVelocity,
    ConstAcceleration,
    AngleLstm,
    PositionLstm,
}

named_enum!(Arch {
    ConstPose => "const-pose",
    ConstVelocity => "const-velocity",
    ConstAcceleration => "const-acceleration",
    AngleLstm => "angle-lstm",
    PositionLstm => "position-lstm",
});

impl Arch {
    pub fn is_learned(self) -> bool {
        matches!(self, Arch::AngleLstm | Arch::PositionLstm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetMode {
    Velocity,
    Acceleration,
}

named_enum!(TargetMode {
    Velocity => "velocity",
    Acceleration => "acceleration",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMode {
    Global,
    PerStream,
}

named_enum!(NormMode {
    Global => "global",
    PerStream => "per-stream",
});

/// Where per-stream statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamStats {
    /// The input window's own history; usable online.
    Causal,
    /// The whole recorded stream, as in offline ablations.
    Offline,
}

named_enum!(StreamStats {
    Causal => "causal",
    Offline => "offline",
});

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub arch: Arch,
    pub hidden_dim: usize,
    pub window_len: usize,
    pub horizon_ms: f64,
    /// Sampling step the rollout is planned against.
    pub nominal_dt_ms: f64,
    pub target_mode: TargetMode,
    pub with_dt: bool,
    pub loss_kind: LossKind,
    pub norm_mode: NormMode,
    pub stream_stats: StreamStats,
}

impl PredictorConfig {
    /// Defaults for fixed-rate orientation data: window 30, 30 ms steps.
    pub fn video360(arch: Arch) -> Self {
        PredictorConfig {
            arch,
            hidden_dim: DEFAULT_HIDDEN,
            window_len: VIDEO360_WINDOW,
            horizon_ms: DEFAULT_HORIZON_MS,
            nominal_dt_ms: 30.0,
            target_mode: TargetMode::Acceleration,
            with_dt: true,
            loss_kind: LossKind::Mae,
            norm_mode: NormMode::Global,
            stream_stats: StreamStats::Causal,
        }
    }

    /// Defaults for headset data: window 60, nominal step of the data.
    pub fn quest(arch: Arch, nominal_dt_ms: f64) -> Self {
        PredictorConfig {
            window_len: QUEST_WINDOW,
            nominal_dt_ms,
            ..PredictorConfig::video360(arch)
        }
    }

    pub fn for_style(arch: Arch, style: TraceStyle, nominal_dt_ms: f64) -> Self {
        match style {
            TraceStyle::Video360 => PredictorConfig {
                nominal_dt_ms,
                ..PredictorConfig::video360(arch)
            },
            TraceStyle::Quest => PredictorConfig::quest(arch, nominal_dt_ms),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Config(format!("window_len {} must be at least 2", self.window_len)));
        }
        if self.hidden_dim < 1 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if !(self.horizon_ms > 0.0 && self.horizon_ms.is_finite()) {
            return Err(Error::Config(format!("horizon {} ms must be positive", self.horizon_ms)));
        }
        if !(self.nominal_dt_ms > 0.0 && self.nominal_dt_ms.is_finite()) {
            return Err(Error::Config(format!("nominal step {} ms must be positive", self.nominal_dt_ms)));
        }
        Ok(())
    }

    pub fn rollout_steps(&self) -> Result<usize> {
        rollout_steps(self.horizon_ms, self.nominal_dt_ms)
    }

    /// Raw samples a prediction consumes.
    pub fn raw_window_len(&self) -> usize {
        self.window_len + 2
    }

    fn write(&self, doc: &mut TextDoc) {
        doc.set("config.arch", self.arch.name())
            .set("config.hidden_dim", self.hidden_dim)
            .set("config.window_len", self.window_len)
            .set_f64("config.horizon_ms", self.horizon_ms)
            .set_f64("config.nominal_dt_ms", self.nominal_dt_ms)
            .set("config.target_mode", self.target_mode.name())
            .set("config.with_dt", self.with_dt)
            .set("config.loss", self.loss_kind.name())
            .set("config.norm_mode", self.norm_mode.name())
            .set("config.stream_stats", self.stream_stats.name());
    }

    fn read(doc: &TextDoc) -> Result<Self> {
        let c = PredictorConfig {
            arch: Arch::parse(doc.str("config.arch")?)?,
            hidden_dim: doc.parse("config.hidden_dim")?,
            window_len: doc.parse("config.window_len")?,
            horizon_ms: doc.parse("config.horizon_ms")?,
            nominal_dt_ms: doc.parse("config.nominal_dt_ms")?,
            target_mode: TargetMode::parse(doc.str("config.target_mode")?)?,
            with_dt: doc.parse("config.with_dt")?,
            loss_kind: LossKind::parse(doc.str("config.loss")?)?,
            norm_mode: NormMode::parse(doc.str("config.norm_mode")?)?,
            stream_stats: StreamStats::parse(doc.str("config.stream_stats")?)?,
        };
        c.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    None,
    Angle(AngleNet),
    Position(PositionNet),
}

/// Configuration, weights and normalization statistics of one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PredictorConfig,
    pub net: Net,
    /// Global statistics; `None` when statistics are per stream.
    pub stats: Option<NormStats>,
}

impl ModelBundle {
    pub fn baseline(config: PredictorConfig) -> Result<Self> {
        if config.arch.is_learned() {
            return Err(Error::Config(format!("{} needs trained weights", config.arch.name())));
        }
        config.validate()?;
        Ok(ModelBundle {
            config,
            net: Net::None,
            stats: None,
        })
    }

    /// Checks that the weights and statistics agree with the configuration.
    pub fn new(config: PredictorConfig, net: Net, stats: Option<NormStats>) -> Result<Self> {
        config.validate()?;
        let hd = config.hidden_dim;
        let k = n_channels(&config);
        match (&config.arch, &net) {
            (Arch::AngleLstm, Net::Angle(n)) => {
                let s = config.rollout_steps()?;
                if n.channels.len() != 3
                    || n.channels.iter().any(|c| {
                        c.encoder.in_dim() != 1 || c.encoder.hidden() != hd || c.head.in_dim() != hd || c.head.out_dim() != s
                    })
                {
                    return Err(Error::shape("angle net does not match config"));
                }
            }
            (Arch::PositionLstm, Net::Position(n)) => {
                if n.encoders.len() != k
                    || n.heads.len() != k
                    || n.encoders.iter().any(|e| e.in_dim() != 1 || e.hidden() != hd)
                    || n.heads.iter().any(|h| h.in_dim() != k * hd || h.out_dim() != 1)
                {
                    return Err(Error::shape("position net does not match config"));
                }
            }
            (a, Net::None) if !a.is_learned() => {}
            (a, _) => return Err(Error::shape(format!("weights do not fit arch {}", a.name()))),
        }
        match (&stats, config.norm_mode) {
            (Some(s), NormMode::Global) if s.len() != k => {
                return Err(Error::shape(format!("{} stats channels, expected {k}", s.len())))
            }
            (None, NormMode::Global) if config.arch.is_learned() => {
                return Err(Error::shape("global normalization needs statistics"))
            }
            _ => {}
        }
        Ok(ModelBundle { config, net, stats })
    }

    pub fn to_doc(&self) -> TextDoc {
        let mut doc = TextDoc::new();
        doc.set("format", MODEL_FORMAT).set("kind", "cvrlab-model");
        self.config.write(&mut doc);
        if let Some(s) = &self.stats {
            s.write(&mut doc, "stats");
        }
        match &self.net {
            Net::None => {}
            Net::Angle(n) => {
                for (c, ch) in n.channels.iter().enumerate() {
                    nets::write_lstm(&mut doc, &format!("angle.c{c}.lstm"), &ch.encoder);
                    nets::write_dense(&mut doc, &format!("angle.c{c}.head"), &ch.head);
                }
            }
            Net::Position(n) => {
                for (c, e) in n.encoders.iter().enumerate() {
                    nets::write_lstm(&mut doc, &format!("position.s{c}.lstm"), e);
                }
                for (c, h) in n.heads.iter().enumerate() {
                    nets::write_dense(&mut doc, &format!("position.s{c}.head"), h);
                }
            }
        }
        doc
    }

    pub fn from_doc(doc: &TextDoc) -> Result<Self> {
        let format: u32 = doc.parse("format")?;
        if format != MODEL_FORMAT {
            return Err(Error::Format(format!("model format {format} is not supported")));
        }
        let config = PredictorConfig::read(doc)?;
        let k = n_channels(&config);
        let hd = config.hidden_dim;
        let stats = match doc.get("stats.mean") {
            Some(_) => Some(NormStats::read(doc, "stats", k)?),
            None => None,
        };
        let net = match config.arch {
            Arch::AngleLstm => {
                let s = config.rollout_steps()?;
                let channels = (0..3)
                    .map(|c| {
                        Ok(ChannelNet {
                            encoder: nets::read_lstm(doc, &format!("angle.c{c}.lstm"), 1, hd)?,
                            head: nets::read_dense(doc, &format!("angle.c{c}.head"), hd, s)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Net::Angle(AngleNet { channels })
            }
            Arch::PositionLstm => Net::Position(PositionNet {
                encoders: (0..k)
                    .map(|c| nets::read_lstm(doc, &format!("position.s{c}.lstm"), 1, hd))
                    .collect::<Result<_>>()?,
                heads: (0..k)
                    .map(|c| nets::read_dense(doc, &format!("position.s{c}.head"), k * hd, 1))
                    .collect::<Result<_>>()?,
            }),
            _ => Net::None,
        };
        ModelBundle::new(config, net, stats).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_doc().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelBundle::from_doc(&TextDoc::read(path)?)
    }

    /// Statistics to normalize `window` with.
    fn stats_for(&self, raw: &[Vec<f64>], stream: Option<&NormStats>) -> Result<NormStats> {
        match self.config.norm_mode {
            NormMode::Global => self
                .stats
                .clone()
                .ok_or_else(|| Error::domain("bundle has no normalization statistics")),
            NormMode::PerStream => match (self.config.stream_stats, stream) {
                (_, Some(s)) => Ok(s.clone()),
                (StreamStats::Causal, None) => NormStats::from_channels(raw),
                (StreamStats::Offline, None) => Err(Error::domain(
                    "offline per-stream normalization needs the stream's statistics",
                )),
            },
        }
    }

    /// Learned-net outputs for a window, decoded to physical units per channel.
    pub fn net_outputs(&self, window: &[PoseSample], stream: Option<&NormStats>) -> Result<Vec<Vec<f64>>> {
        let raw = window_inputs(&self.config, window)?;
        let stats = self.stats_for(&raw, stream)?;
        let inputs = normalize_inputs(&raw, &stats);
        let (out, per) = match &self.net {
            Net::Angle(n) => (n.forward(&inputs)?, n.steps()),
            Net::Position(n) => (n.forward(&inputs)?, 1),
            Net::None => return Err(Error::domain("baseline predictors have no network")),
        };
        Ok(out
            .chunks(per)
            .enumerate()
            .map(|(c, ys)| ys.iter().map(|y| decode_output(&self.config, &stats, c, *y)).collect())
            .collect())
    }

    /// Next-frame `(velocity mm/s per axis, Δt ms if predicted)` from a
    /// position model.
    pub fn predict_next_frame(&self, window: &[PoseSample], stream: Option<&NormStats>) -> Result<([f64; 3], Option<f64>)> {
        if self.config.arch != Arch::PositionLstm {
            return Err(Error::domain("next-frame prediction needs a position model"));
        }
        let out = self.net_outputs(window, stream)?;
        let v = [out[0][0], out[1][0], out[2][0]];
        Ok((v, out.get(3).map(|d| d[0])))
    }
}

pub fn predict(bundle: &ModelBundle, window: &[PoseSample]) -> Result<PoseSample> {
    predict_with_stats(bundle, window, None)
}

/// Like [`predict`], with statistics of the window's stream for per-stream
/// normalization (required when the bundle uses offline stream statistics).
pub fn predict_with_stats(bundle: &ModelBundle, window: &[PoseSample], stream: Option<&NormStats>) -> Result<PoseSample> {
    let cfg = &bundle.config;
    let need = cfg.raw_window_len();
    if window.len() < need {
        return Err(Error::domain(format!(
            "window has {} samples, {} needs {need}",
            window.len(),
            cfg.arch.name()
        )));
    }
    let window = &window[window.len() - need..];
    if let Some(k) = window.windows(2).position(|w| w[1].t_ms <= w[0].t_ms) {
        return Err(Error::MalformedTrace(format!("window timestamps not increasing at {}", k + 1)));
    }
    let last = window[need - 1];
    let prev = window[need - 2];
    let prev2 = window[need - 3];
    let h = cfg.horizon_ms;
    let h_s = h / 1000.0;
    let t_out = last.t_ms + h;
    let dt1 = (last.t_ms - prev.t_ms) / 1000.0;
    let dt0 = (prev.t_ms - prev2.t_ms) / 1000.0;

    let ang_vel = |a: &PoseSample, b: &PoseSample, dt: f64| -> [f64; 3] {
        std::array::from_fn(|c| wrap_diff_unchecked(a.angles()[c], b.angles()[c]) / dt)
    };
    let pos_vel = |a: &PoseSample, b: &PoseSample, dt: f64| -> [f64; 3] {
        std::array::from_fn(|c| (b.position()[c] - a.position()[c]) / dt)
    };

    match cfg.arch {
        Arch::ConstPose => Ok(PoseSample { t_ms: t_out, ..last }),
        Arch::ConstVelocity => {
            let va = ang_vel(&prev, &last, dt1);
            let vp = pos_vel(&prev, &last, dt1);
            Ok(PoseSample::from_parts(
                t_out,
                std::array::from_fn(|c| last.angles()[c] + va[c] * h_s),
                std::array::from_fn(|c| last.position()[c] + vp[c] * h_s),
            ))
        }
        Arch::ConstAcceleration => {
            let (va1, va0) = (ang_vel(&prev, &last, dt1), ang_vel(&prev2, &prev, dt0));
            let (vp1, vp0) = (pos_vel(&prev, &last, dt1), pos_vel(&prev2, &prev, dt0));
            let extrap = |x: f64, v1: f64, v0: f64| x + v1 * h_s + 0.5 * ((v1 - v0) / dt1) * h_s * h_s;
            Ok(PoseSample::from_parts(
                t_out,
                std::array::from_fn(|c| extrap(last.angles()[c], va1[c], va0[c])),
                std::array::from_fn(|c| extrap(last.position()[c], vp1[c], vp0[c])),
            ))
        }
        Arch::AngleLstm => {
            let outs = bundle.net_outputs(window, stream)?;
            let v_last = ang_vel(&prev, &last, dt1);
            let mut angles = [0.0; 3];
            for c in 0..3 {
                angles[c] = rollout_angle(cfg, last.t_ms, last.angles()[c], v_last[c], &outs[c])?;
            }
            Ok(PoseSample::from_parts(t_out, angles, last.position()))
        }
        Arch::PositionLstm => {
            let pos = rollout_position(bundle, window, stream)?;
            Ok(PoseSample::from_parts(t_out, last.angles(), pos))
        }
    }
}

/// Integrates predicted derivatives over the grid `t_last + k·H/S` and
/// returns the angle at the horizon.
pub fn rollout_angle(cfg: &PredictorConfig, t_last: f64, x_last: f64, v_last: f64, derivs: &[f64]) -> Result<f64> {
    let steps = derivs.len();
    let step_ms = cfg.horizon_ms / steps as f64;
    let grid: Vec<f64> = (1..=steps).map(|k| t_last + k as f64 * step_ms).collect();
    let vel = match cfg.target_mode {
        TargetMode::Velocity => ChannelSeries::new(grid, derivs.to_vec(), ChannelKind::VelocityPerS(Quantity::Angle))?,
        TargetMode::Acceleration => {
            let acc = ChannelSeries::new(grid.clone(), derivs.to_vec(), ChannelKind::AccelPerS2(Quantity::Angle))?;
            let v = integrate(t_last, v_last, &acc)?;
            ChannelSeries::new(grid, v.values()[1..].to_vec(), ChannelKind::VelocityPerS(Quantity::Angle))?
        }
    };
    let x = integrate(t_last, x_last, &vel)?;
    Ok(x.values()[steps])
}

/// Autoregressive next-frame rollout of a position model until the horizon
/// is covered; the final step is truncated to land exactly on it.
fn rollout_position(bundle: &ModelBundle, window: &[PoseSample], stream: Option<&NormStats>) -> Result<[f64; 3]> {
    let cfg = &bundle.config;
    let net = match &bundle.net {
        Net::Position(n) => n,
        _ => return Err(Error::shape("position arch without position weights")),
    };
    let raw = window_inputs(cfg, window)?;
    let stats = bundle.stats_for(&raw, stream)?;
    let mut seq = normalize_inputs(&raw, &stats);
    let last = window[window.len() - 1];
    let mut pos = last.position();
    let mut elapsed = 0.0;
    let (lo, hi) = QUEST_DT_RANGE_MS;
    while elapsed < cfg.horizon_ms - 1e-9 {
        let out = net.forward(&seq)?;
        let v: [f64; 3] = std::array::from_fn(|c| decode_output(cfg, &stats, c, out[c]));
        let dt = if cfg.with_dt {
            decode_output(cfg, &stats, 3, out[3]).clamp(lo, hi)
        } else {
            cfg.nominal_dt_ms
        };
        let step = dt.min(cfg.horizon_ms - elapsed);
        for c in 0..3 {
            pos[c] += v[c] * step / 1000.0;
        }
        elapsed += step;
        let fed: Vec<f64> = v.iter().copied().chain(cfg.with_dt.then_some(dt)).collect();
        for (c, s) in seq.iter_mut().enumerate() {
            s.remove(0);
            s.push((fed[c] - stats.mean[c]) / stats.std[c]);
        }
    }
    Ok(pos)
}

/// Error between the predicted and the actual pose, as the edge sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionError {
    /// Largest absolute wrapped difference over the three Euler angles.
    pub angle_deg: f64,
    /// Euclidean position distance.
    pub pos_mm: f64,
}

impl DecisionError {
    pub fn exceeds(&self, angle_threshold_deg: f64, pos_threshold_mm: f64) -> bool {
        self.angle_deg > angle_threshold_deg || self.pos_mm > pos_threshold_mm
    }

    /// Error relative to the thresholds; above 1 means a re-render.
    pub fn normalized(&self, angle_threshold_deg: f64, pos_threshold_mm: f64) -> f64 {
        (self.angle_deg / angle_threshold_deg).max(self.pos_mm / pos_threshold_mm)
    }
}

pub fn decision_error(pred: &PoseSample, actual: &PoseSample) -> Result<DecisionError> {
    if (pred.t_ms - actual.t_ms).abs() > 1.0 {
        return Err(Error::domain(format!(
            "comparing poses {} ms apart ({} vs {})",
            (pred.t_ms - actual.t_ms).abs(),
            pred.t_ms,
            actual.t_ms
        )));
    }
    let angle_deg = (0..3)
        .map(|c| wrap_diff_unchecked(actual.angles()[c], pred.angles()[c]).abs())
        .fold(0.0, f64::max);
    let pos_mm = (0..3)
        .map(|c| (pred.position()[c] - actual.position()[c]).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DecisionError { angle_deg, pos_mm })
}

/// Parameter count of a bundle's network.
pub fn n_params(bundle: &ModelBundle) -> usize {
    match &bundle.net {
        Net::None => 0,
        Net::Angle(n) => n.n_params(),
        Net::Position(n) => n.n_params(),
    }
}
