//! Turning raw pose windows into normalized network inputs and targets, and
//! network outputs back into kinematic quantities.

use crate::error::{Error, Result};
use crate::kinematics::{differentiate, ChannelKind, ChannelSeries};
use crate::predictors::{Arch, NormMode, PredictorConfig, TargetMode};
use crate::textdoc::TextDoc;
use crate::trace::{PoseSample, Trace};

/// Standard deviations below this are treated as degenerate.
pub const MIN_STD: f64 = 1e-6;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose standard deviation was replaced by 1.
    pub degenerate: Vec<usize>,
}

impl NormStats {
    /// Population statistics of each channel's pooled values.
    pub fn from_channels<S: AsRef<[f64]>>(channels: &[S]) -> Result<Self> {
        let mut mean = Vec::with_capacity(channels.len());
        let mut std = Vec::with_capacity(channels.len());
        let mut degenerate = Vec::new();
        for (c, vals) in channels.iter().enumerate() {
            let vals = vals.as_ref();
            if vals.is_empty() {
                return Err(Error::domain(format!("no values for channel {c} statistics")));
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let mut s = var.sqrt();
            if !(s >= MIN_STD) {
                s = 1.0;
                degenerate.push(c);
            }
            mean.push(m);
            std.push(s);
        }
        Ok(NormStats { mean, std, degenerate })
    }

    pub fn identity(n: usize) -> Self {
        NormStats {
            mean: vec![0.0; n],
            std: vec![1.0; n],
            degenerate: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub(crate) fn write(&self, doc: &mut TextDoc, prefix: &str) {
        doc.set_array(format!("{prefix}.mean"), &[self.len()], &self.mean);
        doc.set_array(format!("{prefix}.std"), &[self.len()], &self.std);
    }

    pub(crate) fn read(doc: &TextDoc, prefix: &str, n: usize) -> Result<Self> {
        let mean = doc.array(&format!("{prefix}.mean"), &[n])?.to_vec();
        let std = doc.array(&format!("{prefix}.std"), &[n])?.to_vec();
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Format(format!("`{prefix}` statistics must be finite with std > 0")));
        }
        Ok(NormStats {
            mean,
            std,
            degenerate: Vec::new(),
        })
    }
}

/// Number of encoder channels a configuration feeds.
pub fn n_channels(config: &PredictorConfig) -> usize {
    match config.arch {
        Arch::PositionLstm if config.with_dt => 4,
        _ => 3,
    }
}

/// Whether a channel's outputs are scaled without centering, so that a zero
/// network output means a zero derivative. That holds for derivative
/// channels under global statistics. Per-stream statistics remove the
/// window's level from the inputs, so outputs are centered on it too; the Δt
/// stream is always centered.
pub fn zero_centered(config: &PredictorConfig, ch: usize) -> bool {
    config.norm_mode == NormMode::Global && !(config.arch == Arch::PositionLstm && ch == 3)
}

fn series(samples: &[PoseSample], kind: ChannelKind, pick: impl Fn(&PoseSample) -> f64) -> Result<ChannelSeries> {
    ChannelSeries::new(
        samples.iter().map(|s| s.t_ms).collect(),
        samples.iter().map(pick).collect(),
        kind,
    )
}

/// Full derived series over a run of samples, one per encoder channel.
/// Angle channels yield accelerations (n-2 values) or velocities (n-1);
/// position channels yield velocities and steps (n-1 each).
pub fn derived_series(config: &PredictorConfig, samples: &[PoseSample]) -> Result<Vec<Vec<f64>>> {
    match config.arch {
        Arch::PositionLstm => {
            let mut out = Vec::with_capacity(4);
            for ch in 0..3 {
                let s = series(samples, ChannelKind::PositionMm, |p| p.position()[ch])?;
                out.push(differentiate(&s)?.values().to_vec());
            }
            if config.with_dt {
                out.push(samples.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect());
            }
            Ok(out)
        }
        _ => {
            let mut out = Vec::with_capacity(3);
            for ch in 0..3 {
                let s = series(samples, ChannelKind::AngleDeg, |p| p.angles()[ch])?;
                let v = differentiate(&s)?;
                out.push(match config.target_mode {
                    TargetMode::Velocity => v.values().to_vec(),
                    TargetMode::Acceleration => differentiate(&v)?.values().to_vec(),
                });
            }
            Ok(out)
        }
    }
}

/// Unnormalized encoder inputs for a window of `window_len + 2` samples.
pub fn window_inputs(config: &PredictorConfig, window: &[PoseSample]) -> Result<Vec<Vec<f64>>> {
    let l = config.window_len;
    if window.len() < l + 2 {
        return Err(Error::domain(format!(
            "window has {} samples, needs {}",
            window.len(),
            l + 2
        )));
    }
    let window = &window[window.len() - (l + 2)..];
    Ok(derived_series(config, window)?
        .into_iter()
        .map(|s| s[s.len() - l..].to_vec())
        .collect())
}

pub fn normalize_inputs(raw: &[Vec<f64>], stats: &NormStats) -> Vec<Vec<f64>> {
    raw.iter()
        .enumerate()
        .map(|(c, s)| s.iter().map(|v| (v - stats.mean[c]) / stats.std[c]).collect())
        .collect()
}

pub fn encode_target(config: &PredictorConfig, stats: &NormStats, ch: usize, v: f64) -> f64 {
    if zero_centered(config, ch) {
        v / stats.std[ch]
    } else {
        (v - stats.mean[ch]) / stats.std[ch]
    }
}

pub fn decode_output(config: &PredictorConfig, stats: &NormStats, ch: usize, y: f64) -> f64 {
    if zero_centered(config, ch) {
        y * stats.std[ch]
    } else {
        y * stats.std[ch] + stats.mean[ch]
    }
}

/// Ground truth at `t_ms`, tolerating a horizon that lands a rounding error
/// past the last sample.
pub(crate) fn truth_at(trace: &Trace, t_ms: f64) -> Option<PoseSample> {
    let end = trace.end_ms();
    if t_ms > end && t_ms - end <= 1e-6 {
        let mut s = trace.samples()[trace.len() - 1];
        s.t_ms = t_ms;
        return Some(s);
    }
    trace.pose_at(t_ms)
}

/// Raw (unnormalized) training targets for the window ending at sample `end`
/// of `trace`, one vector per output channel.
///
/// Angle models get the derivative sequence over the rollout grid
/// `t_end + k·H/S`, `k = 1..=S`: exactly the values that, integrated from the
/// last observed angle and velocity, land on the true future poses. Position
/// models get the next frame's velocity and step.
pub fn raw_targets(config: &PredictorConfig, trace: &Trace, end: usize) -> Result<Vec<Vec<f64>>> {
    let s = trace.samples();
    if end < 1 || end >= s.len() {
        return Err(Error::domain(format!("window end {end} outside trace of {}", s.len())));
    }
    match config.arch {
        Arch::PositionLstm => {
            let (a, b) = s
                .get(end)
                .zip(s.get(end + 1))
                .ok_or_else(|| Error::domain("no sample after the window for a next-frame target"))?;
            let dt = b.t_ms - a.t_ms;
            let mut out: Vec<Vec<f64>> = (0..3)
                .map(|c| vec![(b.position()[c] - a.position()[c]) / (dt / 1000.0)])
                .collect();
            if config.with_dt {
                out.push(vec![dt]);
            }
            Ok(out)
        }
        _ => {
            let steps = config.rollout_steps()?;
            let step_ms = config.horizon_ms / steps as f64;
            let t_end = s[end].t_ms;
            let mut future = Vec::with_capacity(steps);
            for k in 1..=steps {
                let t = t_end + k as f64 * step_ms;
                future.push(truth_at(trace, t).ok_or_else(|| {
                    Error::domain(format!("trace `{}` ends before {t} ms", trace.stream_id))
                })?);
            }
            let mut out = Vec::with_capacity(3);
            for ch in 0..3 {
                let t: Vec<f64> = [s[end - 1].t_ms, t_end]
                    .into_iter()
                    .chain(future.iter().map(|p| p.t_ms))
                    .collect();
                let x: Vec<f64> = [s[end - 1].angles()[ch], s[end].angles()[ch]]
                    .into_iter()
                    .chain(future.iter().map(|p| p.angles()[ch]))
                    .collect();
                let v = differentiate(&ChannelSeries::new(t, x, ChannelKind::AngleDeg)?)?;
                out.push(match config.target_mode {
                    TargetMode::Velocity => v.values()[1..].to_vec(),
                    TargetMode::Acceleration => differentiate(&v)?.values().to_vec(),
                });
            }
            Ok(out)
        }
    }
}

/// Normalized, flattened training targets.
pub fn target_of(config: &PredictorConfig, stats: &NormStats, trace: &Trace, end: usize) -> Result<Vec<f64>> {
    Ok(raw_targets(config, trace, end)?
        .iter()
        .enumerate()
        .flat_map(|(c, vals)| vals.iter().map(move |v| encode_target(config, stats, c, *v)).collect::<Vec<_>>())
        .collect())
}
