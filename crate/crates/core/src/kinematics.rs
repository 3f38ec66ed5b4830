//! Angle wrapping and the finite-difference / integration pair that links
//! poses, velocities and accelerations.
//!
//! Angles are in degrees with canonical range `[-180, 180)`. Derivatives are
//! expressed per second while timestamps are milliseconds. Differentiation is
//! a backward difference stamped at the right endpoint, and integration is the
//! semi-implicit Euler step that undoes it exactly.

use crate::error::{Error, Result};

/// Head orientation angle in degrees, always stored in canonical form.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AngleDeg(f64);

impl AngleDeg {
    pub fn new(deg: f64) -> Result<Self> {
        if !deg.is_finite() {
            return Err(Error::domain(format!("angle {deg} is not finite")));
        }
        Ok(AngleDeg(wrap_deg(deg)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Maps any finite angle into `[-180, 180)`.
pub fn wrap_deg(deg: f64) -> f64 {
    if (-180.0..180.0).contains(&deg) {
        return deg;
    }
    let r = deg.rem_euclid(360.0);
    // rem_euclid may round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Shortest signed arc from `a` to `b`, in `(-180, 180]`.
pub fn wrap_diff(a: f64, b: f64) -> Result<f64> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "wrap_diff needs finite angles, got ({a}, {b})"
        )));
    }
    Ok(wrap_diff_unchecked(a, b))
}

#[inline]
pub(crate) fn wrap_diff_unchecked(a: f64, b: f64) -> f64 {
    -wrap_deg(a - b)
}

/// What a derivative channel is the derivative of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Angle,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    AngleDeg,
    PositionMm,
    /// deg/s or mm/s depending on the quantity.
    VelocityPerS(Quantity),
    /// deg/s² or mm/s².
    AccelPerS2(Quantity),
    DtMs,
}

impl ChannelKind {
    fn derivative(self) -> Option<ChannelKind> {
        match self {
            ChannelKind::AngleDeg => Some(ChannelKind::VelocityPerS(Quantity::Angle)),
            ChannelKind::PositionMm => Some(ChannelKind::VelocityPerS(Quantity::Position)),
            ChannelKind::VelocityPerS(q) => Some(ChannelKind::AccelPerS2(q)),
            _ => None,
        }
    }

    fn antiderivative(self) -> Option<ChannelKind> {
        match self {
            ChannelKind::VelocityPerS(Quantity::Angle) => Some(ChannelKind::AngleDeg),
            ChannelKind::VelocityPerS(Quantity::Position) => Some(ChannelKind::PositionMm),
            ChannelKind::AccelPerS2(q) => Some(ChannelKind::VelocityPerS(q)),
            _ => None,
        }
    }
}

/// A single scalar channel sampled at strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    t_ms: Vec<f64>,
    values: Vec<f64>,
    kind: ChannelKind,
}

impl ChannelSeries {
    pub fn new(t_ms: Vec<f64>, values: Vec<f64>, kind: ChannelKind) -> Result<Self> {
        if t_ms.len() != values.len() {
            return Err(Error::shape(format!(
                "{} timestamps but {} values",
                t_ms.len(),
                values.len()
            )));
        }
        if let Some(i) = t_ms.iter().position(|t| !t.is_finite()) {
            return Err(Error::MalformedTrace(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedTrace(format!("value {i} is not finite")));
        }
        if let Some(k) = t_ms.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::MalformedTrace(format!(
                "non-increasing timestamps at index {}: {} -> {}",
                k + 1,
                t_ms[k],
                t_ms[k + 1]
            )));
        }
        let values = if kind == ChannelKind::AngleDeg {
            values.into_iter().map(wrap_deg).collect()
        } else {
            values
        };
        Ok(ChannelSeries { t_ms, values, kind })
    }

    pub fn t_ms(&self) -> &[f64] {
        &self.t_ms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> Option<(f64, f64)> {
        Some((*self.t_ms.first()?, *self.values.first()?))
    }
}

/// Backward difference per second, stamped at the right endpoint of each
/// interval. Angle channels use the shortest arc across the ±180° seam.
pub fn differentiate(s: &ChannelSeries) -> Result<ChannelSeries> {
    let out_kind = s.kind.derivative().ok_or_else(|| {
        Error::domain(format!("cannot differentiate a {:?} channel", s.kind))
    })?;
    if s.len() < 2 {
        return Err(Error::domain("differentiate needs at least two samples"));
    }
    let wrap = s.kind == ChannelKind::AngleDeg;
    let mut values = Vec::with_capacity(s.len() - 1);
    for k in 1..s.len() {
        let dt_ms = s.t_ms[k] - s.t_ms[k - 1];
        if dt_ms <= 0.0 {
            return Err(Error::MalformedTrace(format!(
                "non-positive time step {dt_ms} ms at index {k}"
            )));
        }
        let delta = if wrap {
            wrap_diff_unchecked(s.values[k - 1], s.values[k])
        } else {
            s.values[k] - s.values[k - 1]
        };
        values.push(delta / (dt_ms / 1000.0));
    }
    Ok(ChannelSeries {
        t_ms: s.t_ms[1..].to_vec(),
        values,
        kind: out_kind,
    })
}

/// Semi-implicit Euler accumulation of a derivative series.
///
/// `(t0_ms, initial)` anchors the first interval; the output has one more
/// sample than `deriv` and starts with the anchor. Angle outputs are wrapped.
pub fn integrate(t0_ms: f64, initial: f64, deriv: &ChannelSeries) -> Result<ChannelSeries> {
    let out_kind = deriv.kind.antiderivative().ok_or_else(|| {
        Error::domain(format!("cannot integrate a {:?} channel", deriv.kind))
    })?;
    if !t0_ms.is_finite() || !initial.is_finite() {
        return Err(Error::domain("integration anchor must be finite"));
    }
    if let Some(&t1) = deriv.t_ms.first() {
        if t1 <= t0_ms {
            return Err(Error::MalformedTrace(format!(
                "anchor time {t0_ms} is not before first derivative sample {t1}"
            )));
        }
    }
    let wrap = out_kind == ChannelKind::AngleDeg;
    let mut t_ms = Vec::with_capacity(deriv.len() + 1);
    let mut values = Vec::with_capacity(deriv.len() + 1);
    t_ms.push(t0_ms);
    values.push(if wrap { wrap_deg(initial) } else { initial });
    let mut prev_t = t0_ms;
    let mut x = values[0];
    for (&t, &d) in deriv.t_ms.iter().zip(&deriv.values) {
        x += d * ((t - prev_t) / 1000.0);
        if wrap {
            x = wrap_deg(x);
        }
        t_ms.push(t);
        values.push(x);
        prev_t = t;
    }
    Ok(ChannelSeries {
        t_ms,
        values,
        kind: out_kind,
    })
}

/// Number of sample intervals the decoder emits to span the horizon.
pub fn rollout_steps(horizon_ms: f64, nominal_dt_ms: f64) -> Result<usize> {
    if !(horizon_ms > 0.0 && horizon_ms.is_finite()) || !(nominal_dt_ms > 0.0 && nominal_dt_ms.is_finite()) {
        return Err(Error::domain(format!(
            "rollout_steps needs positive inputs, got horizon {horizon_ms} ms, dt {nominal_dt_ms} ms"
        )));
    }
    // tolerate ratios like 6.000000000001 from decimal timestamps
    let ratio = horizon_ms / nominal_dt_ms;
    Ok(((ratio - 1e-9).ceil() as usize).max(1))
}
