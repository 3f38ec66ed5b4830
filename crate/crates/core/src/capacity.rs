//! Edge GPU capacity: the probability that more users need an edge re-render
//! in the same frame than the GPU can serve, and the largest user count that
//! keeps that probability under a bound.
//!
//! With `m` users each mispredicting independently with probability `p`,
//! the overload probability is the binomial upper tail
//! `Σ_{k=c}^{m} C(m,k) p^k (1-p)^(m-k)`.

use crate::error::{Error, Result};

pub const DEFAULT_M_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityQuery {
    pub p_error: f64,
    pub capacity_c: usize,
    pub epsilon: f64,
    pub m_cap: usize,
}

impl CapacityQuery {
    pub fn new(p_error: f64, capacity_c: usize, epsilon: f64) -> Result<Self> {
        let q = CapacityQuery {
            p_error,
            capacity_c,
            epsilon,
            m_cap: DEFAULT_M_CAP,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_error) {
            return Err(Error::domain(format!("p_error {} outside [0, 1]", self.p_error)));
        }
        if self.capacity_c < 1 {
            return Err(Error::domain("capacity must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::domain(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// Compensated (Neumaier) summation.
#[derive(Default)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `ln C(m, k)` as a compensated sum of `ln((m-k+i)/i)`.
fn ln_binom(m: usize, k: usize) -> f64 {
    let k = k.min(m - k);
    let mut s = KahanSum::default();
    for i in 1..=k {
        s.add(((m - k + i) as f64 / i as f64).ln());
    }
    s.total()
}

/// Probability that at least `capacity_c` of `m` users need a re-render.
///
/// Terms are generated by the ratio recurrence outward from the larger of
/// the mode and `c`, relative to that anchor term, so no factorial or power
/// ever under- or overflows.
pub fn overload_tail(m: usize, q: &CapacityQuery) -> Result<f64> {
    q.validate()?;
    if m > q.m_cap {
        return Err(Error::domain(format!("m = {m} exceeds the search ceiling {}", q.m_cap)));
    }
    let (p, c) = (q.p_error, q.capacity_c);
    if m < c || p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let odds = p / (1.0 - p);
    let mode = (((m + 1) as f64 * p).floor() as usize).min(m);
    let anchor = mode.max(c);
    let ln_anchor = ln_binom(m, anchor) + anchor as f64 * p.ln() + (m - anchor) as f64 * (-p).ln_1p();

    let mut rel = KahanSum::default();
    rel.add(1.0);
    let mut r = 1.0;
    for k in anchor + 1..=m {
        r *= (m - k + 1) as f64 / k as f64 * odds;
        if r < f64::EPSILON * 1e-4 * rel.total() {
            break;
        }
        rel.add(r);
    }
    r = 1.0;
    for k in (c..anchor).rev() {
        // t_k / t_{k+1}
        r *= (k + 1) as f64 / (m - k) as f64 / odds;
        if r < f64::EPSILON * 1e-4 * rel.total() {
            break;
        }
        rel.add(r);
    }
    Ok((ln_anchor.exp() * rel.total()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityStatus {
    /// `m_max` is the last user count under the bound.
    Found,
    /// Even `c` users overload too often; `m_max = c - 1`.
    SaturatedAtC,
    /// The bound holds all the way to the search ceiling.
    Capped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    pub m_max: usize,
    pub tail_at_m_max: f64,
    /// `None` when capped.
    pub tail_at_m_max_plus_1: Option<f64>,
    pub status: CapacityStatus,
}

/// Largest `m ≤ m_cap` with `overload_tail(m) < ε`, by linear scan from `c`.
pub fn max_users(q: &CapacityQuery) -> Result<CapacityResult> {
    q.validate()?;
    let c = q.capacity_c;
    if c > q.m_cap {
        return Ok(CapacityResult {
            m_max: q.m_cap,
            tail_at_m_max: 0.0,
            tail_at_m_max_plus_1: None,
            status: CapacityStatus::Capped,
        });
    }
    if q.p_error == 0.0 {
        return Ok(CapacityResult {
            m_max: q.m_cap,
            tail_at_m_max: 0.0,
            tail_at_m_max_plus_1: None,
            status: CapacityStatus::Capped,
        });
    }
    let mut prev = overload_tail(c - 1, q)?;
    for m in c..=q.m_cap {
        let t = overload_tail(m, q)?;
        if t >= q.epsilon {
            return Ok(CapacityResult {
                m_max: m - 1,
                tail_at_m_max: prev,
                tail_at_m_max_plus_1: Some(t),
                status: if m == c {
                    CapacityStatus::SaturatedAtC
                } else {
                    CapacityStatus::Found
                },
            });
        }
        prev = t;
    }
    Ok(CapacityResult {
        m_max: q.m_cap,
        tail_at_m_max: prev,
        tail_at_m_max_plus_1: None,
        status: CapacityStatus::Capped,
    })
}

/// `(m, tail)` rows for `m` in `lo..=hi`.
pub fn tail_table(q: &CapacityQuery, lo: usize, hi: usize) -> Result<Vec<(usize, f64)>> {
    (lo..=hi.min(q.m_cap)).map(|m| Ok((m, overload_tail(m, q)?))).collect()
}
