use crate::error::{Error, Result};
use crate::lstm::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments plus the global-norm clip applied before each update.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub clip_norm: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<P: Params>(params: &P, lr: f64, clip_norm: f64) -> Self {
        let shapes: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimState {
            lr,
            clip_norm,
            step: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    /// Clips `grads` to `clip_norm` by global L2 norm and applies one
    /// bias-corrected Adam update. Returns the pre-clip gradient norm.
    ///
    /// A non-finite gradient aborts with [`Error::Training`]; the caller fills
    /// in the epoch.
    pub fn update<P: Params>(&mut self, params: &mut P, grads: &P) -> Result<f64> {
        let g = grads.tensors();
        if g.len() != self.m.len() || g.iter().zip(&self.m).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::shape("gradient layout does not match optimizer state"));
        }
        let norm = g.iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            let bad = g.iter().flat_map(|t| t.iter()).filter(|x| !x.is_finite()).count();
            return Err(Error::Training {
                epoch: 0,
                msg: format!("{bad} non-finite gradient entries at optimizer step {}", self.step + 1),
            });
        }
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(g).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i] * scale;
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(norm)
    }
}
