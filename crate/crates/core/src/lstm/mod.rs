//! A small sequence-model engine: LSTM encoder, affine heads, MAE/MSE losses,
//! backpropagation through time and an Adam optimizer with global-norm
//! clipping. Everything runs in `f64`.

mod layers;
mod loss;
mod optim;

pub use layers::{
    dense_forward, encode, encode_backward, encode_traced, lstm_step, DenseWeights, LstmWeights, Matrix,
    StepCache, GATES,
};
pub use loss::{loss, LossKind};
pub use optim::OptimState;

use rayon::prelude::*;

use crate::error::Result;

/// A bundle of parameter tensors with a fixed, deterministic ordering.
pub trait Params: Sized {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// One training example: an input sequence per encoder (one value per step)
/// and the flat target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqExample {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// A differentiable sequence model.
pub trait SeqModel: Params + Clone + Send + Sync {
    fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>>;

    /// Forward and backward for one example: returns the outputs and adds the
    /// parameter gradient of `∂loss/∂outputs = d_out` into `grads`.
    fn forward_backward(
        &self,
        inputs: &[Vec<f64>],
        d_out: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
        grads: &mut Self,
    ) -> Result<Vec<f64>>;

    /// Output sizes of the independently averaged loss groups.
    fn output_groups(&self) -> Vec<usize>;
}

/// Per-example loss: each output group is averaged and the groups summed.
pub fn example_loss(groups: &[usize], kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let covered: usize = groups.iter().sum();
    if covered != pred.len() || pred.len() != target.len() {
        return Err(crate::Error::shape(format!(
            "loss groups cover {covered} outputs, model produced {}, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    let mut at = 0;
    for &g in groups {
        let (l, d) = loss(kind, &pred[at..at + g], &target[at..at + g])?;
        total += l;
        grad.extend(d);
        at += g;
    }
    Ok((total, grad))
}

/// Examples per reduction chunk. Fixed so results do not depend on how many
/// threads run the chunks.
const CHUNK: usize = 8;

/// Exact reverse-mode gradients summed over `batch`, with the summed loss.
///
/// Chunks are evaluated in parallel and reduced in example order, so the
/// result is bit-identical for any thread count.
pub fn backprop_through_time<M: SeqModel>(model: &M, batch: &[SeqExample], kind: LossKind) -> Result<(f64, M)> {
    if batch.is_empty() {
        return Err(crate::Error::domain("backprop_through_time needs a nonempty batch"));
    }
    let groups = model.output_groups();
    let partials: Vec<Result<(f64, M)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zeros_like();
            let mut total = 0.0;
            for ex in chunk {
                let d_out = |pred: &[f64]| example_loss(&groups, kind, pred, &ex.targets).map(|(_, d)| d);
                let pred = model.forward_backward(&ex.inputs, &d_out, &mut grads)?;
                total += example_loss(&groups, kind, &pred, &ex.targets)?.0;
            }
            Ok((total, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = model.zeros_like();
    for p in partials {
        let (l, g) = p?;
        total += l;
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Summed loss over `batch` without gradients.
pub fn batch_loss<M: SeqModel>(model: &M, batch: &[SeqExample], kind: LossKind) -> Result<f64> {
    let groups = model.output_groups();
    let per: Vec<Result<f64>> = batch
        .par_iter()
        .map(|ex| {
            let pred = model.forward(&ex.inputs)?;
            Ok(example_loss(&groups, kind, &pred, &ex.targets)?.0)
        })
        .collect();
    per.into_iter().sum()
}
