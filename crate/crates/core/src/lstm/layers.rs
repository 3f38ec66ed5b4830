use rand::Rng;

use crate::error::{Error, Result};
use crate::lstm::Params;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += self · x`
    #[inline]
    fn gemv_acc(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · y`
    #[inline]
    fn gemv_t_acc(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            if yr != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * yr;
                }
            }
        }
    }

    /// `self += y · xᵀ`
    #[inline]
    fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        for (row, &yr) in self.data.chunks_exact_mut(self.cols).zip(y) {
            if yr != 0.0 {
                for (a, xv) in row.iter_mut().zip(x) {
                    *a += yr * xv;
                }
            }
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate order inside the stacked matrices.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];

/// LSTM parameters with the four gates stacked row-wise in [`GATES`] order:
/// rows `g*hidden .. (g+1)*hidden` belong to gate `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub w_input: Matrix,
    pub w_recurrent: Matrix,
    pub bias: Vec<f64>,
}

impl LstmWeights {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        LstmWeights {
            w_input: Matrix::zeros(4 * hidden, in_dim),
            w_recurrent: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform in ±1/√fan_in where fan_in counts input and recurrent connections.
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_dim + hidden) as f64).sqrt();
        LstmWeights {
            w_input: Matrix::uniform(4 * hidden, in_dim, bound, rng),
            w_recurrent: Matrix::uniform(4 * hidden, hidden, bound, rng),
            bias: (0..4 * hidden).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn from_parts(w_input: Matrix, w_recurrent: Matrix, bias: Vec<f64>) -> Result<Self> {
        let h4 = w_input.rows();
        if h4 == 0 || !h4.is_multiple_of(4) {
            return Err(Error::shape(format!("input matrix has {h4} rows, not 4*hidden")));
        }
        let hidden = h4 / 4;
        if w_recurrent.rows() != h4 || w_recurrent.cols() != hidden || bias.len() != h4 {
            return Err(Error::shape(format!(
                "recurrent {}x{} / bias {} inconsistent with hidden {hidden}",
                w_recurrent.rows(),
                w_recurrent.cols(),
                bias.len()
            )));
        }
        let w = LstmWeights {
            w_input,
            w_recurrent,
            bias,
        };
        if w.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::shape("non-finite LSTM weight"));
        }
        Ok(w)
    }

    pub fn in_dim(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }
}

impl Params for LstmWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w_input.data(), self.w_recurrent.data(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_input.data_mut(),
            self.w_recurrent.data_mut(),
            &mut self.bias,
        ]
    }

    fn zeros_like(&self) -> Self {
        LstmWeights::zeros(self.in_dim(), self.hidden())
    }
}

/// Everything one step needs to be differentiated later.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, stacked like the weights.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

fn step_cached(w: &LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> StepCache {
    let hd = w.hidden();
    let mut z = w.bias.clone();
    w.w_input.gemv_acc(x, &mut z);
    w.w_recurrent.gemv_acc(h, &mut z);
    for v in &mut z[..3 * hd] {
        *v = logistic(*v);
    }
    for v in &mut z[3 * hd..] {
        *v = v.tanh();
    }
    let (i, rest) = z.split_at(hd);
    let (f, rest) = rest.split_at(hd);
    let (o, g) = rest.split_at(hd);
    let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        gates: z,
        c: c_new,
        tanh_c,
        h: h_new,
    }
}

/// One LSTM cell update, returning `(h', c')`.
pub fn lstm_step(w: &LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != w.in_dim() || h.len() != w.hidden() || c.len() != w.hidden() {
        return Err(Error::shape(format!(
            "lstm_step: x {} / h {} / c {} vs in {} hidden {}",
            x.len(),
            h.len(),
            c.len(),
            w.in_dim(),
            w.hidden()
        )));
    }
    let s = step_cached(w, x, h, c);
    Ok((s.h, s.c))
}

fn check_seq(w: &LstmWeights, seq: &[f64]) -> Result<()> {
    if seq.is_empty() || !seq.len().is_multiple_of(w.in_dim()) {
        return Err(Error::shape(format!(
            "sequence of {} values is not a nonempty multiple of in_dim {}",
            seq.len(),
            w.in_dim()
        )));
    }
    Ok(())
}

/// Runs the encoder over `seq` (row-major, `in_dim` values per step) from a
/// zero state and returns the final `(h, c)`.
pub fn encode(w: &LstmWeights, seq: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_seq(w, seq)?;
    let hd = w.hidden();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for x in seq.chunks_exact(w.in_dim()) {
        let s = step_cached(w, x, &h, &c);
        h = s.h;
        c = s.c;
    }
    Ok((h, c))
}

/// Forward pass keeping every step for [`encode_backward`].
pub fn encode_traced(w: &LstmWeights, seq: &[f64]) -> Result<Vec<StepCache>> {
    check_seq(w, seq)?;
    let hd = w.hidden();
    let mut steps: Vec<StepCache> = Vec::with_capacity(seq.len() / w.in_dim());
    let zero = vec![0.0; hd];
    for x in seq.chunks_exact(w.in_dim()) {
        let s = match steps.last() {
            Some(p) => step_cached(w, x, &p.h, &p.c),
            None => step_cached(w, x, &zero, &zero),
        };
        steps.push(s);
    }
    Ok(steps)
}

/// Backpropagation through time from a gradient on the final hidden state.
/// Parameter gradients are added into `grads`.
pub fn encode_backward(w: &LstmWeights, steps: &[StepCache], dh_final: &[f64], grads: &mut LstmWeights) {
    let hd = w.hidden();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for s in steps.iter().rev() {
        let (i, rest) = s.gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (o, g) = rest.split_at(hd);
        for k in 0..hd {
            let dck = dc[k] + dh[k] * o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_o = dh[k] * s.tanh_c[k];
            let d_i = dck * g[k];
            let d_g = dck * i[k];
            let d_f = dck * s.c_prev[k];
            dz[k] = d_i * i[k] * (1.0 - i[k]);
            dz[hd + k] = d_f * f[k] * (1.0 - f[k]);
            dz[2 * hd + k] = d_o * o[k] * (1.0 - o[k]);
            dz[3 * hd + k] = d_g * (1.0 - g[k] * g[k]);
            dc[k] = dck * f[k];
        }
        grads.w_input.outer_acc(&dz, &s.x);
        grads.w_recurrent.outer_acc(&dz, &s.h_prev);
        for (b, d) in grads.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        w.w_recurrent.gemv_t_acc(&dz, &mut dh);
    }
}

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    pub w: Matrix,
    pub bias: Vec<f64>,
}

impl DenseWeights {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseWeights {
            w: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        DenseWeights {
            w: Matrix::uniform(out_dim, in_dim, bound, rng),
            bias: (0..out_dim).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn from_parts(w: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != w.rows() {
            return Err(Error::shape(format!(
                "dense bias {} vs {} output rows",
                bias.len(),
                w.rows()
            )));
        }
        if w.data().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::shape("non-finite dense weight"));
        }
        Ok(DenseWeights { w, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// `dx = Wᵀ dy`, accumulating `dW += dy xᵀ` and `db += dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut DenseWeights) -> Vec<f64> {
        grads.w.outer_acc(dy, x);
        for (b, d) in grads.bias.iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![0.0; self.in_dim()];
        self.w.gemv_t_acc(dy, &mut dx);
        dx
    }
}

impl Params for DenseWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.data(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data_mut(), &mut self.bias]
    }

    fn zeros_like(&self) -> Self {
        DenseWeights::zeros(self.in_dim(), self.out_dim())
    }
}

pub fn dense_forward(w: &DenseWeights, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.in_dim() {
        return Err(Error::shape(format!(
            "dense layer expects {} inputs, got {}",
            w.in_dim(),
            x.len()
        )));
    }
    let mut y = w.bias.clone();
    w.w.gemv_acc(x, &mut y);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_zero_state() {
        let w = LstmWeights::zeros(3, 4);
        let (h, c) = lstm_step(&w, &[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn zero_weights_unit_cell() {
        let w = LstmWeights::zeros(1, 2);
        let (h, c) = lstm_step(&w, &[3.0], &[0.7, -0.2], &[1.0, 1.0]).unwrap();
        assert_eq!(c, vec![0.5, 0.5]);
        let want = 0.5 * 0.5f64.tanh();
        assert!(h.iter().all(|v| (v - want).abs() < 1e-15));
    }

    /// Straight-line scalar evaluation of the gate formulas, written
    /// independently of the stacked-matrix code path.
    fn scalar_step(
        wx: [[[f64; 2]; 2]; 4],
        wh: [[[f64; 2]; 2]; 4],
        b: [[f64; 2]; 4],
        x: [f64; 2],
        h: [f64; 2],
        c: [f64; 2],
    ) -> ([f64; 2], [f64; 2]) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |g: usize, k: usize| {
            b[g][k] + wx[g][k][0] * x[0] + wx[g][k][1] * x[1] + wh[g][k][0] * h[0] + wh[g][k][1] * h[1]
        };
        let mut h2 = [0.0; 2];
        let mut c2 = [0.0; 2];
        for k in 0..2 {
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let o = sig(pre(2, k));
            let g = pre(3, k).tanh();
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn random_two_by_two_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut r = || rng.gen_range(-1.0..1.0);
        let wx: [[[f64; 2]; 2]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| [r(), r()]));
        let wh: [[[f64; 2]; 2]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| [r(), r()]));
        let b: [[f64; 2]; 4] = std::array::from_fn(|_| [r(), r()]);
        let (x, h, c) = ([r(), r()], [r(), r()], [r(), r()]);

        let flat = |m: &[[[f64; 2]; 2]; 4]| m.iter().flatten().flatten().copied().collect::<Vec<_>>();
        let w = LstmWeights::from_parts(
            Matrix::from_vec(8, 2, flat(&wx)).unwrap(),
            Matrix::from_vec(8, 2, flat(&wh)).unwrap(),
            b.iter().flatten().copied().collect(),
        )
        .unwrap();
        let (h2, c2) = lstm_step(&w, &x, &h, &c).unwrap();
        let (oh, oc) = scalar_step(wx, wh, b, x, h, c);
        for k in 0..2 {
            assert!((h2[k] - oh[k]).abs() < 1e-14);
            assert!((c2[k] - oc[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn encode_is_a_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = LstmWeights::init(2, 3, &mut rng);
        let seq: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let one = encode(&w, &seq[..2]).unwrap();
        assert_eq!(one, lstm_step(&w, &seq[..2], &[0.0; 3], &[0.0; 3]).unwrap());
        let steps = encode_traced(&w, &seq).unwrap();
        for k in 1..=5 {
            let (h, c) = encode(&w, &seq[..2 * k]).unwrap();
            assert_eq!(h, steps[k - 1].h());
            assert_eq!(c, steps[k - 1].c());
        }
        assert!(encode(&w, &[]).is_err());
        assert!(encode(&w, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_weights_encode_decays() {
        // with zero weights every gate is 0.5 and the candidate is 0
        let w = LstmWeights::zeros(1, 2);
        let (h, c) = encode(&w, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn dense_examples() {
        let id = DenseWeights::from_parts(Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(), vec![0.0; 2]).unwrap();
        assert_eq!(dense_forward(&id, &[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
        let zero = DenseWeights::from_parts(Matrix::zeros(2, 3), vec![0.5, -1.5]).unwrap();
        assert_eq!(dense_forward(&zero, &[9.0, 9.0, 9.0]).unwrap(), vec![0.5, -1.5]);
        // [[1,2],[3,4]]·[5,6] + [0.5,-0.5] = [17.5, 38.5]
        let m = DenseWeights::from_parts(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5, -0.5]).unwrap();
        assert_eq!(dense_forward(&m, &[5.0, 6.0]).unwrap(), vec![17.5, 38.5]);
        assert!(dense_forward(&m, &[1.0]).is_err());
        assert!(DenseWeights::from_parts(Matrix::zeros(2, 2), vec![0.0]).is_err());
    }

    #[test]
    fn shape_errors() {
        let w = LstmWeights::zeros(1, 2);
        assert!(lstm_step(&w, &[1.0, 2.0], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(lstm_step(&w, &[1.0], &[0.0; 3], &[0.0; 2]).is_err());
        assert!(LstmWeights::from_parts(Matrix::zeros(6, 1), Matrix::zeros(6, 1), vec![0.0; 6]).is_err());
        assert!(LstmWeights::from_parts(Matrix::zeros(8, 1), Matrix::zeros(8, 3), vec![0.0; 8]).is_err());
    }
}
