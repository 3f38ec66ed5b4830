//! The two trainable architectures.
//!
//! `AngleNet`: one LSTM encoder and one affine head per Euler channel; each
//! head emits the whole future rollout at once. `PositionNet`: one LSTM per
//! input stream (vx, vy, vz and optionally dt), final hidden states
//! concatenated and fed to one affine head per output stream.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lstm::{
    dense_forward, encode, encode_backward, encode_traced, DenseWeights, LstmWeights, Params, SeqModel,
};
use crate::textdoc::TextDoc;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNet {
    pub encoder: LstmWeights,
    pub head: DenseWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleNet {
    pub channels: Vec<ChannelNet>,
}

impl AngleNet {
    pub fn init<R: Rng>(n_channels: usize, hidden: usize, steps: usize, rng: &mut R) -> Self {
        AngleNet {
            channels: (0..n_channels)
                .map(|_| ChannelNet {
                    encoder: LstmWeights::init(1, hidden, rng),
                    head: DenseWeights::init(hidden, steps, rng),
                })
                .collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.channels.first().map_or(0, |c| c.head.out_dim())
    }

    fn check_inputs(&self, inputs: &[Vec<f64>]) -> Result<()> {
        if inputs.len() != self.channels.len() {
            return Err(Error::shape(format!(
                "angle net has {} channels, got {} input sequences",
                self.channels.len(),
                inputs.len()
            )));
        }
        Ok(())
    }
}

impl Params for AngleNet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.channels
            .iter()
            .flat_map(|c| c.encoder.tensors().into_iter().chain(c.head.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.channels
            .iter_mut()
            .flat_map(|c| c.encoder.tensors_mut().into_iter().chain(c.head.tensors_mut()))
            .collect()
    }

    fn zeros_like(&self) -> Self {
        AngleNet {
            channels: self
                .channels
                .iter()
                .map(|c| ChannelNet {
                    encoder: c.encoder.zeros_like(),
                    head: c.head.zeros_like(),
                })
                .collect(),
        }
    }
}

impl SeqModel for AngleNet {
    fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        let mut out = Vec::with_capacity(self.channels.len() * self.steps());
        for (net, seq) in self.channels.iter().zip(inputs) {
            let (h, _) = encode(&net.encoder, seq)?;
            out.extend(dense_forward(&net.head, &h)?);
        }
        Ok(out)
    }

    fn forward_backward(
        &self,
        inputs: &[Vec<f64>],
        d_out: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
        grads: &mut Self,
    ) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        let mut traces = Vec::with_capacity(self.channels.len());
        let mut out = Vec::with_capacity(self.channels.len() * self.steps());
        for (net, seq) in self.channels.iter().zip(inputs) {
            let steps = encode_traced(&net.encoder, seq)?;
            out.extend(dense_forward(&net.head, steps.last().expect("nonempty").h())?);
            traces.push(steps);
        }
        let dy = d_out(&out)?;
        let s = self.steps();
        for (k, ((net, steps), g)) in self.channels.iter().zip(&traces).zip(&mut grads.channels).enumerate() {
            let h = steps.last().expect("nonempty").h();
            let dh = net.head.backward(h, &dy[k * s..(k + 1) * s], &mut g.head);
            encode_backward(&net.encoder, steps, &dh, &mut g.encoder);
        }
        Ok(out)
    }

    fn output_groups(&self) -> Vec<usize> {
        vec![self.steps(); self.channels.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionNet {
    pub encoders: Vec<LstmWeights>,
    pub heads: Vec<DenseWeights>,
}

impl PositionNet {
    pub fn init<R: Rng>(n_streams: usize, hidden: usize, rng: &mut R) -> Self {
        let encoders = (0..n_streams).map(|_| LstmWeights::init(1, hidden, rng)).collect();
        let heads = (0..n_streams)
            .map(|_| DenseWeights::init(n_streams * hidden, 1, rng))
            .collect();
        PositionNet { encoders, heads }
    }

    pub fn n_streams(&self) -> usize {
        self.encoders.len()
    }
}

impl Params for PositionNet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.encoders
            .iter()
            .flat_map(|e| e.tensors())
            .chain(self.heads.iter().flat_map(|h| h.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let PositionNet { encoders, heads } = self;
        encoders
            .iter_mut()
            .flat_map(|e| e.tensors_mut())
            .chain(heads.iter_mut().flat_map(|h| h.tensors_mut()))
            .collect()
    }

    fn zeros_like(&self) -> Self {
        PositionNet {
            encoders: self.encoders.iter().map(|e| e.zeros_like()).collect(),
            heads: self.heads.iter().map(|h| h.zeros_like()).collect(),
        }
    }
}

impl SeqModel for PositionNet {
    fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.len() != self.n_streams() {
            return Err(Error::shape(format!(
                "position net has {} streams, got {}",
                self.n_streams(),
                inputs.len()
            )));
        }
        let mut joined = Vec::new();
        for (enc, seq) in self.encoders.iter().zip(inputs) {
            joined.extend(encode(enc, seq)?.0);
        }
        let mut out = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            out.extend(dense_forward(head, &joined)?);
        }
        Ok(out)
    }

    fn forward_backward(
        &self,
        inputs: &[Vec<f64>],
        d_out: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
        grads: &mut Self,
    ) -> Result<Vec<f64>> {
        if inputs.len() != self.n_streams() {
            return Err(Error::shape(format!(
                "position net has {} streams, got {}",
                self.n_streams(),
                inputs.len()
            )));
        }
        let mut traces = Vec::with_capacity(self.n_streams());
        let mut joined = Vec::new();
        for (enc, seq) in self.encoders.iter().zip(inputs) {
            let steps = encode_traced(enc, seq)?;
            joined.extend_from_slice(steps.last().expect("nonempty").h());
            traces.push(steps);
        }
        let mut out = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            out.extend(dense_forward(head, &joined)?);
        }
        let dy = d_out(&out)?;
        let mut d_joined = vec![0.0; joined.len()];
        for ((head, g), d) in self.heads.iter().zip(&mut grads.heads).zip(&dy) {
            let dx = head.backward(&joined, std::slice::from_ref(d), g);
            d_joined.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        }
        let hd = self.encoders[0].hidden();
        for (k, ((enc, steps), g)) in self.encoders.iter().zip(&traces).zip(&mut grads.encoders).enumerate() {
            encode_backward(enc, steps, &d_joined[k * hd..(k + 1) * hd], g);
        }
        Ok(out)
    }

    fn output_groups(&self) -> Vec<usize> {
        vec![self.heads.len()]
    }
}

pub(crate) fn write_lstm(doc: &mut TextDoc, prefix: &str, w: &LstmWeights) {
    let (h4, inp, hd) = (w.w_input.rows(), w.in_dim(), w.hidden());
    doc.set_array(format!("{prefix}.w_input"), &[h4, inp], w.w_input.data());
    doc.set_array(format!("{prefix}.w_recurrent"), &[h4, hd], w.w_recurrent.data());
    doc.set_array(format!("{prefix}.bias"), &[h4], &w.bias);
}

pub(crate) fn read_lstm(doc: &TextDoc, prefix: &str, in_dim: usize, hidden: usize) -> Result<LstmWeights> {
    use crate::lstm::Matrix;
    let h4 = 4 * hidden;
    LstmWeights::from_parts(
        Matrix::from_vec(h4, in_dim, doc.array(&format!("{prefix}.w_input"), &[h4, in_dim])?.to_vec())?,
        Matrix::from_vec(h4, hidden, doc.array(&format!("{prefix}.w_recurrent"), &[h4, hidden])?.to_vec())?,
        doc.array(&format!("{prefix}.bias"), &[h4])?.to_vec(),
    )
}

pub(crate) fn write_dense(doc: &mut TextDoc, prefix: &str, w: &DenseWeights) {
    doc.set_array(format!("{prefix}.w"), &[w.out_dim(), w.in_dim()], w.w.data());
    doc.set_array(format!("{prefix}.bias"), &[w.out_dim()], &w.bias);
}

pub(crate) fn read_dense(doc: &TextDoc, prefix: &str, in_dim: usize, out_dim: usize) -> Result<DenseWeights> {
    use crate::lstm::Matrix;
    DenseWeights::from_parts(
        Matrix::from_vec(out_dim, in_dim, doc.array(&format!("{prefix}.w"), &[out_dim, in_dim])?.to_vec())?,
        doc.array(&format!("{prefix}.bias"), &[out_dim])?.to_vec(),
    )
}
