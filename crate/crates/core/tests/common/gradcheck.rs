use cvrlab::lstm::{backprop_through_time, batch_loss, LossKind, SeqExample, SeqModel};
use cvrlab::predictors::{AngleNet, PositionNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const WINDOW: usize = 5;
pub const HIDDEN: usize = 4;

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6), worst parameter.
pub fn worst_rel_err<M: SeqModel>(model: &M, batch: &[SeqExample], kind: LossKind) -> f64 {
    let (_, grads) = backprop_through_time(model, batch, kind).unwrap();
    let analytic = grads.flatten();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut idx = 0;
    for t in 0..probe.tensors().len() {
        for i in 0..probe.tensors()[t].len() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + EPS;
            let up = batch_loss(&probe, batch, kind).unwrap();
            probe.tensors_mut()[t][i] = orig - EPS;
            let down = batch_loss(&probe, batch, kind).unwrap();
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let a = analytic[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
            idx += 1;
        }
    }
    assert_eq!(idx, analytic.len());
    worst
}

pub fn example<R: Rng>(rng: &mut R, n_seq: usize, n_out: usize, offset: f64) -> SeqExample {
    SeqExample {
        inputs: (0..n_seq)
            .map(|_| (0..WINDOW).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect(),
        targets: (0..n_out).map(|_| rng.gen_range(-1.0..1.0) + offset).collect(),
    }
}

/// MAE is only differentiable away from pred == target, so MAE draws shift
/// the targets far from the small initial outputs.
pub fn draw_kind(d: usize) -> (LossKind, f64) {
    if d.is_multiple_of(2) {
        (LossKind::Mse, 0.0)
    } else {
        (LossKind::Mae, 20.0)
    }
}

/// Worst relative error of one random angle-net draw.
pub fn angle_draw(d: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
    let steps = 1 + d % 3;
    let net = AngleNet::init(3, HIDDEN, steps, &mut rng);
    let (kind, offset) = draw_kind(d);
    let batch: Vec<SeqExample> = (0..3).map(|_| example(&mut rng, 3, 3 * steps, offset)).collect();
    worst_rel_err(&net, &batch, kind)
}

/// Worst relative error of one random position-net draw.
pub fn position_draw(d: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000_000 + d as u64);
    let streams = 3 + d % 2;
    let net = PositionNet::init(streams, HIDDEN, &mut rng);
    let (kind, offset) = draw_kind(d);
    let n_out: usize = net.output_groups().iter().sum();
    let batch: Vec<SeqExample> = (0..3).map(|_| example(&mut rng, streams, n_out, offset)).collect();
    worst_rel_err(&net, &batch, kind)
}
