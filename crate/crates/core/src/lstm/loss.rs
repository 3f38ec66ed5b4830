use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mae,
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss `{other}` (mae|mse)"))),
        }
    }
}

/// Mean loss and its gradient with respect to `pred`.
///
/// The MAE subgradient is `sign(p - t) / n`, taken as 0 where `p == t`.
pub fn loss(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "loss: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::domain("loss of an empty vector"));
    }
    let n = pred.len() as f64;
    let diffs = pred.iter().zip(target).map(|(p, t)| p - t);
    Ok(match kind {
        LossKind::Mae => {
            let value = diffs.clone().map(f64::abs).sum::<f64>() / n;
            let grad = diffs
                .map(|d| if d == 0.0 { 0.0 } else { d.signum() / n })
                .collect();
            (value, grad)
        }
        LossKind::Mse => {
            let value = diffs.clone().map(|d| d * d).sum::<f64>() / n;
            let grad = diffs.map(|d| 2.0 * d / n).collect();
            (value, grad)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_cases() {
        assert_eq!(loss(LossKind::Mae, &[1.0, -1.0], &[0.0, 0.0]).unwrap().0, 1.0);
        assert_eq!(loss(LossKind::Mse, &[1.0, -1.0], &[0.0, 0.0]).unwrap().0, 1.0);
        assert_eq!(loss(LossKind::Mae, &[2.0], &[0.0]).unwrap().0, 2.0);
        assert_eq!(loss(LossKind::Mse, &[2.0], &[0.0]).unwrap().0, 4.0);
        assert_eq!(loss(LossKind::Mae, &[1.0, 3.0], &[1.0, 1.0]).unwrap().1, vec![0.0, 0.5]);
        assert!(loss(LossKind::Mae, &[], &[]).is_err());
        assert!(loss(LossKind::Mse, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_error_equality() {
        let pred = [3.5; 6];
        let target = [1.0; 6];
        let mae = loss(LossKind::Mae, &pred, &target).unwrap().0;
        let mse = loss(LossKind::Mse, &pred, &target).unwrap().0;
        assert_eq!(mse, mae * mae);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..8);
            let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for kind in [LossKind::Mae, LossKind::Mse] {
                let (_, g) = loss(kind, &pred, &target).unwrap();
                for i in 0..n {
                    // stay away from the MAE kink
                    if (pred[i] - target[i]).abs() < 1e-3 {
                        continue;
                    }
                    let eps = 1e-6;
                    let mut p = pred.clone();
                    p[i] += eps;
                    let up = loss(kind, &p, &target).unwrap().0;
                    p[i] -= 2.0 * eps;
                    let down = loss(kind, &p, &target).unwrap().0;
                    let fd = (up - down) / (2.0 * eps);
                    let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-12);
                    assert!(rel < 1e-6, "{kind:?} i={i} fd={fd} g={}", g[i]);
                }
            }
        }
    }
}
