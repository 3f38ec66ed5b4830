use cvrlab::kinematics::{
    differentiate, integrate, rollout_steps, wrap_deg, wrap_diff, AngleDeg, ChannelKind, ChannelSeries, Quantity,
};
use proptest::prelude::*;

fn times(steps: &[f64]) -> Vec<f64> {
    let mut t = vec![1000.0];
    for d in steps {
        t.push(t[t.len() - 1] + d);
    }
    t
}

fn angle_dist(a: f64, b: f64) -> f64 {
    wrap_diff(a, b).unwrap().abs()
}

/// Steps, then per-step increments that sometimes jump across the seam.
fn trace_strategy() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>)> {
    (2usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec(5.0f64..50.0, n - 1),
            -180.0f64..180.0,
            prop::collection::vec(-170.0f64..170.0, n - 1),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn angle_round_trip((steps, start, incs) in trace_strategy()) {
        let t = times(&steps);
        let mut v = vec![start];
        for d in &incs {
            v.push(wrap_deg(v[v.len() - 1] + d));
        }
        let s = ChannelSeries::new(t.clone(), v.clone(), ChannelKind::AngleDeg).unwrap();
        let d = differentiate(&s).unwrap();
        prop_assert_eq!(d.kind(), ChannelKind::VelocityPerS(Quantity::Angle));
        let back = integrate(t[0], v[0], &d).unwrap();
        prop_assert_eq!(back.t_ms(), &t[..]);
        for (a, b) in back.values().iter().zip(s.values()) {
            prop_assert!(angle_dist(*a, *b) <= 1e-9, "{} vs {}", a, b);
            prop_assert!((-180.0..180.0).contains(a));
        }
    }

    #[test]
    fn position_and_velocity_round_trip(
        (steps, start, incs) in trace_strategy(),
        scale in 0.1f64..10.0,
    ) {
        let t = times(&steps);
        let mut v = vec![start * scale];
        for d in &incs {
            v.push(v[v.len() - 1] + d * scale);
        }
        let s = ChannelSeries::new(t.clone(), v.clone(), ChannelKind::PositionMm).unwrap();
        let vel = differentiate(&s).unwrap();
        let back = integrate(t[0], v[0], &vel).unwrap();
        for (a, b) in back.values().iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
        if vel.len() >= 2 {
            let acc = differentiate(&vel).unwrap();
            prop_assert_eq!(acc.kind(), ChannelKind::AccelPerS2(Quantity::Position));
            let (t1, v1) = vel.first().unwrap();
            let vel_back = integrate(t1, v1, &acc).unwrap();
            for (a, b) in vel_back.values().iter().zip(vel.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn wrap_is_idempotent_and_in_range(x in -1e6f64..1e6) {
        let w = wrap_deg(x);
        prop_assert!((-180.0..180.0).contains(&w));
        prop_assert_eq!(wrap_deg(w), w);
        prop_assert!(angle_dist(w, x) <= 1e-9);
    }

    #[test]
    fn wrap_diff_is_shortest_arc(a in -180.0f64..180.0, b in -180.0f64..180.0) {
        let d = wrap_diff(a, b).unwrap();
        prop_assert!(d.abs() <= 180.0);
        prop_assert!(angle_dist(wrap_deg(a + d), b) <= 1e-9);
    }
}

#[test]
fn seam_crossing_is_a_small_step() {
    let s = ChannelSeries::new(vec![0.0, 10.0], vec![179.5, -179.5], ChannelKind::AngleDeg).unwrap();
    let d = differentiate(&s).unwrap();
    assert!((d.values()[0] - 100.0).abs() < 1e-9);
    let back = integrate(0.0, 179.5, &d).unwrap();
    assert!((back.values()[1] + 179.5).abs() < 1e-9);
}

#[test]
fn rejects_bad_input() {
    assert!(ChannelSeries::new(vec![0.0, 0.0], vec![1.0, 2.0], ChannelKind::AngleDeg).is_err());
    assert!(ChannelSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN], ChannelKind::AngleDeg).is_err());
    assert!(ChannelSeries::new(vec![0.0], vec![1.0, 2.0], ChannelKind::AngleDeg).is_err());
    let one = ChannelSeries::new(vec![0.0], vec![1.0], ChannelKind::PositionMm).unwrap();
    assert!(differentiate(&one).is_err());
    let dt = ChannelSeries::new(vec![0.0, 1.0], vec![1.0, 2.0], ChannelKind::DtMs).unwrap();
    assert!(differentiate(&dt).is_err());
    assert!(AngleDeg::new(f64::INFINITY).is_err());
    let vel = ChannelSeries::new(vec![5.0], vec![1.0], ChannelKind::VelocityPerS(Quantity::Angle)).unwrap();
    assert!(integrate(5.0, 0.0, &vel).is_err());
}

#[test]
fn rollout_step_counts() {
    assert_eq!(rollout_steps(60.0, 30.0).unwrap(), 2);
    assert_eq!(rollout_steps(60.0, 13.9).unwrap(), 5);
    assert!(rollout_steps(60.0, 0.0).is_err());
}
