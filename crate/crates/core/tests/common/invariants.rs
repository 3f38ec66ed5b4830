use cvrlab::metrics::{clipped_mae, mae, pct_over};
use cvrlab::sim::{self, FrameClass, SimConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn errors() -> impl Strategy<Value = Vec<f64>> {
    // Mix of continuous values and exact threshold hits.
    prop::collection::vec(prop_oneof![0.0f64..10.0, Just(1.0), Just(0.0), -5.0f64..0.0], 1..200)
}

pub fn check_metrics(e: &[f64], clip: f64, t1: f64, t2: f64) -> Result<(), TestCaseError> {
    let c = clipped_mae(e, clip).unwrap();
    let m = mae(e).unwrap();
    prop_assert!(c <= m.min(clip) + 1e-12, "clipped {} mae {} clip {}", c, m, clip);
    prop_assert!(c >= 0.0);
    prop_assert!(clipped_mae(e, clip + 1.0).unwrap() >= c);
    let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
    let (p_lo, p_hi) = (pct_over(e, lo).unwrap(), pct_over(e, hi).unwrap());
    prop_assert!(p_lo >= p_hi, "pct_over({}) = {} < pct_over({}) = {}", lo, p_lo, hi, p_hi);
    prop_assert!((0.0..=100.0).contains(&p_lo) && (0.0..=100.0).contains(&p_hi));
    Ok(())
}

fn sim_configs() -> impl Strategy<Value = SimConfig> {
    (
        1usize..40,
        0.0f64..=1.0,
        any::<u64>(),
        1usize..8,
        30.0f64..120.0,
        50.0f64..800.0,
        (1.0f64..30.0, 5.0f64..100.0, 0.0f64..3.0),
    )
        .prop_map(|(n, p, seed, slots, fps, dur, (render, cloud, late))| {
            let mut c = SimConfig::bernoulli(n, p, seed, dur);
            c.gpu_slots = slots;
            c.fps = fps;
            c.edge_render_ms = render;
            c.cloud_latency_ms = cloud;
            c.late_penalty_frames = late;
            c
        })
        .prop_filter("at least one frame", |c| c.n_frames() > 0)
}

pub fn check_sim(config: &SimConfig) -> Result<(), TestCaseError> {
    let (r, log) = sim::run(config).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let n_frames = config.n_frames();
    prop_assert_eq!(r.n_frames, n_frames);
    prop_assert_eq!(r.per_user.len(), config.n_users);
    for (u, c) in r.per_user.iter().enumerate() {
        prop_assert_eq!(c.total(), n_frames, "user {}", u);
    }
    prop_assert_eq!(r.total.total(), config.n_users * n_frames);
    prop_assert_eq!(log.len(), config.n_users * n_frames);
    let count = |k: FrameClass| log.iter().filter(|f| f.class == k).count();
    prop_assert_eq!(count(FrameClass::CloudAccepted), r.total.cloud_accepted);
    prop_assert_eq!(count(FrameClass::EdgeReRendered), r.total.edge_rerendered);
    prop_assert_eq!(count(FrameClass::LateOverload), r.total.late_overload);
    for f in &log {
        prop_assert_eq!(f.mtp_ms, sim::motion_to_photon(f.class, config));
    }
    prop_assert!(r.late_interval_fraction <= r.overload_probability);
    prop_assert_eq!(r.total.late_overload > 0, r.late_interval_fraction > 0.0);
    let frac = r.total.rerender_demand() as f64 / (config.n_users * n_frames) as f64;
    prop_assert_eq!(r.rerender_fraction, frac);
    Ok(())
}

/// Runs both invariant families for `cases` cases each.
pub fn run_all(cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(errors(), 0.0f64..3.0, -1.0f64..11.0, -1.0f64..11.0), |(e, clip, t1, t2)| {
            check_metrics(&e, clip, t1, t2)
        })
        .map_err(|e| format!("metric invariants: {e}"))?;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&sim_configs(), |c| check_sim(&c))
        .map_err(|e| format!("simulator invariants: {e}"))
}
