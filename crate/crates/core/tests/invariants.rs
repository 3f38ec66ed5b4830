mod common;

use cvrlab::sim::{run_report, SimConfig};

#[test]
fn metric_and_simulator_invariants_hold() {
    common::invariants::run_all(10_000).unwrap();
}

#[test]
fn more_slots_never_more_late_frames() {
    for seed in 0..20 {
        let mut prev = usize::MAX;
        for slots in 1..10 {
            let mut c = SimConfig::bernoulli(30, 0.2, seed, 3000.0);
            c.gpu_slots = slots;
            let late = run_report(&c).unwrap().total.late_overload;
            assert!(late <= prev, "seed {seed} slots {slots}");
            prev = late;
        }
    }
}

#[test]
fn adding_users_keeps_earlier_users_errors() {
    let a = cvrlab::sim::run(&SimConfig::bernoulli(5, 0.3, 9, 2000.0)).unwrap().1;
    let b = cvrlab::sim::run(&SimConfig::bernoulli(8, 0.3, 9, 2000.0)).unwrap().1;
    for f in &a {
        let g = b.iter().find(|g| g.user == f.user && g.frame == f.frame).unwrap();
        assert_eq!(f.angle_err_deg, g.angle_err_deg);
    }
}

#[test]
fn same_seed_same_log() {
    let c = SimConfig::bernoulli(12, 0.1, 4, 5000.0);
    assert_eq!(cvrlab::sim::run(&c).unwrap().1, cvrlab::sim::run(&c).unwrap().1);
}
