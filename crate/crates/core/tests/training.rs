use cvrlab::predictors::{predict, Arch, ModelBundle, NormMode, PredictorConfig, StreamStats};
use cvrlab::trace::{generate_synthetic, split_streams, synthetic_benchmark, SplitSpec, SynthSpec, Trace, TraceStyle};
use cvrlab::training::{fit, make_windows, make_windows_strided, TrainSpec, WindowedDataset};
use cvrlab::Error;

fn bench(n: usize, dur: f64) -> Vec<Trace> {
    synthetic_benchmark(TraceStyle::Video360, n, dur, 5).unwrap()
}

fn small_cfg() -> PredictorConfig {
    let mut c = PredictorConfig::video360(Arch::AngleLstm);
    c.hidden_dim = 6;
    c.window_len = 10;
    c
}

fn quick_spec(seed: u64) -> TrainSpec {
    TrainSpec {
        epochs_max: 3,
        batch: 16,
        seed,
        ..TrainSpec::default()
    }
}

/// Brute-force count of valid window ends for one stream.
fn oracle_count(t: &Trace, cfg: &PredictorConfig, stride: usize) -> usize {
    let s = t.samples();
    let need = cfg.window_len + 2;
    let mut n = 0;
    let mut e = need - 1;
    while e + 1 < s.len() && s[e].t_ms + cfg.horizon_ms <= t.end_ms() + 1e-6 {
        n += 1;
        e += stride;
    }
    n
}

#[test]
fn window_counts_match_enumeration() {
    let traces = bench(3, 9000.0);
    let cfg = PredictorConfig::video360(Arch::AngleLstm);
    for stride in [1, 2, 3, 7] {
        let d = make_windows_strided(&traces, &cfg, stride).unwrap();
        let want: usize = traces.iter().map(|t| oracle_count(t, &cfg, stride)).sum();
        assert_eq!(d.len(), want, "stride {stride}");
    }
    // Fixed 30 ms steps: 32 input samples and two samples of horizon.
    let d = make_windows(&traces[..1], &cfg).unwrap();
    assert_eq!(d.len(), traces[0].len() - 33);
}

#[test]
fn windows_stay_inside_their_stream() {
    let mut q = synthetic_benchmark(TraceStyle::Quest, 3, 6000.0, 2).unwrap();
    let cfg = PredictorConfig::quest(Arch::PositionLstm, 14.0);
    let d = make_windows(&q, &cfg).unwrap();
    for &(ti, end) in &d.windows {
        let t = &d.traces[ti];
        assert!(end + 1 >= cfg.raw_window_len());
        assert!(end + 1 < t.len());
        assert!(t.samples()[end].t_ms + cfg.horizon_ms <= t.end_ms() + 1e-6);
    }
    q.truncate(1);
    assert!(make_windows_strided(&q, &cfg, 0).is_err());
}

#[test]
fn short_streams_are_skipped_with_a_warning() {
    let mut traces = bench(2, 6000.0);
    traces.push(generate_synthetic(&SynthSpec::video360("tiny", 600.0), 1).unwrap());
    let d = make_windows(&traces, &PredictorConfig::video360(Arch::AngleLstm)).unwrap();
    assert_eq!(d.traces.len(), 2);
    assert_eq!(d.warnings.len(), 1);
    assert!(d.warnings[0].contains("tiny"));
}

fn split_sets(cfg: &PredictorConfig) -> (WindowedDataset, WindowedDataset, WindowedDataset) {
    let traces = bench(6, 8000.0);
    let s = split_streams(&traces, &SplitSpec::default()).unwrap();
    (
        make_windows_strided(&s.train, cfg, 3).unwrap(),
        make_windows_strided(&s.val, cfg, 3).unwrap(),
        make_windows_strided(&s.test, cfg, 3).unwrap(),
    )
}

#[test]
fn split_is_disjoint_and_complete() {
    let traces = bench(10, 2000.0);
    let s = split_streams(&traces, &SplitSpec { seed: 3, ..SplitSpec::default() }).unwrap();
    let mut ids: Vec<&str> = s
        .train
        .iter()
        .chain(&s.val)
        .chain(&s.test)
        .map(|t| t.stream_id.as_str())
        .collect();
    assert_eq!(ids.len(), 10);
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 10);
    assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
    assert_eq!(s, split_streams(&traces, &SplitSpec { seed: 3, ..SplitSpec::default() }).unwrap());
}

#[test]
fn fit_refuses_shared_streams() {
    let cfg = small_cfg();
    let (train, _, _) = split_sets(&cfg);
    let e = fit(&train, &train, &quick_spec(0)).unwrap_err();
    assert!(matches!(e, Error::Config(_)), "{e}");
}

#[test]
fn fit_is_deterministic() {
    let cfg = small_cfg();
    let (train, val, _) = split_sets(&cfg);
    let a = fit(&train, &val, &quick_spec(11)).unwrap();
    let b = fit(&train, &val, &quick_spec(11)).unwrap();
    assert_eq!(a.bundle.to_doc().render(), b.bundle.to_doc().render());
    assert_eq!(a.log, b.log);
    let c = fit(&train, &val, &quick_spec(12)).unwrap();
    assert_ne!(a.bundle.to_doc().render(), c.bundle.to_doc().render());
}

#[test]
fn normalization_uses_training_streams_only() {
    let cfg = small_cfg();
    let (train, val, test) = split_sets(&cfg);
    let a = fit(&train, &val, &quick_spec(1)).unwrap();
    assert_eq!(a.bundle.stats.as_ref(), Some(&train.global_stats().unwrap()));
    // Validation data only steers early stopping, never the statistics.
    let b = fit(&train, &test, &quick_spec(1)).unwrap();
    assert_eq!(a.bundle.stats, b.bundle.stats);
}

#[test]
fn early_stopping_keeps_best_epoch() {
    let cfg = small_cfg();
    let (train, val, _) = split_sets(&cfg);
    let spec = TrainSpec {
        epochs_max: 12,
        patience: 2,
        ..quick_spec(4)
    };
    let r = fit(&train, &val, &spec).unwrap();
    let best = r
        .log
        .iter()
        .min_by(|a, b| a.val_metric.total_cmp(&b.val_metric))
        .unwrap();
    assert_eq!(r.best_epoch, best.epoch);
    assert!(r.log.len() <= spec.epochs_max);
    assert!(r.log.len() == spec.epochs_max || r.log.len() == r.best_epoch + spec.patience);
}

#[test]
fn saved_model_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (arch, style) in [(Arch::AngleLstm, TraceStyle::Video360), (Arch::PositionLstm, TraceStyle::Quest)] {
        let traces = synthetic_benchmark(style, 4, 6000.0, 8).unwrap();
        let s = split_streams(&traces, &SplitSpec::default()).unwrap();
        let mut cfg = PredictorConfig::for_style(arch, style, 14.0);
        cfg.hidden_dim = 5;
        cfg.window_len = 8;
        if arch == Arch::PositionLstm {
            cfg.norm_mode = NormMode::PerStream;
            cfg.stream_stats = StreamStats::Causal;
        }
        let train = make_windows_strided(&s.train, &cfg, 5).unwrap();
        let val = make_windows_strided(&s.val, &cfg, 5).unwrap();
        let r = fit(&train, &val, &quick_spec(2)).unwrap();
        let path = dir.path().join(format!("{}.txt", arch.name()));
        r.bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back.to_doc().render(), r.bundle.to_doc().render());
        let t = &s.test[0];
        let w = &t.samples()[100..100 + cfg.raw_window_len()];
        assert_eq!(predict(&r.bundle, w).unwrap(), predict(&back, w).unwrap());
    }
}

#[test]
fn training_loss_decreases_on_benchmark() {
    let cfg = small_cfg();
    let (train, val, _) = split_sets(&cfg);
    let r = fit(&train, &val, &TrainSpec { epochs_max: 8, patience: 8, ..quick_spec(3) }).unwrap();
    assert!(r.log.last().unwrap().train_loss < r.log[0].train_loss);
    assert!(r.log.iter().all(|l| l.train_loss.is_finite() && l.val_metric.is_finite()));
}
