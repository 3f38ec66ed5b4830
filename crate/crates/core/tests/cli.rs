mod common;

use std::path::Path;

use common::cli::{assert_rerun_identical, cvrlab, pipeline};

#[test]
fn every_subcommand_reruns_identically_from_its_manifest() {
    let root = tempfile::tempdir().unwrap();
    let runs = pipeline(root.path());
    for (name, dir) in &runs {
        assert_rerun_identical(dir, &root.path().join(format!("{name}-again"))).unwrap();
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(cvrlab(&["--help"]).status.code(), Some(0));
    assert_eq!(cvrlab(&["--version"]).status.code(), Some(0));
    assert_eq!(cvrlab(&["nonsense"]).status.code(), Some(1));
    assert_eq!(cvrlab(&["gen", "--streams", "x", "--out-dir", o]).status.code(), Some(1));
    assert_eq!(cvrlab(&["capacity", "--p-error", "1.5"]).status.code(), Some(1));
    assert_eq!(cvrlab(&["simulate", "--mode", "replay", "--out-dir", o]).status.code(), Some(1));
    assert_eq!(cvrlab(&["train", "--data", "/no/such/dir", "--out-dir", o]).status.code(), Some(2));

    let data = dir.path().join("bad");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("s.csv"), "t_ms,phi_deg,theta_deg,psi_deg,x_mm,y_mm,z_mm\n0,1,2,3,4,5,6\n0,1,2,3,4,5,6\n")
        .unwrap();
    let r = cvrlab(&["eval", "--data", data.to_str().unwrap(), "--baseline", "const-pose", "--out-dir", o]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let d = data.to_str().unwrap();
    assert!(cvrlab(&["gen", "--style", "video360", "--streams", "4", "--duration-ms", "4000", "--out-dir", d])
        .status
        .success());
    let out = dir.path().join("m");
    let r = cvrlab(&[
        "train", "--data", d, "--epochs", "3", "--lr", "1e308", "--hidden-dim", "4", "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "# capacity run\np_error = 0.2\nslots = 5\n").unwrap();
    let out = dir.path().join("o");
    let r = cvrlab(&[
        "capacity",
        "--config",
        cfg.to_str().unwrap(),
        "--p-error",
        "0.0579",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("m_max = 23\n"));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("p-error = 0.0579\n"), "{manifest}");
    let r = cvrlab(&["capacity", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("m_max = 7\n"));
}

#[test]
fn gen_writes_readable_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let r = cvrlab(&["gen", "--style", "quest", "--streams", "2", "--duration-ms", "2000", "--out-dir", out.to_str().unwrap()]);
    assert!(r.status.success());
    let traces = cvrlab::trace::ingest_dir(
        Path::new(&out),
        cvrlab::trace::IngestOptions::new(cvrlab::trace::TraceStyle::Quest),
    )
    .unwrap();
    assert_eq!(traces.len(), 2);
    assert!(traces.iter().all(|t| t.end_ms() > 1900.0));
}
