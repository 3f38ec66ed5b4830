use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn cvrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvrlab"))
        .args(args)
        .env("CVRLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = cvrlab(args);
    assert!(
        o.status.success(),
        "cvrlab {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Runs every subcommand once on small synthetic data. Returns
/// `(name, output dir)` per run.
pub fn pipeline(root: &Path) -> Vec<(String, PathBuf)> {
    let p = |n: &str| root.join(n);
    let s = |b: &PathBuf| b.to_str().unwrap().to_string();
    let (data, model, eval, sim, rep, cap, report) =
        (p("gen"), p("train"), p("eval"), p("simulate"), p("replay"), p("capacity"), p("report"));
    ok(&["gen", "--style", "video360", "--streams", "5", "--duration-ms", "6000", "--seed", "3", "--out-dir", &s(&data)]);
    ok(&[
        "train", "--data", &s(&data), "--epochs", "2", "--hidden-dim", "5", "--window-len", "10", "--stride", "4",
        "--val-stride", "4", "--seed", "9", "--out-dir", &s(&model),
    ]);
    let m = s(&model.join("model.txt"));
    let split = s(&model.join("split.txt"));
    ok(&[
        "eval", "--data", &s(&data), "--model", &m, "--baseline", "const-velocity", "--baseline", "const-pose",
        "--split", &split, "--out-dir", &s(&eval),
    ]);
    ok(&["simulate", "--users", "8", "--duration-ms", "3000", "--sweep-to", "4", "--seed", "2", "--out-dir", &s(&sim)]);
    ok(&[
        "simulate", "--mode", "replay", "--users", "2", "--model", &m, "--data", &s(&data), "--duration-ms", "2000",
        "--out-dir", &s(&rep),
    ]);
    ok(&["capacity", "--out-dir", &s(&cap)]);
    ok(&["report", "--input", &s(&eval), "--input", &s(&sim), "--out-dir", &s(&report)]);
    [("gen", data), ("train", model), ("eval", eval), ("simulate", sim), ("replay", rep), ("capacity", cap), ("report", report)]
        .into_iter()
        .map(|(n, d)| (n.to_string(), d))
        .collect()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

/// Re-runs the subcommand recorded in `dir/manifest.txt` into `again` and
/// compares every output byte for byte.
pub fn assert_rerun_identical(dir: &Path, again: &Path) -> Result<(), String> {
    let manifest = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).map_err(|e| e.to_string())?;
    let sub = text
        .lines()
        .find_map(|l| l.strip_prefix("# subcommand = "))
        .ok_or("manifest has no subcommand")?;
    let o = cvrlab(&[sub, "--config", manifest.to_str().unwrap(), "--out-dir", again.to_str().unwrap()]);
    if !o.status.success() {
        return Err(format!("rerun of {sub} failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let (a, b) = (listing(dir), listing(again));
    if a != b {
        return Err(format!("{sub}: output files differ: {a:?} vs {b:?}"));
    }
    for f in &a {
        if std::fs::read(dir.join(f)).unwrap() != std::fs::read(again.join(f)).unwrap() {
            return Err(format!("{sub}: {f} differs on rerun"));
        }
    }
    Ok(())
}
