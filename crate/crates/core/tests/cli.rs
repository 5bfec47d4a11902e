use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wskde::estimator::ws_estimate;
use wskde::{Bandwidth, Confidence, SampleRecord};

fn wskde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wskde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(cmd: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = wskde(&args);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Data rows of a CSV written by the tool, keyed by header name.
fn read_rows(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(wskde(&["bo"]).status.code(), Some(2));
    assert_eq!(
        wskde(&["frobnicate", "--config", "x"]).status.code(),
        Some(2)
    );

    let bad = write(tmp.path(), "bad.toml", "kind = \"bo\"\nspacing = -1\n");
    let o = wskde(&["bo", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spacing"));

    let typo = write(tmp.path(), "typo.toml", "kind = \"bo\"\nbudgte = 3\n");
    let o = wskde(&["bo", "--config", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("budgte") && err.contains("line 2"), "{err}");

    let o = wskde(&[
        "coverage",
        "--config",
        typo.to_str().unwrap(),
        "--jobs",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        wskde(&["bo", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    let cfg = write(
        tmp.path(),
        "bo.toml",
        "kind = \"bo\"\nbudget = 0\nreplications = 1\n",
    );
    let file = write(tmp.path(), "blocker", "");
    let out = file.join("sub");
    let o = wskde(&[
        "bo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn budget_zero_grid_is_uninformative() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bo.toml",
        "kind = \"bo\"\nbudget = 0\nreplications = 2\n",
    );
    let out = tmp.path().join("out");
    run_ok("bo", &cfg, &out, &[]);
    let rows = read_rows(&out.join("grid_final.csv"));
    assert_eq!(rows.len(), 2 * 315);
    for r in &rows {
        assert_eq!(r["p_ws"], "0.5");
        assert_eq!(r["sigma"], "0.5");
        assert_eq!(r["pruned"], "false");
        assert_eq!(r["m_h"], "NA");
    }
    assert_eq!(read_rows(&out.join("trace.csv")).len(), 0);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["replication_seeds"].as_array().unwrap().len(), 2);
    assert!(meta["rng_algorithm"].as_str().unwrap().contains("ChaCha8"));
    assert!(meta["wall_clock"]["total_seconds"].is_number());
}

#[test]
fn every_csv_line_carries_digest_and_lf() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bo.toml",
        "kind = \"bo\"\nbudget = 30\nreplications = 2\n",
    );
    let out = tmp.path().join("out");
    run_ok("bo", &cfg, &out, &[]);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    let digest = meta["config_digest"].as_str().unwrap();
    for name in ["trace.csv", "grid_final.csv", "peaks.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            format!("# config_digest: {digest}")
        );
        assert!(!text.contains('\r'));
    }
    let trace = read_rows(&out.join("trace.csv"));
    assert_eq!(trace.len(), 60);
    assert!(trace.iter().all(|r| (0.0..=1.0).contains(&num(r, "i_tot"))));
}

#[test]
fn estimate_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("one.csv"), "x,y\n0,1\n").unwrap();
    let cfg = write(
        tmp.path(),
        "est.toml",
        "kind = \"estimate\"\ndata = \"one.csv\"\nspacing = 0.5\n[domain]\nlower = [0.0]\nupper = [1.0]\n",
    );
    let out = tmp.path().join("out");
    run_ok("estimate", &cfg, &out, &[]);
    let rows = read_rows(&out.join("estimates.csv"));
    assert_eq!(rows.len(), 3);
    let at0 = &rows[0];
    assert_eq!(num(at0, "x"), 0.0);
    assert!((num(at0, "n_h") - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(num(at0, "m_h"), 1.0);
    let e = ws_estimate(Some(1.0), 2f64.sqrt(), Confidence::default()).unwrap();
    assert!((num(at0, "p_ws") - e.center).abs() < 1e-14);
    assert!((num(at0, "sigma_ws") - e.half_width).abs() < 1e-14);
}

#[test]
fn estimate_on_empty_data_is_uninformative() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("empty.csv"), "x,y\n").unwrap();
    let cfg = write(
        tmp.path(),
        "est.toml",
        "kind = \"estimate\"\ndata = \"empty.csv\"\n",
    );
    let out = tmp.path().join("out");
    run_ok("estimate", &cfg, &out, &[]);
    let rows = read_rows(&out.join("estimates.csv"));
    assert_eq!(rows.len(), 315);
    assert!(rows
        .iter()
        .all(|r| r["p_ws"] == "0.5" && r["sigma_ws"] == "0.5"));
}

#[test]
fn estimate_rejects_out_of_range_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("d.csv"), "x,y\n0.1,0.5\n0.2,1.5\n").unwrap();
    let cfg = write(
        tmp.path(),
        "est.toml",
        "kind = \"estimate\"\ndata = \"d.csv\"\n",
    );
    let o = wskde(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn estimate_two_dimensional() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = [
        (1.0, 0.5, 1.0),
        (2.0, 1.5, 0.0),
        (1.5, 1.0, 0.7),
        (8.0, 0.2, 0.3),
    ];
    let mut text = String::from("x1,x2,y\n");
    for (a, b, y) in rows {
        text.push_str(&format!("{a},{b},{y}\n"));
    }
    fs::write(tmp.path().join("d.csv"), text).unwrap();
    let cfg = write(
        tmp.path(),
        "est.toml",
        "kind = \"estimate\"\ndata = \"d.csv\"\nbandwidth = [5.0, 1.0]\nspacing = [2.5, 1.0]\n[domain]\nlower = [0.0, 0.0]\nupper = [10.0, 2.0]\n",
    );
    let out = tmp.path().join("out");
    run_ok("estimate", &cfg, &out, &[]);
    let data: Vec<SampleRecord> = rows
        .iter()
        .map(|&(a, b, y)| SampleRecord::new(vec![a, b], y).unwrap())
        .collect();
    let h = Bandwidth::new(vec![5.0, 1.0]).unwrap();
    let got = read_rows(&out.join("estimates.csv"));
    assert_eq!(got.len(), 5 * 3);
    for r in got {
        let q = [num(&r, "x1"), num(&r, "x2")];
        let e = wskde::estimator::ws_kde(&q, &data, &h, Confidence::default()).unwrap();
        assert_eq!(num(&r, "p_ws"), e.center);
        assert_eq!(num(&r, "n_h"), e.n_h);
    }
}

#[test]
fn peak_table_combines_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "budget = 300\nreplications = 4\nestimator = \"both\"\ntrace_stride = 100\n";
    let bern = write(tmp.path(), "bern.toml", &format!("kind = \"bo\"\n{base}"));
    let beta = write(
        tmp.path(),
        "beta.toml",
        &format!("kind = \"bo\"\n{base}[noise]\nmodel = \"beta\"\nconcentration = 5.0\n"),
    );
    run_ok("bo", &bern, &tmp.path().join("bern"), &[]);
    run_ok("bo", &beta, &tmp.path().join("beta"), &[]);

    let table = write(
        tmp.path(),
        "table.toml",
        "kind = \"peak-table\"\ninputs = [\"bern\", \"beta\"]\n",
    );
    run_ok("peak-table", &table, &tmp.path().join("t1"), &[]);
    run_ok("peak-table", &table, &tmp.path().join("t2"), &[]);
    let t1 = fs::read(tmp.path().join("t1/table.csv")).unwrap();
    assert_eq!(t1, fs::read(tmp.path().join("t2/table.csv")).unwrap());

    let rows = read_rows(&tmp.path().join("t1/table.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let total: usize = ["L1", "L2", "L3", "GM"]
            .iter()
            .map(|k| r[*k].parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 4);
    }

    let missing = write(
        tmp.path(),
        "missing.toml",
        "kind = \"peak-table\"\ninputs = [\"bern\", \"nowhere\"]\n",
    );
    let o = wskde(&[
        "peak-table",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("t3").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // Tamper with one input's digest.
    let peaks = tmp.path().join("beta/peaks.csv");
    let text =
        fs::read_to_string(&peaks)
            .unwrap()
            .replacen("# config_digest: ", "# config_digest: 00", 1);
    fs::write(&peaks, text).unwrap();
    let o = wskde(&[
        "peak-table",
        "--config",
        table.to_str().unwrap(),
        "--out",
        tmp.path().join("t4").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("digest"));
}

#[test]
fn seed_override_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "kind = \"coverage\"\nreplications = 3\nmax_samples = 50\n",
    );
    run_ok("coverage", &cfg, &tmp.path().join("a"), &["--seed", "5"]);
    run_ok("coverage", &cfg, &tmp.path().join("b"), &["--seed", "6"]);
    run_ok(
        "coverage",
        &cfg,
        &tmp.path().join("c"),
        &["--seed", "5", "--jobs", "2"],
    );
    let read = |d: &str| fs::read(tmp.path().join(d).join("coverage.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
    let rows = read_rows(&tmp.path().join("a/coverage.csv"));
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows
        .iter()
        .all(|r| (0.0..=1.0).contains(&num(r, "mean_coverage"))));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            wskde::cli::load_config(&path, None)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn shipped_estimate_config_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/estimate.toml");
    let out = tmp.path().join("est");
    run_ok("estimate", &cfg, &out, &[]);
    assert_eq!(read_rows(&out.join("estimates.csv")).len(), 25);
}
